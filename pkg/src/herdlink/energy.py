"""Per-subsystem energy accounting, battery model, and lifetime prediction.

The default budgets are the tracker's measured per-hour figures: LoRaWAN
radio 0.024 J/h over 0.2 s of airtime, GNSS 11.53 J/h over four 25 s fixes,
accelerometer 0.216 J/h and magnetometer 2.43 J/h (both always on), MCU
7.13 J/h over 70 s of active time. Summed over a day they give 511.92 J.
Solar income at the 7.36 cm2 reference cell area is 184.9 J/day.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

HOURS_PER_DAY = 24.0
SECONDS_PER_HOUR = 3600.0

REFERENCE_SOLAR_AREA_CM2 = 7.36
DEFAULT_HARVEST_J_PER_DAY = 184.9
DEFAULT_BATTERY_CAPACITY_AH = 5.2
DEFAULT_BATTERY_VOLTAGE_V = 3.7
DEFAULT_HARVEST_EFFICIENCY = 0.8


class EnergyError(ValueError):
    """Invalid energy-model input."""


class UnknownSubsystemError(EnergyError):
    """Accrual against a subsystem the ledger does not know."""


@dataclass(frozen=True)
class SubsystemBudget:
    """One row of the per-hour consumption table.

    active_s_per_hour is 3600 for always-on subsystems.
    """

    name: str
    active_s_per_hour: float
    energy_j_per_hour: float

    def __post_init__(self):
        if self.energy_j_per_hour < 0:
            raise EnergyError(f"{self.name}: energy_j_per_hour must be >= 0")
        if not 0 < self.active_s_per_hour <= SECONDS_PER_HOUR:
            raise EnergyError(f"{self.name}: active_s_per_hour must be in (0, 3600]")

    @property
    def joules_per_active_second(self) -> float:
        return self.energy_j_per_hour / self.active_s_per_hour

    @property
    def continuous(self) -> bool:
        return self.active_s_per_hour == SECONDS_PER_HOUR


def default_budgets() -> dict[str, SubsystemBudget]:
    return {
        b.name: b
        for b in (
            SubsystemBudget("lorawan", 0.2, 0.024),
            SubsystemBudget("gnss", 100.0, 11.53),
            SubsystemBudget("accelerometer", SECONDS_PER_HOUR, 0.216),
            SubsystemBudget("magnetometer", SECONDS_PER_HOUR, 2.43),
            SubsystemBudget("mcu", 70.0, 7.13),
        )
    }


def daily_consumption(budgets) -> float:
    """Joules per day: 24 x sum of the per-hour budgets."""
    rows = list(budgets.values()) if isinstance(budgets, dict) else list(budgets)
    if not rows:
        raise EnergyError("no subsystem budgets given")
    return HOURS_PER_DAY * sum(b.energy_j_per_hour for b in rows)


@dataclass
class BatteryModel:
    capacity_ah: float = DEFAULT_BATTERY_CAPACITY_AH
    nominal_voltage_v: float = DEFAULT_BATTERY_VOLTAGE_V
    state_of_charge: float = 1.0

    def __post_init__(self):
        if self.capacity_ah <= 0 or self.nominal_voltage_v <= 0:
            raise EnergyError("battery capacity and voltage must be positive")
        if not 0.0 <= self.state_of_charge <= 1.0:
            raise EnergyError(f"state_of_charge must be in [0, 1], got {self.state_of_charge}")

    @property
    def energy_j(self) -> float:
        return self.capacity_ah * self.nominal_voltage_v * 3600.0


@dataclass
class HarvestModel:
    """Constant-rate solar income, scaled by cell area and conversion losses."""

    daily_income_j: float = DEFAULT_HARVEST_J_PER_DAY
    reference_area_cm2: float = REFERENCE_SOLAR_AREA_CM2
    conversion_efficiency: float = DEFAULT_HARVEST_EFFICIENCY
    area_scale: float = 1.0

    def __post_init__(self):
        if self.daily_income_j < 0:
            raise EnergyError("daily_income_j must be >= 0")
        if not 0.0 < self.conversion_efficiency <= 1.0:
            raise EnergyError("conversion_efficiency must be in (0, 1]")
        if self.area_scale <= 0:
            raise EnergyError("area_scale must be positive")

    @property
    def effective_daily_income_j(self) -> float:
        return self.daily_income_j * self.area_scale * self.conversion_efficiency


def battery_lifetime_days(
    battery: BatteryModel,
    consumption_j_per_day: float,
    harvest: HarvestModel | None = None,
) -> float:
    """Days until the battery is empty; math.inf when income covers the load."""
    if consumption_j_per_day <= 0:
        raise EnergyError("consumption must be positive")
    income = harvest.effective_daily_income_j if harvest is not None else 0.0
    net = consumption_j_per_day - income
    if net <= 0:
        return math.inf
    return battery.energy_j / net


def self_sustainability_area_factor(
    consumption_j_per_day: float, harvest: HarvestModel
) -> float:
    """Factor by which the reference cell area must grow to cover consumption."""
    income = harvest.daily_income_j * harvest.conversion_efficiency
    if income <= 0:
        raise EnergyError("harvest income at unit area is zero")
    return consumption_j_per_day / income


def simulate_charge(
    battery: BatteryModel,
    days: int,
    consumption_j_per_day: float,
    harvest: HarvestModel | None = None,
) -> tuple[list[float], int | None]:
    """Day-resolution Euler integration of state of charge.

    Returns (series, depletion_day); series[k] is the SoC after k days,
    clamped to [0, 1]; depletion_day is the first day the battery hits 0,
    or None.
    """
    if days < 0:
        raise EnergyError("days must be >= 0")
    income = harvest.effective_daily_income_j if harvest is not None else 0.0
    delta = (income - consumption_j_per_day) / battery.energy_j
    soc = battery.state_of_charge
    series = [soc]
    depletion_day = None
    for day in range(1, days + 1):
        soc = min(1.0, max(0.0, soc + delta))
        series.append(soc)
        if soc == 0.0 and depletion_day is None:
            depletion_day = day
    return series, depletion_day


class EnergyLedger:
    """Per-subsystem tally of consumed joules and active seconds.

    Single writer per simulated device; accrual converts event durations to
    energy at each subsystem's per-active-second rate.
    """

    def __init__(self, budgets: dict[str, SubsystemBudget] | None = None):
        self.budgets = dict(budgets) if budgets is not None else default_budgets()
        self.active_s = {name: 0.0 for name in self.budgets}
        self.energy_j = {name: 0.0 for name in self.budgets}

    def accrue(self, subsystem: str, active_seconds: float) -> None:
        if subsystem not in self.budgets:
            raise UnknownSubsystemError(
                f"unknown subsystem {subsystem!r}; ledger knows {sorted(self.budgets)}"
            )
        if active_seconds < 0:
            raise EnergyError(f"event duration must be >= 0, got {active_seconds}")
        self.active_s[subsystem] += active_seconds
        self.energy_j[subsystem] += (
            self.budgets[subsystem].joules_per_active_second * active_seconds
        )

    # Event helpers mirroring what the firmware scheduler produces.

    def accrue_tx(self, airtime_s: float) -> None:
        self.accrue("lorawan", airtime_s)

    def accrue_gnss_fix(self, duration_s: float) -> None:
        self.accrue("gnss", duration_s)

    def accrue_mcu_active(self, duration_s: float) -> None:
        self.accrue("mcu", duration_s)

    def accrue_sensors(self, elapsed_s: float) -> None:
        """Advance the always-on sensors by wall-clock time."""
        self.accrue("accelerometer", elapsed_s)
        self.accrue("magnetometer", elapsed_s)

    @property
    def total_j(self) -> float:
        return sum(self.energy_j.values())

    def rows(self) -> list[tuple[str, float, float]]:
        return [(name, self.active_s[name], self.energy_j[name]) for name in self.budgets]


def energy_report_csv(budgets: dict[str, SubsystemBudget] | None = None) -> str:
    """Budget table as CSV with a daily summary row."""
    budgets = budgets if budgets is not None else default_budgets()
    lines = ["subsystem,active_s_per_h,energy_j_per_h,energy_j_per_day"]
    for b in budgets.values():
        lines.append(
            f"{b.name},{b.active_s_per_hour:.1f},{b.energy_j_per_hour:.3f},"
            f"{b.energy_j_per_hour * HOURS_PER_DAY:.3f}"
        )
    total = daily_consumption(budgets)
    lines.append(f"total,,{total / HOURS_PER_DAY:.3f},{total:.3f}")
    return "\n".join(lines) + "\n"


def lifetime_report_text(
    battery: BatteryModel,
    consumption_j_per_day: float,
    harvest: HarvestModel | None = None,
) -> str:
    """Key-value lifetime summary for the CLI and service."""
    battery_only = battery_lifetime_days(battery, consumption_j_per_day, None)
    lines = [
        f"consumption_j_per_day = {consumption_j_per_day:.3f}",
        f"battery_energy_j = {battery.energy_j:.1f}",
        f"lifetime_days_battery_only = {battery_only:.1f}",
    ]
    if harvest is not None:
        with_harvest = battery_lifetime_days(battery, consumption_j_per_day, harvest)
        lines.append(f"harvest_effective_j_per_day = {harvest.effective_daily_income_j:.3f}")
        if math.isinf(with_harvest):
            lines.append("lifetime_days_with_harvest = unbounded")
        else:
            lines.append(f"lifetime_days_with_harvest = {with_harvest:.1f}")
            lines.append(
                f"lifetime_gain_pct = {100.0 * (with_harvest / battery_only - 1.0):.1f}"
            )
        factor = self_sustainability_area_factor(
            consumption_j_per_day,
            HarvestModel(
                daily_income_j=harvest.daily_income_j,
                reference_area_cm2=harvest.reference_area_cm2,
                conversion_efficiency=1.0,
            ),
        )
        lines.append(f"self_sustainability_area_factor = {factor:.3f}")
    return "\n".join(lines) + "\n"
