"""Run configuration: defaults, YAML loading, and validation.

Every key is optional; omitted sections fall back to the defaults below.
Unknown keys are rejected so typos fail loudly (exit code 2 at the CLI).
See README for the full schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .codec import LoraParams
from .energy import BatteryModel, EnergyError, HarvestModel
from .sim.behavior import BehaviorError, BehaviorParams, Mode, ModeParams, default_behavior_params
from .sim.firmware import ConfigurationError, FirmwareSchedule
from .sim.pasture import Pasture, PastureError, default_pasture
from .sim.sensors import ImuNoiseModel, MagFieldModel

DEFAULT_EPOCH_START = 1_685_577_600  # 2023-06-01T00:00:00Z


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


@dataclass(frozen=True)
class AnalyticsConfig:
    interval_s: int = 300
    max_lag_s: int = 3600
    dead_letter_max: int = 0

    def __post_init__(self):
        if self.interval_s <= 0 or self.max_lag_s <= 0:
            raise ConfigError("analytics intervals must be positive")
        if self.dead_letter_max < 0:
            raise ConfigError("dead_letter_max must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    seed: int = 42
    duration_s: int = 86_400
    animals: int = 2
    epoch_start: int = DEFAULT_EPOCH_START
    truth_stride_s: int = 5
    loss_probability: float = 0.0
    follow_lag_s: float | None = 1200.0
    follow_jitter_m: float = 4.0
    gnss_cep_m: float = 2.5
    duty_cycle: float = 0.01
    corner_hz: float = 0.1
    movement_gain_mps_per_g: float = 2.0
    pasture: Pasture = field(default_factory=default_pasture)
    schedule: FirmwareSchedule = field(default_factory=FirmwareSchedule)
    lora: LoraParams = field(default_factory=LoraParams)
    behavior: BehaviorParams = field(default_factory=default_behavior_params)
    mag_field: MagFieldModel = field(default_factory=MagFieldModel)
    imu_noise: ImuNoiseModel = field(default_factory=ImuNoiseModel)
    battery: BatteryModel = field(default_factory=BatteryModel)
    harvest: HarvestModel = field(default_factory=HarvestModel)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.animals < 1:
            raise ConfigError("animals must be >= 1")
        if self.truth_stride_s <= 0:
            raise ConfigError("truth_stride_s must be positive")
        if not 0.0 <= self.loss_probability < 1.0:
            raise ConfigError("loss_probability must be in [0, 1)")
        if self.follow_lag_s is not None and self.follow_lag_s < 0:
            raise ConfigError("follow lag_s must be >= 0")
        if self.duration_s % self.schedule.measurement_period_s != 0:
            raise ConfigError("duration_s must be a multiple of measurement_period_s")


def _section(data: dict, name: str) -> dict:
    value = data.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(value)


def _reject_unknown(section: str, given: dict, allowed: set[str]) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")


def _build_mode(name: str, base: ModeParams, overrides: dict) -> ModeParams:
    allowed = {
        "dwell_mean_s", "speed_min_mps", "speed_max_mps", "pitch_mean_deg",
        "pitch_sigma_deg", "turn_sigma_deg", "vib_amp_g", "vib_freq_hz",
    }
    _reject_unknown(f"behavior.{name}", overrides, allowed)
    speed = (
        overrides.get("speed_min_mps", base.speed_range_mps[0]),
        overrides.get("speed_max_mps", base.speed_range_mps[1]),
    )
    return ModeParams(
        dwell_mean_s=overrides.get("dwell_mean_s", base.dwell_mean_s),
        speed_range_mps=speed,
        pitch_mean_deg=overrides.get("pitch_mean_deg", base.pitch_mean_deg),
        pitch_sigma_deg=overrides.get("pitch_sigma_deg", base.pitch_sigma_deg),
        turn_sigma_deg=overrides.get("turn_sigma_deg", base.turn_sigma_deg),
        vib_amp_g=overrides.get("vib_amp_g", base.vib_amp_g),
        vib_freq_hz=overrides.get("vib_freq_hz", base.vib_freq_hz),
    )


def config_from_dict(data: dict | None) -> SimConfig:
    """Build a SimConfig from a (possibly partial) plain-dict configuration."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    _reject_unknown(
        "config",
        data,
        {"simulation", "pasture", "schedule", "lora", "behavior", "follow",
         "gnss", "field", "imu", "energy", "analytics", "firmware"},
    )
    try:
        sim = _section(data, "simulation")
        _reject_unknown(
            "simulation", sim,
            {"seed", "duration_s", "animals", "epoch_start", "truth_stride_s",
             "loss_probability"},
        )

        pasture_sec = _section(data, "pasture")
        _reject_unknown("pasture", pasture_sec, {"vertices"})
        if "vertices" in pasture_sec:
            vertices = [(float(v[0]), float(v[1])) for v in pasture_sec["vertices"]]
            pasture = Pasture.from_latlon(vertices)
        else:
            pasture = default_pasture()

        sched = _section(data, "schedule")
        _reject_unknown(
            "schedule", sched,
            {"measurement_period_s", "transmit_period_s", "gnss_fix_duration_s",
             "mcu_measurement_s", "mcu_transmit_s", "accel_rate_hz", "mag_rate_hz"},
        )
        schedule = FirmwareSchedule(**sched)

        lora_sec = _section(data, "lora")
        _reject_unknown(
            "lora", lora_sec,
            {"spreading_factor", "bandwidth_hz", "coding_rate_index",
             "preamble_symbols", "explicit_header", "crc_on",
             "low_data_rate_optimize", "mac_overhead_bytes", "duty_cycle"},
        )
        duty_cycle = lora_sec.pop("duty_cycle", 0.01)
        sf = lora_sec.pop("spreading_factor", 8)
        bw = lora_sec.pop("bandwidth_hz", 125_000)
        lora = LoraParams.for_sf(sf, bw, **lora_sec)

        behavior_sec = _section(data, "behavior")
        base = default_behavior_params()
        modes = dict(base.modes)
        transitions = base.transitions
        for key, value in behavior_sec.items():
            if key == "transitions":
                transitions = {
                    Mode(src): {Mode(dst): float(p) for dst, p in probs.items()}
                    for src, probs in value.items()
                }
                continue
            mode = Mode(key)
            modes[mode] = _build_mode(key, base.modes[mode], value or {})
        behavior = BehaviorParams(modes=modes, transitions=transitions)

        follow_sec = data.get("follow", {"lag_s": 1200.0, "jitter_m": 4.0})
        if follow_sec is None:
            follow_lag, follow_jitter = None, 4.0
        else:
            _reject_unknown("follow", follow_sec, {"lag_s", "jitter_m"})
            follow_lag = follow_sec.get("lag_s", 1200.0)
            follow_jitter = follow_sec.get("jitter_m", 4.0)

        gnss_sec = _section(data, "gnss")
        _reject_unknown("gnss", gnss_sec, {"cep_m"})

        field_sec = _section(data, "field")
        _reject_unknown(
            "field", field_sec, {"strength", "inclination_deg", "hard_iron", "noise_sigma"}
        )
        if "hard_iron" in field_sec:
            field_sec["hard_iron"] = tuple(float(v) for v in field_sec["hard_iron"])
        mag_field = MagFieldModel(**field_sec)

        imu_sec = _section(data, "imu")
        _reject_unknown("imu", imu_sec, {"accel_sigma_g", "gyro_sigma_dps"})
        imu_noise = ImuNoiseModel(**imu_sec)

        energy_sec = _section(data, "energy")
        _reject_unknown(
            "energy", energy_sec,
            {"battery_capacity_ah", "battery_voltage_v", "harvest_j_per_day",
             "harvest_efficiency", "harvest_area_scale"},
        )
        battery = BatteryModel(
            capacity_ah=energy_sec.get("battery_capacity_ah", 5.2),
            nominal_voltage_v=energy_sec.get("battery_voltage_v", 3.7),
        )
        harvest = HarvestModel(
            daily_income_j=energy_sec.get("harvest_j_per_day", 184.9),
            conversion_efficiency=energy_sec.get("harvest_efficiency", 0.8),
            area_scale=energy_sec.get("harvest_area_scale", 1.0),
        )

        analytics_sec = _section(data, "analytics")
        _reject_unknown(
            "analytics", analytics_sec, {"interval_s", "max_lag_s", "dead_letter_max"}
        )
        analytics = AnalyticsConfig(**analytics_sec)

        fw_sec = _section(data, "firmware")
        _reject_unknown("firmware", fw_sec, {"corner_hz", "movement_gain_mps_per_g"})

        return SimConfig(
            seed=int(sim.get("seed", 42)),
            duration_s=int(sim.get("duration_s", 86_400)),
            animals=int(sim.get("animals", 2)),
            epoch_start=int(sim.get("epoch_start", DEFAULT_EPOCH_START)),
            truth_stride_s=int(sim.get("truth_stride_s", 5)),
            loss_probability=float(sim.get("loss_probability", 0.0)),
            follow_lag_s=follow_lag,
            follow_jitter_m=follow_jitter,
            gnss_cep_m=float(gnss_sec.get("cep_m", 2.5)),
            duty_cycle=float(duty_cycle),
            corner_hz=float(fw_sec.get("corner_hz", 0.1)),
            movement_gain_mps_per_g=float(fw_sec.get("movement_gain_mps_per_g", 2.0)),
            pasture=pasture,
            schedule=schedule,
            lora=lora,
            behavior=behavior,
            mag_field=mag_field,
            imu_noise=imu_noise,
            battery=battery,
            harvest=harvest,
            analytics=analytics,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, BehaviorError, PastureError,
            ConfigurationError, EnergyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> SimConfig:
    """Load a YAML configuration file; None gives the defaults."""
    if path is None:
        return config_from_dict({})
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    return config_from_dict(data)
