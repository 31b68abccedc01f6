"""Deterministic herd, firmware, and link simulation."""

from .behavior import (
    BehaviorParams,
    Mode,
    ModeParams,
    Trajectory,
    default_behavior_params,
    follow_behavior,
    simulate_trajectory,
    step_behavior,
)
from .firmware import ConfigurationError, EmittedFrame, FirmwareSchedule, run_firmware
from .gnss import GnssFix, sample_gnss, sigma_from_cep
from .link import DeliveredFrame, link_deliver
from .pasture import Pasture, default_pasture
from .runner import DeviceResult, SimulationResult, run_simulation
from .sensors import ImuNoiseModel, MagFieldModel, TrajectorySensorSource

__all__ = [
    "BehaviorParams",
    "ConfigurationError",
    "DeliveredFrame",
    "DeviceResult",
    "EmittedFrame",
    "FirmwareSchedule",
    "GnssFix",
    "ImuNoiseModel",
    "MagFieldModel",
    "Mode",
    "ModeParams",
    "Pasture",
    "SimulationResult",
    "Trajectory",
    "TrajectorySensorSource",
    "default_behavior_params",
    "default_pasture",
    "follow_behavior",
    "link_deliver",
    "run_firmware",
    "run_simulation",
    "sample_gnss",
    "sigma_from_cep",
    "simulate_trajectory",
    "step_behavior",
]
