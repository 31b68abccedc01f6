"""Synthetic IMU and magnetometer streams derived from a trajectory.

Samples are generated per firmware slot as numpy blocks rather than one
object at a time; a day of 60 Hz accelerometer data is ~5 million samples.
The |accel| envelope oscillates at a mode-dependent gait frequency and
amplitude so the movement metric separates resting, grazing, and walking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .behavior import MODES, BehaviorParams, Trajectory
from .pasture import Pasture


@dataclass(frozen=True)
class MagFieldModel:
    """World magnetic field and per-device magnetometer imperfections."""

    strength: float = 48.0
    inclination_deg: float = 60.0
    hard_iron: tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise_sigma: float = 0.3


@dataclass(frozen=True)
class ImuNoiseModel:
    accel_sigma_g: float = 0.01
    gyro_sigma_dps: float = 0.5


@dataclass(frozen=True)
class SensorBlock:
    t_accel: np.ndarray
    accel: np.ndarray   # (n, 3) g
    gyro: np.ndarray    # (n, 3) deg/s
    t_mag: np.ndarray
    mag: np.ndarray     # (m, 3)


class TrajectorySensorSource:
    """Streams sensor blocks for a simulated animal.

    Keeps the gait-oscillation phase across block boundaries so the envelope
    is continuous over the whole run.
    """

    def __init__(
        self,
        trajectory: Trajectory,
        pasture: Pasture,
        behavior: BehaviorParams,
        rng: np.random.Generator,
        accel_rate_hz: float = 60.0,
        mag_rate_hz: float = 20.0,
        field: MagFieldModel = MagFieldModel(),
        imu_noise: ImuNoiseModel = ImuNoiseModel(),
    ):
        self.trajectory = trajectory
        self.pasture = pasture
        self.rng = rng
        self.accel_rate_hz = accel_rate_hz
        self.mag_rate_hz = mag_rate_hz
        self.field = field
        self.imu_noise = imu_noise
        self._vib_amp = np.array([behavior.modes[m].vib_amp_g for m in MODES])
        self._vib_freq = np.array([behavior.modes[m].vib_freq_hz for m in MODES])
        self._phase = 0.0

    @property
    def duration_s(self) -> float:
        return self.trajectory.duration_s

    def position_en(self, t_s: float) -> np.ndarray:
        i = self.trajectory.index_at(t_s)
        return np.array([self.trajectory.e[i], self.trajectory.n[i]])

    def block(self, t0: float, t1: float) -> SensorBlock:
        """Synthesize all samples with t in [t0, t1)."""
        tr = self.trajectory
        dt = tr.dt_s

        t_acc = t0 + np.arange(int(round((t1 - t0) * self.accel_rate_hz))) / self.accel_rate_hz
        t_mag = t0 + np.arange(int(round((t1 - t0) * self.mag_rate_hz))) / self.mag_rate_hz
        if len(t_acc) == 0 or len(t_mag) == 0:
            raise ValueError(f"empty sensor block for slot [{t0}, {t1})")

        pitch_acc = _lerp(tr.pitch_deg, t_acc / dt)
        mode_acc = tr.mode_idx[np.minimum((t_acc / dt).astype(int), len(tr.t) - 1)]

        beta = np.radians(-pitch_acc)
        direction = np.stack([np.sin(beta), np.zeros_like(beta), np.cos(beta)], axis=1)

        freq = self._vib_freq[mode_acc]
        phase = self._phase + 2.0 * math.pi * np.cumsum(freq) / self.accel_rate_hz
        self._phase = float(phase[-1]) % (2.0 * math.pi)
        envelope = 1.0 + self._vib_amp[mode_acc] * np.sin(phase)
        accel = direction * envelope[:, None]
        accel += self.rng.normal(0.0, self.imu_noise.accel_sigma_g, accel.shape)

        # Rotation rates stay far below the fusion quality gate by
        # construction; the pitch rate is the truth-series slope.
        pitch_rate = _lerp(_slope(tr.pitch_deg, dt), t_acc / dt)
        gyro = np.zeros_like(accel)
        gyro[:, 1] = pitch_rate
        gyro += self.rng.normal(0.0, self.imu_noise.gyro_sigma_dps, gyro.shape)

        pitch_m = _lerp(tr.pitch_deg, t_mag / dt)
        idx_m = np.minimum(np.round(t_mag / dt).astype(int), len(tr.t) - 1)
        heading_m = tr.heading_deg[idx_m]
        mag = _field_in_device_frame(
            np.radians(heading_m), np.radians(-pitch_m), self.field
        )
        mag += np.asarray(self.field.hard_iron)
        mag += self.rng.normal(0.0, self.field.noise_sigma, mag.shape)

        return SensorBlock(t_accel=t_acc, accel=accel, gyro=gyro, t_mag=t_mag, mag=mag)


def _lerp(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    i0 = np.minimum(idx.astype(int), len(values) - 2)
    frac = idx - i0
    return values[i0] * (1.0 - frac) + values[i0 + 1] * frac


def _slope(values: np.ndarray, dt: float) -> np.ndarray:
    s = np.empty_like(values)
    s[:-1] = np.diff(values) / dt
    s[-1] = s[-2] if len(values) > 1 else 0.0
    return s


def _field_in_device_frame(psi: np.ndarray, beta: np.ndarray, field: MagFieldModel) -> np.ndarray:
    """Project the north-pointing, downward-dipping field onto the device axes
    for yaw psi and head-down rotation beta (both radians)."""
    b_h = field.strength * math.cos(math.radians(field.inclination_deg))
    b_v = -field.strength * math.sin(math.radians(field.inclination_deg))
    f_fwd = b_h * np.cos(psi)          # field along the level forward axis
    f_left = b_h * np.sin(psi)         # field along the level left axis
    cos_b, sin_b = np.cos(beta), np.sin(beta)
    return np.stack(
        [
            cos_b * f_fwd + sin_b * b_v,
            f_left,
            -sin_b * f_fwd + cos_b * b_v,
        ],
        axis=1,
    )
