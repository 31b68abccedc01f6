"""Collar-side signal chain.

Gravity is tracked with a first-order IIR low-pass over the accelerometer
(corner ~0.1 Hz); head pitch comes from the filtered gravity direction,
heading from the offset-corrected magnetometer tilt-compensated into the
horizontal plane. Grazing is a two-threshold hysteresis on pitch.

Device frame convention: ``x`` is the forward axis with head-down motion
rotating the measured up-vector toward +x, ``z`` is up when level. A level
device at rest therefore reads accel (0, 0, 1) g and nose-straight-down
reads (1, 0, 0) g, giving pitch ``asin(-g_x)`` = -90 deg (head down is
negative). Heading 0 means the forward axis points magnetic north.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import lfilter

GYRO_GATE_DPS = 240.0
GRAZING_ENTER_DEG = -20.0
GRAZING_EXIT_DEG = -10.0

# Fraction of |m| below which the horizontal field component is considered
# degenerate (device pointing straight up/down).
_HORIZONTAL_MIN_FRACTION = 0.01

_X_AXIS = np.array([1.0, 0.0, 0.0])

SENSOR_CSV_HEADER = ["t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"]


class FusionError(ValueError):
    """Invalid input to a fusion operation."""


class CalibrationCoverageError(FusionError):
    """Magnetometer calibration samples do not span enough yaw rotation."""


@dataclass(frozen=True)
class SensorSample:
    """One timestamped accel/gyro/mag reading in the device frame."""

    t: float
    accel: np.ndarray  # g
    gyro: np.ndarray   # deg/s
    mag: np.ndarray    # arbitrary but consistent field units

    def __post_init__(self):
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float))
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float))
        object.__setattr__(self, "mag", np.asarray(self.mag, dtype=float))
        for name in ("accel", "gyro", "mag"):
            v = getattr(self, name)
            if v.shape != (3,):
                raise FusionError(f"{name} must be a 3-vector, got shape {v.shape}")
            if not np.all(np.isfinite(v)):
                raise FusionError(f"{name} contains non-finite components: {v}")


def lowpass_alpha(dt: float, corner_hz: float) -> float:
    """Per-step gain of the single-pole low-pass: dt / (dt + 1/(2*pi*fc))."""
    if dt <= 0:
        raise FusionError(f"dt must be positive, got {dt}")
    if corner_hz <= 0:
        raise FusionError(f"corner_hz must be positive, got {corner_hz}")
    if corner_hz >= 1.0 / (2.0 * dt):
        raise FusionError(
            f"corner_hz {corner_hz} is at or above Nyquist for dt={dt}"
        )
    return dt / (dt + 1.0 / (2.0 * math.pi * corner_hz))


def iir_lowpass_step(state, x, dt: float, corner_hz: float):
    """One step of y <- y + alpha*(x - y); state None starts the filter at x.

    Works element-wise on scalars or vectors. Non-finite input raises and
    leaves the caller's state untouched.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise FusionError(f"non-finite filter input: {x}")
    alpha = lowpass_alpha(dt, corner_hz)
    if state is None:
        return x.copy() if x.ndim else float(x)
    y = np.asarray(state, dtype=float)
    out = y + alpha * (x - y)
    return out if out.ndim else float(out)


def iir_lowpass_block(state, xs: np.ndarray, dt: float, corner_hz: float):
    """Run the same recursion over a block of samples (vectorized).

    ``xs`` has shape (n,) or (n, k); returns (outputs, final_state). Exactly
    equivalent to folding iir_lowpass_step over the rows, which the tests
    assert.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.shape[0] == 0:
        raise FusionError("empty filter block")
    if not np.all(np.isfinite(xs)):
        raise FusionError("non-finite filter input in block")
    alpha = lowpass_alpha(dt, corner_hz)
    if state is None:
        state = xs[0]
        xs = xs[1:]
        prefix = [np.asarray(state, dtype=float)]
        if xs.shape[0] == 0:
            out = np.asarray(prefix)
            return out, out[-1]
    else:
        prefix = []
    b = [alpha]
    a = [1.0, -(1.0 - alpha)]
    zi = np.atleast_1d((1.0 - alpha) * np.asarray(state, dtype=float))
    if xs.ndim == 1:
        ys, _ = lfilter(b, a, xs, zi=zi)
    else:
        ys, _ = lfilter(b, a, xs, axis=0, zi=zi.reshape(1, -1))
    if prefix:
        ys = np.concatenate([np.asarray(prefix), np.atleast_2d(ys) if xs.ndim > 1 else ys])
    return ys, ys[-1]


def pitch_from_gravity(gravity: np.ndarray) -> float:
    """Head pitch in degrees from a gravity estimate; negative is head-down.

    Direction-only: invariant under uniform scaling of the vector.
    """
    g = np.asarray(gravity, dtype=float)
    norm = np.linalg.norm(g)
    if norm == 0 or not np.isfinite(norm):
        raise FusionError(f"degenerate gravity vector: {g}")
    s = max(-1.0, min(1.0, -g[0] / norm))
    return math.degrees(math.asin(s))


def heading_from_mag(gravity: np.ndarray, mag_corrected: np.ndarray):
    """Tilt-compensated heading in [0, 360), or None when degenerate.

    Projects the offset-corrected field into the horizontal plane defined by
    the gravity estimate and measures the angle of its north component
    against the forward axis.
    """
    g = np.asarray(gravity, dtype=float)
    m = np.asarray(mag_corrected, dtype=float)
    g_norm = np.linalg.norm(g)
    m_norm = np.linalg.norm(m)
    if g_norm == 0 or m_norm == 0:
        return None
    up = g / g_norm
    m_h = m - np.dot(m, up) * up
    if np.linalg.norm(m_h) < _HORIZONTAL_MIN_FRACTION * m_norm:
        return None
    fwd = _X_AXIS - np.dot(_X_AXIS, up) * up
    fwd_norm = np.linalg.norm(fwd)
    if fwd_norm < 1e-6:
        return None
    fwd /= fwd_norm
    right = np.cross(fwd, up)
    heading = math.degrees(math.atan2(-np.dot(m_h, right), np.dot(m_h, fwd)))
    return heading % 360.0


@dataclass(frozen=True)
class OrientationState:
    """Filtered orientation of one device; a pure value, one per stream."""

    gravity_est: np.ndarray | None = None
    pitch_deg: float = 0.0
    heading_deg: float = 0.0
    mag_offset_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    heading_held: bool = False
    t: float | None = None


def update_orientation(
    state: OrientationState, sample: SensorSample, corner_hz: float = 0.1
) -> OrientationState:
    """Fold one sample into the gravity filter and recompute pitch.

    The gyroscope acts only as a data-quality gate: samples rotating faster
    than GYRO_GATE_DPS are skipped for the gravity update.
    """
    if state.t is not None and sample.t <= state.t:
        raise FusionError(
            f"sample timestamps must be strictly increasing ({sample.t} after {state.t})"
        )
    if np.linalg.norm(sample.gyro) > GYRO_GATE_DPS:
        return replace(state, t=sample.t)
    if state.gravity_est is None or state.t is None:
        gravity = sample.accel.copy()
    else:
        gravity = iir_lowpass_step(
            state.gravity_est, sample.accel, sample.t - state.t, corner_hz
        )
    return replace(
        state,
        gravity_est=gravity,
        pitch_deg=pitch_from_gravity(gravity),
        t=sample.t,
    )


def update_heading(state: OrientationState, sample: SensorSample) -> OrientationState:
    """Recompute heading from the magnetometer; holds the last value when the
    device points straight up/down (flagged via heading_held)."""
    if state.gravity_est is None:
        raise FusionError("orientation not initialized; feed update_orientation first")
    heading = heading_from_mag(state.gravity_est, sample.mag - state.mag_offset_est)
    if heading is None:
        return replace(state, heading_held=True)
    return replace(state, heading_deg=heading, heading_held=False)


def calibrate_mag_offset(samples: Sequence[SensorSample]) -> np.ndarray:
    """Hard-iron offset as the per-axis min/max midpoint over the window.

    Requires the samples to span at least 270 degrees of yaw, checked from
    the angular spread of the offset-corrected horizontal field.
    """
    if not samples:
        raise CalibrationCoverageError("no calibration samples")
    mags = np.array([s.mag for s in samples])
    offset = (mags.min(axis=0) + mags.max(axis=0)) / 2.0
    centered = mags - offset
    angles = np.degrees(np.arctan2(centered[:, 1], centered[:, 0]))
    spread = _angular_coverage(angles)
    if spread < 270.0:
        raise CalibrationCoverageError(
            f"calibration rotation covers only {spread:.0f} deg of yaw (need >= 270)"
        )
    return offset


def _angular_coverage(angles_deg: np.ndarray) -> float:
    """Total arc covered by a set of angles: 360 minus the largest gap."""
    a = np.sort(np.mod(angles_deg, 360.0))
    if a.size < 2:
        return 0.0
    gaps = np.diff(a)
    wrap_gap = a[0] + 360.0 - a[-1]
    return 360.0 - max(gaps.max(), wrap_gap)


def movement_average(samples: Sequence[SensorSample], window_s: float) -> float:
    """Mean deviation of |accel| from 1 g over the trailing window (g units)."""
    if not samples:
        raise FusionError("movement window is empty")
    t_end = samples[-1].t
    norms = [
        np.linalg.norm(s.accel) for s in samples if s.t >= t_end - window_s
    ]
    if not norms:
        raise FusionError("movement window is empty")
    return float(np.mean(np.abs(np.asarray(norms) - 1.0)))


class GrazingLabel(enum.Enum):
    GRAZING = "grazing"
    NOT_GRAZING = "not_grazing"


@dataclass(frozen=True)
class GrazingState:
    label: GrazingLabel
    since: float

    @classmethod
    def initial(cls, pitch_deg: float, t: float,
                enter_deg: float = GRAZING_ENTER_DEG) -> "GrazingState":
        # Inside the dead band there is no previous label to hold; start
        # conservative (not grazing).
        label = GrazingLabel.GRAZING if pitch_deg < enter_deg else GrazingLabel.NOT_GRAZING
        return cls(label=label, since=t)


def classify_grazing(
    state: GrazingState | None,
    pitch_deg: float,
    t: float,
    enter_deg: float = GRAZING_ENTER_DEG,
    exit_deg: float = GRAZING_EXIT_DEG,
) -> GrazingState:
    """Hysteresis labeling: below enter_deg -> grazing, above exit_deg ->
    not grazing, in between the previous label is held."""
    if abs(pitch_deg) > 90.0:
        raise FusionError(f"pitch out of range: {pitch_deg}")
    if state is None:
        return GrazingState.initial(pitch_deg, t, enter_deg)
    if pitch_deg < enter_deg:
        label = GrazingLabel.GRAZING
    elif pitch_deg > exit_deg:
        label = GrazingLabel.NOT_GRAZING
    else:
        label = state.label
    if label is state.label:
        return state
    return GrazingState(label=label, since=t)


def write_sensor_csv(path: str | Path, samples: Iterable[SensorSample]) -> None:
    """Write a replay stream: t,ax,ay,az,gx,gy,gz,mx,my,mz."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SENSOR_CSV_HEADER)
        for s in samples:
            writer.writerow(
                [f"{s.t:.6f}"]
                + [f"{v:.6f}" for v in s.accel]
                + [f"{v:.6f}" for v in s.gyro]
                + [f"{v:.6f}" for v in s.mag]
            )


def read_sensor_csv(path: str | Path) -> list[SensorSample]:
    """Load a replay stream written by write_sensor_csv."""
    samples = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != SENSOR_CSV_HEADER:
            raise FusionError(f"unexpected sensor CSV header: {header}")
        for row in reader:
            vals = [float(v) for v in row]
            samples.append(
                SensorSample(t=vals[0], accel=vals[1:4], gyro=vals[4:7], mag=vals[7:10])
            )
    return samples
