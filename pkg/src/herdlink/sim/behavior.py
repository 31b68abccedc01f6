"""Herd behavior generator: a three-mode semi-Markov walk on the pasture.

Animals cycle through resting, grazing, and walking bouts with exponential
dwell times. Within a bout the animal moves as a correlated random walk at
a bout-constant speed, reflecting off the pasture boundary, while head
pitch follows an Ornstein-Uhlenbeck wander around the mode's mean angle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .pasture import Pasture


class Mode(enum.Enum):
    RESTING = "resting"
    GRAZING = "grazing"
    WALKING = "walking"


MODES = (Mode.RESTING, Mode.GRAZING, Mode.WALKING)
_MODE_INDEX = {m: i for i, m in enumerate(MODES)}

# Correlation time of the within-bout pitch wander.
PITCH_TAU_S = 20.0


class BehaviorError(ValueError):
    """Invalid behavior parameterization."""


@dataclass(frozen=True)
class ModeParams:
    dwell_mean_s: float
    speed_range_mps: tuple[float, float]
    pitch_mean_deg: float
    pitch_sigma_deg: float
    turn_sigma_deg: float       # heading wander per sqrt(second)
    vib_amp_g: float            # |accel| oscillation amplitude for synthesis
    vib_freq_hz: float

    def __post_init__(self):
        lo, hi = self.speed_range_mps
        if lo < 0 or hi < lo:
            raise BehaviorError(f"bad speed range {self.speed_range_mps}")
        if self.dwell_mean_s <= 0:
            raise BehaviorError("dwell_mean_s must be positive")
        if self.pitch_sigma_deg < 0 or self.vib_amp_g < 0:
            raise BehaviorError("sigma and vibration amplitude must be >= 0")


@dataclass(frozen=True)
class BehaviorParams:
    modes: dict[Mode, ModeParams]
    transitions: dict[Mode, dict[Mode, float]]

    def __post_init__(self):
        for m in MODES:
            if m not in self.modes:
                raise BehaviorError(f"missing parameters for mode {m.value}")
            if m not in self.transitions:
                raise BehaviorError(f"missing transitions for mode {m.value}")
            probs = self.transitions[m]
            if m in probs:
                raise BehaviorError(f"self-transition configured for {m.value}")
            if abs(sum(probs.values()) - 1.0) > 1e-9:
                raise BehaviorError(f"transition probabilities from {m.value} must sum to 1")
            if any(p < 0 for p in probs.values()):
                raise BehaviorError(f"negative transition probability from {m.value}")
        # The grazing/not-grazing pitch means must sit outside the classifier
        # dead band, otherwise ground truth and labels cannot agree.
        if self.modes[Mode.GRAZING].pitch_mean_deg >= -20.0:
            raise BehaviorError("grazing pitch mean must be below -20 deg")
        for m in (Mode.RESTING, Mode.WALKING):
            if self.modes[m].pitch_mean_deg <= -10.0:
                raise BehaviorError(f"{m.value} pitch mean must be above -10 deg")


def default_behavior_params() -> BehaviorParams:
    # Walking speed capped at 0.43 m/s so a straight 5-minute bout stays
    # within the 130 m interval displacement the calibration targets.
    return BehaviorParams(
        modes={
            Mode.RESTING: ModeParams(
                dwell_mean_s=5400.0,
                speed_range_mps=(0.0, 0.05),
                pitch_mean_deg=-5.0,
                pitch_sigma_deg=5.0,
                turn_sigma_deg=30.0,
                vib_amp_g=0.02,
                vib_freq_hz=1.0,
            ),
            Mode.GRAZING: ModeParams(
                dwell_mean_s=2400.0,
                speed_range_mps=(0.05, 0.3),
                pitch_mean_deg=-30.0,
                pitch_sigma_deg=5.0,
                turn_sigma_deg=20.0,
                vib_amp_g=0.1,
                vib_freq_hz=1.5,
            ),
            Mode.WALKING: ModeParams(
                dwell_mean_s=300.0,
                speed_range_mps=(0.30, 0.43),
                pitch_mean_deg=-5.0,
                pitch_sigma_deg=8.0,
                turn_sigma_deg=8.0,
                vib_amp_g=0.3,
                vib_freq_hz=2.0,
            ),
        },
        transitions={
            Mode.RESTING: {Mode.GRAZING: 0.9, Mode.WALKING: 0.1},
            Mode.GRAZING: {Mode.RESTING: 0.2, Mode.WALKING: 0.8},
            Mode.WALKING: {Mode.GRAZING: 0.9, Mode.RESTING: 0.1},
        },
    )


@dataclass
class AnimalState:
    mode: Mode
    dwell_left_s: float
    speed_mps: float
    heading_deg: float
    pitch_deg: float
    pos_en: np.ndarray


def initial_state(pasture: Pasture, params: BehaviorParams, rng: np.random.Generator,
                  start_en=None) -> AnimalState:
    if start_en is None:
        lo = pasture.vertices_en.min(axis=0)
        hi = pasture.vertices_en.max(axis=0)
        for _ in range(1000):
            candidate = rng.uniform(lo, hi)
            if pasture.contains(candidate):
                start_en = candidate
                break
        else:
            raise BehaviorError("could not place the animal inside the pasture")
    mode = Mode.RESTING
    mp = params.modes[mode]
    return AnimalState(
        mode=mode,
        dwell_left_s=rng.exponential(mp.dwell_mean_s),
        speed_mps=rng.uniform(*mp.speed_range_mps),
        heading_deg=rng.uniform(0.0, 360.0),
        pitch_deg=mp.pitch_mean_deg,
        pos_en=np.asarray(start_en, dtype=float).copy(),
    )


def step_behavior(
    state: AnimalState,
    dt_s: float,
    rng: np.random.Generator,
    pasture: Pasture,
    params: BehaviorParams,
) -> AnimalState:
    """Advance one step in place and return the state.

    Mode switches fire when the dwell clock runs out; movement reflects at
    the boundary by turning around instead of stepping out.
    """
    if dt_s <= 0:
        raise BehaviorError(f"dt_s must be positive, got {dt_s}")
    state.dwell_left_s -= dt_s
    if state.dwell_left_s <= 0:
        probs = params.transitions[state.mode]
        choices = list(probs.keys())
        state.mode = choices[rng.choice(len(choices), p=[probs[c] for c in choices])]
        mp = params.modes[state.mode]
        state.dwell_left_s = rng.exponential(mp.dwell_mean_s)
        state.speed_mps = rng.uniform(*mp.speed_range_mps)
    mp = params.modes[state.mode]
    state.heading_deg = (
        state.heading_deg + mp.turn_sigma_deg * math.sqrt(dt_s) * rng.standard_normal()
    ) % 360.0
    if state.speed_mps > 0:
        theta = math.radians(state.heading_deg)
        step = state.speed_mps * dt_s
        proposed = state.pos_en + np.array([math.sin(theta) * step, math.cos(theta) * step])
        if pasture.contains(proposed):
            state.pos_en = proposed
        else:
            state.heading_deg = (state.heading_deg + 180.0 + rng.uniform(-45.0, 45.0)) % 360.0
    k = math.exp(-dt_s / PITCH_TAU_S)
    state.pitch_deg = (
        mp.pitch_mean_deg
        + (state.pitch_deg - mp.pitch_mean_deg) * k
        + mp.pitch_sigma_deg * math.sqrt(1.0 - k * k) * rng.standard_normal()
    )
    return state


@dataclass
class Trajectory:
    """Dense ground-truth track sampled every dt_s, endpoint included."""

    dt_s: float
    t: np.ndarray
    e: np.ndarray
    n: np.ndarray
    mode_idx: np.ndarray
    pitch_deg: np.ndarray
    heading_deg: np.ndarray
    speed_mps: np.ndarray

    @property
    def duration_s(self) -> float:
        return float(self.t[-1])

    def mode_at(self, i: int) -> Mode:
        return MODES[int(self.mode_idx[i])]

    def index_at(self, t_s: float) -> int:
        i = int(round(t_s / self.dt_s))
        if not 0 <= i < len(self.t):
            raise BehaviorError(f"time {t_s} outside trajectory span")
        return i


def simulate_trajectory(
    pasture: Pasture,
    params: BehaviorParams,
    duration_s: float,
    rng: np.random.Generator,
    dt_s: float = 1.0,
    start_en=None,
) -> Trajectory:
    n_steps = int(round(duration_s / dt_s))
    if n_steps < 1:
        raise BehaviorError("duration shorter than one behavior step")
    state = initial_state(pasture, params, rng, start_en)
    size = n_steps + 1
    e = np.empty(size)
    north = np.empty(size)
    mode_idx = np.empty(size, dtype=np.int8)
    pitch = np.empty(size)
    heading = np.empty(size)
    speed = np.empty(size)
    for i in range(size):
        e[i] = state.pos_en[0]
        north[i] = state.pos_en[1]
        mode_idx[i] = _MODE_INDEX[state.mode]
        pitch[i] = state.pitch_deg
        heading[i] = state.heading_deg
        speed[i] = state.speed_mps
        if i < n_steps:
            step_behavior(state, dt_s, rng, pasture, params)
    return Trajectory(
        dt_s=dt_s,
        t=np.arange(size) * dt_s,
        e=e,
        n=north,
        mode_idx=mode_idx,
        pitch_deg=pitch,
        heading_deg=heading,
        speed_mps=speed,
    )


# Correlation time of the follower's lateral offset from the leader's track.
_JITTER_TAU_S = 120.0


def follow_behavior(
    leader: Trajectory,
    lag_s: float,
    jitter_m: float,
    rng: np.random.Generator,
    pasture: Pasture,
    params: BehaviorParams,
    smooth_window_s: float = 60.0,
) -> Trajectory:
    """Derive a follower that replays the leader's smoothed track delayed by lag.

    The mode sequence is the leader's, shifted; pitch is re-drawn from the
    (shifted) mode's distribution with the follower's own randomness, and the
    position gets a slowly wandering lateral offset of scale jitter_m.
    """
    if lag_s < 0:
        raise BehaviorError(f"lag_s must be >= 0, got {lag_s}")
    if lag_s >= leader.duration_s:
        raise BehaviorError(
            f"lag {lag_s}s exceeds the leader trajectory span {leader.duration_s}s"
        )
    dt = leader.dt_s
    size = len(leader.t)
    shift = int(round(lag_s / dt))
    src = np.maximum(np.arange(size) - shift, 0)

    e_s = _moving_average(leader.e, smooth_window_s, dt)
    n_s = _moving_average(leader.n, smooth_window_s, dt)
    e_f = e_s[src].copy()
    n_f = n_s[src].copy()
    # Smoothing can cut corners out of a non-convex pasture; fall back to the
    # raw track point there.
    for i in range(size):
        if not pasture.contains((e_f[i], n_f[i])):
            e_f[i] = leader.e[src[i]]
            n_f[i] = leader.n[src[i]]

    if jitter_m > 0:
        k = math.exp(-dt / _JITTER_TAU_S)
        amp = jitter_m * math.sqrt(1.0 - k * k)
        noise = rng.standard_normal((size, 2))
        off = np.zeros(2)
        for i in range(size):
            off = off * k + amp * noise[i]
            je, jn = e_f[i] + off[0], n_f[i] + off[1]
            if pasture.contains((je, jn)):
                e_f[i], n_f[i] = je, jn

    mode_f = leader.mode_idx[src]
    pitch_f = _ou_pitch_series(mode_f, params, dt, rng)
    return Trajectory(
        dt_s=dt,
        t=leader.t.copy(),
        e=e_f,
        n=n_f,
        mode_idx=mode_f,
        pitch_deg=pitch_f,
        heading_deg=leader.heading_deg[src].copy(),
        speed_mps=leader.speed_mps[src].copy(),
    )


def _moving_average(x: np.ndarray, window_s: float, dt_s: float) -> np.ndarray:
    w = max(1, int(round(window_s / dt_s)))
    if w % 2 == 0:
        w += 1
    if w == 1:
        return x.copy()
    pad = w // 2
    padded = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
    c = np.cumsum(padded)
    return (c[w - 1 :] - np.concatenate([[0.0], c[: -w]])) / w


def _ou_pitch_series(
    mode_idx: np.ndarray, params: BehaviorParams, dt_s: float, rng: np.random.Generator
) -> np.ndarray:
    k = math.exp(-dt_s / PITCH_TAU_S)
    spread = math.sqrt(1.0 - k * k)
    means = np.array([params.modes[m].pitch_mean_deg for m in MODES])
    sigmas = np.array([params.modes[m].pitch_sigma_deg for m in MODES])
    noise = rng.standard_normal(len(mode_idx))
    out = np.empty(len(mode_idx))
    p = means[mode_idx[0]]
    for i, m in enumerate(mode_idx):
        p = means[m] + (p - means[m]) * k + sigmas[m] * spread * noise[i]
        out[i] = p
    return out
