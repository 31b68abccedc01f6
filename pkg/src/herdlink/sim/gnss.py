"""GNSS receiver model: Gaussian position noise parameterized by CEP.

The receiver's circular error probable converts to a per-axis sigma via the
Rayleigh median, sigma = CEP / sqrt(2 ln 2), so the median horizontal error
of simulated fixes reproduces the quoted precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pasture import Pasture

CEP_TO_SIGMA = math.sqrt(2.0 * math.log(2.0))  # ~1.1774
DEFAULT_CEP_M = 2.5


@dataclass(frozen=True)
class GnssFix:
    lat: float
    lon: float
    t: float
    accuracy_m: float


def sigma_from_cep(cep_m: float) -> float:
    if cep_m < 0:
        raise ValueError(f"cep_m must be >= 0, got {cep_m}")
    return cep_m / CEP_TO_SIGMA


def sample_gnss(
    pasture: Pasture,
    pos_en,
    t: float,
    rng: np.random.Generator,
    cep_m: float = DEFAULT_CEP_M,
) -> GnssFix:
    """Noisy fix of a true local-frame position."""
    sigma = sigma_from_cep(cep_m)
    noisy = np.asarray(pos_en, dtype=float) + rng.normal(0.0, sigma, 2) if sigma > 0 else pos_en
    lat, lon = pasture.to_latlon(noisy)
    return GnssFix(lat=lat, lon=lon, t=t, accuracy_m=cep_m)
