"""Pasture geometry: lat/lon polygon with a local east/north meter frame.

Simulation runs in local meters; coordinates are converted to degrees only
when emitting GNSS fixes and ground truth. The flat-earth conversion is
anchored at the polygon's first vertex, which is exact enough (< 0.05%)
at the few-hundred-meter scale of a pasture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..analytics import EARTH_RADIUS_M

METERS_PER_DEG_LAT = math.pi / 180.0 * EARTH_RADIUS_M


class PastureError(ValueError):
    """Invalid pasture polygon."""


@dataclass(frozen=True)
class Pasture:
    vertices_latlon: tuple[tuple[float, float], ...]
    vertices_en: np.ndarray
    origin: tuple[float, float]
    meters_per_deg_lon: float

    @classmethod
    def from_latlon(cls, vertices: list[tuple[float, float]]) -> "Pasture":
        if len(vertices) < 3:
            raise PastureError("pasture polygon needs at least 3 vertices")
        lat0, lon0 = vertices[0]
        m_per_lon = METERS_PER_DEG_LAT * math.cos(math.radians(lat0))
        en = np.array(
            [
                ((lon - lon0) * m_per_lon, (lat - lat0) * METERS_PER_DEG_LAT)
                for lat, lon in vertices
            ]
        )
        p = cls(
            vertices_latlon=tuple((float(a), float(b)) for a, b in vertices),
            vertices_en=en,
            origin=(lat0, lon0),
            meters_per_deg_lon=m_per_lon,
        )
        if p.area_m2 <= 0:
            raise PastureError("pasture polygon has zero area")
        if _self_intersects(en):
            raise PastureError("pasture polygon is self-intersecting")
        return p

    def to_latlon(self, p_en) -> tuple[float, float]:
        e, n = float(p_en[0]), float(p_en[1])
        return (
            self.origin[0] + n / METERS_PER_DEG_LAT,
            self.origin[1] + e / self.meters_per_deg_lon,
        )

    def to_en(self, lat: float, lon: float) -> np.ndarray:
        return np.array(
            [
                (lon - self.origin[1]) * self.meters_per_deg_lon,
                (lat - self.origin[0]) * METERS_PER_DEG_LAT,
            ]
        )

    def contains(self, p_en) -> bool:
        """Ray-casting point-in-polygon on the local frame (boundary counts as inside)."""
        x, y = float(p_en[0]), float(p_en[1])
        verts = self.vertices_en
        inside = False
        n = len(verts)
        for i in range(n):
            x1, y1 = verts[i]
            x2, y2 = verts[(i + 1) % n]
            # On-edge check keeps reflected positions valid.
            if _on_segment(x, y, x1, y1, x2, y2):
                return True
            if (y1 > y) != (y2 > y):
                x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                if x < x_cross:
                    inside = not inside
        return inside

    @property
    def area_m2(self) -> float:
        v = self.vertices_en
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def max_extent_m(self) -> float:
        v = self.vertices_en
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d**2).sum(axis=2)).max())

    @property
    def centroid_en(self) -> np.ndarray:
        return self.vertices_en.mean(axis=0)


def _on_segment(x, y, x1, y1, x2, y2, eps=1e-9) -> bool:
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    if abs(cross) > eps * max(1.0, abs(x2 - x1) + abs(y2 - y1)):
        return False
    dot = (x - x1) * (x2 - x1) + (y - y1) * (y2 - y1)
    return 0.0 <= dot <= (x2 - x1) ** 2 + (y2 - y1) ** 2


def _self_intersects(verts: np.ndarray) -> bool:
    n = len(verts)
    for i in range(n):
        a1, a2 = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = verts[j], verts[(j + 1) % n]
            if _segments_cross(a1, a2, b1, b2):
                return True
    return False


def _segments_cross(a1, a2, b1, b2) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(a1, a2, b1)
    d2 = orient(a1, a2, b2)
    d3 = orient(b1, b2, a1)
    d4 = orient(b1, b2, a2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


# Default test pasture: a rectangle sized to the reference site, ~20,280 m2
# with a 275 m diagonal, anchored on an alpine meadow in the Engadin.
_DEFAULT_ANCHOR = (46.5000, 9.8000)
_DEFAULT_LENGTH_M = 264.06
_DEFAULT_WIDTH_M = 76.80


def default_pasture() -> Pasture:
    lat0, lon0 = _DEFAULT_ANCHOR
    m_per_lon = METERS_PER_DEG_LAT * math.cos(math.radians(lat0))
    corners_en = [
        (0.0, 0.0),
        (_DEFAULT_LENGTH_M, 0.0),
        (_DEFAULT_LENGTH_M, _DEFAULT_WIDTH_M),
        (0.0, _DEFAULT_WIDTH_M),
    ]
    vertices = [
        (lat0 + n / METERS_PER_DEG_LAT, lon0 + e / m_per_lon) for e, n in corners_en
    ]
    return Pasture.from_latlon(vertices)
