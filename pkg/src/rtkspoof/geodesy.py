"""WGS84 coordinate frames: geodetic <-> ECEF and ECEF -> local ENU."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# WGS84
A = 6378137.0
F = 1.0 / 298.257223563
B = A * (1.0 - F)
E2 = F * (2.0 - F)
EP2 = E2 / (1.0 - E2)

_AXIS_EPS = 1.0  # m, lon is set to 0 closer than this to the polar axis
_MAX_ITER = 10


@dataclass(frozen=True)
class GeodeticCoord:
    lat: float  # rad
    lon: float  # rad
    height: float  # m, ellipsoidal

    def __post_init__(self):
        if not (-math.pi / 2 <= self.lat <= math.pi / 2):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-math.pi < self.lon <= math.pi):
            raise ValueError(f"longitude out of range: {self.lon}")
        if not math.isfinite(self.height):
            raise ValueError("height must be finite")

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, height: float = 0.0) -> GeodeticCoord:
        lon = math.radians(lon_deg)
        if lon <= -math.pi:
            lon += 2 * math.pi
        elif lon > math.pi:
            lon -= 2 * math.pi
        return cls(math.radians(lat_deg), lon, float(height))

    def degrees(self) -> tuple[float, float, float]:
        return math.degrees(self.lat), math.degrees(self.lon), self.height


@dataclass(frozen=True)
class EcefCoord:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.z))):
            raise ValueError("components must be finite")

    @classmethod
    def from_array(cls, v) -> EcefCoord:
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class EnuVector:
    east: float
    north: float
    up: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.east, self.north, self.up))):
            raise ValueError("components must be finite")

    @classmethod
    def from_array(cls, v) -> EnuVector:
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def array(self) -> np.ndarray:
        return np.array([self.east, self.north, self.up])

    def norm(self) -> float:
        return math.sqrt(self.east**2 + self.north**2 + self.up**2)


def geodetic_to_ecef(g: GeodeticCoord) -> EcefCoord:
    slat, clat = math.sin(g.lat), math.cos(g.lat)
    n = A / math.sqrt(1.0 - E2 * slat * slat)
    x = (n + g.height) * clat * math.cos(g.lon)
    y = (n + g.height) * clat * math.sin(g.lon)
    z = (n * (1.0 - E2) + g.height) * slat
    return EcefCoord(x, y, z)


def ecef_to_geodetic(p: EcefCoord) -> GeodeticCoord:
    """Bowring's inverse, refined by fixed-point iteration on latitude.

    Points within 1 m of the polar axis get longitude 0.
    """
    x, y, z = p.x, p.y, p.z
    r = math.sqrt(x * x + y * y)
    if r == 0.0 and z == 0.0:
        raise ValueError("ecef_to_geodetic is undefined at the Earth's center")
    lon = 0.0 if r < _AXIS_EPS else math.atan2(y, x)
    if lon <= -math.pi:
        lon = math.pi

    # Bowring's parametric-latitude starting point, already sub-mm for terrestrial heights
    beta = math.atan2(A * z, B * r)
    lat = math.atan2(z + EP2 * B * math.sin(beta) ** 3, r - E2 * A * math.cos(beta) ** 3)
    h = _height(r, z, lat)
    for _ in range(_MAX_ITER):
        n = A / math.sqrt(1.0 - E2 * math.sin(lat) ** 2)
        new_lat = math.atan2(z, r * (1.0 - E2 * n / (n + h)))
        new_h = _height(r, z, new_lat)
        done = abs(new_h - h) < 1e-5 and abs(new_lat - lat) < 1e-13
        lat, h = new_lat, new_h
        if done:
            break
    return GeodeticCoord(lat, lon, h)


def _height(r: float, z: float, lat: float) -> float:
    # valid at all latitudes, unlike r / cos(lat) - N
    slat, clat = math.sin(lat), math.cos(lat)
    return r * clat + z * slat - A * math.sqrt(1.0 - E2 * slat * slat)


def enu_rotation(origin: GeodeticCoord) -> np.ndarray:
    """Rows are the east, north and up unit vectors of `origin` in ECEF."""
    sl, cl = math.sin(origin.lat), math.cos(origin.lat)
    so, co = math.sin(origin.lon), math.cos(origin.lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


def ecef_to_enu(p: EcefCoord, origin: GeodeticCoord) -> EnuVector:
    d = p.array() - geodetic_to_ecef(origin).array()
    return EnuVector.from_array(enu_rotation(origin) @ d)


def enu_to_ecef(v: EnuVector, origin: GeodeticCoord) -> EcefCoord:
    return EcefCoord.from_array(geodetic_to_ecef(origin).array() + enu_rotation(origin).T @ v.array())


def elevation_azimuth(target: np.ndarray, observer_ecef: np.ndarray, rot: np.ndarray) -> tuple[float, float]:
    """Elevation and azimuth (rad) of `target` seen from `observer_ecef`; `rot` from enu_rotation."""
    e, n, u = rot @ (target - observer_ecef)
    el = math.atan2(u, math.hypot(e, n))
    az = math.atan2(e, n) % (2 * math.pi)
    if az >= 2 * math.pi:
        az = 0.0
    return el, az
