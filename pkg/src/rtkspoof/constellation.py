"""Circular-orbit Walker constellations and per-epoch satellite geometry."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geodesy import EcefCoord, GeodeticCoord, elevation_azimuth, enu_rotation, geodetic_to_ecef

MU = 3.986005e14  # m^3/s^2
OMEGA_E = 7.2921151467e-5  # rad/s


class Constellation(enum.IntEnum):
    GPS = 0
    GAL = 1


@dataclass(frozen=True, order=True)
class SatelliteId:
    constellation: Constellation
    prn: int

    def __post_init__(self):
        if not 1 <= self.prn <= 36:
            raise ValueError(f"prn out of range: {self.prn}")

    def __str__(self):
        return f"{'GE'[self.constellation]}{self.prn:02d}"

    @classmethod
    def parse(cls, text: str) -> SatelliteId:
        kind = {"G": Constellation.GPS, "E": Constellation.GAL}[text[0].upper()]
        return cls(kind, int(text[1:]))


@dataclass(frozen=True)
class OrbitElements:
    semi_major_axis: float  # m
    inclination: float  # rad
    raan: float  # rad, at t = 0
    arg_lat_epoch: float  # rad, at t = 0
    clock_bias: float = 0.0  # s
    clock_drift: float = 0.0  # s/s

    def __post_init__(self):
        if self.semi_major_axis <= 20_000_000.0:
            raise ValueError("semi_major_axis must exceed 20,000 km")
        if not 0.0 < self.inclination <= math.pi / 2:
            raise ValueError("inclination must be in (0, pi/2]")

    @property
    def mean_motion(self) -> float:
        return math.sqrt(MU / self.semi_major_axis**3)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.mean_motion

    def position(self, t: float) -> np.ndarray:
        """ECEF position (m) at time t."""
        u = self.arg_lat_epoch + self.mean_motion * t
        raan = self.raan - OMEGA_E * t
        cu, su = math.cos(u), math.sin(u)
        ci, si = math.cos(self.inclination), math.sin(self.inclination)
        co, so = math.cos(raan), math.sin(raan)
        a = self.semi_major_axis
        return np.array([
            a * (cu * co - su * ci * so),
            a * (cu * so + su * ci * co),
            a * su * si,
        ])

    def clock(self, t: float) -> float:
        return self.clock_bias + self.clock_drift * t


class ElementArray:
    """Vectorized propagation for a fixed list of orbits."""

    def __init__(self, elements):
        self.a = np.array([e.semi_major_axis for e in elements], dtype=float)
        self.inc = np.array([e.inclination for e in elements], dtype=float)
        self.raan = np.array([e.raan for e in elements], dtype=float)
        self.u0 = np.array([e.arg_lat_epoch for e in elements], dtype=float)
        self.n = np.sqrt(MU / self.a**3)

    def __len__(self):
        return self.a.size

    def positions(self, t) -> np.ndarray:
        """(k, 3) ECEF positions; `t` is a scalar or a length-k array."""
        u = self.u0 + self.n * t
        raan = self.raan - OMEGA_E * t
        cu, su = np.cos(u), np.sin(u)
        ci, si = np.cos(self.inc), np.sin(self.inc)
        co, so = np.cos(raan), np.sin(raan)
        return np.stack([
            self.a * (cu * co - su * ci * so),
            self.a * (cu * so + su * ci * co),
            self.a * su * si,
        ], axis=-1)


@dataclass(frozen=True)
class SatelliteState:
    id: SatelliteId
    position: EcefCoord
    clock_bias: float  # s
    elevation: float  # rad, seen from the query observer
    azimuth: float  # rad
    t: float = 0.0
    elements: OrbitElements | None = None  # kept so light-time can re-propagate


# Documented defaults of this simulator.
DEFAULTS = {
    Constellation.GPS: dict(n_planes=6, sats_per_plane=5, semi_major_axis=26_559_700.0, inclination=math.radians(55.0)),
    Constellation.GAL: dict(n_planes=3, sats_per_plane=8, semi_major_axis=29_599_800.0, inclination=math.radians(56.0)),
}


def build_constellation(
    kind: Constellation,
    n_planes: int | None = None,
    sats_per_plane: int | None = None,
    semi_major_axis: float | None = None,
    inclination: float | None = None,
) -> list[tuple[SatelliteId, OrbitElements]]:
    """Walker-style constellation: planes evenly spaced in RAAN, satellites evenly
    spaced in argument of latitude, consecutive planes phased by 2*pi/(P*S).

    Satellite clocks get a fixed, PRN-dependent offset (up to ~0.5 ms) and drift so
    that clock cancellation is exercised; they are deterministic, not random.
    """
    d = DEFAULTS[Constellation(kind)]
    n_planes = d["n_planes"] if n_planes is None else n_planes
    sats_per_plane = d["sats_per_plane"] if sats_per_plane is None else sats_per_plane
    a = d["semi_major_axis"] if semi_major_axis is None else semi_major_axis
    inc = d["inclination"] if inclination is None else inclination
    if n_planes < 1 or sats_per_plane < 1:
        raise ValueError("n_planes and sats_per_plane must be >= 1")
    if n_planes * sats_per_plane > 36:
        raise ValueError("at most 36 satellites per constellation")

    total = n_planes * sats_per_plane
    out = []
    for p in range(n_planes):
        for s in range(sats_per_plane):
            prn = p * sats_per_plane + s + 1
            el = OrbitElements(
                semi_major_axis=a,
                inclination=inc,
                raan=2 * math.pi * p / n_planes,
                arg_lat_epoch=(2 * math.pi * s / sats_per_plane + 2 * math.pi * p / total) % (2 * math.pi),
                clock_bias=5e-4 * math.sin(1.7 * prn + 0.3 * kind),
                clock_drift=1e-11 * math.cos(2.3 * prn),
            )
            out.append((SatelliteId(Constellation(kind), prn), el))
    return out


def satellite_state(el: OrbitElements, t: float, observer: GeodeticCoord, sat: SatelliteId | None = None) -> SatelliteState:
    if t < 0:
        raise ValueError("t must be >= 0")
    pos = el.position(t)
    elev, az = elevation_azimuth(pos, geodetic_to_ecef(observer).array(), enu_rotation(observer))
    return SatelliteState(sat, EcefCoord.from_array(pos), el.clock(t), elev, az, t, el)


def visible_satellites(states: list[SatelliteState], mask: float) -> list[SatelliteState]:
    if not 0.0 <= mask < math.pi / 2:
        raise ValueError("mask must be in [0, pi/2)")
    return sorted((s for s in states if s.elevation >= mask), key=lambda s: s.id)


class Ephemeris:
    """Orbit elements for a set of satellites, shared by the simulator and the
    rover's solver (the solver assumes perfect broadcast orbits)."""

    def __init__(self, sats: list[tuple[SatelliteId, OrbitElements]]):
        self.elements = dict(sats)
        self._orbits = None

    def __contains__(self, sat):
        return sat in self.elements

    def __getitem__(self, sat) -> OrbitElements:
        return self.elements[sat]

    def states(self, t: float, observer: GeodeticCoord) -> list[SatelliteState]:
        if self._orbits is None:
            self._sats = sorted(self.elements)
            self._orbits = ElementArray([self.elements[s] for s in self._sats])
        pos = self._orbits.positions(t)
        enu = (pos - geodetic_to_ecef(observer).array()) @ enu_rotation(observer).T
        elev = np.arctan2(enu[:, 2], np.hypot(enu[:, 0], enu[:, 1]))
        az = np.arctan2(enu[:, 0], enu[:, 1]) % (2 * math.pi)
        out = []
        for k, sat in enumerate(self._sats):
            el = self.elements[sat]
            out.append(SatelliteState(sat, EcefCoord.from_array(pos[k]), el.clock(t), float(elev[k]), float(az[k]) % (2 * math.pi), t, el))
        return out

    def state(self, sat: SatelliteId, t: float, observer: GeodeticCoord) -> SatelliteState:
        return satellite_state(self.elements[sat], t, observer, sat)
