"""Code/carrier measurement synthesis for a receiver.

Measurement model per tracked satellite::

    P   = rho + c*(dt_r - dt_s) + T*m(el) + I*m(el) + e_P
    Phi = (rho + c*(dt_r - dt_s) + T*m(el) - I*m(el)) / lambda + N + e_Phi

with m(el) = 1/sin(el). N is a persistent integer while lock is held.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constellation import OMEGA_E, ElementArray, SatelliteId, SatelliteState
from .geodesy import GeodeticCoord, elevation_azimuth, enu_rotation, geodetic_to_ecef

C = 299_792_458.0
F_L1 = 1575.42e6
WAVELENGTH = C / F_L1  # GPS L1 and Galileo E1 share the carrier

AMBIGUITY_RANGE = 1000
# Pseudoranges are snapped to a 2^-27 m (~7.5 nm) grid, twice the float64 spacing
# in [2^24, 2^25) m. A constant added to every channel then rounds the same way on
# all of them, ties included, so it cancels exactly in between-satellite differences.
PR_GRID_EXP = 27

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def stream_seed(seed: int, name: str) -> int:
    """Per-receiver RNG seed: scenario seed XOR FNV-1a-64(name)."""
    return (seed & _MASK64) ^ fnv1a_64(name.encode("utf-8"))


def receiver_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(seed, name)))


@dataclass(frozen=True)
class Observation:
    sat: SatelliteId
    pseudorange: float  # m
    carrier_phase: float  # cycles
    cn0: float  # dB-Hz
    loss_of_lock: bool = False

    @property
    def valid(self) -> bool:
        return not self.loss_of_lock


@dataclass
class EpochObservations:
    receiver_id: str
    t: float
    observations: list[Observation] = field(default_factory=list)

    def by_sat(self, valid_only: bool = True) -> dict[SatelliteId, Observation]:
        return {o.sat: o for o in self.observations if o.valid or not valid_only}

    def n_valid(self) -> int:
        return sum(o.valid for o in self.observations)


@dataclass
class AtmosphereModel:
    zenith_tropo_delay: float = 2.3  # m
    zenith_iono_delay: float = 4.0  # m, L1
    spatial_gradient: float = 0.0004  # m per km from `origin`
    origin: np.ndarray | None = None  # ECEF; gradient term is zero when unset

    def __post_init__(self):
        if min(self.zenith_tropo_delay, self.zenith_iono_delay, self.spatial_gradient) < 0:
            raise ValueError("atmosphere parameters must be >= 0")

    def zenith_delays(self, rx_ecef: np.ndarray) -> tuple[float, float]:
        extra = 0.0
        if self.origin is not None and self.spatial_gradient:
            extra = self.spatial_gradient * float(np.linalg.norm(rx_ecef - self.origin)) / 1000.0
        return self.zenith_tropo_delay + extra, self.zenith_iono_delay + extra


@dataclass
class ReceiverModel:
    id: str
    truth_position: GeodeticCoord
    clock_bias: float = 0.0  # s
    clock_drift: float = 0.0  # s/s
    clock_rw_intensity: float = 1e-9  # s/sqrt(s)
    sigma_code: float = 0.3  # m
    sigma_phase: float = 0.003 / WAVELENGTH  # cycles
    tracking_threshold: float = 30.0  # dB-Hz
    nominal_cn0: float = 45.0  # dB-Hz
    ambiguities: dict[SatelliteId, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.sigma_code <= 0 or self.sigma_phase <= 0:
            raise ValueError("noise sigmas must be positive")
        if self.tracking_threshold >= self.nominal_cn0:
            raise ValueError("tracking_threshold must be below nominal_cn0")

    @property
    def ecef(self) -> np.ndarray:
        return geodetic_to_ecef(self.truth_position).array()


def transmit_position(state: SatelliteState, tau: float) -> np.ndarray:
    """Satellite position at t - tau, expressed in the ECEF frame of time t."""
    if state.elements is None:
        return state.position.array()
    p = state.elements.position(state.t - tau)
    th = OMEGA_E * tau
    c, s = math.cos(th), math.sin(th)
    return np.array([c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]])


def geometric_range(state: SatelliteState, rx_ecef: np.ndarray, iterations: int = 2) -> tuple[float, np.ndarray]:
    """Light-time and Earth-rotation corrected range; returns (range, transmit position)."""
    pos = state.position.array()
    d = pos - rx_ecef
    rho = math.sqrt(d @ d)
    for _ in range(iterations):
        pos = transmit_position(state, rho / C)
        d = pos - rx_ecef
        rho = math.sqrt(d @ d)
    return rho, pos


def geometric_ranges(orbits: ElementArray, t: float, rx_ecef: np.ndarray, iterations: int = 2):
    """Vectorized geometric_range over `orbits` at receive time `t`."""
    pos = orbits.positions(t)
    rho = np.sqrt(((pos - rx_ecef) ** 2).sum(axis=1))
    for _ in range(iterations):
        tau = rho / C
        p = orbits.positions(t - tau)
        th = OMEGA_E * tau
        c, s = np.cos(th), np.sin(th)
        pos = np.stack([c * p[:, 0] + s * p[:, 1], -s * p[:, 0] + c * p[:, 1], p[:, 2]], axis=-1)
        rho = np.sqrt(((pos - rx_ecef) ** 2).sum(axis=1))
    return rho, pos


def _snap(p: float) -> float:
    return math.ldexp(round(math.ldexp(p, PR_GRID_EXP)), -PR_GRID_EXP)


def elevation_cn0(nominal_cn0: float, elevation: float) -> float:
    el_deg = math.degrees(elevation)
    return nominal_cn0 - 0.5 * (90.0 - el_deg) / 90.0 * 10.0


def measure(
    rx: ReceiverModel,
    sats: list[SatelliteState],
    atmos: AtmosphereModel,
    t: float,
    rng: np.random.Generator,
) -> EpochObservations:
    """Synthesize one epoch of observations for `rx`.

    Updates ``rx.ambiguities`` in place: satellites no longer present or below the
    tracking threshold drop their ambiguity and draw a new one on reacquisition.
    """
    rx_ecef = rx.ecef
    rot = enu_rotation(rx.truth_position)
    zt, zi = atmos.zenith_delays(rx_ecef)
    clk = C * rx.clock_bias
    sats = sorted(sats, key=lambda s: s.id)
    seen = set()
    out = []
    if sats:
        if all(st.elements is not None for st in sats):
            rhos, txs = geometric_ranges(ElementArray([st.elements for st in sats]), t, rx_ecef)
        else:
            rhos, txs = zip(*(geometric_range(st, rx_ecef) for st in sats))
    for k, st in enumerate(sats):
        noise = rng.standard_normal(2)
        rho, tx = float(rhos[k]), txs[k]
        el, _ = elevation_azimuth(tx, rx_ecef, rot)
        cn0 = elevation_cn0(rx.nominal_cn0, el)
        if cn0 < rx.tracking_threshold or el <= 0.0:
            rx.ambiguities.pop(st.id, None)
            out.append(Observation(st.id, 0.0, 0.0, max(cn0, 0.0), True))
            continue
        seen.add(st.id)
        if st.id not in rx.ambiguities:
            rx.ambiguities[st.id] = int(rng.integers(-AMBIGUITY_RANGE, AMBIGUITY_RANGE + 1))
        m = 1.0 / math.sin(el)
        common = rho - C * st.clock_bias + zt * m
        iono = zi * m
        # both terms sit on the grid, so the sum is exact and a clock change shifts
        # every channel by the same amount
        p = _snap(common + iono + rx.sigma_code * noise[0]) + _snap(clk)
        phi = ((common - iono) / WAVELENGTH + rx.ambiguities[st.id] + rx.sigma_phase * noise[1]) + clk / WAVELENGTH
        out.append(Observation(st.id, p, phi, min(cn0, 60.0)))
    for sat in list(rx.ambiguities):
        if sat not in seen:
            del rx.ambiguities[sat]
    return EpochObservations(rx.id, t, out)


def advance_clock(rx: ReceiverModel, dt: float, rng: np.random.Generator) -> ReceiverModel:
    """Random-walk clock step. The ambiguity map is carried over (same dict)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    step = rx.clock_drift * dt
    if rx.clock_rw_intensity > 0:
        step += rx.clock_rw_intensity * math.sqrt(dt) * float(rng.standard_normal())
    return replace(rx, clock_bias=rx.clock_bias + step)


def drop_locks(rx: ReceiverModel, sats) -> None:
    """Forget ambiguities of satellites whose authentic carrier lock was broken."""
    for sat in sats:
        rx.ambiguities.pop(sat, None)
