"""Snapshot RTK engine: double differences, float solution, integer fix with
ratio test, and the FIX -> FLOAT -> DGNSS -> SINGLE -> NONE fallback ladder."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .constellation import ElementArray, Ephemeris, SatelliteId, SatelliteState
from .geodesy import EcefCoord, EnuVector, GeodeticCoord, ecef_to_geodetic, enu_rotation, geodetic_to_ecef
from .ils import IlsProblem, solve_integer_ambiguities
from .observation import C, WAVELENGTH, EpochObservations, geometric_range, geometric_ranges


class InsufficientSatellites(ValueError):
    pass


class EpochMismatch(ValueError):
    pass


class SingularGeometry(ArithmeticError):
    pass


class NoConvergence(ArithmeticError):
    pass


class SolutionStatus(enum.Enum):
    FIX = "FIX"
    FLOAT = "FLOAT"
    DGNSS = "DGNSS"
    SINGLE = "SINGLE"
    NONE = "NONE"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {
    SolutionStatus.NONE: 0,
    SolutionStatus.SINGLE: 1,
    SolutionStatus.DGNSS: 2,
    SolutionStatus.FLOAT: 3,
    SolutionStatus.FIX: 4,
}


@dataclass
class RtkConfig:
    ratio_threshold: float = 3.0
    max_age: float = 10.0  # s
    max_epoch_offset: float = 0.1  # s, station/rover time tags for carrier-phase RTK
    sigma_code: float = 0.3  # m, undifferenced
    sigma_phase: float = 0.003 / WAVELENGTH  # cycles, undifferenced
    phase_residual_limit: float = 10.0  # in DD sigmas
    max_iterations: int = 10
    tolerance: float = 1e-4  # m


@dataclass
class RtkSolution:
    t: float
    status: SolutionStatus
    baseline: EnuVector | None = None  # rover minus station reference coordinates
    ratio: float = 0.0
    n_sats: int = 0
    fixed_ambiguities: dict[tuple[SatelliteId, SatelliteId], int] = field(default_factory=dict)
    position: np.ndarray | None = None  # rover ECEF estimate


@dataclass(frozen=True)
class DdPair:
    ref: SatelliteId
    other: SatelliteId
    dd_code: float  # m
    dd_phase: float  # cycles


@dataclass
class DdEquationSet:
    t: float  # rover epoch
    station_t: float
    station_position: np.ndarray  # ECEF of the station reference coordinates
    ref_sats: dict  # constellation -> SatelliteId
    pairs: list[DdPair]
    geometry: np.ndarray  # (n_pairs, 3) unit LOS differences seen from the station
    rover_states: dict[SatelliteId, SatelliteState]
    station_ranges: dict[SatelliteId, float]
    _index: dict | None = field(default=None, repr=False)

    @property
    def satellites(self) -> list[SatelliteId]:
        return sorted({p.ref for p in self.pairs} | {p.other for p in self.pairs})

    def covariance(self, sigma: float) -> np.ndarray:
        """DD covariance for undifferenced sigma: 4 sigma^2 on the diagonal,
        2 sigma^2 between pairs sharing a reference satellite."""
        refs = [p.ref for p in self.pairs]
        same = np.array([[a == b for b in refs] for a in refs], dtype=float)
        return 2.0 * sigma**2 * (same + np.eye(len(refs)))

    def model(self, rover_ecef: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Modeled DD ranges (m) and their Jacobian w.r.t. the rover position."""
        if self._index is None:
            sats = self.satellites
            self._index = {s: i for i, s in enumerate(sats)}
            self._orbits = ElementArray([self.rover_states[s].elements for s in sats])
            self._b_ranges = np.array([self.station_ranges[s] for s in sats])
            self._other = np.array([self._index[p.other] for p in self.pairs])
            self._ref = np.array([self._index[p.ref] for p in self.pairs])
        rho, tx = geometric_ranges(self._orbits, self.t, rover_ecef)
        sd = rho - self._b_ranges
        los = (tx - rover_ecef) / rho[:, None]
        dd = sd[self._other] - sd[self._ref]
        jac = -(los[self._other] - los[self._ref])
        return dd, jac


def _to_ecef(pos) -> np.ndarray:
    if isinstance(pos, GeodeticCoord):
        return geodetic_to_ecef(pos).array()
    if isinstance(pos, EcefCoord):
        return pos.array()
    return np.asarray(pos, dtype=float)


def form_double_differences(
    station: EpochObservations,
    rover: EpochObservations,
    ephemeris: Ephemeris,
    station_position,
    max_dt: float = 0.1,
) -> DdEquationSet:
    """Rover-minus-station single differences, then differenced against the highest
    satellite of each constellation. Satellite clocks are applied per receiver epoch,
    so station and rover epochs may differ by up to `max_dt`."""
    if abs(rover.t - station.t) > max_dt:
        raise EpochMismatch(f"station epoch {station.t} vs rover epoch {rover.t}")
    base_ecef = _to_ecef(station_position)
    base_geo = ecef_to_geodetic(EcefCoord.from_array(base_ecef))
    s_obs = station.by_sat()
    r_obs = rover.by_sat()
    common = sorted(s for s in s_obs.keys() & r_obs.keys() if s in ephemeris)
    if len(common) < 4:
        raise InsufficientSatellites(f"{len(common)} common satellites")

    r_states = {s: ephemeris.state(s, rover.t, base_geo) for s in common}
    clk_r, clk_b, b_ranges, los = {}, {}, {}, {}
    for s in common:
        b_state = ephemeris.state(s, station.t, base_geo)
        clk_r[s] = C * r_states[s].clock_bias
        clk_b[s] = C * b_state.clock_bias
        rho, tx = geometric_range(b_state, base_ecef)
        b_ranges[s] = rho
        los[s] = (tx - base_ecef) / rho

    refs = {}
    for s in common:
        cur = refs.get(s.constellation)
        if cur is None or r_states[s].elevation > r_states[cur].elevation:
            refs[s.constellation] = s
    # Difference across satellites inside each receiver first: pseudoranges share a
    # binade, so those subtractions are exact and a receiver-wide constant cancels
    # bit for bit. Satellite clocks are small and added last.
    pairs = []
    for s in common:
        ref = refs[s.constellation]
        if s == ref:
            continue
        ro, rr, so, sr = r_obs[s], r_obs[ref], s_obs[s], s_obs[ref]
        clk = (clk_r[s] - clk_r[ref]) - (clk_b[s] - clk_b[ref])
        code = ((ro.pseudorange - rr.pseudorange) - (so.pseudorange - sr.pseudorange)) + clk
        phase = ((ro.carrier_phase - rr.carrier_phase) - (so.carrier_phase - sr.carrier_phase)) + clk / WAVELENGTH
        pairs.append(DdPair(ref, s, code, phase))
    if not pairs:
        raise InsufficientSatellites("no constellation with two common satellites")
    geometry = np.array([-(los[p.other] - los[p.ref]) for p in pairs])
    return DdEquationSet(rover.t, station.t, base_ecef, refs, pairs, geometry, r_states, b_ranges)


@dataclass
class FloatResult:
    baseline: EnuVector
    ils: IlsProblem | None
    residuals: np.ndarray
    rover_ecef: np.ndarray
    covariance: np.ndarray  # full (3 + n_amb) parameter covariance, ECEF metres / cycles
    iterations: int


def _solve_normal(H: np.ndarray, W: np.ndarray, r: np.ndarray):
    N = H.T @ W @ H
    s = 1.0 / np.sqrt(np.clip(np.diag(N), 1e-300, None))
    Ns = N * s[:, None] * s[None, :]
    if np.linalg.cond(Ns) > 1e12:
        raise SingularGeometry("normal matrix is ill-conditioned")
    cov = np.linalg.inv(Ns) * s[:, None] * s[None, :]
    cov = 0.5 * (cov + cov.T)
    return cov @ (H.T @ W @ r), cov


def float_solution(
    dd: DdEquationSet,
    approx_baseline: EnuVector | None = None,
    config: RtkConfig | None = None,
    use_phase: bool = True,
    fixed: np.ndarray | None = None,
) -> FloatResult:
    """Weighted Gauss-Newton over stacked DD code and DD phase rows.

    Unknowns are the baseline and one float ambiguity per phase pair. With `fixed`
    the ambiguities are held at the given integers; with use_phase=False only code
    rows are used.
    """
    cfg = config or RtkConfig()
    n = len(dd.pairs)
    use_phase = use_phase or fixed is not None
    if n < 3:
        raise SingularGeometry(f"{n} DD pairs cannot determine a 3D baseline")
    rot = enu_rotation(ecef_to_geodetic(EcefCoord.from_array(dd.station_position)))
    x = dd.station_position.copy()
    if approx_baseline is not None:
        x = x + rot.T @ approx_baseline.array()

    code = np.array([p.dd_code for p in dd.pairs])
    phase = np.array([p.dd_phase for p in dd.pairs])
    cov_c = dd.covariance(cfg.sigma_code)
    blocks = [np.linalg.inv(cov_c)]
    if use_phase:
        blocks.append(np.linalg.inv(dd.covariance(cfg.sigma_phase)))
    W = _block_diag(blocks)
    n_amb = n if use_phase and fixed is None else 0
    amb = np.zeros(n_amb)

    for it in range(1, cfg.max_iterations + 1):
        model, jac = dd.model(x)
        rows = [np.hstack([jac, np.zeros((n, n_amb))])]
        res = [code - model]
        if use_phase:
            a = fixed if fixed is not None else amb
            rows.append(np.hstack([jac / WAVELENGTH, np.eye(n) if n_amb else np.zeros((n, 0))]))
            res.append(phase - model / WAVELENGTH - a)
        H = np.vstack(rows)
        r = np.concatenate(res)
        dx, cov = _solve_normal(H, W, r)
        x = x + dx[:3]
        amb = amb + dx[3:]
        if np.linalg.norm(dx[:3]) < cfg.tolerance:
            break
    else:
        raise NoConvergence(f"no convergence after {cfg.max_iterations} iterations")

    model, _ = dd.model(x)
    residuals = [code - model]
    if use_phase:
        a = fixed if fixed is not None else amb
        residuals.append(phase - model / WAVELENGTH - a)
    ils = IlsProblem(amb, cov[3:, 3:]) if n_amb else None
    baseline = EnuVector.from_array(rot @ (x - dd.station_position))
    return FloatResult(baseline, ils, np.concatenate(residuals), x, cov, it)


def _block_diag(blocks):
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i : i + k, i : i + k] = b
        i += k
    return out


def single_point(rover: EpochObservations, ephemeris: Ephemeris, approx=None, max_iterations: int = 10):
    """Pseudorange point solution; returns (ECEF position, receiver clock in m, n_sats)."""
    obs = [o for o in rover.observations if o.valid and o.sat in ephemeris]
    if len(obs) < 4:
        raise InsufficientSatellites(f"{len(obs)} satellites")
    x = np.zeros(4)
    if approx is not None:
        x[:3] = _to_ecef(approx)
    geo_ref = None
    states = {}
    for _ in range(max_iterations):
        if np.linalg.norm(x[:3]) > 6.0e6:
            g = ecef_to_geodetic(EcefCoord.from_array(x[:3]))
            if geo_ref is None or abs(g.lat - geo_ref.lat) + abs(g.lon - geo_ref.lon) > 1e-3:
                geo_ref = g
                states = {o.sat: ephemeris.state(o.sat, rover.t, g) for o in obs}
        if not states:
            states = {o.sat: ephemeris.state(o.sat, rover.t, GeodeticCoord(0.0, 0.0, 0.0)) for o in obs}
        H = np.zeros((len(obs), 4))
        r = np.zeros(len(obs))
        for i, o in enumerate(obs):
            st = states[o.sat]
            rho, tx = geometric_range(st, x[:3])
            H[i, :3] = -(tx - x[:3]) / rho
            H[i, 3] = 1.0
            r[i] = o.pseudorange + C * st.clock_bias - (rho + x[3])
        dx, *_ = np.linalg.lstsq(H, r, rcond=None)
        x += dx
        if np.linalg.norm(dx[:3]) < 1e-4:
            return x[:3], x[3], len(obs)
    raise NoConvergence("single point solution did not converge")


def solve_epoch(
    station: EpochObservations | None,
    rover: EpochObservations,
    ephemeris: Ephemeris,
    station_position,
    config: RtkConfig | None = None,
) -> RtkSolution:
    """Best available solution for one rover epoch.

    `station` is the most recent station epoch with usable observations (or None);
    its age is rover.t - station.t.
    """
    cfg = config or RtkConfig()
    t = rover.t
    base_ecef = _to_ecef(station_position) if station_position is not None else None
    age = math.inf if station is None else rover.t - station.t

    if base_ecef is not None and age <= cfg.max_age:
        matched = abs(age) <= cfg.max_epoch_offset
        try:
            dd = form_double_differences(station, rover, ephemeris, base_ecef, max_dt=cfg.max_age)
        except (InsufficientSatellites, EpochMismatch):
            dd = None
        if dd is not None:
            sol = _solve_dd(dd, cfg, use_phase=matched)
            if sol is not None:
                return sol
    return _single(rover, ephemeris, base_ecef, cfg)


def _solve_dd(dd: DdEquationSet, cfg: RtkConfig, use_phase: bool) -> RtkSolution | None:
    n_sats = len(dd.satellites)
    try:
        code_only = float_solution(dd, config=cfg, use_phase=False)
    except (SingularGeometry, NoConvergence):
        return None
    dgnss = RtkSolution(dd.t, SolutionStatus.DGNSS, code_only.baseline, 0.0, n_sats, position=code_only.rover_ecef)
    if not use_phase:
        return dgnss
    try:
        flt = float_solution(dd, approx_baseline=code_only.baseline, config=cfg)
    except (SingularGeometry, NoConvergence):
        return dgnss
    fixed, ratio = solve_integer_ambiguities(flt.ils, cfg.ratio_threshold)
    if fixed is None:
        return RtkSolution(dd.t, SolutionStatus.FLOAT, flt.baseline, ratio, n_sats, position=flt.rover_ecef)
    try:
        fix = float_solution(dd, approx_baseline=flt.baseline, config=cfg, fixed=fixed.astype(float))
    except (SingularGeometry, NoConvergence):
        return dgnss
    n = len(dd.pairs)
    limit = cfg.phase_residual_limit * 2.0 * cfg.sigma_phase
    if np.max(np.abs(fix.residuals[n:])) > limit:
        dgnss.ratio = ratio
        return dgnss
    amb = {(p.ref, p.other): int(a) for p, a in zip(dd.pairs, fixed)}
    return RtkSolution(dd.t, SolutionStatus.FIX, fix.baseline, ratio, n_sats, amb, fix.rover_ecef)


def _single(rover: EpochObservations, ephemeris: Ephemeris, base_ecef, cfg: RtkConfig) -> RtkSolution:
    try:
        pos, _, n = single_point(rover, ephemeris, approx=base_ecef)
    except (InsufficientSatellites, NoConvergence, np.linalg.LinAlgError):
        return RtkSolution(rover.t, SolutionStatus.NONE, None, 0.0, min(rover.n_valid(), 3))
    baseline = None
    if base_ecef is not None:
        rot = enu_rotation(ecef_to_geodetic(EcefCoord.from_array(base_ecef)))
        baseline = EnuVector.from_array(rot @ (pos - base_ecef))
    return RtkSolution(rover.t, SolutionStatus.SINGLE, baseline, 0.0, n, position=pos)
