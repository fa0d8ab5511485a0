"""Scenario configuration and the deterministic simulation loop.

Each epoch: clocks advance, satellite geometry is evaluated, the station measures
honest observations, the attack (if any) transforms them, the station's frames go
through the correction link, and every rover measures and solves.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attacker import AttackMode, AttackProfile, Attacker, tampered_satellites
from .constellation import Constellation, Ephemeris, SatelliteId, build_constellation, visible_satellites
from .geodesy import EcefCoord, EnuVector, GeodeticCoord, ecef_to_enu, ecef_to_geodetic, enu_to_ecef, geodetic_to_ecef
from .metrics import EpochRecord, MetricsSummary, compute_metrics, window, write_csv
from .ntrip import Caster, CorrectionClient
from .observation import (
    WAVELENGTH,
    AtmosphereModel,
    EpochObservations,
    Observation,
    ReceiverModel,
    advance_clock,
    drop_locks,
    measure,
    receiver_rng,
)
from .rtk import RtkConfig, RtkSolution, SolutionStatus, solve_epoch
from .wire import (
    CorrectionMessage,
    FrameDecoder,
    MessageType,
    ObservationsPayload,
    SatObservation,
    StationCoordsPayload,
    encode_message,
)

log = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
MAX_BASELINE_KM = 50.0
WARN_BASELINE_KM = 10.0


class ConfigInvalid(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class ReceiverParams:
    sigma_code: float = 0.3
    sigma_phase_m: float = 0.003
    clock_bias: float = 0.0
    clock_drift: float = 0.0
    clock_rw_intensity: float = 1e-9
    tracking_threshold: float = 30.0
    nominal_cn0: float = 45.0

    def model(self, rx_id: str, position: GeodeticCoord) -> ReceiverModel:
        return ReceiverModel(
            id=rx_id,
            truth_position=position,
            clock_bias=self.clock_bias,
            clock_drift=self.clock_drift,
            clock_rw_intensity=self.clock_rw_intensity,
            sigma_code=self.sigma_code,
            sigma_phase=self.sigma_phase_m / WAVELENGTH,
            tracking_threshold=self.tracking_threshold,
            nominal_cn0=self.nominal_cn0,
        )


@dataclass
class Trajectory:
    """Piecewise-linear (in ECEF) path through timed waypoints; constant outside."""

    times: list[float]
    points: list[GeodeticCoord]

    def __post_init__(self):
        self._ecef = [geodetic_to_ecef(p).array() for p in self.points]

    def __call__(self, t: float) -> GeodeticCoord:
        if len(self.points) == 1 or t <= self.times[0]:
            return self.points[0]
        if t >= self.times[-1]:
            return self.points[-1]
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        f = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        p = (1 - f) * self._ecef[i] + f * self._ecef[i + 1]
        return ecef_to_geodetic(EcefCoord.from_array(p))


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    duration: float
    epoch_interval: float
    station_survey: GeodeticCoord
    station_truth: GeodeticCoord
    rover: Trajectory
    station_id: int = 1
    station_receiver: ReceiverParams = field(default_factory=ReceiverParams)
    rover_receiver: ReceiverParams = field(default_factory=ReceiverParams)
    constellations: list[dict] = field(default_factory=lambda: [{"kind": Constellation.GPS}, {"kind": Constellation.GAL}])
    atmosphere: AtmosphereModel = field(default_factory=AtmosphereModel)
    attack: AttackProfile | None = None
    rtk: RtkConfig = field(default_factory=RtkConfig)
    elevation_mask: float = math.radians(10.0)
    monitor: GeodeticCoord | None = None
    mountpoint: str = "RTK"
    outputs: dict = field(default_factory=dict)

    @property
    def n_epochs(self) -> int:
        return int(round(self.duration / self.epoch_interval))

    def epoch_time(self, k: int) -> float:
        return k * self.epoch_interval

    def ephemeris(self) -> Ephemeris:
        sats = []
        for c in self.constellations:
            sats += build_constellation(**c)
        return Ephemeris(sats)


# -- parsing ---------------------------------------------------------------

_RECEIVER_KEYS = set(ReceiverParams.__dataclass_fields__)
_RTK_KEYS = {"ratio_threshold", "max_age", "max_epoch_offset", "phase_residual_limit"}


class _Errors(list):
    def check(self, cond: bool, where: str, msg: str):
        if not cond:
            self.append(f"{where}: {msg}")
        return cond


def _number(d: dict, key: str, where: str, errs: _Errors, default=None, positive=False, nonneg=False):
    path = f"{where}.{key}" if where else key
    if key not in d:
        if default is None:
            errs.append(f"{path}: required")
            return math.nan
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        errs.append(f"{path}: expected a finite number, got {v!r}")
        return math.nan
    if positive and v <= 0:
        errs.append(f"{path}: must be > 0")
    if nonneg and v < 0:
        errs.append(f"{path}: must be >= 0")
    return float(v)


def _position(d, where: str, errs: _Errors, origin: GeodeticCoord | None) -> GeodeticCoord | None:
    if not isinstance(d, dict):
        errs.append(f"{where}: expected an object")
        return None
    if "lat_deg" in d or "lon_deg" in d:
        lat = _number(d, "lat_deg", where, errs)
        lon = _number(d, "lon_deg", where, errs)
        h = _number(d, "height", where, errs, default=0.0)
        if not errs.check(-90 <= lat <= 90 and -180 <= lon <= 360, where, "lat/lon out of range"):
            return None
        return GeodeticCoord.from_degrees(lat, lon, h)
    if {"east", "north", "up"} & d.keys():
        if origin is None:
            errs.append(f"{where}: ENU offsets need a station survey position")
            return None
        e = _number(d, "east", where, errs, default=0.0)
        n = _number(d, "north", where, errs, default=0.0)
        u = _number(d, "up", where, errs, default=0.0)
        if any(math.isnan(v) for v in (e, n, u)):
            return None
        return ecef_to_geodetic(enu_to_ecef(EnuVector(e, n, u), origin))
    errs.append(f"{where}: give lat_deg/lon_deg/height or east/north/up")
    return None


def _receiver(d, where, errs) -> ReceiverParams:
    if d is None:
        return ReceiverParams()
    if not isinstance(d, dict):
        errs.append(f"{where}: expected an object")
        return ReceiverParams()
    unknown = {k for k in d if not k.startswith("_")} - _RECEIVER_KEYS
    errs.check(not unknown, where, f"unknown keys {sorted(unknown)}")
    vals = {}
    for k in _RECEIVER_KEYS & d.keys():
        vals[k] = _number(d, k, where, errs, positive=k in {"sigma_code", "sigma_phase_m"}, nonneg=k == "clock_rw_intensity")
    p = ReceiverParams(**vals)
    errs.check(p.tracking_threshold < p.nominal_cn0, where, "tracking_threshold must be below nominal_cn0")
    return p


def _atmosphere(d, where, errs, origin_ecef) -> AtmosphereModel:
    d = d or {}
    a = AtmosphereModel(origin=origin_ecef)
    for k in ("zenith_tropo_delay", "zenith_iono_delay", "spatial_gradient"):
        if k in d:
            setattr(a, k, _number(d, k, where, errs, nonneg=True))
    return a


def _constellation_kind(v, where, errs):
    try:
        return Constellation[v] if isinstance(v, str) else Constellation(v)
    except (KeyError, ValueError):
        errs.append(f"{where}: unknown constellation {v!r} (GPS or GAL)")
        return None


def parse_scenario(d: dict) -> ScenarioConfig:
    errs = _Errors()
    if not isinstance(d, dict):
        raise ConfigInvalid(["scenario: expected a JSON object"])
    name = str(d.get("name", "scenario"))
    seed = d.get("seed")
    if not (isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2**64):
        errs.append("seed: expected an unsigned 64-bit integer")
        seed = 0
    duration = _number(d, "duration", "", errs, positive=True)
    interval = _number(d, "epoch_interval", "", errs, default=1.0, positive=True)

    st = d.get("station")
    survey = truth = None
    st_rx = ReceiverParams()
    station_id = 1
    if not isinstance(st, dict):
        errs.append("station: required object")
    else:
        survey = _position(st.get("survey_position"), "station.survey_position", errs, None)
        truth = survey
        if "truth_position" in st:
            truth = _position(st["truth_position"], "station.truth_position", errs, survey)
        st_rx = _receiver(st.get("receiver"), "station.receiver", errs)
        station_id = st.get("id", 1)
        errs.check(isinstance(station_id, int) and 0 <= station_id < 4096, "station.id", "expected 0..4095")

    rv = d.get("rover")
    rover = None
    rv_rx = ReceiverParams()
    if not isinstance(rv, dict):
        errs.append("rover: required object")
    else:
        rv_rx = _receiver(rv.get("receiver"), "rover.receiver", errs)
        if "waypoints" in rv:
            wps = rv["waypoints"]
            times, pts = [], []
            if errs.check(isinstance(wps, list) and wps, "rover.waypoints", "expected a non-empty list"):
                for i, w in enumerate(wps):
                    where = f"rover.waypoints[{i}]"
                    t = _number(w if isinstance(w, dict) else {}, "t", where, errs, nonneg=True)
                    p = _position(w, where, errs, survey)
                    times.append(t)
                    pts.append(p)
                errs.check(times == sorted(times), "rover.waypoints", "times must be non-decreasing")
            if pts and all(p is not None for p in pts):
                rover = Trajectory(times, pts)
        elif "position" in rv:
            p = _position(rv["position"], "rover.position", errs, survey)
            if p is not None:
                rover = Trajectory([0.0], [p])
        else:
            errs.append("rover: give position or waypoints")

    if rover is not None and survey is not None:
        base = geodetic_to_ecef(survey).array()
        for p in rover.points:
            km = float(np.linalg.norm(geodetic_to_ecef(p).array() - base)) / 1000.0
            errs.check(km <= MAX_BASELINE_KM, "rover", f"{km:.1f} km from the station exceeds {MAX_BASELINE_KM} km")
            if WARN_BASELINE_KM < km <= MAX_BASELINE_KM:
                log.warning("rover is %.1f km from the station; RTK coverage is usually ~10 km", km)

    consts = []
    seen = set()
    for i, c in enumerate(d.get("constellations", [{"kind": "GPS"}, {"kind": "GAL"}])):
        where = f"constellations[{i}]"
        if not isinstance(c, dict):
            errs.append(f"{where}: expected an object")
            continue
        kind = _constellation_kind(c.get("kind"), where + ".kind", errs)
        if kind is None:
            continue
        errs.check(kind not in seen, where, f"duplicate constellation {kind.name}")
        seen.add(kind)
        params = {"kind": kind}
        for k in ("n_planes", "sats_per_plane"):
            if k in c:
                if errs.check(isinstance(c[k], int) and c[k] >= 1, f"{where}.{k}", "expected a positive integer"):
                    params[k] = c[k]
        if "semi_major_axis" in c:
            params["semi_major_axis"] = _number(c, "semi_major_axis", where, errs, positive=True)
        if "inclination_deg" in c:
            params["inclination"] = math.radians(_number(c, "inclination_deg", where, errs, positive=True))
        try:
            build_constellation(**params)
        except ValueError as e:
            errs.append(f"{where}: {e}")
        consts.append(params)
    errs.check(bool(consts), "constellations", "at least one constellation is required")

    origin = geodetic_to_ecef(survey).array() if survey is not None else None
    atmos = _atmosphere(d.get("atmosphere"), "atmosphere", errs, origin)

    rtk_d = d.get("rtk") or {}
    rtk = RtkConfig(sigma_code=rv_rx.sigma_code, sigma_phase=rv_rx.sigma_phase_m / WAVELENGTH)
    for k in _RTK_KEYS & rtk_d.keys():
        setattr(rtk, k, _number(rtk_d, k, "rtk", errs, positive=True))
    mask = math.radians(_number(rtk_d, "elevation_mask_deg", "rtk", errs, default=10.0, nonneg=True))
    errs.check(mask < math.pi / 2, "rtk.elevation_mask_deg", "must be below 90")

    attack = None
    if d.get("attack") is not None:
        attack = _attack(d["attack"], errs, survey, origin)

    monitor = None
    if d.get("monitor") is not None:
        monitor = _position(d["monitor"].get("position"), "monitor.position", errs, survey)

    if errs:
        raise ConfigInvalid(list(errs))
    return ScenarioConfig(
        name=name, seed=seed, duration=duration, epoch_interval=interval,
        station_survey=survey, station_truth=truth, rover=rover, station_id=station_id,
        station_receiver=st_rx, rover_receiver=rv_rx, constellations=consts, atmosphere=atmos,
        attack=attack, rtk=rtk, elevation_mask=mask, monitor=monitor,
        mountpoint=str(d.get("mountpoint", "RTK")), outputs=dict(d.get("outputs") or {}),
    )


def _attack(a, errs: _Errors, survey, origin) -> AttackProfile | None:
    where = "attack"
    if not isinstance(a, dict):
        errs.append(f"{where}: expected an object")
        return None
    try:
        mode = AttackMode(a.get("mode"))
    except ValueError:
        errs.append(f"{where}.mode: one of {[m.value for m in AttackMode]}")
        return None
    kw = {"mode": mode}
    kw["start"] = _number(a, "start", where, errs, nonneg=True)
    kw["end"] = _number(a, "end", where, errs, positive=True)
    for k in ("power_advantage", "pull_rate", "jam_power", "capture_threshold_db", "takeover_duration"):
        if k in a:
            kw[k] = _number(a, k, where, errs, nonneg=True)
    if "pseudorange_bias_targets" in a:
        targets = {}
        for key, v in (a["pseudorange_bias_targets"] or {}).items():
            try:
                sat = SatelliteId.parse(key)
            except (KeyError, ValueError, IndexError):
                errs.append(f"{where}.pseudorange_bias_targets: bad satellite {key!r} (use e.g. G05)")
                continue
            targets[sat] = _number({key: v}, key, f"{where}.pseudorange_bias_targets", errs)
        kw["pseudorange_bias_targets"] = targets
    if "spoofed_position" in a:
        kw["spoofed_position"] = _position(a["spoofed_position"], f"{where}.spoofed_position", errs, survey)
    if "affected_constellations" in a:
        kinds = [_constellation_kind(c, f"{where}.affected_constellations", errs) for c in a["affected_constellations"]]
        kw["affected_constellations"] = frozenset(k for k in kinds if k is not None)
    if a.get("spoofer_atmosphere") is not None:
        kw["spoofer_atmosphere"] = _atmosphere(a["spoofer_atmosphere"], f"{where}.spoofer_atmosphere", errs, origin)
    try:
        return AttackProfile(**kw)
    except (ValueError, TypeError) as e:
        errs.append(f"{where}: {e}")
        return None


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigInvalid([f"{path}: {e.strerror}"]) from e
    except json.JSONDecodeError as e:
        raise ConfigInvalid([f"{path}: invalid JSON ({e})"]) from e
    return parse_scenario(data)


def shipped_scenario(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.json"


# -- station side ----------------------------------------------------------

def observations_message(station_id: int, epoch: EpochObservations) -> CorrectionMessage:
    obs = tuple(SatObservation(o.sat, o.pseudorange, o.carrier_phase, o.cn0, o.valid) for o in epoch.observations)
    return CorrectionMessage(MessageType.OBSERVATIONS, station_id, int(round(epoch.t * 1000)), ObservationsPayload(obs))


def coords_message(station_id: int, position: GeodeticCoord, t: float) -> CorrectionMessage:
    e = geodetic_to_ecef(position)
    return CorrectionMessage(MessageType.STATION_COORDS, station_id, int(round(t * 1000)), StationCoordsPayload(e.x, e.y, e.z))


class StationSimulator:
    """The reference station: honest measurements, the attack, and its frames.

    The station announces its survey coordinates, not its (possibly attacked) live
    solution.
    """

    def __init__(self, cfg: ScenarioConfig, ephemeris: Ephemeris):
        self.cfg = cfg
        self.ephemeris = ephemeris
        self.rx = cfg.station_receiver.model("station", cfg.station_truth)
        self.rng = receiver_rng(cfg.seed, "station")
        self.attacker = Attacker(cfg.attack, receiver_rng(cfg.seed, "attacker")) if cfg.attack else None
        self._last_t: float | None = None

    def under_attack(self, t: float) -> bool:
        return self.cfg.attack is not None and self.cfg.attack.active(t)

    def observe(self, t: float) -> EpochObservations:
        if self._last_t is not None:
            self.rx = advance_clock(self.rx, t - self._last_t, self.rng)
        self._last_t = t
        states = visible_satellites(self.ephemeris.states(t, self.rx.truth_position), self.cfg.elevation_mask)
        honest = measure(self.rx, states, self.cfg.atmosphere, t, self.rng)
        if self.attacker is None:
            return honest
        out = self.attacker.apply(honest, states, self.rx, self.cfg.atmosphere, t)
        if out is not honest:
            drop_locks(self.rx, tampered_satellites(honest, out))
        return out

    def frames(self, t: float) -> list[bytes]:
        epoch = self.observe(t)
        return [
            encode_message(coords_message(self.cfg.station_id, self.cfg.station_survey, t)),
            encode_message(observations_message(self.cfg.station_id, epoch)),
        ]


# -- rover side ------------------------------------------------------------

def station_epoch_from_message(msg: CorrectionMessage) -> EpochObservations:
    obs = [Observation(o.sat, o.pseudorange, o.carrier_phase, o.cn0, not o.lock) for o in msg.payload.observations]
    return EpochObservations("station", msg.epoch_t, obs)


class RoverSession:
    """A simulated rover receiver plus its RTK engine, fed by correction messages."""

    def __init__(
        self,
        rx_id: str,
        trajectory: Trajectory,
        params: ReceiverParams,
        ephemeris: Ephemeris,
        atmosphere: AtmosphereModel,
        seed: int,
        rtk: RtkConfig | None = None,
        elevation_mask: float = math.radians(10.0),
    ):
        self.trajectory = trajectory
        self.rx = params.model(rx_id, trajectory(0.0))
        self.rng = receiver_rng(seed, rx_id)
        self.ephemeris = ephemeris
        self.atmosphere = atmosphere
        self.rtk = rtk or RtkConfig()
        self.mask = elevation_mask
        self.station_position: np.ndarray | None = None
        self.station_epoch: EpochObservations | None = None  # latest with usable observations
        self.last_message_t: float | None = None
        self._last_t: float | None = None

    def ingest(self, msg: CorrectionMessage) -> None:
        if msg.msg_type is MessageType.STATION_COORDS:
            p = msg.payload
            self.station_position = np.array([p.x, p.y, p.z])
        elif msg.msg_type is MessageType.OBSERVATIONS:
            epoch = station_epoch_from_message(msg)
            self.last_message_t = epoch.t
            if epoch.n_valid():
                self.station_epoch = epoch

    def corrections_available(self, t: float) -> bool:
        return self.last_message_t is not None and t - self.last_message_t <= self.rtk.max_age

    def measure(self, t: float) -> EpochObservations:
        if self._last_t is not None:
            self.rx = advance_clock(self.rx, t - self._last_t, self.rng)
        self._last_t = t
        pos = self.trajectory(t)
        if pos != self.rx.truth_position:
            self.rx = replace(self.rx, truth_position=pos)
        states = visible_satellites(self.ephemeris.states(t, pos), self.mask)
        return measure(self.rx, states, self.atmosphere, t, self.rng)

    def solve(self, rover_epoch: EpochObservations) -> RtkSolution:
        return solve_epoch(self.station_epoch, rover_epoch, self.ephemeris, self.station_position, self.rtk)

    def step(self, t: float, under_attack: bool = False) -> tuple[EpochRecord, RtkSolution]:
        sol = self.solve(self.measure(t))
        return self.record(t, sol, under_attack), sol

    def record(self, t: float, sol: RtkSolution, under_attack: bool = False) -> EpochRecord:
        if sol.position is not None:
            err = ecef_to_enu(EcefCoord.from_array(sol.position), self.rx.truth_position).array()
        else:
            err = np.full(3, math.nan)
        return EpochRecord(
            t, sol.status, float(err[0]), float(err[1]), float(err[2]), sol.n_sats, sol.ratio,
            under_attack, self.corrections_available(t),
        )


# -- runner ----------------------------------------------------------------

@dataclass
class ScenarioResult:
    records: list[EpochRecord]
    summary: MetricsSummary
    attack_summary: MetricsSummary | None = None
    outside_summary: MetricsSummary | None = None
    monitor_records: list[EpochRecord] = field(default_factory=list)
    monitor_summary: MetricsSummary | None = None

    def summary_dict(self, cfg: ScenarioConfig) -> dict:
        out = {
            "scenario": cfg.name,
            "seed": cfg.seed,
            "overall": self.summary.to_dict(),
            "attack_window": self.attack_summary.to_dict() if self.attack_summary else None,
            "outside_window": self.outside_summary.to_dict() if self.outside_summary else None,
            "monitor": self.monitor_summary.to_dict() if self.monitor_summary else None,
        }
        if cfg.attack is not None:
            out["attack"] = {"mode": cfg.attack.mode.value, "start": cfg.attack.start, "end": cfg.attack.end}
        return out


class _InProcessLink:
    def __init__(self, n_consumers: int):
        self.decoders = [FrameDecoder() for _ in range(n_consumers)]

    def send(self, frames: list[bytes]) -> list[list[CorrectionMessage]]:
        data = b"".join(frames)
        return [d.feed(data) for d in self.decoders]

    def close(self):
        pass


class _TcpLink:
    """Publishes through a loopback caster and reads back through real clients."""

    def __init__(self, n_consumers: int, mountpoint: str, timeout: float = 10.0):
        self.timeout = timeout
        self.caster = Caster(mountpoint=mountpoint).start()
        self.clients = [CorrectionClient(self.caster.address, mountpoint, max_retries=3) for _ in range(n_consumers)]
        self.queues = [queue.Queue() for _ in self.clients]
        for c, q in zip(self.clients, self.queues):
            threading.Thread(target=self._read, args=(c, q), daemon=True).start()
        deadline = time.monotonic() + timeout
        while self.caster.client_count < n_consumers:
            if time.monotonic() > deadline:
                raise ConnectionError("clients failed to join the caster")
            time.sleep(0.002)

    @staticmethod
    def _read(client: CorrectionClient, q: queue.Queue):
        try:
            for msg, _ in client:
                q.put(msg)
        except Exception as e:  # surfaced to the simulation loop
            q.put(e)

    def send(self, frames: list[bytes]) -> list[list[CorrectionMessage]]:
        for f in frames:
            self.caster.publish(f)
        out = []
        for q in self.queues:
            msgs = []
            while len(msgs) < len(frames):
                m = q.get(timeout=self.timeout)
                if isinstance(m, Exception):
                    raise m
                msgs.append(m)
            out.append(msgs)
        return out

    def close(self):
        for c in self.clients:
            c.close()
        self.caster.close()


def run_scenario(cfg: ScenarioConfig, transport: str = "inprocess") -> ScenarioResult:
    """Run the whole timeline. `transport` is "inprocess" (frames through the
    decoder directly) or "tcp" (through a loopback caster); both give identical
    records."""
    eph = cfg.ephemeris()
    station = StationSimulator(cfg, eph)
    rovers = [RoverSession("rover", cfg.rover, cfg.rover_receiver, eph, cfg.atmosphere, cfg.seed, cfg.rtk, cfg.elevation_mask)]
    if cfg.monitor is not None:
        rovers.append(RoverSession("monitor", Trajectory([0.0], [cfg.monitor]), cfg.rover_receiver, eph, cfg.atmosphere, cfg.seed, cfg.rtk, cfg.elevation_mask))
    if transport == "inprocess":
        link = _InProcessLink(len(rovers))
    elif transport == "tcp":
        link = _TcpLink(len(rovers), cfg.mountpoint)
    else:
        raise ValueError(f"unknown transport {transport!r}")

    records: list[list[EpochRecord]] = [[] for _ in rovers]
    try:
        for k in range(cfg.n_epochs):
            t = cfg.epoch_time(k)
            delivered = link.send(station.frames(t))
            attacked = station.under_attack(t)
            for rover, msgs, recs in zip(rovers, delivered, records):
                for m in msgs:
                    rover.ingest(m)
                rec, _ = rover.step(t, attacked)
                recs.append(rec)
    finally:
        link.close()

    res = ScenarioResult(records[0], compute_metrics(records[0]))
    if cfg.attack is not None:
        a = cfg.attack
        inside = window(records[0], a.start, a.end)
        outside = [r for r in records[0] if not a.start <= r.t < a.end]
        res.attack_summary = compute_metrics(inside) if inside else None
        res.outside_summary = compute_metrics(outside) if outside else None
    if len(rovers) > 1:
        res.monitor_records = records[1]
        res.monitor_summary = compute_metrics(records[1])
    return res


def write_outputs(cfg: ScenarioConfig, result: ScenarioResult, csv_path, summary_path=None) -> None:
    write_csv(result.records, csv_path)
    if summary_path is not None:
        Path(summary_path).write_text(json.dumps(result.summary_dict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- live rover / attacker feedback -----------------------------------------

def live_records(client, session: RoverSession, max_epochs: int | None = None, under_attack=None):
    """Solve one rover epoch per observations message arriving from `client`.

    The rover's clock is slaved to the stream: each station epoch triggers a rover
    measurement at the same time tag. `under_attack` is an optional predicate on t.
    """
    n = 0
    for msg, _age in client:
        session.ingest(msg)
        if msg.msg_type is not MessageType.OBSERVATIONS:
            continue
        t = msg.epoch_t
        rec, _ = session.step(t, bool(under_attack and under_attack(t)))
        yield rec
        n += 1
        if max_epochs is not None and n >= max_epochs:
            return


def attacker_monitor(client, session: RoverSession, max_epochs: int | None = None, on_record=None) -> MetricsSummary:
    """The attacker's feedback channel: its own rover on the victim's stream."""
    recs = []
    for rec in live_records(client, session, max_epochs):
        recs.append(rec)
        if on_record is not None:
            on_record(rec)
    return compute_metrics(recs)


def fix_failure_onset(records: list[EpochRecord], after: float = 0.0) -> float | None:
    """Time of the first non-FIX epoch at or after `after`, or None."""
    for r in records:
        if r.t >= after and r.status is not SolutionStatus.FIX:
            return r.t
    return None


def station_frames(cfg: ScenarioConfig, ephemeris: Ephemeris | None = None):
    """Yield (t, frames) for the whole scenario timeline."""
    station = StationSimulator(cfg, ephemeris or cfg.ephemeris())
    for k in range(cfg.n_epochs):
        t = cfg.epoch_time(k)
        yield t, station.frames(t)


def rover_session(cfg: ScenarioConfig, which: str = "rover", ephemeris: Ephemeris | None = None) -> RoverSession:
    eph = ephemeris or cfg.ephemeris()
    if which == "monitor":
        pos = cfg.monitor or cfg.station_survey
        traj = Trajectory([0.0], [pos])
    else:
        traj = cfg.rover
    return RoverSession(which, traj, cfg.rover_receiver, eph, cfg.atmosphere, cfg.seed, cfg.rtk, cfg.elevation_mask)
