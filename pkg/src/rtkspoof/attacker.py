"""Measurement-level models of the three reference-station attacks.

* SYNC_LIFT_OFF: a code-phase-aligned GPS L1 spoofer captures the station's
  tracking and drags pseudoranges toward per-satellite bias targets.
* ASYNC_SPOOF: an unsynchronized multi-constellation spoofer forces reacquisition
  and then presents a self-consistent signal set for another position.
* JAM: C/N0 suppression until satellites drop below the tracking threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constellation import Constellation, SatelliteId, SatelliteState
from .geodesy import GeodeticCoord
from .observation import (
    AMBIGUITY_RANGE,
    C,
    WAVELENGTH,
    AtmosphereModel,
    EpochObservations,
    Observation,
    ReceiverModel,
    measure,
)

CA_CHIP_RATE = 1.023e6
CA_CHIP_LENGTH = C / CA_CHIP_RATE  # ~293.05 m
HALF_CHIP = CA_CHIP_LENGTH / 2.0  # ~146.53 m
MAX_CN0 = 60.0


class AttackMode(enum.Enum):
    SYNC_LIFT_OFF = "SYNC_LIFT_OFF"
    ASYNC_SPOOF = "ASYNC_SPOOF"
    JAM = "JAM"


@dataclass
class AttackProfile:
    mode: AttackMode
    start: float
    end: float
    power_advantage: float = 6.0  # dB over the authentic signals
    pull_rate: float = 0.5  # m/s
    pseudorange_bias_targets: dict[SatelliteId, float] = field(default_factory=dict)
    spoofed_position: GeodeticCoord | None = None
    affected_constellations: frozenset = frozenset({Constellation.GPS})
    jam_power: float = 0.0  # dB of C/N0 suppression
    capture_threshold_db: float = 3.0
    takeover_duration: float = 5.0  # s
    # Atmosphere the spoofer's simulator renders; None reproduces the live one.
    spoofer_atmosphere: AtmosphereModel | None = None

    def __post_init__(self):
        self.mode = AttackMode(self.mode)
        self.affected_constellations = frozenset(Constellation(c) for c in self.affected_constellations)
        if not self.start < self.end:
            raise ValueError("attack start must precede end")
        if self.power_advantage < 0 or self.pull_rate < 0 or self.jam_power < 0:
            raise ValueError("power_advantage, pull_rate and jam_power must be >= 0")
        if self.mode is AttackMode.ASYNC_SPOOF and self.spoofed_position is None:
            raise ValueError("ASYNC_SPOOF needs spoofed_position")

    def active(self, t: float) -> bool:
        return self.start <= t < self.end


class Capture(enum.Enum):
    AUTHENTIC = "AUTHENTIC"
    CAPTURED = "CAPTURED"


@dataclass
class CaptureState:
    status: dict[SatelliteId, Capture] = field(default_factory=dict)
    code_offset: dict[SatelliteId, float] = field(default_factory=dict)  # spoofed minus authentic, m
    captured_at: dict[SatelliteId, float] = field(default_factory=dict)
    ambiguity: dict[SatelliteId, int] = field(default_factory=dict)  # spoofer carrier integer

    def copy(self) -> CaptureState:
        return CaptureState(dict(self.status), dict(self.code_offset), dict(self.captured_at), dict(self.ambiguity))

    def captured(self) -> set[SatelliteId]:
        return {s for s, v in self.status.items() if v is Capture.CAPTURED}


def capture_rule(power_advantage: float, code_offset: float, threshold_db: float = 3.0) -> bool:
    return power_advantage >= threshold_db and abs(code_offset) < HALF_CHIP


def ramp_offset(target: float, pull_rate: float, elapsed: float) -> float:
    """Pseudorange pull after `elapsed` seconds of capture: linear toward `target`."""
    step = pull_rate * max(elapsed, 0.0)
    return math.copysign(min(step, abs(target)), target)


def apply_sync_lift_off(
    honest: EpochObservations,
    profile: AttackProfile,
    state: CaptureState,
    t: float,
    rng: np.random.Generator,
) -> tuple[EpochObservations, CaptureState]:
    if not profile.active(t):
        return honest, CaptureState()
    state = state.copy()
    out = []
    for o in honest.observations:
        if o.sat.constellation is not Constellation.GPS or not o.valid:
            out.append(o)
            continue
        if state.status.get(o.sat, Capture.AUTHENTIC) is Capture.AUTHENTIC:
            # code-phase matched at the start of the frame: zero initial offset
            if not capture_rule(profile.power_advantage, 0.0, profile.capture_threshold_db):
                out.append(o)
                continue
            state.status[o.sat] = Capture.CAPTURED
            state.captured_at[o.sat] = t
            state.ambiguity[o.sat] = int(rng.integers(-AMBIGUITY_RANGE, AMBIGUITY_RANGE + 1))
        target = profile.pseudorange_bias_targets.get(o.sat, 0.0)
        offset = ramp_offset(target, profile.pull_rate, t - state.captured_at[o.sat])
        state.code_offset[o.sat] = offset
        p = o.pseudorange + offset
        out.append(Observation(o.sat, p, p / WAVELENGTH + state.ambiguity[o.sat], min(o.cn0 + profile.power_advantage, MAX_CN0)))
    return EpochObservations(honest.receiver_id, honest.t, out), state


def spoofer_receiver(station: ReceiverModel, profile: AttackProfile) -> ReceiverModel:
    """The station receiver as the spoofer renders it: same noise and clock, placed
    at the spoofed position, with its own carrier ambiguities."""
    return replace(station, id=station.id + "/spoofed", truth_position=profile.spoofed_position, ambiguities={})


def apply_async_spoof(
    honest: EpochObservations,
    profile: AttackProfile,
    sat_states: list[SatelliteState],
    spoofer_rx: ReceiverModel,
    atmos: AtmosphereModel,
    t: float,
    rng: np.random.Generator,
) -> EpochObservations:
    """Replace affected constellations with observations generated for the spoofed
    position. During the first `takeover_duration` seconds the affected satellites
    are reported as lost (forced reacquisition); afterwards they carry fresh
    carrier ambiguities. `spoofer_rx.ambiguities` is updated in place.
    """
    if not profile.active(t):
        return honest
    affected = {o.sat for o in honest.observations if o.sat.constellation in profile.affected_constellations}
    if t < profile.start + profile.takeover_duration:
        spoofer_rx.ambiguities.clear()
        out = [
            Observation(o.sat, 0.0, 0.0, o.cn0, True) if o.sat in affected else o
            for o in honest.observations
        ]
        return EpochObservations(honest.receiver_id, honest.t, out)
    states = [s for s in sat_states if s.id in affected]
    spoofed = measure(spoofer_rx, states, profile.spoofer_atmosphere or atmos, t, rng)
    fake = {
        o.sat: replace(o, cn0=min(o.cn0 + profile.power_advantage, MAX_CN0)) if o.valid else o
        for o in spoofed.observations
    }
    out = [fake.get(o.sat, o) for o in honest.observations]
    return EpochObservations(honest.receiver_id, honest.t, out)


def apply_jam(honest: EpochObservations, profile: AttackProfile, t: float, tracking_threshold: float) -> EpochObservations:
    if not profile.active(t) or profile.jam_power == 0:
        return honest
    out = []
    for o in honest.observations:
        cn0 = max(o.cn0 - profile.jam_power, 0.0)
        if cn0 < tracking_threshold:
            out.append(Observation(o.sat, 0.0, 0.0, cn0, True))
        else:
            out.append(replace(o, cn0=cn0))
    return EpochObservations(honest.receiver_id, honest.t, out)


class Attacker:
    """Stateful driver applying one AttackProfile along a scenario timeline."""

    def __init__(self, profile: AttackProfile, rng: np.random.Generator):
        self.profile = profile
        self.rng = rng
        self.capture = CaptureState()
        self.spoofer_rx: ReceiverModel | None = None

    def apply(
        self,
        honest: EpochObservations,
        sat_states: list[SatelliteState],
        station: ReceiverModel,
        atmos: AtmosphereModel,
        t: float,
    ) -> EpochObservations:
        p = self.profile
        if not p.active(t):
            self.capture = CaptureState()
            self.spoofer_rx = None
            return honest
        if p.mode is AttackMode.SYNC_LIFT_OFF:
            out, self.capture = apply_sync_lift_off(honest, p, self.capture, t, self.rng)
            return out
        if p.mode is AttackMode.JAM:
            return apply_jam(honest, p, t, station.tracking_threshold)
        if self.spoofer_rx is None:
            self.spoofer_rx = spoofer_receiver(station, p)
        # the spoofer's clock follows the victim's current clock state
        ambiguities = self.spoofer_rx.ambiguities
        self.spoofer_rx = replace(spoofer_receiver(station, p), ambiguities=ambiguities)
        return apply_async_spoof(honest, p, sat_states, self.spoofer_rx, atmos, t, self.rng)


def tampered_satellites(honest: EpochObservations, attacked: EpochObservations) -> set[SatelliteId]:
    """Satellites whose authentic carrier tracking the attack interrupted."""
    before = {o.sat: o for o in honest.observations}
    out = set()
    for o in attacked.observations:
        h = before.get(o.sat)
        if h is None or o.loss_of_lock or o.carrier_phase != h.carrier_phase:
            out.add(o.sat)
    return out
