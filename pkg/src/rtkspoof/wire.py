"""Correction wire format: RTCM-3 outer framing (0xD3, 10-bit length, CRC-24Q)
around two simplified payloads.

Frame::

    0xD3 | 6 reserved bits (0) | 10-bit payload length | payload | CRC-24Q (3 bytes)

Payload header (all messages)::

    msg_type u12 | station_id u12 | epoch_ms u30

STATION_COORDS (1005) body: x, y, z as s38 in 0.1 mm.

OBSERVATIONS (1074) body: n_sat u8, then per satellite::

    constellation u2 | prn u6 | pseudorange u38 (1 mm) | phase s40 (1e-4 cycle) |
    cn0 u8 (0.25 dB-Hz) | lock u1

The phase field holds the carrier phase minus the quantized pseudorange expressed
in cycles (an MSM-style fine phase-range), so 40 bits cover any realistic
code-minus-carrier offset. The payload is zero-padded to a whole byte.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .constellation import Constellation, SatelliteId

PREAMBLE = 0xD3
POLY_CRC24Q = 0x1864CFB
MAX_PAYLOAD = 1023

_PR_RES = 1e-3
_PH_RES = 1e-4
_CN0_RES = 0.25
_XYZ_RES = 1e-4
# integer form of 1e4 * f_L1 / (1e3 * c): mm of range -> 1e-4 cycles
_F_L1_X10 = 15_754_200_000
_C_INT = 299_792_458


class WireError(ValueError):
    pass


class BadPreamble(WireError):
    pass


class BadCrc(WireError):
    pass


class TruncatedFrame(WireError):
    pass


class UnknownMessageType(WireError):
    pass


class MessageType(enum.IntEnum):
    STATION_COORDS = 1005
    OBSERVATIONS = 1074


def _make_table():
    table = []
    for i in range(256):
        crc = i << 16
        for _ in range(8):
            crc <<= 1
            if crc & 0x1000000:
                crc ^= POLY_CRC24Q
        table.append(crc & 0xFFFFFF)
    return table


_CRC_TABLE = _make_table()


def crc24q(data: bytes) -> int:
    crc = 0
    for b in data:
        crc = ((crc << 8) & 0xFFFFFF) ^ _CRC_TABLE[(crc >> 16) ^ b]
    return crc


@dataclass(frozen=True)
class StationCoordsPayload:
    x: float  # m, ECEF
    y: float
    z: float


@dataclass(frozen=True)
class SatObservation:
    sat: SatelliteId
    pseudorange: float  # m
    carrier_phase: float  # cycles
    cn0: float  # dB-Hz
    lock: bool = True


@dataclass(frozen=True)
class ObservationsPayload:
    observations: tuple[SatObservation, ...] = ()


@dataclass(frozen=True)
class CorrectionMessage:
    msg_type: MessageType
    station_id: int
    epoch_ms: int
    payload: StationCoordsPayload | ObservationsPayload
    crc: int | None = field(default=None, compare=False)

    @property
    def epoch_t(self) -> float:
        return self.epoch_ms / 1000.0


class BitWriter:
    def __init__(self):
        self.value = 0
        self.nbits = 0

    def put(self, value: int, width: int, signed: bool = False):
        lo, hi = (-(1 << (width - 1)), (1 << (width - 1)) - 1) if signed else (0, (1 << width) - 1)
        if not lo <= value <= hi:
            raise WireError(f"value {value} does not fit in {'s' if signed else 'u'}{width}")
        self.value = (self.value << width) | (value & ((1 << width) - 1))
        self.nbits += width

    def to_bytes(self) -> bytes:
        pad = -self.nbits % 8
        return (self.value << pad).to_bytes((self.nbits + pad) // 8, "big")


class BitReader:
    def __init__(self, data: bytes):
        self.value = int.from_bytes(data, "big")
        self.nbits = len(data) * 8
        self.pos = 0

    def get(self, width: int, signed: bool = False) -> int:
        if self.pos + width > self.nbits:
            raise TruncatedFrame("payload shorter than its fields")
        shift = self.nbits - self.pos - width
        v = (self.value >> shift) & ((1 << width) - 1)
        self.pos += width
        if signed and v >> (width - 1):
            v -= 1 << width
        return v


def _phase_ref(pr_units: int) -> int:
    return pr_units * _F_L1_X10 // _C_INT


def _encode_payload(m: CorrectionMessage) -> bytes:
    w = BitWriter()
    w.put(int(m.msg_type), 12)
    w.put(m.station_id, 12)
    w.put(m.epoch_ms, 30)
    p = m.payload
    if m.msg_type == MessageType.STATION_COORDS:
        for v in (p.x, p.y, p.z):
            w.put(round(v / _XYZ_RES), 38, signed=True)
    elif m.msg_type == MessageType.OBSERVATIONS:
        w.put(len(p.observations), 8)
        for o in p.observations:
            pr = round(o.pseudorange / _PR_RES)
            w.put(int(o.sat.constellation), 2)
            w.put(o.sat.prn, 6)
            w.put(pr, 38)
            w.put(round(o.carrier_phase / _PH_RES) - _phase_ref(pr), 40, signed=True)
            w.put(round(o.cn0 / _CN0_RES), 8)
            w.put(int(o.lock), 1)
    else:
        raise UnknownMessageType(str(m.msg_type))
    return w.to_bytes()


def encode_message(m: CorrectionMessage) -> bytes:
    payload = _encode_payload(m)
    if len(payload) > MAX_PAYLOAD:
        raise WireError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    head = bytes([PREAMBLE, (len(payload) >> 8) & 0x03, len(payload) & 0xFF]) + payload
    return head + crc24q(head).to_bytes(3, "big")


def frame_length(buf: bytes) -> int:
    """Total frame length announced by the first 3 bytes of `buf`."""
    return 3 + (((buf[1] & 0x03) << 8) | buf[2]) + 3


def decode_message(frame: bytes) -> CorrectionMessage:
    if len(frame) < 6:
        raise TruncatedFrame("frame shorter than header + CRC")
    if frame[0] != PREAMBLE or frame[1] & 0xFC:
        raise BadPreamble(f"bad preamble {frame[:2].hex()}")
    total = frame_length(frame)
    if len(frame) < total:
        raise TruncatedFrame(f"need {total} bytes, have {len(frame)}")
    frame = frame[:total]
    crc = int.from_bytes(frame[-3:], "big")
    if crc24q(frame[:-3]) != crc:
        raise BadCrc("CRC-24Q mismatch")
    r = BitReader(frame[3:-3])
    mtype = r.get(12)
    try:
        mtype = MessageType(mtype)
    except ValueError:
        raise UnknownMessageType(str(mtype)) from None
    station_id = r.get(12)
    epoch_ms = r.get(30)
    if mtype == MessageType.STATION_COORDS:
        x, y, z = (r.get(38, signed=True) * _XYZ_RES for _ in range(3))
        payload = StationCoordsPayload(x, y, z)
    else:
        obs = []
        for _ in range(r.get(8)):
            kind = r.get(2)
            prn = r.get(6)
            pr = r.get(38)
            ph = r.get(40, signed=True) + _phase_ref(pr)
            cn0 = r.get(8) * _CN0_RES
            lock = bool(r.get(1))
            try:
                sat = SatelliteId(Constellation(kind), prn)
            except ValueError as e:
                raise WireError(f"bad satellite id {kind}/{prn}") from e
            obs.append(SatObservation(sat, pr * _PR_RES, ph * _PH_RES, cn0, lock))
        payload = ObservationsPayload(tuple(obs))
    return CorrectionMessage(mtype, station_id, epoch_ms, payload, crc)


def quantize(m: CorrectionMessage) -> CorrectionMessage:
    """The message as it will look after a wire round trip."""
    return decode_message(encode_message(m))


class FrameDecoder:
    """Incremental stream decoder that resynchronizes on the next 0xD3 after garbage
    or a damaged frame. Errors are counted, never raised."""

    def __init__(self):
        self.buf = bytearray()
        self.errors: dict[str, int] = {}
        self.skipped_bytes = 0

    def _error(self, kind: str):
        self.errors[kind] = self.errors.get(kind, 0) + 1

    @property
    def error_count(self) -> int:
        return sum(self.errors.values())

    def feed(self, data: bytes) -> list[CorrectionMessage]:
        self.buf.extend(data)
        out = []
        while True:
            start = self.buf.find(PREAMBLE)
            if start < 0:
                self.skipped_bytes += len(self.buf)
                self.buf.clear()
                break
            if start:
                self.skipped_bytes += start
                del self.buf[:start]
            if len(self.buf) < 3:
                break
            if self.buf[1] & 0xFC:
                self.skipped_bytes += 1
                del self.buf[:1]
                continue
            total = frame_length(self.buf)
            if len(self.buf) < total:
                break
            try:
                msg = decode_message(bytes(self.buf[:total]))
            except BadCrc:
                self._error("crc")
                self.skipped_bytes += 1
                del self.buf[:1]
                continue
            except UnknownMessageType:
                self._error("unknown_type")
                del self.buf[:total]
                continue
            except WireError:
                self._error("malformed")
                del self.buf[:total]
                continue
            del self.buf[:total]
            out.append(msg)
        return out
