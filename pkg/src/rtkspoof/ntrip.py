"""NTRIP-like correction caster and client over plain TCP.

Handshake (client -> caster)::

    GET /<mountpoint> HTTP/1.1\\r\\n
    Authorization: Bearer <token>\\r\\n      (optional)
    \\r\\n

Replies: ``ICY 200 OK`` followed by the frame stream, ``HTTP/1.1 401 Unauthorized``
on a bad token, or an empty ``SOURCETABLE 200 OK`` for an unknown mountpoint.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections.abc import Callable, Iterable, Iterator

from .wire import CorrectionMessage, FrameDecoder

log = logging.getLogger(__name__)

OK_REPLY = b"ICY 200 OK\r\n\r\n"
UNAUTHORIZED_REPLY = b"HTTP/1.1 401 Unauthorized\r\n\r\n"
SOURCETABLE_REPLY = b"SOURCETABLE 200 OK\r\nContent-Length: 16\r\n\r\nENDSOURCETABLE\r\n"
MAX_HEADER = 8192


class HandshakeRejected(ConnectionError):
    pass


def _read_header(sock: socket.socket) -> tuple[bytes, bytes]:
    """Read up to the blank line; returns (header, bytes already read past it)."""
    data = b""
    while True:
        for sep in (b"\r\n\r\n", b"\n\n"):
            i = data.find(sep)
            if i >= 0:
                return data[:i], data[i + len(sep):]
        if len(data) > MAX_HEADER:
            raise ConnectionError("header too long")
        chunk = sock.recv(1024)
        if not chunk:
            raise ConnectionError("connection closed during handshake")
        data += chunk


def parse_request(header: bytes) -> tuple[str | None, str | None]:
    """Returns (mountpoint, bearer token) from a client handshake."""
    lines = header.decode("latin-1").replace("\r\n", "\n").split("\n")
    parts = lines[0].split()
    mount = None
    if len(parts) >= 2 and parts[0].upper() == "GET" and parts[1].startswith("/"):
        mount = parts[1][1:]
    token = None
    for line in lines[1:]:
        name, _, value = line.partition(":")
        if name.strip().lower() == "authorization":
            scheme, _, cred = value.strip().partition(" ")
            if scheme.lower() == "bearer":
                token = cred.strip()
    return mount, token


class Caster:
    """Fans out one station's frames to any number of TCP clients.

    The station appends whole frames to a shared log and never waits on clients.
    Each client thread sends from its own position in the log, starting at the
    next frame boundary after it joins. A client whose socket accepts nothing for
    `stall_timeout` seconds is dropped.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        mountpoint: str = "RTK",
        auth_token: str | None = None,
        stall_timeout: float = 5.0,
        send_buffer: int | None = None,
        retain_frames: int = 100_000,
    ):
        self.mountpoint = mountpoint
        self.auth_token = auth_token
        self.stall_timeout = stall_timeout
        self.send_buffer = send_buffer
        self.retain_frames = retain_frames
        self._frames: list[bytes] = []
        self._base = 0  # absolute index of self._frames[0]
        self._cond = threading.Condition()
        self._closed = False
        self._clients: set[socket.socket] = set()
        self.dropped_clients = 0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self._accept_thread = threading.Thread(target=self._accept_loop, name="caster-accept", daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    @property
    def client_count(self) -> int:
        with self._cond:
            return len(self._clients)

    def start(self) -> Caster:
        self._accept_thread.start()
        return self

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    def publish(self, frame: bytes) -> None:
        with self._cond:
            self._frames.append(bytes(frame))
            excess = len(self._frames) - self.retain_frames
            if excess > 0:
                del self._frames[:excess]
                self._base += excess
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()
            clients = list(self._clients)
        try:
            self._sock.close()
        except OSError:
            pass
        for c in clients:
            _close(c)

    def _accept_loop(self):
        while True:
            try:
                conn, addr = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_client, args=(conn, addr), daemon=True).start()

    def _serve_client(self, conn: socket.socket, addr):
        try:
            conn.settimeout(self.stall_timeout)
            header, _ = _read_header(conn)
            mount, token = parse_request(header)
            if mount != self.mountpoint:
                conn.sendall(SOURCETABLE_REPLY)
                return
            if self.auth_token is not None and token != self.auth_token:
                conn.sendall(UNAUTHORIZED_REPLY)
                return
            if self.send_buffer:
                conn.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, self.send_buffer)
            conn.sendall(OK_REPLY)
            with self._cond:
                if self._closed:
                    return
                self._clients.add(conn)
                pos = self._base + len(self._frames)
            log.info("client %s joined %s", addr, self.mountpoint)
            self._stream(conn, pos)
        except (OSError, ConnectionError) as e:
            log.info("client %s dropped: %s", addr, e)
        finally:
            with self._cond:
                self._clients.discard(conn)
            _close(conn)

    def _stream(self, conn: socket.socket, pos: int):
        while True:
            with self._cond:
                while not self._closed and pos >= self._base + len(self._frames):
                    self._cond.wait()
                if self._closed:
                    return
                if pos < self._base:
                    raise ConnectionError("client fell behind the retained log")
                batch = self._frames[pos - self._base:]
                pos = self._base + len(self._frames)
            try:
                conn.sendall(b"".join(batch))
            except socket.timeout:
                with self._cond:
                    self.dropped_clients += 1
                raise ConnectionError(f"write stalled for {self.stall_timeout} s") from None


def _close(sock: socket.socket):
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    sock.close()


def caster_serve(
    bind_address: tuple[str, int],
    mountpoint: str,
    station_source: Iterable[bytes],
    auth_token: str | None = None,
    **kwargs,
) -> Caster:
    """Start a caster and a thread pumping `station_source` frames into it."""
    caster = Caster(bind_address[0], bind_address[1], mountpoint, auth_token, **kwargs).start()

    def pump():
        for frame in station_source:
            if caster._closed:
                return
            caster.publish(frame)

    threading.Thread(target=pump, name="caster-pump", daemon=True).start()
    return caster


def backoff_delays(initial: float = 0.5, cap: float = 8.0) -> Iterator[float]:
    d = initial
    while True:
        yield d
        d = min(d * 2.0, cap)


class CorrectionClient:
    """Iterates (message, age) pairs from a caster, reconnecting on drops.

    `age` is local time minus the message epoch. `clock` returns local time in
    scenario seconds; by default it is extrapolated from the first message with
    a monotonic clock. After `max_retries` consecutive failed connection attempts
    ConnectionRefusedError is raised; HandshakeRejected is raised immediately.
    """

    def __init__(
        self,
        address: tuple[str, int],
        mountpoint: str,
        token: str | None = None,
        clock: Callable[[], float] | None = None,
        max_retries: int | None = None,
        timeout: float = 5.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.address = address
        self.mountpoint = mountpoint
        self.token = token
        self.clock = clock
        self.max_retries = max_retries
        self.timeout = timeout
        self.sleep = sleep
        self.decoder = FrameDecoder()
        self.reconnects = 0
        self._sock: socket.socket | None = None
        self._closed = False
        self._t0: tuple[float, float] | None = None

    @property
    def decode_errors(self) -> int:
        return self.decoder.error_count

    def local_time(self) -> float | None:
        if self.clock is not None:
            return self.clock()
        if self._t0 is None:
            return None
        return self._t0[0] + (time.monotonic() - self._t0[1])

    def connect(self) -> bytes:
        sock = socket.create_connection(self.address, timeout=self.timeout)
        try:
            req = f"GET /{self.mountpoint} HTTP/1.1\r\nUser-Agent: rtkspoof\r\n"
            if self.token is not None:
                req += f"Authorization: Bearer {self.token}\r\n"
            sock.sendall((req + "\r\n").encode("latin-1"))
            header, rest = _read_header(sock)
        except BaseException:
            sock.close()
            raise
        status = header.split(b"\n", 1)[0].strip()
        if not status.startswith(b"ICY 200"):
            sock.close()
            raise HandshakeRejected(status.decode("latin-1", "replace"))
        sock.settimeout(None)
        self._sock = sock
        self.decoder.buf.clear()  # a partial frame from a previous connection is useless
        return rest

    def close(self):
        self._closed = True
        if self._sock is not None:
            _close(self._sock)

    def __iter__(self) -> Iterator[tuple[CorrectionMessage, float]]:
        delays = backoff_delays()
        failures = 0
        pending = b""
        while not self._closed:
            if self._sock is None:
                try:
                    pending = self.connect()
                    failures = 0
                    delays = backoff_delays()
                except HandshakeRejected:
                    raise
                except OSError as e:
                    failures += 1
                    if self.max_retries is not None and failures > self.max_retries:
                        raise ConnectionRefusedError(f"caster {self.address} unreachable: {e}") from e
                    self.sleep(next(delays))
                    continue
            if pending:
                data, pending = pending, b""
            else:
                try:
                    data = self._sock.recv(65536)
                except OSError:
                    data = b""
            if not data:
                if self._closed:
                    return
                _close(self._sock)
                self._sock = None
                self.reconnects += 1
                continue
            for msg in self.decoder.feed(data):
                if self._t0 is None:
                    self._t0 = (msg.epoch_t, time.monotonic())
                now = self.local_time()
                yield msg, (now - msg.epoch_t) if now is not None else 0.0
