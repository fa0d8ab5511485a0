import random
import threading
import time

import pytest

from rtkspoof.ntrip import (
    OK_REPLY,
    Caster,
    CorrectionClient,
    HandshakeRejected,
    backoff_delays,
    caster_serve,
    parse_request,
)
from rtkspoof.wire import FrameDecoder, decode_message, encode_message

from netutil import FaultProxy, raw_connect, read_all, read_exact, read_reply, wait_for
from test_wire import coords, random_message


def frames(n, seed=0):
    rng = random.Random(seed)
    return [encode_message(random_message(rng)) for _ in range(n)]


def test_parse_request():
    assert parse_request(b"GET /RTK HTTP/1.1\r\nAuthorization: Bearer abc\r\n") == ("RTK", "abc")
    assert parse_request(b"GET /X HTTP/1.0\r\nUser-Agent: x\r\n") == ("X", None)
    assert parse_request(b"POST / HTTP/1.1\r\n")[0] is None


def test_three_clients_receive_identical_streams():
    fs = frames(50)
    with Caster() as caster:
        socks = [raw_connect(caster.address) for _ in range(3)]
        assert all(read_reply(s) == OK_REPLY for s in socks)
        assert wait_for(lambda: caster.client_count == 3)
        for f in fs:
            caster.publish(f)
        total = sum(map(len, fs))
        got = [read_exact(s, total) for s in socks]
        for s in socks:
            s.close()
    assert got[0] == got[1] == got[2] == b"".join(fs)


def test_mid_stream_join_is_frame_aligned():
    fs = frames(400, seed=1)
    with Caster() as caster:
        stop = threading.Event()

        def pump():
            for f in fs:
                if stop.is_set():
                    return
                caster.publish(f)
                time.sleep(0.002)

        t = threading.Thread(target=pump)
        t.start()
        time.sleep(0.1)
        s = raw_connect(caster.address)
        assert read_reply(s) == OK_REPLY
        data = read_exact(s, 2000)
        stop.set()
        t.join()
        s.close()
    assert data[0] == 0xD3
    dec = FrameDecoder()
    msgs = dec.feed(data)
    assert msgs and dec.skipped_bytes == 0 and dec.error_count == 0
    assert encode_message(msgs[0]) in fs


def test_stalled_client_dropped_without_delaying_others():
    epoch = 0.2
    big = frames(40, seed=2)  # ~10 kB per epoch batch below
    with Caster(stall_timeout=0.5, send_buffer=4096) as caster:
        stalled = raw_connect(caster.address, rcvbuf=4096)
        assert read_reply(stalled) == OK_REPLY
        healthy = raw_connect(caster.address)
        assert read_reply(healthy) == OK_REPLY
        assert wait_for(lambda: caster.client_count == 2)
        dec = FrameDecoder()
        lag = []
        for k in range(15):
            batch = b"".join(big[(k * 4) % 40 : (k * 4) % 40 + 4]) * 3
            sent = time.monotonic()
            caster.publish(batch)
            got = read_exact(healthy, len(batch))
            lag.append(time.monotonic() - sent)
            assert got == batch
            dec.feed(got)
            time.sleep(max(0.0, epoch - (time.monotonic() - sent)))
        assert wait_for(lambda: caster.dropped_clients == 1, timeout=3.0)
        assert caster.client_count == 1
        healthy.close()
        stalled.close()
    assert max(lag) < epoch
    assert dec.error_count == 0


def test_wrong_token_rejected_before_any_frame():
    with Caster(auth_token="s3cret") as caster:
        caster.publish(encode_message(coords()))
        s = raw_connect(caster.address, token="nope")
        reply = read_all(s)
        s.close()
        assert reply.startswith(b"HTTP/1.1 401") and b"\xd3" not in reply
        s = raw_connect(caster.address, token="s3cret")
        assert read_reply(s) == OK_REPLY
        s.close()
        with pytest.raises(HandshakeRejected):
            next(iter(CorrectionClient(caster.address, "RTK", token="nope", max_retries=0)))
        with pytest.raises(HandshakeRejected):
            next(iter(CorrectionClient(caster.address, "RTK", max_retries=0)))


def test_unknown_mountpoint_gets_empty_sourcetable():
    with Caster(mountpoint="RTK") as caster:
        s = raw_connect(caster.address, mountpoint="OTHER")
        reply = read_all(s)
        s.close()
    assert reply.startswith(b"SOURCETABLE 200 OK") and reply.endswith(b"ENDSOURCETABLE\r\n")


def test_loopback_client_round_trip_and_age():
    rng = random.Random(7)
    ms = [random_message(rng) for _ in range(20)]
    now = {"t": 0.0}
    with Caster() as caster:
        client = CorrectionClient(caster.address, "RTK", clock=lambda: now["t"], max_retries=1)
        it = iter(client)
        out = []

        def consume():
            for _ in ms:
                out.append(next(it))

        th = threading.Thread(target=consume, daemon=True)
        th.start()
        assert wait_for(lambda: caster.client_count == 1)
        now["t"] = 2**31  # later than every epoch below
        for m in ms:
            caster.publish(encode_message(m))
        th.join(5)
        client.close()
    assert [m for m, _ in out] == ms
    assert all(age == pytest.approx(now["t"] - m.epoch_t) for m, age in out)


def test_backoff_schedule():
    d = backoff_delays()
    assert [next(d) for _ in range(7)] == [0.5, 1.0, 2.0, 4.0, 8.0, 8.0, 8.0]


def test_unreachable_caster_gives_connection_refused():
    with Caster() as c:
        addr = c.address
    slept = []
    client = CorrectionClient(addr, "RTK", max_retries=3, sleep=slept.append, timeout=0.5)
    with pytest.raises(ConnectionRefusedError):
        next(iter(client))
    assert slept == [0.5, 1.0, 2.0]


def test_corrupted_byte_via_proxy_loses_one_frame():
    rng = random.Random(11)
    ms = [random_message(rng) for _ in range(30)]
    fs = [encode_message(m) for m in ms]
    offset = sum(map(len, fs[:10])) + len(fs[10]) // 2  # middle of frame 10
    with Caster() as caster:
        proxy = FaultProxy(caster.address, corrupt_at=offset)
        client = CorrectionClient(proxy.address, "RTK", max_retries=1)
        it = iter(client)
        got = []
        th = threading.Thread(target=lambda: [got.append(next(it)[0]) for _ in range(29)], daemon=True)
        th.start()
        assert wait_for(lambda: caster.client_count == 1)
        for f in fs:
            caster.publish(f)
        th.join(5)
        client.close()
        proxy.close()
    assert got == ms[:10] + ms[11:]
    assert client.decode_errors >= 1


def test_client_reconnects_after_drop():
    with Caster() as caster:
        proxy = FaultProxy(caster.address)
        client = CorrectionClient(proxy.address, "RTK", max_retries=5, sleep=lambda s: time.sleep(0.01))
        it = iter(client)
        got = []
        th = threading.Thread(target=lambda: [got.append(next(it)[0]) for _ in range(2)], daemon=True)
        th.start()
        assert wait_for(lambda: caster.client_count == 1)
        caster.publish(encode_message(coords(z=1.0)))
        assert wait_for(lambda: len(got) == 1)
        proxy.cut()
        # the cut connection stays registered until the caster next writes to it
        assert wait_for(lambda: proxy.accepted == 2 and caster.client_count == 2)
        caster.publish(encode_message(coords(z=2.0)))
        th.join(5)
        client.close()
        proxy.close()
    assert [m.payload.z for m in got] == [1.0, 2.0]
    assert client.reconnects == 1


def test_caster_serve_pumps_source():
    fs = frames(5, seed=3)
    gate = threading.Event()

    def source():
        gate.wait(5)
        yield from fs

    caster = caster_serve(("127.0.0.1", 0), "RTK", source())
    try:
        s = raw_connect(caster.address)
        assert read_reply(s) == OK_REPLY
        assert wait_for(lambda: caster.client_count == 1)
        gate.set()
        assert read_exact(s, sum(map(len, fs))) == b"".join(fs)
        s.close()
    finally:
        caster.close()
