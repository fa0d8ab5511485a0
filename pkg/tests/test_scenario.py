import copy
import json
import logging
import math
import threading
from dataclasses import replace

import numpy as np
import pytest

from rtkspoof.geodesy import ecef_to_enu, geodetic_to_ecef
from rtkspoof.ntrip import Caster, CorrectionClient
from rtkspoof.rtk import SolutionStatus
from rtkspoof.scenario import (
    ConfigInvalid,
    load_scenario,
    parse_scenario,
    rover_session,
    run_scenario,
    shipped_scenario,
    station_frames,
)

from netutil import wait_for

SHIPPED = ["nominal", "sync_lift_off", "async_spoof", "jam"]


def raw(name="nominal"):
    return json.loads(shipped_scenario(name).read_text())


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_parse(name):
    cfg = load_scenario(shipped_scenario(name))
    assert cfg.n_epochs == 600 and cfg.seed == 42
    assert (cfg.attack is None) == (name == "nominal")


def test_rover_offset_is_one_km():
    cfg = load_scenario(shipped_scenario("nominal"))
    enu = ecef_to_enu(geodetic_to_ecef(cfg.rover(0.0)), cfg.station_survey).array()
    assert np.allclose(enu, [600.0, 800.0, 5.0], atol=1e-6)


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.update(duration=0), "duration"),
        (lambda d: d.update(epoch_interval=-1), "epoch_interval"),
        (lambda d: d.update(seed=-3), "seed"),
        (lambda d: d.pop("station"), "station"),
        (lambda d: d["rover"].update(position={"east": 60_000.0}), "rover"),
        (lambda d: d["rover"]["receiver"].update(sigma_code=0), "rover.receiver.sigma_code"),
        (lambda d: d["rover"]["receiver"].update(bogus=1), "rover.receiver"),
        (lambda d: d["constellations"].append({"kind": "GLO"}), "constellations[2].kind"),
        (lambda d: d.update(attack={"mode": "JAM", "start": 5, "end": 2}), "attack"),
        (lambda d: d.update(attack={"mode": "ZAP", "start": 0, "end": 2}), "attack.mode"),
        (lambda d: d["station"].update(survey_position={"lat_deg": 95.0, "lon_deg": 0.0}), "station.survey_position"),
    ],
)
def test_config_errors_name_the_field(mutate, field):
    d = raw()
    mutate(d)
    with pytest.raises(ConfigInvalid) as e:
        parse_scenario(d)
    assert any(msg.startswith(field) for msg in e.value.errors), e.value.errors


def test_all_errors_reported_together():
    d = raw()
    d["duration"] = -1
    d["rover"]["receiver"]["sigma_code"] = -1
    with pytest.raises(ConfigInvalid) as e:
        parse_scenario(d)
    assert len(e.value.errors) == 2


def test_far_rover_warns(caplog):
    d = raw()
    d["rover"]["position"] = {"east": 20_000.0, "north": 0.0, "up": 0.0}
    with caplog.at_level(logging.WARNING):
        parse_scenario(d)
    assert "20.0 km" in caplog.text


def test_waypoints_interpolate():
    d = raw()
    del d["rover"]["position"]
    d["rover"]["waypoints"] = [{"t": 0, "east": 0.0, "north": 100.0}, {"t": 100, "east": 200.0, "north": 100.0}]
    cfg = parse_scenario(d)
    enu = ecef_to_enu(geodetic_to_ecef(cfg.rover(25.0)), cfg.station_survey).array()
    assert np.allclose(enu, [50.0, 100.0, 0.0], atol=1e-6)
    end = ecef_to_enu(geodetic_to_ecef(cfg.rover(500.0)), cfg.station_survey).array()
    assert np.allclose(end, [200.0, 100.0, 0.0], atol=1e-6)


def test_moving_rover_fixes():
    d = raw()
    del d["rover"]["position"]
    d["rover"]["waypoints"] = [{"t": 0, "east": 0.0, "north": 500.0}, {"t": 60, "east": 300.0, "north": 500.0}]
    d["duration"] = 60
    res = run_scenario(parse_scenario(d))
    assert res.summary.fix_rate >= 0.95 and res.summary.rms_3d < 0.05


def short(name, duration):
    cfg = load_scenario(shipped_scenario(name))
    return replace(cfg, duration=float(duration))


def test_determinism_same_seed():
    a = run_scenario(short("sync_lift_off", 140)).records
    b = run_scenario(short("sync_lift_off", 140)).records
    assert [r.csv_row() for r in a] == [r.csv_row() for r in b]


def test_seed_changes_output():
    a = run_scenario(short("nominal", 30)).records
    b = run_scenario(replace(short("nominal", 30), seed=7)).records
    assert [r.csv_row() for r in a] != [r.csv_row() for r in b]


def test_tcp_path_matches_inprocess():
    cfg = short("async_spoof", 115)  # covers the takeover gap and the first spoofed epochs
    a = run_scenario(cfg)
    b = run_scenario(cfg, transport="tcp")
    assert a.records == b.records
    assert a.monitor_records == b.monitor_records


def test_unknown_transport():
    with pytest.raises(ValueError):
        run_scenario(short("nominal", 2), transport="carrier-pigeon")


@pytest.mark.parametrize("name", ["sync_lift_off", "async_spoof", "jam"])
def test_pre_attack_epochs_identical_to_nominal(shipped, name):
    cfg, res = shipped(name)
    _, nom = shipped("nominal")
    before = [r for r in res.records if r.t < cfg.attack.start]
    assert len(before) == int(cfg.attack.start)
    for r, n in zip(before, nom.records):
        assert replace(r, station_under_attack=False) == n
        assert r.csv_row() == n.csv_row()


def test_caster_killed_rover_falls_back_to_single():
    cfg = short("nominal", 60)
    eph = cfg.ephemeris()
    frames = dict(station_frames(cfg, eph))
    session = rover_session(cfg, "rover", eph)
    now = {"t": 0.0}
    caster = Caster(mountpoint=cfg.mountpoint).start()
    client = CorrectionClient(caster.address, cfg.mountpoint, clock=lambda: now["t"], max_retries=2, sleep=lambda s: None)
    got, ages, failure = [], [], []

    def read():
        try:
            for msg, age in client:
                got.append(msg)
        except ConnectionRefusedError as e:
            failure.append(e)

    threading.Thread(target=read, daemon=True).start()
    assert wait_for(lambda: caster.client_count == 1)
    kill_at = 20.0
    statuses = {}
    for k in range(cfg.n_epochs):
        t = cfg.epoch_time(k)
        now["t"] = t
        if t < kill_at:
            n = len(got)
            for f in frames[t]:
                caster.publish(f)
            assert wait_for(lambda: len(got) == n + 2)
            for m in got[n:]:
                session.ingest(m)
        elif t == kill_at:
            caster.close()
            assert wait_for(lambda: bool(failure))
        ages.append(t - got[-1].epoch_t)
        _, sol = session.step(t)
        statuses[t] = sol.status
    client.close()

    max_age = cfg.rtk.max_age
    assert all(statuses[t] is SolutionStatus.FIX for t in statuses if t < kill_at)
    assert all(statuses[t] is not SolutionStatus.FIX for t in statuses if t >= kill_at)
    assert all(statuses[t] is SolutionStatus.SINGLE for t in statuses if t - (kill_at - 1) > max_age)
    stale = ages[int(kill_at):]
    assert stale == sorted(stale) and stale[0] == 1.0 and stale[-1] > max_age
    assert isinstance(failure[0], ConnectionRefusedError)
