import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtkspoof.constellation import (
    DEFAULTS,
    OMEGA_E,
    Constellation,
    Ephemeris,
    OrbitElements,
    SatelliteId,
    build_constellation,
    satellite_state,
    visible_satellites,
)
from rtkspoof.geodesy import EcefCoord, GeodeticCoord, ecef_to_geodetic

import oracles

GPS_A = 26_559_700.0


def test_gps_default_layout():
    sats = build_constellation(Constellation.GPS)
    assert len(sats) == 30
    assert len({s for s, _ in sats}) == 30
    raans = sorted({round(math.degrees(el.raan), 9) for _, el in sats})
    assert raans == pytest.approx([0, 60, 120, 180, 240, 300])
    assert all(el.semi_major_axis == GPS_A and el.inclination == pytest.approx(math.radians(55)) for _, el in sats)
    # slots within a plane are 72 deg apart; plane k is phased by k * 12 deg
    plane1 = sorted(math.degrees(el.arg_lat_epoch) % 360 for _, el in sats if abs(el.raan - math.radians(60)) < 1e-9)
    assert plane1 == pytest.approx([12, 84, 156, 228, 300])


def test_gal_default_layout():
    sats = build_constellation(Constellation.GAL)
    assert len(sats) == 24
    assert sats[0][1].semi_major_axis == 29_599_800.0
    assert sats[0][1].inclination == pytest.approx(math.radians(56))
    assert sorted({round(math.degrees(e.raan)) for _, e in sats}) == [0, 120, 240]


def test_single_satellite():
    (sid, el), = build_constellation(Constellation.GPS, 1, 1)
    assert sid == SatelliteId(Constellation.GPS, 1)
    assert el.raan == 0.0 and el.arg_lat_epoch == 0.0


def test_bad_layouts_rejected():
    with pytest.raises(ValueError):
        build_constellation(Constellation.GPS, 0, 5)
    with pytest.raises(ValueError):
        build_constellation(Constellation.GPS, 6, 7)  # 42 > 36 PRNs
    with pytest.raises(ValueError):
        OrbitElements(1.9e7, 0.9, 0.0, 0.0)
    with pytest.raises(ValueError):
        OrbitElements(2.6e7, 0.0, 0.0, 0.0)


def test_satellite_id_text():
    s = SatelliteId(Constellation.GAL, 7)
    assert str(s) == "E07" and SatelliteId.parse("E07") == s
    assert SatelliteId.parse("G30") < SatelliteId.parse("E01")
    with pytest.raises(ValueError):
        SatelliteId(Constellation.GPS, 37)


def test_period_matches_formula():
    el = OrbitElements(GPS_A, math.radians(55), 0.0, 0.0)
    assert el.period == pytest.approx(oracles.circular_period(GPS_A), rel=1e-12)
    assert abs(el.period - 43_077) < 5


@given(st.floats(0, 1e6))
def test_radius_constant(t):
    el = OrbitElements(GPS_A, math.radians(55), 1.0, 2.0)
    assert np.linalg.norm(el.position(t)) == pytest.approx(GPS_A, rel=1e-6)


def test_position_inertial_oracle():
    # independent construction: rotate the orbital-plane vector, then undo Earth rotation
    el = OrbitElements(GPS_A, math.radians(55), math.radians(40), math.radians(10))
    t = 1234.5
    n = math.sqrt(3.986005e14 / GPS_A**3)
    u = el.arg_lat_epoch + n * t
    om = el.raan - OMEGA_E * t
    i = el.inclination
    expected = GPS_A * np.array([
        math.cos(u) * math.cos(om) - math.sin(u) * math.cos(i) * math.sin(om),
        math.cos(u) * math.sin(om) + math.sin(u) * math.cos(i) * math.cos(om),
        math.sin(u) * math.sin(i),
    ])
    assert np.allclose(el.position(t), expected, atol=1e-6)


def test_zenith_under_subsatellite_point():
    el = OrbitElements(GPS_A, math.radians(55), 0.3, 0.8)
    sub = ecef_to_geodetic(EcefCoord.from_array(el.position(0.0)))
    s = satellite_state(el, 0.0, GeodeticCoord(sub.lat, sub.lon, 0.0))
    assert s.elevation == pytest.approx(math.pi / 2, abs=2e-3)  # geodetic vs geocentric normal


def test_visible_count_mid_latitude_regression():
    eph = Ephemeris(build_constellation(Constellation.GPS))
    obs = GeodeticCoord.from_degrees(40.0, -100.0, 0.0)
    vis = visible_satellites(eph.states(0.0, obs), 0.0)
    assert 8 <= len(vis) <= 12
    assert len(vis) == 10  # frozen regression value


def test_visibility_filter_order_and_subset():
    eph = Ephemeris(build_constellation(Constellation.GPS) + build_constellation(Constellation.GAL))
    states = eph.states(500.0, GeodeticCoord.from_degrees(10, 10, 0))
    vis = visible_satellites(states, math.radians(15))
    assert [s.id for s in vis] == sorted(s.id for s in vis)
    assert all(s in states and s.elevation >= math.radians(15) for s in vis)
    assert visible_satellites(states, math.radians(89.99)) == []


def test_ground_track_repeats_after_two_orbits():
    for _, el in build_constellation(Constellation.GPS)[:6]:
        p0 = el.position(0.0)
        p1 = el.position(2 * el.period)
        ang = math.acos(np.clip(p0 @ p1 / (np.linalg.norm(p0) * np.linalg.norm(p1)), -1, 1))
        assert ang < 0.01 * 2 * math.pi
    sidereal = 2 * math.pi / OMEGA_E
    assert abs(2 * el.period - sidereal) / sidereal < 0.01


def test_no_teleporting():
    el = build_constellation(Constellation.GAL)[5][1]
    ts = np.arange(0, 5000, 1.0)
    steps = [np.linalg.norm(el.position(t + 1) - el.position(t)) for t in ts[::97]]
    assert max(steps) < 10_000


def test_vectorized_states_match_scalar(ephemeris):
    obs = GeodeticCoord.from_degrees(-20, 140, 100)
    for t in (0.0, 777.7):
        for s in ephemeris.states(t, obs):
            ref = satellite_state(s.elements, t, obs, s.id)
            assert np.allclose(s.position.array(), ref.position.array(), atol=1e-6)
            assert s.elevation == pytest.approx(ref.elevation, abs=1e-12)
            assert s.clock_bias == ref.clock_bias
            assert 0 <= s.azimuth < 2 * math.pi


def test_clock_linear():
    el = OrbitElements(GPS_A, 1.0, 0.0, 0.0, clock_bias=1e-4, clock_drift=1e-11)
    assert el.clock(100.0) == pytest.approx(1e-4 + 1e-9)
    assert DEFAULTS[Constellation.GPS]["n_planes"] == 6
