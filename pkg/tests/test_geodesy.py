import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtkspoof.geodesy import (
    A,
    B,
    EcefCoord,
    EnuVector,
    GeodeticCoord,
    ecef_to_enu,
    ecef_to_geodetic,
    elevation_azimuth,
    enu_rotation,
    enu_to_ecef,
    geodetic_to_ecef,
)

import oracles

lats = st.floats(-89.9, 89.9).map(math.radians)
lons = st.floats(-179.999, 180.0).map(math.radians)
heights = st.floats(-500.0, 30_000_000.0)


def test_equator_prime_meridian():
    p = geodetic_to_ecef(GeodeticCoord(0.0, 0.0, 0.0))
    assert (p.x, p.y, p.z) == pytest.approx((6378137.0, 0.0, 0.0), abs=1e-9)


def test_north_pole_on_minor_axis():
    p = geodetic_to_ecef(GeodeticCoord(math.pi / 2, 1.234, 0.0))
    assert B == pytest.approx(6356752.3142, abs=1e-4)
    assert np.allclose(p.array(), [0.0, 0.0, B], atol=1e-6)


def test_inverse_simple_points():
    g = ecef_to_geodetic(EcefCoord(6378137.0, 0.0, 0.0))
    assert (g.lat, g.lon, g.height) == pytest.approx((0.0, 0.0, 0.0), abs=1e-9)
    g = ecef_to_geodetic(EcefCoord(0.0, 6378137.0, 0.0))
    assert g.lat == pytest.approx(0.0, abs=1e-12)
    assert g.lon == pytest.approx(math.pi / 2)
    assert g.height == pytest.approx(0.0, abs=1e-6)


def test_polar_axis_longitude_convention():
    g = ecef_to_geodetic(EcefCoord(0.3, -0.2, B + 100.0))
    assert g.lon == 0.0
    assert g.lat == pytest.approx(math.pi / 2)
    assert g.height == pytest.approx(100.0, abs=1e-3)


def test_coordinate_validation():
    with pytest.raises(ValueError):
        GeodeticCoord(2.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        GeodeticCoord(0.0, 0.0, math.nan)
    with pytest.raises(ValueError):
        EcefCoord(math.inf, 0.0, 0.0)


@given(lats, lons, heights)
def test_forward_matches_oracle(lat, lon, h):
    ours = geodetic_to_ecef(GeodeticCoord(lat, lon, h)).array()
    assert np.allclose(ours, oracles.geodetic_to_ecef(lat, lon, h), rtol=0, atol=1e-6)


@given(lats, lons, st.floats(-1000.0, 30_000_000.0))
def test_round_trip(lat, lon, h):
    g = ecef_to_geodetic(geodetic_to_ecef(GeodeticCoord(lat, lon, h)))
    assert abs(g.lat - lat) < 1e-9
    dlon = (g.lon - lon + math.pi) % (2 * math.pi) - math.pi
    assert abs(dlon) < 1e-9
    assert abs(g.height - h) < 1e-4


def test_inverse_matches_textbook_iteration():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        lat = math.radians(rng.uniform(-89.9, 89.9))
        lon = math.radians(rng.uniform(-180, 180))
        h = rng.uniform(-1000, 25_000_000)
        p = oracles.geodetic_to_ecef(lat, lon, h)
        ref = oracles.ecef_to_geodetic(*p)
        g = ecef_to_geodetic(EcefCoord.from_array(p))
        assert abs(g.lat - ref[0]) < 1e-9 and abs(g.lon - ref[1]) < 1e-12 and abs(g.height - ref[2]) < 1e-4


def test_enu_origin_is_zero():
    o = GeodeticCoord.from_degrees(48.1, 11.6, 520.0)
    assert np.allclose(ecef_to_enu(geodetic_to_ecef(o), o).array(), 0.0, atol=1e-9)


def test_ecef_x_is_up_at_origin():
    o = GeodeticCoord(0.0, 0.0, 0.0)
    v = ecef_to_enu(EcefCoord(A + 1.0, 0.0, 0.0), o)
    assert (v.east, v.north, v.up) == pytest.approx((0.0, 0.0, 1.0), abs=1e-9)


def test_rotation_matches_oracle():
    o = GeodeticCoord.from_degrees(-33.9, 151.2, 40.0)
    assert np.allclose(enu_rotation(o), oracles.enu_matrix(o.lat, o.lon), atol=1e-15)


@given(lats, lons, st.lists(st.floats(-1e7, 1e7), min_size=3, max_size=3))
def test_enu_is_isometry(lat, lon, d):
    o = GeodeticCoord(lat, lon, 0.0)
    base = geodetic_to_ecef(o).array()
    d = np.array(d)
    v = ecef_to_enu(EcefCoord.from_array(base + d), o)
    n = np.linalg.norm(d)
    assert abs(v.norm() - n) <= 1e-9 * max(n, 1.0)
    back = enu_to_ecef(v, o).array()
    assert np.allclose(back, base + d, atol=1e-6)


@given(lats, lons, st.floats(1.0, 1e6))
def test_point_above_origin_has_no_horizontal_component(lat, lon, dh):
    o = GeodeticCoord(lat, lon, 10.0)
    v = ecef_to_enu(geodetic_to_ecef(GeodeticCoord(lat, lon, 10.0 + dh)), o)
    assert abs(v.east) < 1e-6 and abs(v.north) < 1e-6
    assert v.up == pytest.approx(dh, abs=1e-6)


def test_elevation_azimuth_cardinal():
    o = GeodeticCoord.from_degrees(45.0, 7.0, 0.0)
    rot = enu_rotation(o)
    base = geodetic_to_ecef(o).array()
    el, az = elevation_azimuth(base + rot.T @ np.array([0.0, 0.0, 1e6]), base, rot)
    assert el == pytest.approx(math.pi / 2)
    el, az = elevation_azimuth(base + rot.T @ np.array([1e6, 0.0, 0.0]), base, rot)
    assert el == pytest.approx(0.0, abs=1e-12) and az == pytest.approx(math.pi / 2)
    el, az = elevation_azimuth(base + rot.T @ np.array([-1.0, -1e-9, 1.0]), base, rot)
    assert el == pytest.approx(math.pi / 4) and 0 <= az < 2 * math.pi and az == pytest.approx(1.5 * math.pi, abs=1e-6)


def test_enu_vector_helpers():
    v = EnuVector.from_array([3.0, 4.0, 0.0])
    assert v.norm() == 5.0
    assert GeodeticCoord.from_degrees(10, 20, 3).degrees() == pytest.approx((10, 20, 3))
