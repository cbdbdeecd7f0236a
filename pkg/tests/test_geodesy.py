import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnss_mlwls.geodesy import (
    WGS84_A,
    WGS84_E2,
    GeodeticPosition,
    ecef_to_enu,
    ecef_to_geodetic,
    elevation_azimuth,
    elevations,
    enu_rotation,
    geodetic_to_ecef,
)


def heikkinen(p):
    """Closed-form ECEF to geodetic inverse, used as an independent oracle."""
    a, e2 = WGS84_A, WGS84_E2
    b = a * math.sqrt(1 - e2)
    ep2 = (a * a - b * b) / (b * b)
    x, y, z = p
    r = math.hypot(x, y)
    F = 54 * b * b * z * z
    G = r * r + (1 - e2) * z * z - e2 * (a * a - b * b)
    c = e2 * e2 * F * r * r / G**3
    s = (1 + c + math.sqrt(c * c + 2 * c)) ** (1 / 3)
    P = F / (3 * (s + 1 / s + 1) ** 2 * G * G)
    Q = math.sqrt(1 + 2 * e2 * e2 * P)
    r0 = -P * e2 * r / (1 + Q) + math.sqrt(0.5 * a * a * (1 + 1 / Q) - P * (1 - e2) * z * z / (Q * (1 + Q))
                                            - 0.5 * P * r * r)
    U = math.hypot(r - e2 * r0, z)
    V = math.sqrt((r - e2 * r0) ** 2 + (1 - e2) * z * z)
    z0 = b * b * z / (a * V)
    h = U * (1 - b * b / (a * V))
    lat = math.atan((z + ep2 * z0) / r)
    return math.degrees(lat), math.degrees(math.atan2(y, x)), h


def test_equator_prime_meridian():
    np.testing.assert_array_equal(geodetic_to_ecef(GeodeticPosition(0.0, 0.0, 0.0)), [6378137.0, 0.0, 0.0])


def test_north_pole_is_semi_minor_axis():
    p = geodetic_to_ecef(GeodeticPosition(90.0, 0.0, 0.0))
    np.testing.assert_allclose(p, [0.0, 0.0, 6356752.3142], atol=1e-3)


def test_inverse_at_equator():
    g = ecef_to_geodetic([6378137.0, 0.0, 0.0])
    assert g.latitude == 0.0 and g.longitude == 0.0
    assert abs(g.height) < 1e-9


def test_inverse_at_pole_reports_zero_longitude():
    g = ecef_to_geodetic([0.0, 0.0, 6356752.3142])
    assert g.latitude == 90.0 and g.longitude == 0.0
    assert abs(g.height) < 1e-3


def test_geocenter_raises():
    with pytest.raises(ValueError):
        ecef_to_geodetic([0.0, 0.0, 0.0])


def test_hong_kong_round_trip():
    g = GeodeticPosition(22.3, 114.2, 50.0)
    p = geodetic_to_ecef(g)
    back = geodetic_to_ecef(ecef_to_geodetic(p))
    assert np.linalg.norm(back - p) < 1e-6
    lat, lon, h = heikkinen(p)
    assert abs(lat - 22.3) < 1e-9 and abs(lon - 114.2) < 1e-9 and abs(h - 50.0) < 1e-6


lat_st = st.floats(-89.0, 89.0)
lon_st = st.floats(-179.999, 180.0)
h_st = st.floats(-1000.0, 100000.0)


@given(lat_st, lon_st, h_st)
def test_round_trip_property(lat, lon, h):
    p = geodetic_to_ecef(GeodeticPosition(lat, lon, h))
    g = ecef_to_geodetic(p)
    assert np.linalg.norm(geodetic_to_ecef(g) - p) < 1e-6
    assert abs(g.height - h) < 1e-6


@given(lat_st, lon_st, h_st)
def test_inverse_matches_closed_form_oracle(lat, lon, h):
    p = geodetic_to_ecef(GeodeticPosition(lat, lon, h))
    g = ecef_to_geodetic(p)
    olat, olon, oh = heikkinen(p)
    assert abs(g.latitude - olat) < 1e-9
    assert abs(((g.longitude - olon) + 180) % 360 - 180) < 1e-9
    assert abs(g.height - oh) < 1e-5


def test_enu_identity():
    ref = np.array([6378137.0, 0.0, 0.0])
    np.testing.assert_array_equal(ecef_to_enu(ref, ref), [0.0, 0.0, 0.0])


def test_enu_axes_at_origin_meridian():
    ref = np.array([6378137.0, 0.0, 0.0])
    np.testing.assert_allclose(ecef_to_enu(ref + [0, 100, 0], ref), [100, 0, 0], atol=1e-12)
    np.testing.assert_allclose(ecef_to_enu(ref + [50, 0, 20], ref), [0, 20, 50], atol=1e-12)


@given(lat_st, lon_st, st.lists(st.floats(-1e7, 1e7), min_size=3, max_size=3))
def test_enu_is_isometry(lat, lon, d):
    ref = geodetic_to_ecef(GeodeticPosition(lat, lon, 0.0))
    d = np.array(d)
    enu = ecef_to_enu(ref + d, ref)
    assert abs(np.linalg.norm(enu) - np.linalg.norm(d)) <= 1e-9 * max(np.linalg.norm(d), 1.0)


@given(lat_st, lon_st)
def test_rotation_is_orthonormal(lat, lon):
    R = enu_rotation(geodetic_to_ecef(GeodeticPosition(lat, lon, 10.0)))
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)


def _sat_at(ref, enu):
    return ref + enu_rotation(ref).T @ np.asarray(enu, dtype=float)


def test_look_angles_examples():
    rx = geodetic_to_ecef(GeodeticPosition(22.3, 114.2, 50.0))
    el, az = elevation_azimuth(rx, _sat_at(rx, [0, 0, 2e7]))
    assert abs(el - 90.0) < 1e-9 and az == 0.0
    el, az = elevation_azimuth(rx, _sat_at(rx, [2e7, 0, 0]))
    assert abs(el) < 1e-9 and abs(az - 90.0) < 1e-9
    el, az = elevation_azimuth(rx, _sat_at(rx, [0, 1000, 1000]))
    assert abs(el - 45.0) < 1e-9 and min(az, 360.0 - az) < 1e-9


def test_coincident_points_raise():
    rx = geodetic_to_ecef(GeodeticPosition(10.0, 10.0, 0.0))
    with pytest.raises(ValueError):
        elevation_azimuth(rx, rx)


@given(st.lists(st.floats(-1e7, 1e7), min_size=3, max_size=3), st.floats(1e-3, 1e3))
def test_look_angles_scale_invariant(d, k):
    d = np.array(d)
    if np.linalg.norm(d) < 1.0:
        return
    rx = geodetic_to_ecef(GeodeticPosition(35.0, 139.0, 0.0))
    el1, az1 = elevation_azimuth(rx, rx + d)
    el2, az2 = elevation_azimuth(rx, rx + k * d)
    assert -90.0 <= el1 <= 90.0 and 0.0 <= az1 < 360.0
    assert abs(el1 - el2) < 1e-7
    assert abs(((az1 - az2) + 180) % 360 - 180) < 1e-6 or el1 > 89.999


def test_vectorised_elevations_agree():
    rng = np.random.default_rng(0)
    rx = geodetic_to_ecef(GeodeticPosition(22.3, 114.2, 50.0))
    sats = rx + rng.normal(size=(20, 3)) * 2e7
    want = [elevation_azimuth(rx, s)[0] for s in sats]
    np.testing.assert_allclose(elevations(rx, sats), want, atol=1e-10)
