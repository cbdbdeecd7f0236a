"""WGS84 frame conversions and satellite look angles.

ECEF positions are plain ``numpy`` arrays of shape ``(3,)`` in meters.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


class GeodeticPosition(NamedTuple):
    latitude: float  # degrees
    longitude: float  # degrees
    height: float  # meters above the ellipsoid


def geodetic_to_ecef(g: GeodeticPosition) -> np.ndarray:
    lat = np.radians(g.latitude)
    lon = np.radians(g.longitude)
    sin_lat = np.sin(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    return np.array(
        [
            (n + g.height) * np.cos(lat) * np.cos(lon),
            (n + g.height) * np.cos(lat) * np.sin(lon),
            (n * (1.0 - WGS84_E2) + g.height) * sin_lat,
        ]
    )


def ecef_to_geodetic(p, tol: float = 1e-12, max_iter: int = 10) -> GeodeticPosition:
    """Iterative inverse of :func:`geodetic_to_ecef`.

    Longitude is reported as 0 on the polar axis.
    """
    x, y, z = (float(v) for v in p)
    rho = np.hypot(x, y)
    if rho == 0.0 and z == 0.0:
        raise ValueError("geodetic coordinates undefined at the geocenter")
    lon = np.arctan2(y, x) if rho > 0.0 else 0.0

    if rho < 1e-9:
        lat = np.copysign(np.pi / 2, z)
        return GeodeticPosition(float(np.degrees(lat)), 0.0, abs(z) - WGS84_B)

    lat = np.arctan2(z, rho * (1.0 - WGS84_E2))
    for _ in range(max_iter):
        sin_lat = np.sin(lat)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
        new_lat = np.arctan2(z + n * WGS84_E2 * sin_lat, rho)
        done = abs(new_lat - lat) < tol
        lat = new_lat
        if done:
            break

    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    # Height formula that stays well-conditioned at all latitudes.
    h = rho * cos_lat + z * sin_lat - n * (1.0 - WGS84_E2 * sin_lat**2)
    lon_deg = float(np.degrees(lon))
    if lon_deg <= -180.0:
        lon_deg += 360.0
    return GeodeticPosition(float(np.degrees(lat)), lon_deg, float(h))


def enu_rotation(ref) -> np.ndarray:
    """Rows are the local east, north and up unit vectors at ``ref``."""
    g = ecef_to_geodetic(ref)
    lat, lon = np.radians(g.latitude), np.radians(g.longitude)
    sl, cl = np.sin(lat), np.cos(lat)
    so, co = np.sin(lon), np.cos(lon)
    return np.array(
        [
            [-so, co, 0.0],
            [-sl * co, -sl * so, cl],
            [cl * co, cl * so, sl],
        ]
    )


def ecef_to_enu(p, ref) -> np.ndarray:
    ref = np.asarray(ref, dtype=float)
    return enu_rotation(ref) @ (np.asarray(p, dtype=float) - ref)


def elevation_azimuth(receiver, satellite) -> tuple[float, float]:
    """Elevation and azimuth (degrees, azimuth clockwise from north in [0, 360))."""
    receiver = np.asarray(receiver, dtype=float)
    los = np.asarray(satellite, dtype=float) - receiver
    dist = np.linalg.norm(los)
    if dist == 0.0:
        raise ValueError("receiver and satellite coincide")
    e, n, u = enu_rotation(receiver) @ los
    el = np.degrees(np.arcsin(np.clip(u / dist, -1.0, 1.0)))
    horiz = np.hypot(e, n)
    if horiz <= 1e-12 * dist:
        return float(el), 0.0
    az = np.degrees(np.arctan2(e, n)) % 360.0
    return float(el), float(az) if az < 360.0 else 0.0


def elevations(receiver, satellites) -> np.ndarray:
    """Vectorised elevation (degrees) of an ``(N, 3)`` satellite array."""
    receiver = np.asarray(receiver, dtype=float)
    los = np.asarray(satellites, dtype=float) - receiver
    up = enu_rotation(receiver)[2]
    return np.degrees(np.arcsin(np.clip(los @ up / np.linalg.norm(los, axis=1), -1.0, 1.0)))
