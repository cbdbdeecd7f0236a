"""Broadcast-ephemeris orbit and clock evaluation for GPS LNAV and BeiDou D1/D2."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .measurements import SPEED_OF_LIGHT, Constellation, SatelliteState

GPS_MU = 3.986005e14
GPS_OMEGA_E = 7.2921151467e-5
BDS_MU = 3.986004418e14
BDS_OMEGA_E = 7.2921150e-5

REL_F = -4.442807633e-10  # s / sqrt(m)

BDS_GPS_OFFSET_S = 14.0  # GPS time = BDT + 14 s
SECONDS_PER_WEEK = 604800.0
HALF_WEEK = 302400.0
FIT_INTERVAL_S = 4 * 3600.0

BDS_GEO_SVIDS = frozenset(list(range(1, 6)) + list(range(59, 64)))


class StaleEphemerisError(ValueError):
    pass


class KeplerConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BroadcastEphemeris:
    """One navigation-message record.

    ``toe``/``toc`` are GPS seconds of ``week`` (GPS week); BeiDou records
    are shifted from BDT at parse time, ``system_offset`` remembers the shift.
    """

    constellation: Constellation
    svid: int
    toe: float
    sqrtA: float
    e: float
    i0: float
    Omega0: float
    omega: float
    M0: float
    Delta_n: float
    idot: float
    Omega_dot: float
    Cuc: float
    Cus: float
    Crc: float
    Crs: float
    Cic: float
    Cis: float
    af0: float
    af1: float
    af2: float
    toc: float
    tgd: float
    week: int
    system_offset: float = 0.0

    @property
    def toe_gps(self) -> float:
        """Continuous GPS seconds of the reference epoch."""
        return self.week * SECONDS_PER_WEEK + self.toe

    @property
    def toc_gps(self) -> float:
        return self.week * SECONDS_PER_WEEK + self.toc

    @property
    def is_geo(self) -> bool:
        return self.constellation is Constellation.BEIDOU and self.svid in BDS_GEO_SVIDS

    def validate(self) -> None:
        if not 0.0 <= self.e < 0.1:
            raise ValueError(f"eccentricity {self.e} out of range")
        # compare sqrtA itself; squaring a corrupted huge value overflows
        if not math.sqrt(2e7) < self.sqrtA < math.sqrt(5e7):
            raise ValueError(f"sqrtA {self.sqrtA} out of range")
        for name in ("toe", "sqrtA", "i0", "Omega0", "omega", "M0", "af0", "af1", "af2", "toc", "tgd"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite {name}")


def solve_kepler(M: float, e: float, tol: float = 1e-12, max_iter: int = 30) -> float:
    """Eccentric anomaly from mean anomaly by Newton iteration."""
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity {e} out of range")
    E = M
    for _ in range(max_iter):
        f = E - e * math.sin(E) - M
        if abs(f) < tol:
            return E
        E -= f / (1.0 - e * math.cos(E))
    if abs(E - e * math.sin(E) - M) < tol:
        return E
    raise KeplerConvergenceError(f"Kepler iteration did not converge (M={M}, e={e})")


def _wrap_week(dt: float) -> float:
    if dt > HALF_WEEK:
        dt -= SECONDS_PER_WEEK
    elif dt < -HALF_WEEK:
        dt += SECONDS_PER_WEEK
    return dt


def clock_bias_seconds(eph: BroadcastEphemeris, t: float, E: float | None = None,
                       relativistic: bool = True, group_delay: bool = True) -> float:
    """Satellite clock offset (s) at continuous GPS time ``t``."""
    dt = _wrap_week(t - eph.toc_gps)
    bias = eph.af0 + eph.af1 * dt + eph.af2 * dt * dt
    if relativistic:
        if E is None:
            E = eccentric_anomaly(eph, t)
        bias += REL_F * eph.e * eph.sqrtA * math.sin(E)
    if group_delay:
        bias -= eph.tgd
    return bias


def eccentric_anomaly(eph: BroadcastEphemeris, t: float) -> float:
    mu = BDS_MU if eph.constellation is Constellation.BEIDOU else GPS_MU
    A = eph.sqrtA**2
    tk = _wrap_week(t - eph.toe_gps)
    n = math.sqrt(mu / A**3) + eph.Delta_n
    return solve_kepler(eph.M0 + n * tk, eph.e)


def _orbit_position(eph: BroadcastEphemeris, t: float) -> tuple[np.ndarray, float]:
    """ECEF position at GPS time ``t`` in the frame fixed at ``t``, plus E."""
    beidou = eph.constellation is Constellation.BEIDOU
    mu = BDS_MU if beidou else GPS_MU
    omega_e = BDS_OMEGA_E if beidou else GPS_OMEGA_E

    A = eph.sqrtA**2
    tk = _wrap_week(t - eph.toe_gps)
    n = math.sqrt(mu / A**3) + eph.Delta_n
    E = solve_kepler(eph.M0 + n * tk, eph.e)

    nu = math.atan2(math.sqrt(1.0 - eph.e**2) * math.sin(E), math.cos(E) - eph.e)
    phi = nu + eph.omega
    s2, c2 = math.sin(2 * phi), math.cos(2 * phi)
    u = phi + eph.Cuc * c2 + eph.Cus * s2
    r = A * (1.0 - eph.e * math.cos(E)) + eph.Crc * c2 + eph.Crs * s2
    i = eph.i0 + eph.idot * tk + eph.Cic * c2 + eph.Cis * s2

    xp, yp = r * math.cos(u), r * math.sin(u)
    # Orbit angles are referenced to system time of week.
    toe_sys = (eph.toe - eph.system_offset) % SECONDS_PER_WEEK

    if eph.is_geo:
        Om = eph.Omega0 + eph.Omega_dot * tk - omega_e * toe_sys
        gk = np.array(
            [
                xp * math.cos(Om) - yp * math.cos(i) * math.sin(Om),
                xp * math.sin(Om) + yp * math.cos(i) * math.cos(Om),
                yp * math.sin(i),
            ]
        )
        f = math.radians(-5.0)
        rx = np.array([[1.0, 0.0, 0.0], [0.0, math.cos(f), math.sin(f)], [0.0, -math.sin(f), math.cos(f)]])
        z = omega_e * tk
        rz = np.array([[math.cos(z), math.sin(z), 0.0], [-math.sin(z), math.cos(z), 0.0], [0.0, 0.0, 1.0]])
        return rz @ rx @ gk, E

    Om = eph.Omega0 + (eph.Omega_dot - omega_e) * tk - omega_e * toe_sys
    pos = np.array(
        [
            xp * math.cos(Om) - yp * math.cos(i) * math.sin(Om),
            xp * math.sin(Om) + yp * math.cos(i) * math.cos(Om),
            yp * math.sin(i),
        ]
    )
    return pos, E


def rotate_earth(position: np.ndarray, travel_time: float, constellation=Constellation.GPS) -> np.ndarray:
    """Rotate a transmit-time ECEF vector into the reception-time frame."""
    omega_e = BDS_OMEGA_E if constellation is Constellation.BEIDOU else GPS_OMEGA_E
    a = omega_e * travel_time
    c, s = math.cos(a), math.sin(a)
    x, y, z = position
    return np.array([c * x + s * y, -s * x + c * y, z])


def satellite_state(eph: BroadcastEphemeris, transmit_time: float, travel_time: float,
                    relativistic: bool = True, group_delay: bool = True) -> SatelliteState:
    """Satellite ECEF position (reception frame) and clock correction in meters."""
    age = _wrap_week(transmit_time - eph.toe_gps)
    if abs(age) > FIT_INTERVAL_S:
        raise StaleEphemerisError(
            f"{eph.constellation.value} {eph.svid:02d}: ephemeris age {age:.0f} s exceeds fit interval"
        )
    pos, E = _orbit_position(eph, transmit_time)
    pos = rotate_earth(pos, travel_time, eph.constellation)
    clk = clock_bias_seconds(eph, transmit_time, E, relativistic, group_delay)
    return SatelliteState(position=pos, clock_correction=SPEED_OF_LIGHT * clk)


def transmit_time_iteration(rho_obs: float, reception_time: float, eph: BroadcastEphemeris,
                            max_iter: int = 3, relativistic: bool = True,
                            group_delay: bool = True) -> tuple[float, float]:
    """Signal transmit time (GPS s) and flight time (s) for one pseudorange.

    The flight time includes the satellite clock offset, so that
    ``transmit_time = reception_time - travel_time``. The iteration runs on
    the flight time itself to keep full precision next to large epochs.
    """
    base = rho_obs / SPEED_OF_LIGHT
    tau = base
    for _ in range(max_iter):
        new = base + clock_bias_seconds(eph, reception_time - tau, None, relativistic, group_delay)
        done = abs(new - tau) < 1e-12
        tau = new
        if done:
            break
    return reception_time - tau, tau


def select_ephemeris(ephemerides: Iterable[BroadcastEphemeris], constellation: Constellation,
                     svid: int, t: float) -> BroadcastEphemeris | None:
    """Record closest in time to ``t``; later broadcasts win ties."""
    best = None
    best_key = None
    for eph in ephemerides:
        if eph.constellation is not constellation or eph.svid != svid:
            continue
        key = (abs(t - eph.toe_gps), -eph.toe_gps)
        if best_key is None or key < best_key:
            best, best_key = eph, key
    return best


def compute_state(eph: BroadcastEphemeris, rho_obs: float, reception_time: float,
                  relativistic: bool = True, group_delay: bool = True) -> SatelliteState:
    t_tx, travel = transmit_time_iteration(rho_obs, reception_time, eph,
                                           relativistic=relativistic, group_delay=group_delay)
    return satellite_state(eph, t_tx, travel, relativistic, group_delay)
