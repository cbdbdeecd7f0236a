"""Optional broadcast ionosphere (Klobuchar) and Saastamoinen troposphere delays.

Off by default in experiments; urban errors are dominated by NLOS biases.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .geodesy import ecef_to_geodetic, elevation_azimuth
from .measurements import SPEED_OF_LIGHT, Measurement, MeasurementSet, SignalObservation

L1_HZ = 1575.42e6
SECONDS_PER_DAY = 86400.0


def klobuchar_delay(alpha: Sequence[float], beta: Sequence[float], lat_deg: float, lon_deg: float,
                    el_deg: float, az_deg: float, tow: float) -> float:
    """L1 ionospheric delay (m) from the broadcast eight-coefficient model."""
    if el_deg <= 0.0:
        return 0.0
    E = el_deg / 180.0  # semicircles
    A = math.radians(az_deg)
    psi = 0.0137 / (E + 0.11) - 0.022
    phi_i = min(max(lat_deg / 180.0 + psi * math.cos(A), -0.416), 0.416)
    lam_i = lon_deg / 180.0 + psi * math.sin(A) / math.cos(phi_i * math.pi)
    phi_m = phi_i + 0.064 * math.cos((lam_i - 1.617) * math.pi)
    t = (4.32e4 * lam_i + tow) % SECONDS_PER_DAY
    F = 1.0 + 16.0 * (0.53 - E) ** 3
    amp = max(sum(a * phi_m**n for n, a in enumerate(alpha)), 0.0)
    per = max(sum(b * phi_m**n for n, b in enumerate(beta)), 72000.0)
    x = 2.0 * math.pi * (t - 50400.0) / per
    if abs(x) < 1.57:
        delay = F * (5e-9 + amp * (1.0 - x * x / 2.0 + x**4 / 24.0))
    else:
        delay = F * 5e-9
    return SPEED_OF_LIGHT * delay


def saastamoinen_delay(lat_deg: float, height_m: float, el_deg: float, humidity: float = 0.7) -> float:
    """Tropospheric delay (m) under a standard atmosphere."""
    if el_deg <= 0.0 or height_m < -100.0 or height_m > 1e4:
        return 0.0
    h = max(height_m, 0.0)
    pres = 1013.25 * (1.0 - 2.2557e-5 * h) ** 5.2568
    temp = 15.0 - 6.5e-3 * h + 273.16
    e = 6.108 * humidity * math.exp((17.15 * temp - 4684.0) / (temp - 38.45))
    z = math.pi / 2.0 - math.radians(el_deg)
    dry = 0.0022768 * pres / (1.0 - 0.00266 * math.cos(2.0 * math.radians(lat_deg)) - 0.00028 * h / 1e3) / math.cos(z)
    wet = 0.002277 * (1255.0 / temp + 0.05) * e / math.cos(z)
    return dry + wet


def correct_measurements(ms: MeasurementSet, receiver, iono: Optional[tuple] = None,
                         troposphere: bool = True) -> MeasurementSet:
    """Pseudoranges with modelled delays removed, seen from an approximate receiver position.

    ``iono`` is ``(alpha, beta)``; the L1 delay is scaled by (f_L1 / f)^2.
    """
    receiver = np.asarray(receiver, dtype=float)
    g = ecef_to_geodetic(receiver)
    tow = ms.time % 604800.0
    out = []
    for m in ms:
        el, az = elevation_azimuth(receiver, m.state.position)
        d = 0.0
        if iono is not None:
            d += klobuchar_delay(iono[0], iono[1], g.latitude, g.longitude, el, az, tow) \
                * (L1_HZ / m.signal.carrier_hz) ** 2
        if troposphere:
            d += saastamoinen_delay(g.latitude, g.height, el)
        s = m.signal
        sig = SignalObservation(s.constellation, s.svid, s.pseudorange - d, s.doppler, s.cn0, s.carrier_hz)
        out.append(Measurement(sig, m.state))
    return MeasurementSet(out, ms.time)
