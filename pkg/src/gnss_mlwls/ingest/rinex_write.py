"""Minimal RINEX 3.04 writers, the inverse of the parsers for the supported signals.

Used to build fixtures and to export simulated scenes. Observation values
are written as F14.3, navigation values as D19.12.
"""

from __future__ import annotations

from datetime import date, timedelta
from typing import Iterable, Sequence

from ..ephemeris import BDS_GPS_OFFSET_S, BroadcastEphemeris
from ..measurements import Constellation, ObservationEpoch
from .common import GPS_EPOCH_ORDINAL, SECONDS_PER_WEEK
from .rinex_nav import BDT_WEEK_OFFSET

_LETTER = {Constellation.GPS: "G", Constellation.BEIDOU: "C"}
GPS_TYPES = ("C1C", "D1C", "S1C")
BDS_TYPES = ("C2I", "D2I", "S2I")


def _hline(content: str, label: str) -> str:
    return f"{content:<60.60}{label:<20}"


def gps_to_calendar(t: float) -> tuple[int, int, int, int, int, float]:
    """Calendar fields of continuous GPS seconds (same time scale, no leap seconds)."""
    days, rem = divmod(t, 86400.0)
    d = date.fromordinal(GPS_EPOCH_ORDINAL) + timedelta(days=int(days))
    h, rem = divmod(rem, 3600.0)
    mi, s = divmod(rem, 60.0)
    return d.year, d.month, d.day, int(h), int(mi), s


def _obs_value(v) -> str:
    return " " * 16 if v is None else f"{v:14.3f}  "


def write_rinex_obs(epochs: Iterable[ObservationEpoch], bds_types: Sequence[str] = BDS_TYPES,
                    time_system: str = "GPS", marker: str = "SIM") -> str:
    """Observation file with GPS C1C/D1C/S1C and BeiDou code/Doppler/strength columns.

    Epoch times are continuous GPS seconds; with ``time_system="BDT"`` they
    are written 14 s earlier so a reader applying the BDT shift recovers them.
    """
    epochs = list(epochs)
    shift = BDS_GPS_OFFSET_S if time_system == "BDT" else 0.0
    lines = [
        _hline("     3.04           OBSERVATION DATA    M (MIXED)", "RINEX VERSION / TYPE"),
        _hline(marker, "MARKER NAME"),
        _hline("G    3 " + " ".join(GPS_TYPES), "SYS / # / OBS TYPES"),
        _hline("C    3 " + " ".join(bds_types), "SYS / # / OBS TYPES"),
    ]
    if epochs:
        y, mo, d, h, mi, s = gps_to_calendar(epochs[0].time - shift)
        lines.append(_hline(f"  {y:4d}    {mo:2d}    {d:2d}    {h:2d}    {mi:2d}   {s:10.7f}     {time_system:<3}",
                            "TIME OF FIRST OBS"))
    lines.append(_hline("", "END OF HEADER"))
    for ep in epochs:
        y, mo, d, h, mi, s = gps_to_calendar(ep.time - shift)
        sigs = [g for g in ep.signals if g.constellation in _LETTER]
        lines.append(f"> {y:4d} {mo:02d} {d:02d} {h:02d} {mi:02d}{s:11.7f}  0{len(sigs):3d}")
        for g in sigs:
            lines.append(f"{_LETTER[g.constellation]}{g.svid:02d}" + _obs_value(g.pseudorange)
                         + _obs_value(g.doppler) + _obs_value(g.cn0))
    return "\n".join(lines) + "\n"


def _d19(v: float, exponent: str = "D") -> str:
    return f"{v:19.12E}".replace("E", exponent)


def _orbit_line(vals: Sequence[float], exponent: str) -> str:
    return "    " + "".join(_d19(v, exponent) for v in vals)


def write_rinex_nav(ephemerides: Iterable[BroadcastEphemeris], exponent: str = "D") -> str:
    """Navigation file for GPS LNAV and BeiDou D1/D2 records.

    BeiDou records are written in BDT (toe/toc 14 s earlier, week - 1356).
    """
    lines = [
        _hline("     3.04           N: GNSS NAV DATA    M: Mixed", "RINEX VERSION / TYPE"),
        _hline("", "END OF HEADER"),
    ]
    for e in ephemerides:
        letter = _LETTER[e.constellation]
        toe, week = e.toe, e.week
        toc_abs = e.toc_gps
        if e.constellation is Constellation.BEIDOU:
            toe -= BDS_GPS_OFFSET_S
            if toe < 0:
                toe += SECONDS_PER_WEEK
                week -= 1
            week -= BDT_WEEK_OFFSET
            toc_abs -= BDS_GPS_OFFSET_S
        y, mo, d, h, mi, s = gps_to_calendar(toc_abs)
        lines.append(f"{letter}{e.svid:02d} {y:4d} {mo:02d} {d:02d} {h:02d} {mi:02d} {int(round(s)):02d}"
                     + "".join(_d19(v, exponent) for v in (e.af0, e.af1, e.af2)))
        lines += [
            _orbit_line([0.0, e.Crs, e.Delta_n, e.M0], exponent),
            _orbit_line([e.Cuc, e.e, e.Cus, e.sqrtA], exponent),
            _orbit_line([toe, e.Cic, e.Omega0, e.Cis], exponent),
            _orbit_line([e.i0, e.Crc, e.omega, e.Omega_dot], exponent),
            _orbit_line([e.idot, 0.0, float(week), 0.0], exponent),
            _orbit_line([2.0, 0.0, e.tgd, 0.0], exponent),
            _orbit_line([toe, 0.0], exponent),
        ]
    return "\n".join(lines) + "\n"
