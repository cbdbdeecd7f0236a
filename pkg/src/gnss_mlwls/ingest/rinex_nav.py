"""RINEX 3.x navigation files: GPS LNAV and BeiDou D1/D2 broadcast records."""

from __future__ import annotations

from typing import Optional

from ..ephemeris import BDS_GPS_OFFSET_S, BroadcastEphemeris
from ..measurements import Constellation
from .common import (
    SECONDS_PER_WEEK,
    ParseStats,
    RinexParseError,
    Source,
    calendar_to_gps,
    parse_float,
    parse_int,
    read_text,
)

BDT_WEEK_OFFSET = 1356  # GPS week of the BDT origin (2006-01-01)

# Broadcast-orbit lines following the first record line, per system letter.
_ORBIT_LINES = {"G": 7, "C": 7, "E": 7, "J": 7, "I": 7, "R": 3, "S": 3}
_SYSTEMS = {"G": Constellation.GPS, "C": Constellation.BEIDOU}
_FIELD = 19


def _parse_header(lines: list[str]) -> int:
    """Index of the first data line."""
    if not lines or not any(l.strip() for l in lines):
        raise RinexParseError("empty navigation file", 1)
    first = lines[0]
    if first[60:80].strip() != "RINEX VERSION / TYPE":
        raise RinexParseError("first line must be RINEX VERSION / TYPE", 1)
    try:
        version = parse_float(first[0:9])
    except ValueError:
        version = None
    if version is None or not 3.0 <= version < 4.0:
        raise RinexParseError(f"unsupported RINEX version {first[0:9].strip()!r}", 1)
    if first[20:21] != "N":
        raise RinexParseError(f"not a navigation file (type {first[20:21]!r})", 1)
    for i, line in enumerate(lines):
        if line[60:80].strip() == "END OF HEADER":
            return i + 1
    raise RinexParseError("missing END OF HEADER", len(lines))


def _orbit_values(line: str) -> list[Optional[float]]:
    return [parse_float(line[4 + _FIELD * k:4 + _FIELD * (k + 1)]) for k in range(4)]


def _required(vals: list, names: list[str]) -> None:
    for v, n in zip(vals, names):
        if n and v is None:
            raise ValueError(f"missing {n}")


def _build(sysc: str, svid: int, toc_sys: float, clock: list, orbit: list[list]) -> BroadcastEphemeris:
    _required(clock, ["af0", "af1", "af2"])
    (_, crs, dn, m0), (cuc, e, cus, sqa), (toe, cic, om0, cis), (i0, crc, w, omd), \
        (idot, _, week, _), (_, _, tgd, _) = orbit[:6]
    _required([crs, dn, m0, cuc, e, cus, sqa, toe, cic, om0, cis, i0, crc, w, omd, idot, week, tgd],
              ["Crs", "Delta_n", "M0", "Cuc", "e", "Cus", "sqrtA", "toe", "Cic", "Omega0", "Cis",
               "i0", "Crc", "omega", "Omega_dot", "idot", "week", "TGD"])
    if week != int(week) or week < 0:
        raise ValueError("week must be a non-negative integer")
    week = int(week)
    const = _SYSTEMS[sysc]
    offset = 0.0
    toc_gps = toc_sys
    if const is Constellation.BEIDOU:
        offset = BDS_GPS_OFFSET_S
        week += BDT_WEEK_OFFSET
        toe += offset
        toc_gps += offset
        if toe >= SECONDS_PER_WEEK:
            toe -= SECONDS_PER_WEEK
            week += 1
    if not 0.0 <= toe < SECONDS_PER_WEEK:
        raise ValueError("toe outside the week")
    if abs(toc_gps - (week * SECONDS_PER_WEEK + toe)) > SECONDS_PER_WEEK / 2:
        raise ValueError("toc and toe more than half a week apart (inconsistent week)")
    eph = BroadcastEphemeris(
        constellation=const, svid=svid, toe=toe, sqrtA=sqa, e=e, i0=i0, Omega0=om0, omega=w, M0=m0,
        Delta_n=dn, idot=idot, Omega_dot=omd, Cuc=cuc, Cus=cus, Crc=crc, Crs=crs, Cic=cic, Cis=cis,
        af0=clock[0], af1=clock[1], af2=clock[2], toc=toc_gps - week * SECONDS_PER_WEEK, tgd=tgd,
        week=week, system_offset=offset,
    )
    eph.validate()
    return eph


def parse_rinex_nav(source: Source, stats: Optional[ParseStats] = None) -> list[BroadcastEphemeris]:
    """GPS and BeiDou ephemerides in file order.

    BeiDou epochs move to GPS time (+14 s, week + 1356) and BeiDou ``tgd``
    holds TGD1 (B1I). Malformed or truncated records are skipped with a
    warning; other systems are skipped silently.
    """
    stats = stats if stats is not None else ParseStats()
    text, path = read_text(source)
    lines = text.splitlines()
    try:
        i = _parse_header(lines)
    except RinexParseError as exc:
        exc.path = path
        raise
    out = []
    while i < len(lines):
        line = lines[i]
        lineno = i + 1
        if not line.strip():
            i += 1
            continue
        sysc = line[0:1]
        n_orbit = _ORBIT_LINES.get(sysc)
        if n_orbit is None:
            stats.warn(lineno, f"unknown record start {line[0:3]!r}")
            stats.skipped_records += 1
            i += 1
            continue
        block = lines[i:i + 1 + n_orbit]
        # The next record may start early if this one is short.
        for k in range(1, len(block)):
            if block[k][0:1] in _ORBIT_LINES and block[k][1:3].strip().isdigit():
                block = block[:k]
                break
        i += len(block)
        if sysc not in _SYSTEMS:
            continue
        # GPS/BeiDou records need six orbit lines; the seventh may be short.
        if len(block) < 7:
            stats.warn(lineno, f"truncated {line[0:3]} record")
            stats.skipped_records += 1
            continue
        try:
            svid = parse_int(line[1:3])
            if svid is None or svid < 1:
                raise ValueError("bad satellite number")
            fields = [parse_int(line[4:8]), parse_int(line[9:11]), parse_int(line[12:14]),
                      parse_int(line[15:17]), parse_int(line[18:20]), parse_int(line[21:23])]
            if None in fields:
                raise ValueError("incomplete epoch")
            toc = calendar_to_gps(*fields[:5], float(fields[5]))
            clock = [parse_float(line[23 + _FIELD * k:23 + _FIELD * (k + 1)]) for k in range(3)]
            orbit = [_orbit_values(b) for b in block[1:7]]
            out.append(_build(sysc, svid, toc, clock, orbit))
        except ValueError as exc:
            stats.warn(lineno, f"{line[0:3]}: {exc}")
            stats.skipped_records += 1
    return out


def parse_nav_iono(source: Source) -> Optional[tuple[list[float], list[float]]]:
    """GPS Klobuchar ``(alpha, beta)`` from the header, or None when absent or malformed."""
    text, _ = read_text(source)
    coeffs = {}
    for line in text.splitlines():
        label = line[60:80].strip()
        if label == "END OF HEADER":
            break
        if label != "IONOSPHERIC CORR" or line[0:4] not in ("GPSA", "GPSB"):
            continue
        try:
            vals = [parse_float(line[5 + 12 * k:17 + 12 * k]) for k in range(4)]
        except ValueError:
            return None
        if None in vals:
            return None
        coeffs[line[0:4]] = vals
    if "GPSA" in coeffs and "GPSB" in coeffs:
        return coeffs["GPSA"], coeffs["GPSB"]
    return None
