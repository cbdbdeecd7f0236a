"""RINEX 3.x observation files: GPS L1 C/A and BeiDou B1I code, Doppler and C/N0."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..measurements import PSEUDORANGE_MAX, PSEUDORANGE_MIN, Constellation, ObservationEpoch, SignalObservation
from .common import ParseStats, RinexParseError, Source, calendar_to_gps, parse_float, parse_int, read_text

BDS_TO_GPS_S = 14.0

# (code, doppler, strength) triplets in order of preference per system letter.
_WANTED = {
    "G": [("C1C", "D1C", "S1C")],
    "C": [("C2I", "D2I", "S2I"), ("C1I", "D1I", "S1I")],
}
_SYSTEMS = {"G": Constellation.GPS, "C": Constellation.BEIDOU}
_OBS_WIDTH = 16


@dataclass
class ObsHeader:
    version: float
    obs_types: dict = field(default_factory=dict)  # system letter -> list of codes
    time_system: str = "GPS"
    n_lines: int = 0

    def columns(self, system: str) -> Optional[tuple[int, Optional[int], Optional[int]]]:
        """Column indexes of (code, Doppler, strength) for a system, or None."""
        types = self.obs_types.get(system)
        if not types:
            return None
        for code, dop, snr in _WANTED.get(system, []):
            if code in types:
                return (types.index(code),
                        types.index(dop) if dop in types else None,
                        types.index(snr) if snr in types else None)
        return None


def _label(line: str) -> str:
    return line[60:80].strip()


def _parse_header(lines: list[str]) -> ObsHeader:
    if not lines:
        raise RinexParseError("empty observation file", 1)
    first = lines[0]
    if _label(first) != "RINEX VERSION / TYPE":
        raise RinexParseError("first line must be RINEX VERSION / TYPE", 1)
    try:
        version = parse_float(first[0:9])
    except ValueError:
        version = None
    if version is None or not 3.0 <= version < 4.0:
        raise RinexParseError(f"unsupported RINEX version {first[0:9].strip()!r}", 1)
    if first[20:21] != "O":
        raise RinexParseError(f"not an observation file (type {first[20:21]!r})", 1)
    hdr = ObsHeader(version)

    i = 1
    pending_sys, pending_n = None, 0
    while i < len(lines):
        line = lines[i]
        label = _label(line)
        lineno = i + 1
        if label == "END OF HEADER":
            if pending_n:
                raise RinexParseError("observation type list ended early", lineno)
            hdr.n_lines = i + 1
            return hdr
        if label == "SYS / # / OBS TYPES":
            if line[0:1].strip():
                if pending_n:
                    raise RinexParseError("observation type list ended early", lineno)
                pending_sys = line[0]
                try:
                    pending_n = parse_int(line[3:6])
                except ValueError:
                    pending_n = None
                if pending_n is None or pending_n < 0:
                    raise RinexParseError("bad observation type count", lineno)
                hdr.obs_types[pending_sys] = []
            elif pending_sys is None or not pending_n:
                raise RinexParseError("unexpected observation type continuation", lineno)
            for k in range(13):
                if not pending_n:
                    break
                code = line[7 + 4 * k:10 + 4 * k]
                if len(code) != 3 or not code.isalnum():
                    raise RinexParseError(f"bad observation type {code!r}", lineno)
                hdr.obs_types[pending_sys].append(code)
                pending_n -= 1
        elif label == "TIME OF FIRST OBS":
            ts = line[48:51].strip()
            if ts:
                hdr.time_system = ts
        i += 1
    raise RinexParseError("missing END OF HEADER", len(lines))


def _parse_epoch_line(line: str, lineno: int):
    """(time, flag, n_records) from a ``>`` line; raises ValueError when malformed."""
    if len(line) < 35 or line[0] != ">":
        raise ValueError("malformed epoch line")
    y = parse_int(line[2:6])
    mo = parse_int(line[7:9])
    d = parse_int(line[10:12])
    h = parse_int(line[13:15])
    mi = parse_int(line[16:18])
    s = parse_float(line[18:29])
    flag = line[31:32]
    n = parse_int(line[32:35])
    if None in (y, mo, d, h, mi, s, n) or n < 0:
        raise ValueError("incomplete epoch line")
    return calendar_to_gps(y, mo, d, h, mi, s), flag, n


def parse_rinex_obs(source: Source, stats: Optional[ParseStats] = None) -> list[ObservationEpoch]:
    """Epochs with GPS L1 C/A and BeiDou B1I signals, in file order.

    Malformed headers raise :class:`RinexParseError`. Data problems (unknown
    epoch flag, malformed value, truncated epoch) skip the affected epoch or
    signal and are counted in ``stats``. Pseudoranges outside (1e6, 1e8) m
    are filtered. Epochs without any supported signal are omitted.
    """
    stats = stats if stats is not None else ParseStats()
    text, path = read_text(source)
    lines = text.splitlines()
    try:
        hdr = _parse_header(lines)
    except RinexParseError as exc:
        exc.path = path
        raise
    time_shift = BDS_TO_GPS_S if hdr.time_system == "BDT" else 0.0
    cols = {sysc: hdr.columns(sysc) for sysc in _SYSTEMS}

    epochs: list[ObservationEpoch] = []
    last_time = None
    i = hdr.n_lines
    while i < len(lines):
        line = lines[i]
        lineno = i + 1
        if not line.strip():
            i += 1
            continue
        if not line.startswith(">"):
            stats.warn(lineno, "stray line outside an epoch")
            i += 1
            continue
        try:
            t, flag, n = _parse_epoch_line(line, lineno)
        except ValueError as exc:
            stats.warn(lineno, f"bad epoch header: {exc}")
            stats.skipped_epochs += 1
            i += 1
            # resynchronise on the next epoch marker
            while i < len(lines) and not lines[i].startswith(">"):
                i += 1
            continue
        body = lines[i + 1:i + 1 + n]
        i += 1 + n
        if any(b.startswith(">") for b in body):
            stats.warn(lineno, "epoch has fewer records than announced")
            stats.skipped_epochs += 1
            i -= len(body) - next(k for k, b in enumerate(body) if b.startswith(">"))
            continue
        if len(body) < n:
            stats.warn(lineno, "truncated final epoch")
            stats.skipped_epochs += 1
            break
        if flag in ("2", "3", "4", "5", "6"):
            continue  # event records, no observations
        if flag not in ("0", "1", " ", ""):
            stats.warn(lineno, f"unknown epoch flag {flag!r}")
            stats.skipped_epochs += 1
            continue
        t += time_shift
        if last_time is not None and t <= last_time:
            stats.warn(lineno, "epoch time not increasing")
            stats.skipped_epochs += 1
            continue

        signals, seen = [], set()
        for k, rec in enumerate(body):
            sig = _parse_record(rec, lineno + 1 + k, cols, stats)
            if sig is None:
                continue
            if sig.key in seen:
                stats.warn(lineno + 1 + k, f"duplicate satellite {sig.key}")
                continue
            seen.add(sig.key)
            signals.append(sig)
        last_time = t
        if signals:
            epochs.append(ObservationEpoch(t, signals))
    return epochs


def _parse_record(rec: str, lineno: int, cols: dict, stats: ParseStats) -> Optional[SignalObservation]:
    sysc = rec[0:1]
    if sysc not in _SYSTEMS or cols.get(sysc) is None:
        return None
    try:
        svid = parse_int(rec[1:3])
    except ValueError:
        svid = None
    if svid is None or svid < 1:
        stats.warn(lineno, f"bad satellite id {rec[0:3]!r}")
        return None
    ci, di, si = cols[sysc]

    def field_at(j):
        if j is None:
            return None
        return parse_float(rec[3 + _OBS_WIDTH * j:3 + _OBS_WIDTH * j + 14])

    try:
        rho, dop, snr = field_at(ci), field_at(di), field_at(si)
    except ValueError as exc:
        stats.warn(lineno, f"{rec[0:3]}: {exc}")
        return None
    if rho is None:
        return None
    if not PSEUDORANGE_MIN < rho < PSEUDORANGE_MAX:
        stats.filtered_signals += 1
        return None
    const = _SYSTEMS[sysc]
    return SignalObservation(const, svid, rho, doppler=dop, cn0=snr, carrier_hz=const.carrier_hz)
