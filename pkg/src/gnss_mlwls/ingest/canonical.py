"""Canonical one-row-per-signal epoch CSV, and satellite states from ephemerides."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ..ephemeris import KeplerConvergenceError, StaleEphemerisError, compute_state, select_ephemeris
from ..measurements import Constellation, Measurement, MeasurementSet, ObservationEpoch, SatelliteState, SignalObservation
from .common import Source, read_text

COLUMNS = ("time", "constellation", "svid", "pseudorange_m", "doppler_hz", "cn0_dbhz",
           "sat_x", "sat_y", "sat_z", "sat_clock_m")


class CanonicalFormatError(ValueError):
    pass


def _num(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def write_canonical_csv(epochs: Iterable[MeasurementSet], constellations: Optional[Sequence[Constellation]] = None
                        ) -> str:
    """Serialise measurement sets; floats use ``repr`` so they read back bit-exact."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for ms in epochs:
        for m in ms:
            s = m.signal
            if constellations is not None and s.constellation not in constellations:
                continue
            x, y, z = (float(v) for v in m.state.position)
            w.writerow([repr(float(ms.time)), s.constellation.value, s.svid, repr(float(s.pseudorange)),
                        _num(s.doppler), _num(s.cn0), repr(x), repr(y), repr(z),
                        repr(float(m.state.clock_correction))])
    return buf.getvalue()


def _opt(text: str) -> Optional[float]:
    return float(text) if text.strip() else None


def read_canonical_csv(source: Source, constellations: Optional[Sequence[Constellation]] = None
                       ) -> list[MeasurementSet]:
    """Measurement sets grouped by consecutive equal ``time`` values."""
    text, path = read_text(source)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise CanonicalFormatError("empty canonical CSV")
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise CanonicalFormatError(f"missing column {missing[0]!r}")
    col = {c: header.index(c) for c in COLUMNS}
    out: list[MeasurementSet] = []
    cur_t, cur = None, []
    for n, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            t = float(row[col["time"]])
            const = Constellation.parse(row[col["constellation"]])
            sig = SignalObservation(const, int(row[col["svid"]]), float(row[col["pseudorange_m"]]),
                                    doppler=_opt(row[col["doppler_hz"]]), cn0=_opt(row[col["cn0_dbhz"]]))
            pos = np.array([float(row[col[k]]) for k in ("sat_x", "sat_y", "sat_z")])
            clk = float(row[col["sat_clock_m"]])
        except (ValueError, IndexError) as exc:
            raise CanonicalFormatError(f"{path or 'csv'}: row {n}: {exc}") from exc
        if not (math.isfinite(t) and np.all(np.isfinite(pos)) and math.isfinite(clk)):
            raise CanonicalFormatError(f"row {n}: non-finite value")
        if constellations is not None and const not in constellations:
            continue
        if cur_t is not None and t != cur_t:
            if t < cur_t:
                raise CanonicalFormatError(f"row {n}: time goes backwards")
            out.append(MeasurementSet(cur, cur_t))
            cur = []
        cur_t = t
        cur.append(Measurement(sig, SatelliteState(pos, clk)))
    if cur:
        out.append(MeasurementSet(cur, cur_t))
    return out


@dataclass
class StateStats:
    no_ephemeris: int = 0
    stale: int = 0
    failed: int = 0
    kept: int = 0
    by_reason: dict = field(default_factory=dict)


def attach_states(epochs: Sequence[ObservationEpoch], ephemerides: Sequence, relativistic: bool = True,
                  group_delay: bool = True, stats: Optional[StateStats] = None) -> list[MeasurementSet]:
    """Satellite position and clock for every signal; signals without a usable record are dropped."""
    stats = stats if stats is not None else StateStats()
    by_sat: dict = {}
    for e in ephemerides:
        by_sat.setdefault((e.constellation, e.svid), []).append(e)
    out = []
    for ep in epochs:
        meas = []
        for s in ep.signals:
            eph = select_ephemeris(by_sat.get((s.constellation, s.svid), []), s.constellation, s.svid, ep.time)
            if eph is None:
                stats.no_ephemeris += 1
                continue
            try:
                st = compute_state(eph, s.pseudorange, ep.time, relativistic, group_delay)
            except StaleEphemerisError:
                stats.stale += 1
                continue
            except KeplerConvergenceError:
                stats.failed += 1
                continue
            stats.kept += 1
            meas.append(Measurement(s, st))
        if meas:
            out.append(MeasurementSet(meas, ep.time))
    return out
