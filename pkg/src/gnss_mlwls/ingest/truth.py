"""Ground-truth trajectories and their alignment with observation epochs."""

from __future__ import annotations

import bisect
import csv
import enum
import io
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..geodesy import GeodeticPosition, ecef_to_geodetic, geodetic_to_ecef
from ..measurements import ObservationEpoch
from .common import SECONDS_PER_WEEK, Source, read_text

DEFAULT_MAX_GAP_S = 0.5


class TruthFormat(str, enum.Enum):
    CSV_GEODETIC = "csv_geodetic"
    CSV_ECEF = "csv_ecef"


class TruthParseError(ValueError):
    pass


# Accepted header names, canonical first.
_ALIASES = {
    "time": ("time", "gps_time", "t"),
    "week": ("week", "gps_week"),
    "tow": ("tow", "sow", "seconds_of_week"),
    "lat": ("lat_deg", "lat", "latitude"),
    "lon": ("lon_deg", "lon", "longitude"),
    "height": ("height_m", "height", "h", "alt"),
    "x": ("x_m", "x", "ecef_x"),
    "y": ("y_m", "y", "ecef_y"),
    "z": ("z_m", "z", "ecef_z"),
}


@dataclass(frozen=True)
class GroundTruthPoint:
    time: float  # continuous GPS seconds
    position: Union[GeodeticPosition, np.ndarray]

    @property
    def ecef(self) -> np.ndarray:
        if isinstance(self.position, GeodeticPosition):
            return geodetic_to_ecef(self.position)
        return np.asarray(self.position, dtype=float)


def _find(header: list[str], key: str) -> Optional[int]:
    low = [h.strip().lower() for h in header]
    for name in _ALIASES[key]:
        if name in low:
            return low.index(name)
    return None


def _need(header: list[str], key: str) -> int:
    j = _find(header, key)
    if j is None:
        raise TruthParseError(f"missing column {_ALIASES[key][0]!r}")
    return j


def parse_ground_truth(source: Source, fmt: TruthFormat = TruthFormat.CSV_GEODETIC) -> list[GroundTruthPoint]:
    """Ground-truth points from a headed CSV.

    Time is ``time`` (continuous GPS seconds) or a ``week``/``tow`` pair.
    Geodetic files carry ``lat_deg, lon_deg, height_m``; ECEF files
    ``x_m, y_m, z_m``. Times must be strictly increasing.
    """
    fmt = TruthFormat(fmt)
    text, _ = read_text(source)
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise TruthParseError("missing header row")
    header, body = rows[0], rows[1:]
    jt = _find(header, "time")
    if jt is None:
        if _find(header, "week") is None and _find(header, "tow") is None:
            raise TruthParseError("missing column 'time' (or 'week' and 'tow')")
        jw, jtow = _need(header, "week"), _need(header, "tow")
    keys = ("lat", "lon", "height") if fmt is TruthFormat.CSV_GEODETIC else ("x", "y", "z")
    jp = [_need(header, k) for k in keys]

    out: list[GroundTruthPoint] = []
    for n, row in enumerate(body, start=2):
        try:
            if jt is not None:
                t = float(row[jt])
            else:
                t = float(int(row[jw])) * SECONDS_PER_WEEK + float(row[jtow])
            vals = [float(row[j]) for j in jp]
        except (ValueError, IndexError) as exc:
            raise TruthParseError(f"row {n}: {exc}") from exc
        if not np.all(np.isfinite([t] + vals)):
            raise TruthParseError(f"row {n}: non-finite value")
        if out and not t > out[-1].time:
            raise TruthParseError(f"row {n}: time {t} not after {out[-1].time}")
        pos = GeodeticPosition(*vals) if fmt is TruthFormat.CSV_GEODETIC else np.array(vals)
        out.append(GroundTruthPoint(t, pos))
    return out


def write_ground_truth(points: Sequence[GroundTruthPoint], fmt: TruthFormat = TruthFormat.CSV_ECEF) -> str:
    fmt = TruthFormat(fmt)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if fmt is TruthFormat.CSV_ECEF:
        w.writerow(["time", "x_m", "y_m", "z_m"])
        for p in points:
            w.writerow([repr(float(p.time))] + [repr(float(v)) for v in p.ecef])
    else:
        w.writerow(["time", "lat_deg", "lon_deg", "height_m"])
        for p in points:
            g = p.position
            if not isinstance(g, GeodeticPosition):
                g = ecef_to_geodetic(p.ecef)
            w.writerow([repr(float(p.time))] + [repr(float(v)) for v in g])
    return buf.getvalue()


@dataclass(frozen=True)
class Alignment:
    pairs: list  # (epoch, truth ECEF)
    dropped: int


def align_truth(epochs: Sequence[ObservationEpoch], truth: Sequence[GroundTruthPoint],
                max_gap: float = DEFAULT_MAX_GAP_S) -> Alignment:
    """Pair each epoch with the nearest truth point within ``max_gap`` seconds.

    A truth point serves at most one epoch (the closest; earlier on ties).
    Unmatched epochs are dropped and counted.
    """
    times = [p.time for p in truth]
    best: dict[int, tuple[float, int]] = {}
    for k, ep in enumerate(epochs):
        j = bisect.bisect_left(times, ep.time)
        cands = [c for c in (j - 1, j) if 0 <= c < len(times)]
        if not cands:
            continue
        c = min(cands, key=lambda c: (abs(times[c] - ep.time), c))
        gap = abs(times[c] - ep.time)
        if gap > max_gap:
            continue
        if c not in best or (gap, k) < best[c]:
            best[c] = (gap, k)
    chosen = sorted((k, c) for c, (_, k) in best.items())
    pairs = [(epochs[k], truth[c].ecef) for k, c in chosen]
    return Alignment(pairs, len(epochs) - len(pairs))
