"""Helpers shared by the text parsers: sources, strict numeric fields, time."""

from __future__ import annotations

import io
import os
import re
from datetime import date
from dataclasses import dataclass, field
from typing import Optional, Union

SECONDS_PER_DAY = 86400
SECONDS_PER_WEEK = 604800

Source = Union[bytes, str, os.PathLike, io.IOBase]


class RinexParseError(ValueError):
    """Structured parse failure; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = ""
        if path:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


@dataclass
class ParseStats:
    """Non-fatal events met while parsing."""

    warnings: list = field(default_factory=list)
    skipped_epochs: int = 0
    skipped_records: int = 0
    filtered_signals: int = 0

    @property
    def warning_count(self) -> int:
        return len(self.warnings)

    def warn(self, line: Optional[int], message: str) -> None:
        self.warnings.append(f"line {line}: {message}" if line is not None else message)


def read_text(source: Source) -> tuple[str, Optional[str]]:
    """Text of a byte string, path or file object, decoded as Latin-1 so no byte fails.

    A ``str`` is taken as a path.
    """
    path = None
    if isinstance(source, bytes):
        data = source
    elif isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        with open(path, "rb") as f:
            data = f.read()
    else:
        data = source.read()
    if isinstance(data, str):
        return data, path
    return data.decode("latin-1"), path


_FLOAT_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[EeDd][+-]?\d+)?$")


def parse_float(text: str) -> Optional[float]:
    """Whole-field float; ``None`` for a blank field, ``ValueError`` for anything malformed.

    Accepts the Fortran ``D`` exponent marker.
    """
    t = text.strip()
    if not t:
        return None
    if not _FLOAT_RE.match(t):
        raise ValueError(f"malformed number {text!r}")
    v = float(t.replace("D", "E").replace("d", "e"))
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite number {text!r}")
    return v


_INT_RE = re.compile(r"^[+-]?\d+$")


def parse_int(text: str) -> Optional[int]:
    t = text.strip()
    if not t:
        return None
    if not _INT_RE.match(t):
        raise ValueError(f"malformed integer {text!r}")
    return int(t)


GPS_EPOCH_ORDINAL = date(1980, 1, 6).toordinal()


def calendar_to_gps(year: int, month: int, day: int, hour: int, minute: int, second: float) -> float:
    """Continuous seconds since the GPS epoch for a calendar time in the same scale."""
    if not (1 <= month <= 12 and 1 <= day <= 31 and 0 <= hour <= 23 and 0 <= minute <= 59
            and 0.0 <= second < 61.0 and year >= 0):
        raise ValueError("calendar field out of range")
    if year < 100:
        year += 2000 if year < 80 else 1900
    days = date(year, month, day).toordinal() - GPS_EPOCH_ORDINAL
    return float((days * 24 + hour) * 3600 + minute * 60) + second


def split_week(t: float) -> tuple[int, float]:
    week = int(t // SECONDS_PER_WEEK)
    return week, t - week * SECONDS_PER_WEEK
