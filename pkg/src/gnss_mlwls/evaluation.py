"""Positioning metrics: per-epoch 3D error, RMSE, availability and method reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .geodesy import enu_rotation

CONSISTENCY_RTOL = 1e-9


def error_3d(estimate, truth) -> float:
    """Norm of the ENU offset of ``estimate`` from ``truth`` (both ECEF)."""
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(truth, dtype=float)
    if not (np.all(np.isfinite(est)) and np.all(np.isfinite(ref))):
        raise ValueError("positions must be finite")
    return float(np.linalg.norm(enu_rotation(ref) @ (est - ref)))


def errors_3d(estimates, truth) -> np.ndarray:
    """Row-wise :func:`error_3d` for many estimates against one truth point."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    ref = np.asarray(truth, dtype=float)
    return np.linalg.norm((est - ref) @ enu_rotation(ref).T, axis=1)


def rmse_3d(errors) -> float:
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("RMSE of an empty error list")
    m = float(np.max(np.abs(e)))
    if m == 0.0 or not math.isfinite(m):
        return float(np.sqrt(np.mean(e * e)))
    # scaled so tiny errors do not underflow when squared
    return m * float(np.sqrt(np.mean((e / m) ** 2)))


@dataclass(frozen=True)
class Availability:
    fraction: float
    gaps: tuple  # lengths of maximal unsolved runs, in epoch order
    gap_starts: tuple  # index of the first epoch of each run


def availability(solved: Sequence[bool]) -> Availability:
    s = np.asarray(solved, dtype=bool)
    if s.size == 0:
        raise ValueError("availability of an empty epoch stream")
    gaps, starts = [], []
    run = 0
    for i, ok in enumerate(s):
        if not ok:
            if run == 0:
                starts.append(i)
            run += 1
        elif run:
            gaps.append(run)
            run = 0
    if run:
        gaps.append(run)
    return Availability(float(s.mean()), tuple(gaps), tuple(starts))


def improvement_fraction(baseline_rmse: float, method_rmse: float, best_rmse: float) -> float:
    """Percent of the baseline-to-best-set gap closed by the method."""
    if not baseline_rmse > best_rmse:
        raise ValueError("baseline RMSE must exceed the best-set RMSE")
    return (baseline_rmse - method_rmse) / (baseline_rmse - best_rmse) * 100.0


def remaining_gap_fraction(baseline_rmse: float, method_rmse: float, best_rmse: float) -> float:
    """Percent of the gap still separating the method from the best set."""
    return 100.0 - improvement_fraction(baseline_rmse, method_rmse, best_rmse)


@dataclass(frozen=True)
class EvalRow:
    time: float
    method: str
    error_3d_m: float  # NaN when unsolved
    n_signals: int
    solved: bool
    fallback: bool = False


@dataclass(frozen=True)
class MethodSummary:
    method: str
    rmse_3d_m: float
    availability_fraction: float
    epoch_count: int
    solved_count: int
    fallback_count: int
    max_error_m: float
    gaps: tuple = ()


class ReportConsistencyError(AssertionError):
    pass


def summarize(rows: Sequence[EvalRow], method: str) -> MethodSummary:
    mine = [r for r in rows if r.method == method]
    if not mine:
        raise ValueError(f"no rows for method {method!r}")
    errs = [r.error_3d_m for r in mine if r.solved]
    av = availability([r.solved for r in mine])
    return MethodSummary(
        method=method,
        rmse_3d_m=rmse_3d(errs) if errs else math.nan,
        availability_fraction=av.fraction,
        epoch_count=len(mine),
        solved_count=len(errs),
        fallback_count=sum(r.fallback for r in mine),
        max_error_m=float(max(errs)) if errs else math.nan,
        gaps=av.gaps,
    )


@dataclass
class EvalReport:
    """Per-epoch rows for several methods and their summaries."""

    rows: list = field(default_factory=list)
    summaries: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, row: EvalRow) -> None:
        if row.solved and not (math.isfinite(row.error_3d_m) and row.error_3d_m >= 0):
            raise ValueError("solved rows need a finite non-negative error")
        self.rows.append(row)

    def extend(self, rows: Iterable[EvalRow]) -> None:
        for r in rows:
            self.add(r)

    @property
    def methods(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def finalize(self) -> "EvalReport":
        self.summaries = {m: summarize(self.rows, m) for m in self.methods}
        self.check_consistency()
        return self

    def check_consistency(self) -> None:
        """Recompute every summary from the rows; raise on mismatch."""
        for m, s in self.summaries.items():
            again = summarize(self.rows, m)
            if again.epoch_count != s.epoch_count or again.solved_count != s.solved_count:
                raise ReportConsistencyError(f"{m}: epoch counts disagree with rows")
            a, b = again.rmse_3d_m, s.rmse_3d_m
            if math.isnan(a) != math.isnan(b) or (
                not math.isnan(a) and abs(a - b) > CONSISTENCY_RTOL * max(abs(a), 1e-300)
            ):
                raise ReportConsistencyError(f"{m}: RMSE {b} disagrees with rows ({a})")
            if abs(again.availability_fraction - s.availability_fraction) > 0:
                raise ReportConsistencyError(f"{m}: availability disagrees with rows")

    def rmse(self, method: str) -> float:
        return self.summaries[method].rmse_3d_m

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "method", "error_3d_m", "n_signals", "solved", "fallback"])
        for r in self.rows:
            w.writerow([repr(r.time), r.method, repr(r.error_3d_m) if r.solved else "",
                        r.n_signals, int(r.solved), int(r.fallback)])
        return buf.getvalue()

    def summary_dict(self) -> dict:
        out = {"meta": self.meta, "methods": {}}
        for m, s in self.summaries.items():
            d = asdict(s)
            d["gaps"] = list(s.gaps)
            out["methods"][m] = d
        return out

    def summary_json(self) -> str:
        self.check_consistency()
        return json.dumps(self.summary_dict(), indent=2, sort_keys=True, allow_nan=True)

    def write(self, rows_path, summary_path) -> None:
        self.check_consistency()
        with open(rows_path, "w", encoding="utf-8") as f:
            f.write(self.rows_csv())
        with open(summary_path, "w", encoding="utf-8") as f:
            f.write(self.summary_json())

    @classmethod
    def read_rows(cls, path, meta: Optional[dict] = None) -> "EvalReport":
        rep = cls(meta=dict(meta or {}))
        with open(path, newline="", encoding="utf-8") as f:
            for rec in csv.DictReader(f):
                solved = rec["solved"] == "1"
                rep.add(EvalRow(float(rec["time"]), rec["method"],
                                float(rec["error_3d_m"]) if solved else math.nan,
                                int(rec["n_signals"]), solved, rec["fallback"] == "1"))
        return rep.finalize()

    def comparison_table(self, baseline: str = "constant", best: str = "best_set") -> str:
        """Plain-text RMSE table with gap-closure percentages when both anchors exist."""
        lines = [f"{'method':<28}{'rmse_3d_m':>12}{'avail':>8}{'fallback':>10}{'improv_%':>10}"]
        have = baseline in self.summaries and best in self.summaries
        for m, s in self.summaries.items():
            imp = ""
            if have and m not in (baseline, best):
                try:
                    imp = f"{improvement_fraction(self.rmse(baseline), s.rmse_3d_m, self.rmse(best)):.2f}"
                except ValueError:
                    imp = "n/a"
            lines.append(f"{m:<28}{s.rmse_3d_m:>12.3f}{s.availability_fraction:>8.3f}"
                         f"{s.fallback_count:>10d}{imp:>10}")
        return "\n".join(lines)
