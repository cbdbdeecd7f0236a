"""Per-signal quality indicators and their epoch-wise z-score normalisation.

Six features feed the classifiers, in this order (:data:`FEATURE_NAMES`):
elevation, C/N0, |pseudorange residual|, GDOP contribution,
|pseudorange-rate consistency| and |estimated receiver clock offset|, each
standardised within the epoch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .geodesy import elevations
from .measurements import SPEED_OF_LIGHT, Constellation, MeasurementSet, SignalObservation
from .solver import NavSolution, SingularGeometryError, StateVector, build_geometry, gdop, solve_ols

FEATURE_NAMES = (
    "elevation_norm",
    "cn0_norm",
    "residual_norm",
    "gdop_contribution_norm",
    "rate_consistency_norm",
    "clock_offset_norm",
)

GDOP_SENTINEL = math.inf


class Grouping(str, enum.Enum):
    """How clock-offset z-scores are pooled within an epoch."""

    PER_CONSTELLATION = "per_constellation"
    POOLED = "pooled"


class DopplerSign(str, enum.Enum):
    RINEX = "rinex"  # positive Doppler for approaching satellites
    PAPER = "paper"  # rate = +Doppler * c / f


@dataclass
class FeatureRecord:
    epoch_time: float
    constellation: str
    svid: int
    elevation_deg: float
    cn0_dbhz: float
    residual_m: float
    gdop_contribution: float
    rate_consistency_mps: float
    clock_offset_m: float
    elevation_norm: float = 0.0
    cn0_norm: float = 0.0
    residual_norm: float = 0.0
    gdop_contribution_norm: float = 0.0
    rate_consistency_norm: float = 0.0
    clock_offset_norm: float = 0.0
    rate_present: bool = True
    gdop_sentinel: bool = False
    ml_usable: bool = True  # scored by the classifier; training also needs rate_present

    @property
    def trainable(self) -> bool:
        return self.ml_usable and self.rate_present

    @property
    def key(self) -> tuple[str, int]:
        return (self.constellation, self.svid)

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES])

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def pseudorange_residuals(solution: NavSolution) -> np.ndarray:
    return np.asarray(solution.residuals, dtype=float)


def gdop_contribution(geometry: np.ndarray, k: int) -> float:
    """GDOP increase caused by removing row ``k``; ``inf`` if that makes it singular."""
    H = np.asarray(geometry, dtype=float)
    full = gdop(H)
    reduced = np.delete(H, k, axis=0)
    if reduced.shape[0] < reduced.shape[1]:
        return GDOP_SENTINEL
    try:
        return gdop(reduced) - full
    except SingularGeometryError:
        return GDOP_SENTINEL


def pseudorange_rate(signal: SignalObservation, doppler_sign: DopplerSign = DopplerSign.RINEX) -> float:
    rate = signal.doppler * SPEED_OF_LIGHT / signal.carrier_hz
    return -rate if doppler_sign is DopplerSign.RINEX else rate


def rate_consistency(prev: Optional[SignalObservation], curr: SignalObservation, dt: float,
                     doppler_sign: DopplerSign = DopplerSign.RINEX) -> Optional[float]:
    """Pseudorange change rate minus Doppler-derived rate; ``None`` when absent."""
    if prev is None or dt <= 0 or curr.doppler is None:
        return None
    if prev.key != curr.key:
        raise ValueError("rate consistency needs the same satellite in both epochs")
    return (curr.pseudorange - prev.pseudorange) / dt - pseudorange_rate(curr, doppler_sign)


def clock_offset_estimate(ms: MeasurementSet, estimated_position) -> np.ndarray:
    """``rho + sat_clock - |sat - x|`` for every signal."""
    ranges = np.linalg.norm(ms.sat_pos - np.asarray(estimated_position, dtype=float), axis=1)
    return ms.pseudorange + ms.sat_clock - ranges


def zscore(values, absolute: bool = False) -> np.ndarray:
    """Population z-scores; all zeros when the spread vanishes."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return v.copy()
    sd = v.std()
    if not sd > 0 or not np.isfinite(sd):
        return np.zeros_like(v)
    z = (v - v.mean()) / sd
    return np.abs(z) if absolute else z


def apply_elevation_mask(ms: MeasurementSet, elevation_deg, mask_deg: float = 15.0):
    """Drop signals strictly below the mask; returns the kept set and its elevations."""
    el = np.asarray(elevation_deg, dtype=float)
    keep = np.flatnonzero(el >= mask_deg)
    return ms.subset(keep), el[keep]


def normalize_epoch(records: Sequence[FeatureRecord], grouping: Grouping = Grouping.PER_CONSTELLATION
                    ) -> list[FeatureRecord]:
    """Fill the ``*_norm`` fields of one epoch's records in place.

    Elevation, C/N0 and GDOP contribution keep their sign; residual, rate
    consistency and clock offset are folded to ``|z|``. Clock offsets are
    standardised per constellation unless ``grouping`` is pooled. A missing
    rate feature is imputed as 0 (the epoch mean). Records alone in their
    clock group are marked not ML-usable.
    """
    recs = list(records)
    if not recs:
        return recs
    el = np.array([r.elevation_deg for r in recs])
    cn0 = np.array([r.cn0_dbhz for r in recs])
    res = np.array([r.residual_m for r in recs])
    for r, a, b, c in zip(recs, zscore(el), zscore(cn0), zscore(res, absolute=True)):
        r.elevation_norm, r.cn0_norm, r.residual_norm = float(a), float(b), float(c)

    g = np.array([r.gdop_contribution for r in recs])
    finite = np.isfinite(g)
    gz = np.zeros_like(g)
    gz[finite] = zscore(g[finite])
    # A satellite the geometry cannot lose gets the epoch's largest score.
    gz[~finite] = gz[finite].max() if finite.any() else 0.0
    for r, z, fin in zip(recs, gz, finite):
        r.gdop_contribution_norm = float(z)
        r.gdop_sentinel = not bool(fin)

    present = np.array([r.rate_present for r in recs])
    rate = np.array([r.rate_consistency_mps for r in recs])
    rz = np.zeros(len(recs))
    if present.any():
        rz[present] = zscore(rate[present], absolute=True)
    for r, z in zip(recs, rz):
        r.rate_consistency_norm = float(z)

    if grouping is Grouping.POOLED:
        groups = {None: list(range(len(recs)))}
    else:
        groups = {}
        for i, r in enumerate(recs):
            groups.setdefault(r.constellation, []).append(i)
    for idx in groups.values():
        z = zscore([recs[i].clock_offset_m for i in idx], absolute=True)
        for i, v in zip(idx, z):
            recs[i].clock_offset_norm = float(v)
            if len(idx) < 2:
                recs[i].ml_usable = False
    if len(recs) < 2:
        for r in recs:
            r.ml_usable = False
    return recs


@dataclass
class EpochFeatures:
    """Masked measurements of an epoch, their OLS solve, and feature records."""

    time: float
    measurements: MeasurementSet
    solution: NavSolution
    records: list[FeatureRecord]


def extract_epoch(ms: MeasurementSet, previous: Optional[MeasurementSet] = None, mask_deg: float = 15.0,
                  grouping: Grouping = Grouping.PER_CONSTELLATION,
                  doppler_sign: DopplerSign = DopplerSign.RINEX,
                  initial: Optional[StateVector] = None, tol: float = 1e-4,
                  max_iter: int = 10) -> EpochFeatures:
    """All-satellite OLS, elevation mask, then the six features for the kept signals.

    Raises :class:`~gnss_mlwls.solver.SolverError` when the epoch cannot be
    solved before or after masking.
    """
    first = solve_ols(ms, initial, tol, max_iter)
    el = elevations(first.position, ms.sat_pos)
    masked, el = apply_elevation_mask(ms, el, mask_deg)
    sol = solve_ols(masked, first.state, tol, max_iter)
    H, _ = build_geometry(masked, sol.state, sol.constellations)
    residuals = pseudorange_residuals(sol)
    clk = clock_offset_estimate(masked, sol.position)

    prev_by_key = {}
    dt = 0.0
    if previous is not None:
        prev_by_key = {m.key: m.signal for m in previous}
        dt = ms.time - previous.time

    records = []
    for k, m in enumerate(masked):
        sig = m.signal
        rc = rate_consistency(prev_by_key.get(sig.key), sig, dt, doppler_sign)
        records.append(
            FeatureRecord(
                epoch_time=ms.time,
                constellation=sig.constellation.value,
                svid=sig.svid,
                elevation_deg=float(el[k]),
                cn0_dbhz=float(sig.cn0) if sig.cn0 is not None else math.nan,
                residual_m=float(residuals[k]),
                gdop_contribution=gdop_contribution(H, k),
                rate_consistency_mps=float(rc) if rc is not None else math.nan,
                clock_offset_m=float(clk[k]),
                rate_present=rc is not None,
            )
        )
    is_complete = [math.isfinite(r.cn0_dbhz) and m.signal.doppler is not None
                   for r, m in zip(records, masked)]
    normalize_epoch([r for r, ok in zip(records, is_complete) if ok], grouping)
    for r, ok in zip(records, is_complete):
        if not ok:
            r.ml_usable = False
    return EpochFeatures(ms.time, masked, sol, records)


def feature_matrix(records: Sequence[FeatureRecord]) -> np.ndarray:
    return np.array([r.vector() for r in records]).reshape(len(records), len(FEATURE_NAMES))


__all__ = [
    "Constellation",
    "DopplerSign",
    "EpochFeatures",
    "FEATURE_NAMES",
    "FeatureRecord",
    "Grouping",
    "apply_elevation_mask",
    "clock_offset_estimate",
    "extract_epoch",
    "feature_matrix",
    "gdop_contribution",
    "normalize_epoch",
    "pseudorange_residuals",
    "rate_consistency",
    "zscore",
]
