"""Best-subset labels: the satellite subset whose LS fix is closest to truth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .features import FeatureRecord
from .measurements import CONSTELLATION_ORDER, Constellation, MeasurementSet
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, StateVector, solve_wls_batch

ENUMERATION_CAP = 16
BEAM_WIDTH = 8
# Errors closer than this are ties, resolved by subset size then key order.
TIE_TOL_M = 1e-6
_CHUNK = 4096


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True)
class BestSetResult:
    subset: tuple  # sorted (constellation, svid) keys
    error_3d: float
    subsets_evaluated: int
    approx: bool = False

    @property
    def labeled(self) -> bool:
        return bool(self.subset) and np.isfinite(self.error_3d)


@dataclass
class LabeledSample:
    record: FeatureRecord
    label: int
    epoch_time: float
    best_set_error_3d: float
    approx: bool = False


def sort_key(key) -> tuple:
    const, svid = key
    order = [c.value for c in CONSTELLATION_ORDER]
    return (order.index(const) if const in order else len(order), svid)


def min_subset_size(n_constellations: int) -> int:
    return 3 + n_constellations


def _admissible(masks: np.ndarray, const_idx: np.ndarray) -> np.ndarray:
    size = masks.sum(axis=1)
    n_const = np.zeros(len(masks), dtype=int)
    for c in np.unique(const_idx):
        n_const += masks[:, const_idx == c].any(axis=1)
    return size >= 3 + n_const


def _const_index(ms: MeasurementSet) -> np.ndarray:
    return np.array([CONSTELLATION_ORDER.index(c) for c in ms.constellations])


def subset_errors(ms: MeasurementSet, truth, masks: np.ndarray, initial: Optional[StateVector] = None,
                  tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """3D error of the OLS fix for each 0/1 mask row; ``inf`` when not converged."""
    truth = np.asarray(truth, dtype=float)
    out = np.full(len(masks), np.inf)
    for start in range(0, len(masks), _CHUNK):
        chunk = masks[start:start + _CHUNK].astype(float)
        sol = solve_wls_batch(ms, chunk, initial, tol, max_iter)
        err = np.linalg.norm(sol.positions - truth, axis=1)
        out[start:start + _CHUNK] = np.where(sol.converged, err, np.inf)
    return out


def _pick(masks: np.ndarray, errors: np.ndarray, keys: Sequence) -> int:
    """Index of the winner: min error, then larger subset, then smaller sorted keys."""
    finite = np.isfinite(errors)
    if not finite.any():
        return -1
    emin = errors[finite].min()
    cand = np.flatnonzero(finite & (errors <= emin + TIE_TOL_M))
    sizes = masks[cand].sum(axis=1)
    cand = cand[sizes == sizes.max()]
    if len(cand) == 1:
        return int(cand[0])
    return int(min(cand, key=lambda i: sorted(sort_key(keys[j]) for j in np.flatnonzero(masks[i]))))


def _result(ms: MeasurementSet, masks, errors, evaluated: int, approx: bool) -> BestSetResult:
    keys = ms.keys
    win = _pick(masks, errors, keys)
    if win < 0:
        return BestSetResult((), float("inf"), evaluated, approx)
    chosen = tuple(sorted((keys[j] for j in np.flatnonzero(masks[win])), key=sort_key))
    return BestSetResult(chosen, float(errors[win]), evaluated, approx)


def all_admissible_masks(ms: MeasurementSet) -> np.ndarray:
    n = len(ms)
    codes = np.arange(1, 2**n, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
    return masks[_admissible(masks, _const_index(ms))]


def best_subset(ms: MeasurementSet, truth, cap: int = ENUMERATION_CAP, initial: Optional[StateVector] = None,
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> BestSetResult:
    """Exhaustive search over every admissible subset.

    A subset is admissible when it has at least ``3 + k`` signals, ``k`` the
    number of constellations it contains.
    """
    n = len(ms)
    if n > cap:
        raise EnumerationCapError(f"{n} signals exceed the enumeration cap {cap}; use best_subset_beam")
    if n < min_subset_size(1):
        raise ValueError(f"{n} signals cannot form a solvable subset")
    masks = all_admissible_masks(ms)
    errors = subset_errors(ms, truth, masks, initial, tol, max_iter)
    return _result(ms, masks, errors, len(masks), approx=False)


def best_subset_beam(ms: MeasurementSet, truth, beam_width: int = BEAM_WIDTH,
                     initial: Optional[StateVector] = None, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> BestSetResult:
    """Greedy best-first removal approximating :func:`best_subset` for large epochs."""
    n = len(ms)
    const_idx = _const_index(ms)
    keys = ms.keys
    full = np.ones((1, n), dtype=bool)
    all_masks = [full]
    all_errors = [subset_errors(ms, truth, full, initial, tol, max_iter)]
    beam = full
    seen = {full[0].tobytes()}
    while len(beam):
        children = []
        for m in beam:
            for j in np.flatnonzero(m):
                c = m.copy()
                c[j] = False
                b = c.tobytes()
                if b not in seen:
                    seen.add(b)
                    children.append(c)
        if not children:
            break
        children = np.array(children)
        children = children[_admissible(children, const_idx)]
        if not len(children):
            break
        err = subset_errors(ms, truth, children, initial, tol, max_iter)
        all_masks.append(children)
        all_errors.append(err)
        order = sorted(
            np.flatnonzero(np.isfinite(err)),
            key=lambda i: (err[i], -children[i].sum(),
                           sorted(sort_key(keys[j]) for j in np.flatnonzero(children[i]))),
        )
        beam = children[order[:beam_width]]
    masks = np.vstack(all_masks)
    errors = np.concatenate(all_errors)
    return _result(ms, masks, errors, len(masks), approx=True)


def label_epoch(ms: MeasurementSet, truth, cap: int = ENUMERATION_CAP, beam_width: int = BEAM_WIDTH,
                initial: Optional[StateVector] = None, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> BestSetResult:
    """Exhaustive search up to ``cap`` signals, beam search above."""
    if len(ms) > cap:
        return best_subset_beam(ms, truth, beam_width, initial, tol, max_iter)
    return best_subset(ms, truth, cap, initial, tol, max_iter)


def assign_labels(best: BestSetResult, records: Sequence[FeatureRecord]) -> list[LabeledSample]:
    """1 for signals in the best set, 0 otherwise; empty for unlabeled epochs."""
    if not best.labeled:
        return []
    chosen = set(best.subset)
    return [
        LabeledSample(r, int(r.key in chosen), r.epoch_time, best.error_3d, best.approx)
        for r in records
    ]


def filter_training_epochs(epochs: Sequence[Sequence[LabeledSample]], min_signals: int = 5):
    """Drop epochs with four or fewer signals."""
    return [e for e in epochs if len(e) >= min_signals]


__all__ = [
    "BEAM_WIDTH",
    "BestSetResult",
    "Constellation",
    "ENUMERATION_CAP",
    "EnumerationCapError",
    "LabeledSample",
    "all_admissible_masks",
    "assign_labels",
    "best_subset",
    "best_subset_beam",
    "filter_training_epochs",
    "label_epoch",
    "subset_errors",
]
