"""Score-to-weight activation functions and the sigmoid steepness sweep."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .evaluation import errors_3d, rmse_3d
from .measurements import MeasurementSet
from .solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    NavSolution,
    SolverError,
    StateVector,
    solve_ols,
    solve_wls,
    solve_wls_batch,
)

STEP_DECREMENT = 0.05
DEFAULT_B_GRID = tuple(range(1, 201))


class ActivationConfigError(ValueError):
    pass


class Activation(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    UNIT_STEP = "unit_step"
    RELU = "relu"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class ActivationSpec:
    """``a`` overrides the epoch-mean sigmoid centre; ``b`` is the sigmoid steepness."""

    kind: Activation = Activation.CONSTANT
    b: float = 1.0
    a: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", Activation(self.kind))
        except ValueError as exc:
            raise ActivationConfigError(f"unknown activation {self.kind!r}") from exc
        if self.kind is Activation.SIGMOID and not (self.b > 0 and math.isfinite(self.b)):
            raise ActivationConfigError(f"sigmoid steepness must be positive, got {self.b}")
        if self.a is not None and not 0.0 <= self.a <= 1.0:
            raise ActivationConfigError("sigmoid centre must lie in [0, 1]")


@dataclass(frozen=True)
class ActivationResult:
    weights: np.ndarray
    threshold: float = math.nan  # tau for unit_step / relu, a for sigmoid
    fallback: bool = False  # unit_step could not reach solvability


def unit_step(scores: np.ndarray, solvability_min: int) -> ActivationResult:
    """Pass scores at or above tau, starting at the mean and lowering by 0.05."""
    s = scores
    mean = float(s.mean())
    k = 0
    while True:
        tau = max(mean - STEP_DECREMENT * k, 0.0)
        passed = s >= tau
        if passed.sum() >= solvability_min:
            return ActivationResult(passed.astype(float), tau)
        if tau <= 0.0:
            return ActivationResult(np.ones_like(s), 0.0, fallback=True)
        k += 1


def relu(scores: np.ndarray) -> ActivationResult:
    tau = float(scores.min())
    if tau >= 1.0:
        return ActivationResult(np.ones_like(scores), tau)
    return ActivationResult(np.clip((scores - tau) / (1.0 - tau), 0.0, 1.0), tau)


def sigmoid(scores: np.ndarray, b: float, a: Optional[float] = None) -> ActivationResult:
    centre = float(scores.mean()) if a is None else float(a)
    return ActivationResult(expit(b * (scores - centre)), centre)


def apply_activation(scores, spec: ActivationSpec, solvability_min: int = 4) -> ActivationResult:
    """Per-signal WLS weights in [0, 1] from classifier scores of one epoch."""
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty vector")
    if np.any(~np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
        raise ValueError("scores must lie in [0, 1]")
    kind = spec.kind
    if kind is Activation.CONSTANT:
        return ActivationResult(np.ones_like(s))
    if kind is Activation.LINEAR:
        return ActivationResult(s.copy())
    if kind is Activation.UNIT_STEP:
        return unit_step(s, solvability_min)
    if kind is Activation.RELU:
        return relu(s)
    return sigmoid(s, spec.b, spec.a)


def solvability_min(ms: MeasurementSet) -> int:
    return 3 + len(ms.present_constellations())


@dataclass(frozen=True)
class WeightedFix:
    solution: Optional[NavSolution]
    weights: np.ndarray
    fallback: bool  # all-ones weights were used instead of the activation's

    @property
    def solved(self) -> bool:
        return self.solution is not None


def weighted_fix(ms: MeasurementSet, scores, spec: ActivationSpec, initial: Optional[StateVector] = None,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> WeightedFix:
    """Activate, solve WLS, and fall back to all-ones weights when that fails."""
    act = apply_activation(scores, spec, solvability_min(ms))
    if not act.fallback:
        try:
            sol = solve_wls(ms, act.weights, initial, tol, max_iter)
            if sol.converged:
                return WeightedFix(sol, act.weights, False)
        except SolverError:
            pass
    ones = np.ones(len(ms))
    try:
        sol = solve_ols(ms, initial, tol, max_iter)
    except SolverError:
        return WeightedFix(None, ones, True)
    return WeightedFix(sol if sol.converged else None, ones, True)


@dataclass(frozen=True)
class SweepPoint:
    b: float
    rmse_3d_m: float
    epochs_used: int
    fallback_count: int


@dataclass(frozen=True)
class SweepResult:
    b_star: float
    curve: tuple  # SweepPoint per grid value, in grid order
    mode: str = "test"  # which split the sweep was scored on

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["b", "rmse_3d_m", "epochs_used", "fallback_count"])
        for p in self.curve:
            w.writerow([repr(float(p.b)), repr(p.rmse_3d_m), p.epochs_used, p.fallback_count])
        return buf.getvalue()

    @property
    def best(self) -> SweepPoint:
        return next(p for p in self.curve if p.b == self.b_star)


def sweep_sigmoid_b(scores: Sequence, measurements: Sequence[MeasurementSet], truths: Sequence,
                    b_grid: Sequence[float] = DEFAULT_B_GRID, initial: Optional[Sequence] = None,
                    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, mode: str = "test",
                    ) -> SweepResult:
    """3D RMSE of sigmoid-weighted WLS for every ``b``; ties resolve to the smallest ``b``.

    Each epoch's weightings for the whole grid are solved as one batch.
    Failed solves use the all-ones solution (counted as fallbacks); epochs
    without any solution are left out of that ``b``'s RMSE.
    """
    grid = np.asarray(list(b_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("empty b grid")
    if np.any(~(grid > 0)) or not np.all(np.isfinite(grid)):
        raise ActivationConfigError("sigmoid steepness values must be positive")
    if not (len(scores) == len(measurements) == len(truths)):
        raise ValueError("scores, measurements and truths must align")
    G = len(grid)
    sq_sum = np.zeros(G)
    used = np.zeros(G, dtype=int)
    fallbacks = np.zeros(G, dtype=int)
    for k, (s, ms, truth) in enumerate(zip(scores, measurements, truths)):
        s = np.asarray(s, dtype=float)
        init = initial[k] if initial is not None else None
        W = expit(grid[:, None] * (s[None, :] - s.mean()))
        sol = solve_wls_batch(ms, W, init, tol, max_iter)
        ok = sol.converged
        err = np.full(G, np.nan)
        if ok.any():
            err[ok] = errors_3d(sol.positions[ok], truth)
        if not ok.all():
            try:
                base = solve_ols(ms, init, tol, max_iter)
                base_err = errors_3d(base.position, truth)[0] if base.converged else np.nan
            except SolverError:
                base_err = np.nan
            err[~ok] = base_err
            fallbacks[~ok] += 1
        good = np.isfinite(err)
        sq_sum[good] += err[good] ** 2
        used[good] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        rmse = np.where(used > 0, np.sqrt(sq_sum / np.maximum(used, 1)), np.nan)
    if not np.isfinite(rmse).any():
        raise SolverError("no epoch could be solved for any b")
    # np.nanargmin returns the first minimum, i.e. the smallest b in a sorted grid
    order = np.argsort(grid, kind="stable")
    best = order[int(np.nanargmin(rmse[order]))]
    curve = tuple(SweepPoint(float(b), float(r), int(u), int(f)) for b, r, u, f in zip(grid, rmse, used, fallbacks))
    return SweepResult(float(grid[best]), curve, mode)


def rmse_for_spec(scores: Sequence, measurements: Sequence[MeasurementSet], truths: Sequence,
                  spec: ActivationSpec, initial: Optional[Sequence] = None, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> tuple[float, int, int]:
    """(RMSE, solved epochs, fallbacks) for one activation over an epoch stream."""
    errs, fb = [], 0
    for k, (s, ms, truth) in enumerate(zip(scores, measurements, truths)):
        fix = weighted_fix(ms, s, spec, initial[k] if initial is not None else None, tol, max_iter)
        fb += fix.fallback
        if fix.solved:
            errs.append(errors_3d(fix.solution.position, truth)[0])
    return rmse_3d(errs), len(errs), fb
