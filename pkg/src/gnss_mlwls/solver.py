"""Linearised pseudorange least squares with one clock state per constellation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .measurements import CONSTELLATION_ORDER, Constellation, MeasurementSet

DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 10
WEIGHT_FLOOR = 1e-6
COND_MAX = 1e12


class SolverError(ArithmeticError):
    pass


class InsufficientMeasurementsError(SolverError):
    pass


class SingularGeometryError(SolverError):
    pass


@dataclass(frozen=True)
class StateVector:
    position: np.ndarray
    clock_offsets: dict = field(default_factory=dict)

    @classmethod
    def earth_center(cls) -> "StateVector":
        return cls(np.zeros(3), {})

    def vector(self, constellations: Sequence[Constellation]) -> np.ndarray:
        return np.concatenate([self.position, [self.clock_offsets.get(c, 0.0) for c in constellations]])


@dataclass(frozen=True)
class NavSolution:
    state: StateVector
    residuals: np.ndarray
    iterations: int
    converged: bool
    weights_used: np.ndarray
    constellations: tuple
    geometry: np.ndarray  # rows of the measurements actually used, at the final state
    used: np.ndarray  # boolean mask over the measurement set
    objective_history: tuple = ()

    @property
    def position(self) -> np.ndarray:
        return self.state.position


def clock_design(constellations_of_rows: Sequence[Constellation], columns: Sequence[Constellation]) -> np.ndarray:
    return np.array([[1.0 if c == col else 0.0 for col in columns] for c in constellations_of_rows]).reshape(
        len(constellations_of_rows), len(columns)
    )


_GRID = 1024.0


def _range_terms(sat_pos: np.ndarray, x: np.ndarray):
    """Unit LOS vectors and ranges split as ``r_ref + dr``.

    ``r_ref`` is the range from a grid-snapped origin near ``x`` and ``dr``
    the small correction, evaluated without cancellation. Residuals built
    from this split resolve well below the ~4e-9 m spacing of doubles at
    satellite distances. ``x`` may carry leading batch axes.
    """
    ref = np.round(x / _GRID) * _GRID
    d = (x - ref)[..., None, :]
    s_rel = sat_pos - ref[..., None, :]
    r_ref = np.linalg.norm(s_rel, axis=-1)
    v = s_rel - d
    r = np.linalg.norm(v, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):  # zero range is reported by the caller
        dr = (np.sum(d * d, axis=-1) - 2.0 * np.sum(s_rel * d, axis=-1)) / (r + r_ref)
        return v / r[..., None], r, r_ref, dr


def build_geometry(ms: MeasurementSet, linearization_point: StateVector,
                   constellations: Optional[Sequence[Constellation]] = None):
    """Measurement matrix ``H`` and residual vector at a linearisation point.

    Row ``i`` is ``[-u_x, -u_y, -u_z, 1{GPS}, 1{BeiDou}]`` restricted to the
    requested clock columns, ``u`` the unit vector towards the satellite.
    """
    if constellations is None:
        constellations = ms.present_constellations()
    u, r, r_ref, dr = _range_terms(ms.sat_pos, np.asarray(linearization_point.position, dtype=float))
    if np.any(r == 0.0):
        raise SingularGeometryError("satellite coincides with linearisation point")
    clk_cols = clock_design(ms.constellations, constellations)
    H = np.hstack([-u, clk_cols])
    clocks = clk_cols @ np.array([linearization_point.clock_offsets.get(c, 0.0) for c in constellations])
    residual = ((ms.pseudorange + ms.sat_clock) - r_ref) - dr - clocks
    return H, residual


def _condition(N: np.ndarray) -> np.ndarray:
    """Spectral condition number of symmetric PSD matrices (batched)."""
    lam = np.linalg.eigvalsh(N)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lam[..., 0] > 0.0, lam[..., -1] / lam[..., 0], np.inf)


def _solve_normal(N: np.ndarray, b: np.ndarray, cond_max: float) -> np.ndarray:
    lam, V = np.linalg.eigh(N)
    if lam[0] <= 0.0 or lam[-1] / lam[0] > cond_max:
        raise SingularGeometryError(f"normal matrix condition number exceeds {cond_max:g}")
    return V @ ((V.T @ b) / lam)


def solve_wls(ms: MeasurementSet, weights, initial: Optional[StateVector] = None,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
              weight_floor: float = WEIGHT_FLOOR, cond_max: float = COND_MAX) -> NavSolution:
    """Gauss-Newton iteration of ``dx = (H'WH)^-1 H'W dp`` with diagonal ``W``.

    Measurements weighted below ``weight_floor`` are dropped; a constellation
    left without usable rows loses its clock column.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(ms),):
        raise ValueError(f"expected {len(ms)} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    used = w >= weight_floor
    consts = ms.present_constellations(used)
    n_used = int(used.sum())
    if n_used < 3 + len(consts) or not consts:
        raise InsufficientMeasurementsError(
            f"{n_used} usable measurements, need {3 + max(len(consts), 1)}"
        )

    sub = ms.subset(np.flatnonzero(used))
    wu = w[used]
    state = initial if initial is not None else StateVector.earth_center()
    x = state.vector(consts)
    history = []
    converged = False
    it = 0
    H = None
    for it in range(1, max_iter + 1):
        cur = StateVector(x[:3].copy(), dict(zip(consts, x[3:])))
        H, dp = build_geometry(sub, cur, consts)
        history.append(float(dp @ (wu * dp)))
        HtW = H.T * wu
        dx = _solve_normal(HtW @ H, HtW @ dp, cond_max)
        x = x + dx
        if np.linalg.norm(dx) < tol:
            converged = True
            # One more step lands on the fixed point to rounding level, so the
            # result does not depend on which side of tol the last step fell.
            cur = StateVector(x[:3].copy(), dict(zip(consts, x[3:])))
            H, dp = build_geometry(sub, cur, consts)
            HtW = H.T * wu
            x = x + _solve_normal(HtW @ H, HtW @ dp, cond_max)
            break

    final = StateVector(x[:3].copy(), dict(zip(consts, (float(v) for v in x[3:]))))
    H, dp_used = build_geometry(sub, final, consts)
    history.append(float(dp_used @ (wu * dp_used)))
    residuals = _all_residuals(ms, final)
    return NavSolution(
        state=final,
        residuals=residuals,
        iterations=it,
        converged=converged,
        weights_used=np.where(used, w, 0.0),
        constellations=consts,
        geometry=H,
        used=used,
        objective_history=tuple(history),
    )


def _all_residuals(ms: MeasurementSet, state: StateVector) -> np.ndarray:
    _, _, r_ref, dr = _range_terms(ms.sat_pos, np.asarray(state.position, dtype=float))
    clocks = np.array([state.clock_offsets.get(c, np.nan) for c in ms.constellations])
    return ((ms.pseudorange + ms.sat_clock) - r_ref) - dr - clocks


def solve_ols(ms: MeasurementSet, initial: Optional[StateVector] = None, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER, cond_max: float = COND_MAX) -> NavSolution:
    return solve_wls(ms, np.ones(len(ms)), initial, tol, max_iter, cond_max=cond_max)


def gdop(geometry: np.ndarray, cond_max: float = COND_MAX) -> float:
    """``sqrt(trace((H'H)^-1))``."""
    H = np.asarray(geometry, dtype=float)
    N = H.T @ H
    if not _condition(N) <= cond_max:
        raise SingularGeometryError("geometry is singular")
    return float(np.sqrt(np.trace(np.linalg.inv(N))))


@dataclass(frozen=True)
class BatchSolution:
    positions: np.ndarray  # (S, 3)
    clocks: np.ndarray  # (S, C), NaN where a constellation has no usable rows
    converged: np.ndarray  # (S,)
    valid: np.ndarray  # (S,) False for insufficient or singular members
    constellations: tuple


def solve_wls_batch(ms: MeasurementSet, weights, initial: Optional[StateVector] = None,
                    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    weight_floor: float = WEIGHT_FLOOR, cond_max: float = COND_MAX) -> BatchSolution:
    """Many WLS solves over one measurement set, one per row of ``weights``.

    Equivalent member-by-member to :func:`solve_wls`; used for subset
    enumeration and activation sweeps where thousands of weightings are needed.
    """
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    S, n = W.shape
    if n != len(ms):
        raise ValueError("weight rows must match the measurement count")
    W = np.where(W >= weight_floor, W, 0.0)
    consts = ms.present_constellations()
    C = len(consts)
    G = clock_design(ms.constellations, consts)  # (n, C)

    usable = W > 0.0
    col_used = (usable.astype(float) @ G) > 0  # (S, C)
    n_used = usable.sum(axis=1)
    valid = (n_used >= 3 + col_used.sum(axis=1)) & col_used.any(axis=1)

    state = initial if initial is not None else StateVector.earth_center()
    x = np.tile(state.vector(consts), (S, 1))
    x[:, 3:] = np.where(col_used, x[:, 3:], 0.0)
    active = valid.copy()
    converged = np.zeros(S, dtype=bool)
    eye = np.eye(3 + C)
    missing_cols = np.zeros((S, 3 + C), dtype=bool)
    missing_cols[:, 3:] = ~col_used

    polish = np.zeros(S, dtype=bool)
    for it in range(max_iter + 1):
        if it == max_iter:
            active &= polish
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa = x[idx]
        u, _, r_ref, dr = _range_terms(ms.sat_pos, xa[:, :3])
        H = np.concatenate([-u, np.broadcast_to(G, (len(idx), n, C))], axis=2)
        dp = ((ms.pseudorange + ms.sat_clock) - r_ref) - dr - xa[:, 3:] @ G.T
        Wa = W[idx]
        HtW = np.transpose(H, (0, 2, 1)) * Wa[:, None, :]
        N = HtW @ H
        b = np.einsum("sij,sj->si", HtW, dp)
        miss = missing_cols[idx]
        # Dropped clock columns become identity rows so their update is zero.
        N = np.where(miss[:, :, None] | miss[:, None, :], 0.0, N) + eye * miss[:, None, :]
        b = np.where(miss, 0.0, b)
        bad = ~(_condition(N) <= cond_max)
        if bad.any():
            valid[idx[bad]] = False
            active[idx[bad]] = False
            N[bad] = eye
            b[bad] = 0.0
        dx = np.linalg.solve(N, b[..., None])[..., 0]
        x[idx] = xa + dx
        finishing = polish[idx]
        done = (np.linalg.norm(dx, axis=1) < tol) & ~bad & ~finishing
        converged[idx[done]] = True
        polish[idx[done]] = True
        active[idx[finishing]] = False

    clocks = np.where(col_used, x[:, 3:], np.nan)
    return BatchSolution(x[:, :3], clocks, converged & valid, valid, consts)


__all__ = [
    "BatchSolution",
    "CONSTELLATION_ORDER",
    "InsufficientMeasurementsError",
    "NavSolution",
    "SingularGeometryError",
    "SolverError",
    "StateVector",
    "build_geometry",
    "gdop",
    "solve_ols",
    "solve_wls",
    "solve_wls_batch",
]
