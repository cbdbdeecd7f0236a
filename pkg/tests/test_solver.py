import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnss_mlwls.geodesy import enu_rotation
from gnss_mlwls.measurements import Constellation, Measurement, MeasurementSet, SatelliteState, SignalObservation
from gnss_mlwls.solver import (
    InsufficientMeasurementsError,
    SingularGeometryError,
    StateVector,
    build_geometry,
    gdop,
    solve_ols,
    solve_wls,
    solve_wls_batch,
)
from gnss_mlwls.synthetic import random_scene

G, B = Constellation.GPS, Constellation.BEIDOU


def cofactor_inverse(N):
    """Adjugate / determinant, an inverse that shares nothing with LAPACK's solve path."""
    n = N.shape[0]
    cof = np.empty_like(N)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(N, i, 0), j, 1)
            cof[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return cof.T / np.linalg.det(N)


def _scene(seed, n_gps=8, n_bds=0, **kw):
    return random_scene(np.random.default_rng(seed), n_gps, n_bds, **kw)


# ------------------------------------------------------------------ geometry


def test_zenith_satellite_partials():
    ms, rx = _scene(0, 4)
    up = enu_rotation(rx)[2]
    sat = rx + 2.0e7 * up
    m = Measurement(SignalObservation(G, 9, 2.0e7), SatelliteState(sat, 0.0))
    H, _ = build_geometry(MeasurementSet([m]), StateVector(rx, {G: 0.0}))
    np.testing.assert_allclose(H[0, :3], -up, atol=1e-12)


def test_gps_only_has_four_columns():
    ms, rx = _scene(1, 6)
    H, dp = build_geometry(ms, StateVector(rx))
    assert H.shape == (6, 4) and dp.shape == (6,)


def test_dual_constellation_clock_columns():
    ms, rx = _scene(2, 3, 2)
    H, _ = build_geometry(ms, StateVector(rx))
    assert H.shape == (5, 5)
    np.testing.assert_array_equal(H[:, 3] + H[:, 4], np.ones(5))
    assert set(np.unique(H[:, 3:])) <= {0.0, 1.0}
    np.testing.assert_allclose(np.linalg.norm(H[:, :3], axis=1), 1.0, atol=1e-12)


def test_coincident_linearisation_point_raises():
    ms, rx = _scene(3, 4)
    with pytest.raises(SingularGeometryError):
        build_geometry(ms, StateVector(ms.sat_pos[0]))


def test_residual_definition():
    ms, rx = _scene(4, 5, 2)
    st_ = StateVector(rx + 10.0, {G: 3.0, B: -4.0})
    _, dp = build_geometry(ms, st_)
    clocks = np.array([3.0 if c is G else -4.0 for c in ms.constellations])
    want = ms.pseudorange + ms.sat_clock - np.linalg.norm(ms.sat_pos - (rx + 10.0), axis=1) - clocks
    np.testing.assert_allclose(dp, want, atol=1e-6)


# ------------------------------------------------------------------ WLS / OLS


def test_unit_weights_equal_ols():
    ms, _ = _scene(5, 7, 3, noise_std=3.0)
    a = solve_ols(ms)
    b = solve_wls(ms, np.ones(len(ms)))
    assert np.linalg.norm(a.position - b.position) < 1e-9


def test_noise_free_recovery():
    ms, rx = _scene(6, 5, 3)
    sol = solve_ols(ms)
    assert sol.converged
    assert np.linalg.norm(sol.position - rx) < 1e-3
    assert abs(sol.state.clock_offsets[G] - 1e5) < 1e-3
    assert abs(sol.state.clock_offsets[B] - 7e4) < 1e-3
    assert np.max(np.abs(sol.residuals)) < 1e-6


def test_weight_two_equals_duplicate():
    ms, _ = _scene(7, 6, 2, noise_std=5.0)
    w = np.ones(len(ms))
    w[2] = 2.0
    a = solve_wls(ms, w)
    m2 = list(ms)[2]
    twin = Measurement(SignalObservation(m2.signal.constellation, 40, m2.signal.pseudorange), m2.state)
    dup = MeasurementSet(list(ms) + [twin], ms.time)
    b = solve_ols(dup)
    assert np.linalg.norm(a.position - b.position) < 1e-9


def test_exactly_determined():
    ms, _ = _scene(8, 4, noise_std=10.0)
    sol = solve_ols(ms)
    assert np.max(np.abs(sol.residuals)) < 1e-6


def test_three_signals_insufficient():
    ms, _ = _scene(9, 3)
    with pytest.raises(InsufficientMeasurementsError):
        solve_ols(ms)


def test_weight_floor_drops_constellation():
    ms, rx = _scene(10, 5, 2)
    w = np.array([1.0] * 5 + [1e-9, 0.0])
    sol = solve_wls(ms, w)
    assert sol.constellations == (G,)
    assert not sol.used[5:].any()
    assert np.linalg.norm(sol.position - rx) < 1e-3


def test_bad_weights_rejected():
    ms, _ = _scene(11, 5)
    with pytest.raises(ValueError):
        solve_wls(ms, np.ones(4))
    with pytest.raises(ValueError):
        solve_wls(ms, [1, 1, 1, 1, -1])
    with pytest.raises(ValueError):
        solve_wls(ms, [1, 1, 1, 1, np.nan])


def test_coplanar_geometry_singular():
    ms, rx = _scene(12, 6)
    R = enu_rotation(rx)
    flat = []
    for k, m in enumerate(ms):
        az = 2 * np.pi * k / len(ms)
        d = R.T @ np.array([np.sin(az), np.cos(az), 0.0])
        flat.append(Measurement(m.signal, SatelliteState(rx + 2.2e7 * d, 0.0)))
    with pytest.raises(SingularGeometryError):
        solve_ols(MeasurementSet(flat), initial=StateVector(rx, {G: 0.0}))


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.integers(4, 9), st.integers(0, 4))
def test_objective_non_increasing(seed, n_gps, n_bds):
    ms, _ = _scene(seed, n_gps, n_bds, noise_std=5.0)
    w = np.random.default_rng(seed).uniform(0.1, 1.0, len(ms))
    sol = solve_wls(ms, w)
    h = np.array(sol.objective_history)
    assert np.all(np.diff(h) <= 1e-6 * np.maximum(h[:-1], 1.0))


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.permutations(list(range(8))))
def test_permutation_invariance(seed, perm):
    ms, _ = _scene(seed, 5, 3, noise_std=5.0)
    a = solve_ols(ms)
    b = solve_ols(ms.subset(perm))
    assert np.linalg.norm(a.position - b.position) < 1e-9
    np.testing.assert_allclose(b.residuals, a.residuals[perm], atol=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_weight_scale_invariance(seed, k):
    ms, _ = _scene(seed, 6, 2, noise_std=5.0)
    w = np.random.default_rng(seed).uniform(0.05, 1.0, len(ms))
    a = solve_wls(ms, w)
    b = solve_wls(ms, k * w)
    assert np.linalg.norm(a.position - b.position) < 1e-9


def test_batch_matches_single():
    ms, _ = _scene(13, 6, 3, noise_std=5.0)
    rng = np.random.default_rng(0)
    W = rng.uniform(0.0, 1.0, (20, len(ms)))
    W[0] = 1.0
    W[1, 6:] = 0.0  # GPS only
    W[2, :7] = 0.0  # too few
    batch = solve_wls_batch(ms, W)
    for s in range(20):
        try:
            one = solve_wls(ms, W[s])
        except InsufficientMeasurementsError:
            assert not batch.valid[s]
            continue
        assert batch.valid[s]
        assert np.linalg.norm(batch.positions[s] - one.position) < 1e-9


# ------------------------------------------------------------------ GDOP


def test_gdop_identity():
    assert abs(gdop(np.eye(4)) - 2.0) < 1e-15
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(5, 5)))
    assert abs(gdop(Q) - np.sqrt(5.0)) < 1e-12


def test_gdop_scaling():
    ms, rx = _scene(14, 8)
    H, _ = build_geometry(ms, StateVector(rx))
    assert abs(gdop(2 * H) - gdop(H) / 2) < 1e-12


def test_gdop_oracle():
    ms, rx = _scene(15, 8)
    H, _ = build_geometry(ms, StateVector(rx))
    want = np.sqrt(np.trace(cofactor_inverse(H.T @ H)))
    assert abs(gdop(H) - want) <= 1e-9 * want


def test_gdop_singular():
    with pytest.raises(SingularGeometryError):
        gdop(np.ones((5, 4)))
