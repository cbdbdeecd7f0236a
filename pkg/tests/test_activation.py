import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnss_mlwls.activation import (
    Activation,
    ActivationConfigError,
    ActivationSpec,
    apply_activation,
    rmse_for_spec,
    sweep_sigmoid_b,
    weighted_fix,
)
from gnss_mlwls.solver import solve_ols, solve_wls
from gnss_mlwls.synthetic import random_scene

scores_st = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20)
ALL = [ActivationSpec(k, b=25.0) for k in Activation]


def _w(scores, kind, **kw):
    return apply_activation(scores, ActivationSpec(kind, **kw)).weights


# ------------------------------------------------------------------ examples


def test_constant_and_linear():
    s = [0.2, 0.7, 0.9]
    np.testing.assert_array_equal(_w(s, "constant"), [1, 1, 1])
    np.testing.assert_array_equal(_w(s, "linear"), s)


def test_unit_step_mean_threshold():
    r = apply_activation([0.6, 0.4], ActivationSpec("unit_step"), solvability_min=1)
    np.testing.assert_array_equal(r.weights, [1, 0])
    assert r.threshold == 0.5 and not r.fallback


def test_unit_step_lowers_threshold():
    s = np.array([0.9, 0.8, 0.5, 0.48, 0.3, 0.1])  # mean 0.5133
    r = apply_activation(s, ActivationSpec("unit_step"), solvability_min=4)
    # 0.5133 passes 2, 0.4633 passes 4
    assert abs(r.threshold - (s.mean() - 0.05)) < 1e-12
    np.testing.assert_array_equal(r.weights, [1, 1, 1, 1, 0, 0])


def test_unit_step_all_ones_fallback():
    r = apply_activation([0.2, 0.9], ActivationSpec("unit_step"), solvability_min=4)
    assert r.fallback and np.all(r.weights == 1.0)


def test_relu_examples():
    w = _w([0.4, 0.7, 1.0], "relu")
    np.testing.assert_allclose(w, [0.0, 0.5, 1.0], atol=1e-15)
    np.testing.assert_array_equal(_w([1.0, 1.0], "relu"), [1.0, 1.0])


def test_sigmoid_examples():
    r = apply_activation([0.45, 0.55], ActivationSpec("sigmoid", b=100.0))
    assert r.threshold == 0.5
    assert abs(r.weights[1] - 0.9933071490757153) < 1e-12
    assert abs(_w([0.3, 0.3], "sigmoid", b=7.0)[0] - 0.5) < 1e-15


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_sigmoid_needs_positive_b(bad):
    with pytest.raises(ActivationConfigError):
        ActivationSpec("sigmoid", b=bad)


def test_bad_inputs():
    with pytest.raises(ActivationConfigError):
        ActivationSpec("tanh")
    with pytest.raises(ValueError):
        apply_activation([], ActivationSpec())
    with pytest.raises(ValueError):
        apply_activation([1.2], ActivationSpec())


# ------------------------------------------------------------------ properties


@given(scores_st, st.sampled_from(ALL))
def test_weights_in_unit_interval(s, spec):
    w = apply_activation(s, spec, solvability_min=1).weights
    assert w.shape == (len(s),)
    assert np.all((w >= 0) & (w <= 1))


@given(scores_st, st.sampled_from(["relu", "sigmoid"]), st.floats(0.5, 500.0))
def test_monotone(s, kind, b):
    s = np.array(s)
    w = _w(s, kind, b=b)
    order = np.argsort(s, kind="stable")
    assert np.all(np.diff(w[order]) >= -1e-15)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20, unique=True))
def test_relu_single_zero(s):
    w = _w(s, "relu")
    assert np.sum(w == 0.0) == 1


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_sigmoid_step_limit(a, s):
    if abs(s - a) <= 1e-4:
        return
    w = apply_activation([s], ActivationSpec("sigmoid", b=1e6, a=a)).weights[0]
    assert abs(w - float(s >= a)) < 1e-6


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_constant_weights_reproduce_ols(seed):
    ms, _ = random_scene(np.random.default_rng(seed), 6, 3, noise_std=5.0)
    w = _w(np.random.default_rng(seed).random(len(ms)), "constant")
    assert np.linalg.norm(solve_wls(ms, w).position - solve_ols(ms).position) < 1e-9


# ------------------------------------------------------------------ weighted fix and sweep


def _biased_stream(n_epochs=6, seed=0):
    rng = np.random.default_rng(seed)
    scores, sets, truths = [], [], []
    for _ in range(n_epochs):
        bias = np.zeros(8)
        bias[rng.integers(8)] = 200.0
        ms, rx = random_scene(rng, 8, 0, biases=bias, noise_std=1.0)
        s = np.where(bias > 0, 0.1, rng.uniform(0.7, 0.95, 8))
        scores.append(s)
        sets.append(ms)
        truths.append(rx)
    return scores, sets, truths


def test_weighted_fix_falls_back_when_unsolvable():
    ms, _ = random_scene(np.random.default_rng(1), 5, 0)
    fix = weighted_fix(ms, [0.9, 0.9, 0.8, 0.7, 0.1], ActivationSpec("unit_step"))
    assert fix.solved and not fix.fallback and fix.weights.sum() == 4
    ms4, _ = random_scene(np.random.default_rng(2), 4, 0)
    fix = weighted_fix(ms4, [0.0, 0.0, 0.0, 0.0], ActivationSpec("relu"))
    assert fix.solved and fix.fallback and np.all(fix.weights == 1)


def test_sweep_prefers_steep_when_bias_scored_low():
    s, m, t = _biased_stream()
    res = sweep_sigmoid_b(s, m, t, [1, 200])
    assert res.curve[1].rmse_3d_m < res.curve[0].rmse_3d_m
    assert res.b_star == 200.0


def test_sweep_matches_per_b_solves():
    s, m, t = _biased_stream(4, seed=3)
    grid = [1, 5, 40, 120]
    res = sweep_sigmoid_b(s, m, t, grid)
    for p in res.curve:
        rmse, used, _ = rmse_for_spec(s, m, t, ActivationSpec("sigmoid", b=p.b))
        assert abs(p.rmse_3d_m - rmse) < 1e-6 and p.epochs_used == used


def test_sweep_singleton_and_shape():
    s, m, t = _biased_stream(3)
    assert sweep_sigmoid_b(s, m, t, [37]).b_star == 37.0
    res = sweep_sigmoid_b(s, m, t, range(1, 11))
    assert len(res.curve) == 10 and all(p.rmse_3d_m >= 0 for p in res.curve)
    rows = res.to_csv().splitlines()
    assert rows[0] == "b,rmse_3d_m,epochs_used,fallback_count" and len(rows) == 11


def test_sweep_ties_pick_smallest_b():
    ms, rx = random_scene(np.random.default_rng(4), 6, 0)
    # equal scores give equal weights for every b, so the curve is flat
    res = sweep_sigmoid_b([np.full(6, 0.5)], [ms], [rx], [9, 3, 5])
    assert res.b_star == 3.0


def test_sweep_errors():
    s, m, t = _biased_stream(1)
    with pytest.raises(ValueError):
        sweep_sigmoid_b(s, m, t, [])
    with pytest.raises(ActivationConfigError):
        sweep_sigmoid_b(s, m, t, [0])
    with pytest.raises(ValueError):
        sweep_sigmoid_b(s, m, t[:0], [1])
