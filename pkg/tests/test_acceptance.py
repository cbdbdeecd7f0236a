"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary."""

import json
import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from gnss_mlwls import cli
from gnss_mlwls.activation import ActivationSpec, apply_activation
from gnss_mlwls.ensemble import (
    AdaBoostConfig,
    BoostingConfig,
    fit_adaboost,
    fit_gradient_boosting,
    fit_model,
    initial_log_odds,
)
from gnss_mlwls.ingest import RinexParseError, parse_rinex_nav, parse_rinex_obs
from gnss_mlwls.labeling import best_subset
from gnss_mlwls.measurements import Constellation, Measurement, MeasurementSet, SignalObservation
from gnss_mlwls.solver import solve_ols, solve_wls
from gnss_mlwls.synthetic import UrbanScenario, random_scene, write_dataset
from subset_oracle import brute_force

G, B = Constellation.GPS, Constellation.BEIDOU
DATA = Path(__file__).parent / "data"


# ------------------------------------------------------------------ 1. solver oracle equivalence


def test_1_solver_oracle_equivalence(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_ols = worst_dup = 0.0
    for _ in range(100):
        n_gps, n_bds = int(rng.integers(4, 9)), int(rng.integers(0, 5))
        ms, _ = random_scene(rng, n_gps, n_bds, noise_std=5.0)
        ols = solve_ols(ms)
        worst_ols = max(worst_ols, float(np.linalg.norm(solve_wls(ms, np.ones(len(ms))).position - ols.position)))
        k = int(rng.integers(len(ms)))
        w = np.ones(len(ms))
        w[k] = 2.0
        m = list(ms)[k]
        twin = Measurement(SignalObservation(m.signal.constellation, 40, m.signal.pseudorange), m.state)
        dup = solve_ols(MeasurementSet(list(ms) + [twin], ms.time))
        worst_dup = max(worst_dup, float(np.linalg.norm(solve_wls(ms, w).position - dup.position)))
    dt = time.perf_counter() - t0
    ok = worst_ols < 1e-9 and worst_dup < 1e-9 and dt < 1.0
    acceptance.check(1, ok, f"unit-weight vs OLS {worst_ols:.2e} m, weight-2 vs duplicate {worst_dup:.2e} m "
                            f"(< 1e-9), runtime {dt:.2f} s (< 1 s)")


# ------------------------------------------------------------------ 2. noise-free recovery


def test_2_noise_free_recovery(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst_pos = worst_clk = 0.0
    for _ in range(50):
        ms, rx = random_scene(rng, 5, 3, clock_gps=1e5, clock_bds=7e4)
        sol = solve_ols(ms)
        worst_pos = max(worst_pos, float(np.linalg.norm(sol.position - rx)))
        worst_clk = max(worst_clk, abs(sol.state.clock_offsets[G] - 1e5), abs(sol.state.clock_offsets[B] - 7e4))
    dt = time.perf_counter() - t0
    ok = worst_pos < 1e-3 and worst_clk < 1e-3 and dt < 1.0
    acceptance.check(2, ok, f"50 scenes of 5 GPS + 3 BeiDou: position {worst_pos:.2e} m, clocks {worst_clk:.2e} m "
                            f"(< 1e-3), runtime {dt:.2f} s (< 1 s)")


# ------------------------------------------------------------------ 3. labeling oracle


def _biased_epochs(rng, n_epochs, mixed):
    for _ in range(n_epochs):
        n = int(rng.integers(5, 11))
        n_bds = int(rng.integers(0, min(4, n - 4) + 1)) if mixed else 0
        bias = np.zeros(n)
        j = int(rng.integers(n))
        bias[j] = 200.0
        ms, rx = random_scene(rng, n - n_bds, n_bds, biases=bias, noise_std=1.0)
        yield ms, rx, ms.keys[j]


def _label_rates(rng, n_epochs, mixed):
    excluded = reproduced = 0
    for ms, rx, biased in _biased_epochs(rng, n_epochs, mixed):
        best = best_subset(ms, rx)
        excluded += biased not in best.subset
        _, _, keys = brute_force(ms, rx)
        reproduced += keys is not None and set(keys) == set(best.subset)
    return excluded, reproduced


def test_3_labeling_oracle(acceptance):
    n = 200
    excluded, reproduced = _label_rates(np.random.default_rng(303), n, mixed=False)
    # with two constellations a biased signal left alone in its constellation is absorbed by that clock
    # and ties with the subset that drops it, so this rate is reported but not gated
    mixed_excluded, mixed_reproduced = _label_rates(np.random.default_rng(304), n, mixed=True)
    ok = excluded >= 0.95 * n and reproduced == n and mixed_reproduced == n
    acceptance.check(3, ok, f"single constellation: biased signal labelled 0 in {excluded}/{n} epochs (>= 95%), "
                            f"re-enumeration agrees in {reproduced}/{n} (100%); mixed GPS+BeiDou: labelled 0 in "
                            f"{mixed_excluded}/{n} (reported), re-enumeration agrees in {mixed_reproduced}/{n} (100%)")


# ------------------------------------------------------------------ 4. ML formula anchors


def _separable(n, seed):
    """Six-feature set split by a hyperplane, with a 0.5 margin on either side."""
    rng = np.random.default_rng(seed)
    beta = np.array([1.0, 0.8, -0.6, 0.5, -0.4, 0.3])
    beta /= np.linalg.norm(beta)
    rows = []
    while sum(len(r) for r in rows) < n:
        Z = rng.normal(size=(4 * n, 6))
        rows.append(Z[np.abs(Z @ beta) > 0.5])
    X = np.vstack(rows)[:n]
    return X, (X @ beta > 0).astype(int)


def test_4_ml_formula_anchors(acceptance):
    t0 = time.perf_counter()
    phi0 = initial_log_odds([1] * 9 + [0])
    X = np.arange(10.0)[:, None]
    y = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 0])
    ada = fit_adaboost(X, y, AdaBoostConfig(n_learners=1, learning_rate=1.0))
    alpha = ada.alphas[0] if ada.alphas else math.nan

    Xg, yg = _separable(400, 7)
    yg = np.where(np.random.default_rng(8).random(len(yg)) < 0.1, 1 - yg, yg)  # label noise keeps the loss moving
    gb = fit_gradient_boosting(Xg, yg, BoostingConfig(n_iter=100, learning_rate=0.1, tree_depth=3))
    p0 = 1.0 / (1.0 + math.exp(-gb.init_score))
    loss0 = -float(np.mean(yg * math.log(p0) + (1 - yg) * math.log(1 - p0)))
    loss = np.array([loss0] + list(gb.train_loss))
    rise = float(np.max(np.diff(loss))) if len(loss) > 1 else 0.0

    Xs, ys = _separable(2000, 0)
    Xh, yh = _separable(2000, 1)
    acc, held = {}, {}
    for kind in ("random_forest", "adaboost", "gradient_boosting"):
        m = fit_model(kind, Xs, ys)
        acc[kind] = float(np.mean((m.predict_score(Xs) >= 0.5) == ys))
        held[kind] = float(np.mean((m.predict_score(Xh) >= 0.5) == yh))
    dt = time.perf_counter() - t0

    ok = (abs(phi0 - math.log(9.0)) < 1e-12 and abs(alpha - math.log(9.0)) < 1e-12 and rise <= 1e-12
          and len(loss) == 101 and min(acc.values()) >= 0.95 and dt < 30.0)
    accs = ", ".join(f"{k} {acc[k]:.4f} (held-out {held[k]:.4f})" for k in acc)
    acceptance.check(4, ok, f"phi0 - log 9 = {phi0 - math.log(9.0):.1e}, alpha - log 9 = {alpha - math.log(9.0):.1e}, "
                            f"max GB loss step {rise:.1e} over {len(loss) - 1} iterations, accuracy {accs} "
                            f"(>= 0.95), runtime {dt:.1f} s (< 30 s)")


# ------------------------------------------------------------------ 5. activation properties


def test_5_activation_properties(acceptance):
    rng = np.random.default_rng(505)
    step_gap = 0.0
    for _ in range(2000):
        a, s = rng.random(2)
        if abs(s - a) < 1e-4:
            continue
        w = apply_activation([s], ActivationSpec("sigmoid", b=1e6, a=a)).weights[0]
        step_gap = max(step_gap, abs(w - float(s >= a)))

    relu_ok = True
    for _ in range(500):
        s = rng.random(int(rng.integers(2, 15)))
        w = apply_activation(s, ActivationSpec("relu")).weights
        relu_ok &= bool(w[np.argmin(s)] == 0.0 and np.sum(w == 0.0) == 1)

    crafted = np.array([0.9, 0.8, 0.5, 0.48, 0.3, 0.1])  # mean passes 2, one 0.05 step passes 4
    lowered = apply_activation(crafted, ActivationSpec("unit_step"), solvability_min=4)
    lower_ok = abs(lowered.threshold - (crafted.mean() - 0.05)) < 1e-12 and lowered.weights.sum() == 4
    starved = apply_activation([0.2, 0.9], ActivationSpec("unit_step"), solvability_min=4)
    fallback_ok = starved.fallback and bool(np.all(starved.weights == 1.0))

    worst = 0.0
    for _ in range(100):
        ms, _ = random_scene(rng, int(rng.integers(5, 9)), int(rng.integers(0, 4)), noise_std=5.0)
        w = apply_activation(rng.random(len(ms)), ActivationSpec("constant")).weights
        worst = max(worst, float(np.linalg.norm(solve_wls(ms, w).position - solve_ols(ms).position)))

    ok = step_gap < 1e-6 and relu_ok and lower_ok and fallback_ok and worst < 1e-9
    acceptance.check(5, ok, f"sigmoid b=1e6 vs step {step_gap:.1e} (< 1e-6), relu single zero at minimum {relu_ok}, "
                            f"unit-step lowering {lower_ok} and all-ones fallback {fallback_ok}, "
                            f"constant vs OLS {worst:.1e} m (< 1e-9)")


# ------------------------------------------------------------------ 6. closed-loop desk-scale reproduction


def test_6_closed_loop_sigmoid_beats_baseline(acceptance, tmp_path):
    t0 = time.perf_counter()
    data = tmp_path / "data"
    write_dataset(data, UrbanScenario(n_epochs=1000, blockage_prob=0.6), seed=1, prefix="train_")
    write_dataset(data, UrbanScenario(n_epochs=500, blockage_prob=0.6, start_offset_s=30000), seed=2, prefix="test_")
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(yaml.safe_dump({
        "output_dir": "out",
        "seed": 0,
        "train": {"canonical": "data/train_epochs.csv", "truth": "data/train_truth.csv", "truth_format": "csv_ecef"},
        "test": {"canonical": "data/test_epochs.csv", "truth": "data/test_truth.csv", "truth_format": "csv_ecef"},
    }))
    code = cli.main(["run", "--config", str(cfg)])
    dt = time.perf_counter() - t0
    assert code == 0
    out = tmp_path / "out"
    b_star = json.loads((out / "sweep_result.json").read_text())["b_star"]
    methods = json.loads((out / "position_summary.json").read_text())["methods"]
    const = methods["constant"]["rmse_3d_m"]
    sig = methods[f"sigmoid_b{b_star:g}"]["rmse_3d_m"]
    relu = methods["relu"]["rmse_3d_m"]
    ok = sig <= 0.6 * const and sig <= relu and dt < 300.0
    acceptance.check(6, ok, f"constant {const:.3f} m, sigmoid b*={b_star:g} {sig:.3f} m (ratio {sig / const:.3f} <= 0.6), "
                            f"relu {relu:.3f} m (sigmoid <= relu), runtime {dt:.0f} s (< 300 s)")


# ------------------------------------------------------------------ 7. public-dataset anchors (optional)

URBANNAV = os.environ.get("GNSS_MLWLS_URBANNAV")

# RMSE anchors in meters at the reported b, plus per-constellation (train, test) accuracies
ANCHORS = {
    "hk_gps_adaboost": {"constant": 192.0, "sigmoid": (164.803, 108),
                        "accuracy": {"GPS": (0.7603, 0.7669), "BeiDou": (0.7133, 0.7043)}},
    "hk_gps_random_forest": {"sigmoid": (167.627, 27),
                             "accuracy": {"GPS": (0.8308, 0.7442), "BeiDou": (0.7595, 0.7020)}},
    "hk_gps_gradient_boosting": {"accuracy": {"GPS": (0.8086, 0.7263), "BeiDou": (0.7446, 0.6750)}},
    "tokyo_odaiba": {"sigmoid": (125.586, 47), "accuracy": {"GPS": (0.7910, 0.6999), "BeiDou": (0.7551, 0.6596)}},
    "tokyo_hk": {"sigmoid": (123.1257, 57), "accuracy": {"GPS": (0.7603, 0.7424), "BeiDou": (0.7133, 0.7291)}},
}


@pytest.mark.skipif(not URBANNAV, reason="set GNSS_MLWLS_URBANNAV to a directory of per-anchor configs")
@pytest.mark.parametrize("anchor", sorted(ANCHORS))
def test_7_public_dataset_anchors(acceptance, anchor):
    cfg = Path(URBANNAV) / f"{anchor}.yaml"
    if not cfg.exists():
        pytest.skip(f"no {cfg.name} in {URBANNAV}")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    doc = yaml.safe_load(cfg.read_text()) or {}
    out = cfg.parent / doc.get("output_dir", "out")
    methods = json.loads((out / "position_summary.json").read_text())["methods"]
    sweep = json.loads((out / "sweep_result.json").read_text())
    report = json.loads((out / "train_report.json").read_text())["constellations"]

    want = ANCHORS[anchor]
    diffs, ok = [], True
    if "constant" in want:
        got = methods["constant"]["rmse_3d_m"]
        good = abs(got - want["constant"]) <= 0.15 * want["constant"]
        ok &= good
        diffs.append(f"constant {got:.3f} vs {want['constant']:.3f} m {'ok' if good else 'OUT'}")
    if "sigmoid" in want:
        ref, ref_b = want["sigmoid"]
        got = sweep["rmse_3d_m"]
        good = abs(got - ref) <= 0.15 * ref
        ok &= good
        diffs.append(f"sigmoid {got:.3f} m at b={sweep['b_star']:g} vs {ref} m at b={ref_b} {'ok' if good else 'OUT'}")
    for const, (tr, te) in want["accuracy"].items():
        if const not in report:
            continue
        got_tr, got_te = report[const]["train_accuracy"], report[const]["test_accuracy"]
        good = abs(got_tr - tr) <= 0.05 and abs(got_te - te) <= 0.05
        ok &= good
        diffs.append(f"{const} accuracy {got_tr:.4f}/{got_te:.4f} vs {tr}/{te} {'ok' if good else 'OUT'}")
    acceptance.check(7, ok, f"{anchor}: " + "; ".join(diffs))


# ------------------------------------------------------------------ 8. parser robustness

FIXTURES = ["obs_gps_2x3.rnx", "obs_bdt.rnx", "obs_truncated.rnx", "obs_galileo.rnx", "nav_mixed.rnx", "nav_gps_e.rnx"]


def _parser(name):
    return parse_rinex_nav if name.startswith("nav") else parse_rinex_obs


def _values(name, parsed):
    if name.startswith("nav"):
        return {(e.constellation, e.svid, e.toe): e for e in parsed}
    return {(e.time, s.key): (s.pseudorange, s.doppler, s.cn0) for e in parsed for s in e.signals}


def _structural(rng, t):
    lines = t.split("\n")
    op = rng.randrange(7)
    if op == 0:
        i = rng.randrange(len(t))
        return t[:i] + chr(rng.randrange(32, 127)) + t[i + 1:]
    if op == 1:
        i = rng.randrange(len(t))
        return t[:i] + t[i + 1:]
    if op == 2:
        i = rng.randrange(len(t))
        return t[:i] + chr(rng.randrange(32, 127)) + t[i:]
    if op == 3:
        del lines[rng.randrange(len(lines))]
        return "\n".join(lines)
    if op == 4:
        i = rng.randrange(len(lines))
        lines.insert(i, lines[i])
        return "\n".join(lines)
    if op == 5:
        i, j = rng.randrange(len(lines)), rng.randrange(len(lines))
        lines[i], lines[j] = lines[j], lines[i]
        return "\n".join(lines)
    return t[:rng.randrange(len(t))]


def test_8_rinex_fuzzing(acceptance):
    rng = random.Random(808)
    texts = {n: (DATA / n).read_text() for n in FIXTURES}
    crashes, silent, structured, total = [], 0, 0, 0

    # structural mutations: anything may happen except an unstructured exception
    for _ in range(5000):
        name = rng.choice(FIXTURES)
        t = texts[name]
        for _ in range(rng.randint(1, 3)):
            t = _structural(rng, t) if len(t) > 1 else t + "x"
        total += 1
        try:
            _parser(name)(t.encode())
        except RinexParseError:
            structured += 1
        except Exception as e:  # noqa: BLE001
            crashes.append(f"{name}: {type(e).__name__}: {e}")

    # numeric-field corruption: a digit becomes an invalid character, so any accepted value must be untouched
    bodies = {}
    for name, t in texts.items():
        try:
            base = _values(name, _parser(name)(t.encode()))
        except RinexParseError:
            continue
        start = t.index("\n", t.index("END OF HEADER")) + 1
        bodies[name] = (base, [i for i in range(start, len(t)) if t[i].isdigit()])
    names = sorted(bodies)
    for _ in range(5000):
        name = rng.choice(names)
        base, digits = bodies[name]
        t = texts[name]
        i = rng.choice(digits)
        t = t[:i] + rng.choice("XOI#*/?") + t[i + 1:]
        total += 1
        try:
            got = _values(name, _parser(name)(t.encode()))
        except RinexParseError:
            structured += 1
            continue
        except Exception as e:  # noqa: BLE001
            crashes.append(f"{name}: {type(e).__name__}: {e}")
            continue
        silent += any(k not in base or base[k] != v for k, v in got.items())

    ok = total >= 10_000 and not crashes and silent == 0
    acceptance.check(8, ok, f"{total} mutated fixtures, {structured} structured errors, {len(crashes)} crashes, "
                            f"{silent} silently changed values" + (f"; first crash {crashes[0]}" if crashes else ""))
