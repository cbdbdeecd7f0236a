import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnss_mlwls.evaluation import (
    EvalReport,
    EvalRow,
    ReportConsistencyError,
    availability,
    error_3d,
    errors_3d,
    improvement_fraction,
    remaining_gap_fraction,
    rmse_3d,
)
from gnss_mlwls.geodesy import GeodeticPosition, enu_rotation, geodetic_to_ecef

HK = geodetic_to_ecef(GeodeticPosition(22.3, 114.2, 30.0))


def test_error_examples():
    R = enu_rotation(HK)
    assert error_3d(HK, HK) == 0.0
    assert abs(error_3d(HK + 3.0 * R[0], HK) - 3.0) < 1e-9
    assert abs(error_3d(HK + R.T @ [3.0, 4.0, 0.0], HK) - 5.0) < 1e-9
    with pytest.raises(ValueError):
        error_3d([np.nan, 0, 0], HK)


@given(st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=3))
def test_error_equals_chord(d):
    est = HK + np.array(d)
    chord = np.linalg.norm(est - HK)
    assert abs(error_3d(est, HK) - chord) <= 1e-9 * max(chord, 1e-6)
    assert abs(errors_3d(est[None, :], HK)[0] - chord) <= 1e-9 * max(chord, 1e-6)


def test_rmse_examples():
    assert abs(rmse_3d([3, 4]) - 3.5355339059327378) < 1e-12
    assert rmse_3d([2.5] * 7) == 2.5
    with pytest.raises(ValueError):
        rmse_3d([])


def test_rmse_two_pass_oracle():
    e = np.random.default_rng(0).exponential(20.0, 1000)
    acc = 0.0
    for v in e:
        acc += v * v
    want = math.sqrt(acc / len(e))
    assert abs(rmse_3d(e) - want) <= 1e-12 * want


@given(st.lists(st.floats(0.0, 1e6), min_size=1, max_size=50))
def test_rmse_bounds(e):
    r = rmse_3d(e)
    m = max(e)
    assert m / math.sqrt(len(e)) * (1 - 1e-12) <= r <= m * (1 + 1e-12)


def test_availability_examples():
    a = availability([True] * 5)
    assert a.fraction == 1.0 and a.gaps == ()
    a = availability([True, False] * 4)
    assert a.fraction == 0.5 and set(a.gaps) == {1}
    stream = [True] * 10 + [False] * 12 + [True] * 8
    a = availability(stream)
    assert 12 in a.gaps and a.gap_starts == (10,)


def test_improvement_examples():
    assert improvement_fraction(192, 100, 100) == 100.0
    assert improvement_fraction(192, 192, 100) == 0.0
    assert improvement_fraction(192, 146, 100) == 50.0
    assert abs(remaining_gap_fraction(192, 146, 100) - 50.0) < 1e-12
    with pytest.raises(ValueError):
        improvement_fraction(100, 90, 100)


def _report():
    rep = EvalReport(meta={"split": "test"})
    for k in range(6):
        rep.add(EvalRow(float(k), "constant", 10.0 + k, 8, True))
        rep.add(EvalRow(float(k), "sigmoid", 5.0 + k, 8, k != 2, fallback=k == 4))
    return rep.finalize()


def test_report_summaries_and_roundtrip(tmp_path):
    rep = _report()
    assert rep.methods == ["constant", "sigmoid"]
    s = rep.summaries["sigmoid"]
    assert s.solved_count == 5 and s.epoch_count == 6 and s.fallback_count == 1
    assert abs(s.rmse_3d_m - rmse_3d([5, 6, 8, 9, 10])) < 1e-12
    assert s.gaps == (1,)
    rep.write(tmp_path / "rows.csv", tmp_path / "summary.json")
    back = EvalReport.read_rows(tmp_path / "rows.csv")
    for m in rep.methods:
        assert back.rmse(m) == rep.rmse(m)
    assert "improv_%" in rep.comparison_table(best="sigmoid")


def test_tampered_summary_detected():
    rep = _report()
    s = rep.summaries["constant"]
    rep.summaries["constant"] = type(s)(**{**s.__dict__, "rmse_3d_m": s.rmse_3d_m * (1 + 1e-6)})
    with pytest.raises(ReportConsistencyError):
        rep.check_consistency()


def test_solved_row_needs_error():
    with pytest.raises(ValueError):
        EvalReport().add(EvalRow(0.0, "x", math.nan, 5, True))
