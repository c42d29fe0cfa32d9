import json
import math
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftlab.errors import EmptySeries
from driftlab.metrics import (
    BoxStats,
    DriftReport,
    MonthResult,
    error_temperature_scatter,
    evaluate_month,
    fleet_aggregate,
    monthly_distribution_summary,
    monthly_drift_eval,
    rmse,
)
from driftlab.model import EvalConfig, MonthKey, SensorSeries
from driftlab.sensor import PassthroughEstimator

PASS = PassthroughEstimator()
JAN = int(datetime(2018, 1, 1, tzinfo=timezone.utc).timestamp())


def co2_series(temperature, reference, sensor, start=JAN, step=600, sensor_id="s"):
    n = len(reference)
    return SensorSeries(sensor_id, start + step * np.arange(n), temperature, reference, sensor_co2=sensor)


def test_rmse_examples():
    s = co2_series([1.0, 2.0], [400.0, 410.0], [400.0, 410.0])
    assert rmse(s, PASS) == 0.0
    s = co2_series([1.0, 2.0], [400.0, 410.0], [403.0, 414.0])
    assert rmse(s, PASS) == pytest.approx(math.sqrt(12.5), rel=1e-15)
    with pytest.raises(EmptySeries):
        rmse(co2_series([], [], []), PASS)


def test_rmse_against_naive_loop():
    rng = np.random.default_rng(0)
    ref = rng.uniform(380, 600, 1000)
    sensor = ref + rng.normal(3, 15, 1000)
    s = co2_series(np.zeros(1000), ref, sensor)
    total = 0.0
    for a, b in zip(sensor.tolist(), ref.tolist()):
        total += (a - b) ** 2
    assert rmse(s, PASS) == pytest.approx(math.sqrt(total / 1000), rel=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=50), st.floats(0, 10), st.randoms(use_true_random=False))
def test_rmse_permutation_and_scale(errors, c, rnd):
    err = np.asarray(errors)
    n = len(err)
    base = rmse(co2_series(np.zeros(n), np.full(n, 500.0), 500.0 + err), PASS)
    perm = errors[:]
    rnd.shuffle(perm)
    assert rmse(co2_series(np.zeros(n), np.full(n, 500.0), 500.0 + np.asarray(perm)), PASS) == pytest.approx(base)
    scaled = rmse(co2_series(np.zeros(n), np.full(n, 500.0), 500.0 + c * err), PASS)
    assert scaled == pytest.approx(c * base, rel=1e-9, abs=1e-9)


def month_of(rng, n, temp, ref, err_fn, start=JAN, sensor_id="s"):
    t = temp(rng, n)
    y = ref(rng, n)
    return co2_series(t, y, y + err_fn(rng, t, y), start=start, step=(28 * 86400) // n, sensor_id=sensor_id)


CFG = EvalConfig(rng_seed=5)


def test_perfect_sensor_zero_rmse():
    rng = np.random.default_rng(0)
    s = month_of(rng, 3000, lambda r, n: r.uniform(-5, 25, n), lambda r, n: r.uniform(390, 520, n),
                 lambda r, t, y: np.zeros_like(t))
    (res,) = monthly_drift_eval(s, CFG, PASS)
    assert res.rmse_original == 0.0 and res.rmse_resampled == 0.0
    assert res.n_resampled == 500 and len(res.source_index) == 500


def _spread(month: MonthKey, s, n_seeds=50):
    vals = [evaluate_month(month, s, CFG, PASS, seed=k).rmse_resampled for k in range(n_seeds)]
    return np.std(vals, ddof=1)


def test_environment_already_desired():
    rng = np.random.default_rng(1)
    s = month_of(rng, 4000, lambda r, n: r.uniform(0, 20, n), lambda r, n: r.uniform(400, 500, n),
                 lambda r, t, y: r.normal(0, 5 + 0.5 * t))
    (res,) = monthly_drift_eval(s, CFG, PASS)
    assert abs(res.rmse_original - res.rmse_resampled) < 3 * _spread(res.month, s)


def test_winter_month_original_exceeds_resampled():
    rng = np.random.default_rng(2)
    s = month_of(rng, 4000, lambda r, n: r.uniform(-10, 5, n), lambda r, n: r.uniform(400, 500, n),
                 lambda r, t, y: r.normal(0, 3, len(t)) + np.where(t < 0, -4.0 * t, 0.0))
    (res,) = monthly_drift_eval(s, CFG, PASS)
    # direct computation: cold errors dominate the original month only
    err = s.sensor_co2 - s.reference_co2
    in_band = (s.temperature >= 0)
    assert np.sqrt(np.mean(err**2)) > np.sqrt(np.mean(err[in_band] ** 2))
    assert res.rmse_original > res.rmse_resampled
    assert res.rmse_difference > 0


def test_null_case_iid_errors():
    rng = np.random.default_rng(3)
    s = month_of(rng, 4000, lambda r, n: r.normal(5, 10, n), lambda r, n: r.normal(440, 40, n),
                 lambda r, t, y: r.normal(0, 8, len(t)))
    (res,) = monthly_drift_eval(s, CFG, PASS)
    assert abs(res.rmse_original - res.rmse_resampled) < 3 * _spread(res.month, s)


def test_gap_month():
    rng = np.random.default_rng(4)
    s = month_of(rng, 500, lambda r, n: r.uniform(25, 30, n), lambda r, n: r.uniform(400, 500, n),
                 lambda r, t, y: np.zeros_like(t))
    (res,) = monthly_drift_eval(s, CFG, PASS)
    assert res.status == "gap" and res.rmse_resampled is None and res.rmse_difference is None


def test_month_seed_independent_of_other_sensors():
    mk = lambda sid: month_of(np.random.default_rng(6), 2000, lambda r, n: r.uniform(-5, 25, n),  # noqa: E731
                              lambda r, n: r.uniform(390, 520, n), lambda r, t, y: r.normal(0, 5, len(t)),
                              sensor_id=sid)
    a = monthly_drift_eval(mk("a"), CFG, PASS)[0]
    a2 = monthly_drift_eval(mk("a"), CFG, PASS)[0]
    b = monthly_drift_eval(mk("b"), CFG, PASS)[0]
    assert a.source_index == a2.source_index and a.source_index != b.source_index


def _result(month, orig, res):
    return MonthResult(month=month, n_original=10, rmse_original=orig, rmse_resampled=res, n_resampled=5,
                       ess=50.0, coverage=1.0, low_confidence=False)


M = MonthKey(2018, 1)


def test_fleet_single_sensor():
    f = fleet_aggregate({"a": [_result(M, 12.0, 10.0)]})
    (m,) = f.months
    assert m.std_rmse_resampled == 0.0 and m.mean_rmse_resampled == 10.0
    b = m.difference_box
    assert b.median == b.q1 == b.q3 == b.whisker_low == b.whisker_high == 2.0
    assert f.mean_max_abs_difference == 2.0


def test_fleet_two_sensors_closed_form():
    f = fleet_aggregate({"a": [_result(M, 20.0, 10.0)], "b": [_result(M, 60.0, 30.0)]})
    (m,) = f.months
    assert m.mean_rmse_resampled == 20.0 and m.std_rmse_resampled == 10.0
    f = fleet_aggregate({"a": [_result(M, 30.0, 20.0)], "b": [_result(M, 60.0, 30.0)]})
    assert f.months[0].difference_box.median == 20.0  # differences 10 and 30


def test_fleet_twelve_sensors_oracle():
    rng = np.random.default_rng(9)
    months = [MonthKey.from_index(MonthKey(2017, 3).index + k) for k in range(24)]
    reports = {}
    for sid in range(12):
        rs = []
        for m in months:
            if rng.random() < 0.1:
                rs.append(MonthResult(m, 10, float(rng.uniform(5, 50)), status="gap"))
            else:
                rs.append(_result(m, float(rng.uniform(5, 50)), float(rng.uniform(5, 50))))
        reports[f"s{sid}"] = rs
    f = fleet_aggregate(reports)
    # independent pass over the raw values
    maxes = []
    for rs in reports.values():
        d = [abs(r.rmse_original - r.rmse_resampled) for r in rs if r.status == "ok"]
        maxes.append(max(d))
    assert f.mean_max_abs_difference == pytest.approx(sum(maxes) / len(maxes), rel=1e-12)
    for fm in f.months:
        vals = [r.rmse_resampled for rs in reports.values() for r in rs if r.month == fm.month and r.status == "ok"]
        mu = sum(vals) / len(vals)
        assert fm.mean_rmse_resampled == pytest.approx(mu, rel=1e-12)
        assert fm.std_rmse_resampled == pytest.approx(math.sqrt(sum((v - mu) ** 2 for v in vals) / len(vals)), rel=1e-9)


def test_box_stats_tukey():
    b = BoxStats.from_values([1, 2, 3, 4, 5, 6, 7, 8, 100])
    assert (b.q1, b.median, b.q3) == (3.0, 5.0, 7.0)
    assert b.whisker_high == 8.0 and b.outliers == [100.0] and b.whisker_low == 1.0


def test_scatter():
    s = co2_series([4.0], [420.0], [420.0])
    assert error_temperature_scatter(s, PASS) == [(JAN, 4.0, 0.0)]
    s = co2_series([1.0, 2.0, 3.0], [400.0, 410.0, 420.0], [405.0, 415.0, 425.0])
    assert [e for _, _, e in error_temperature_scatter(s, PASS)] == [5.0, 5.0, 5.0]


def test_distribution_summary_examples():
    s = co2_series(np.full(30, 7.5), np.full(30, 400.0), np.full(30, 400.0))
    (summary,) = monthly_distribution_summary(s, "temperature").values()
    assert set(summary.quantiles.values()) == {7.5} and summary.count == 30
    s = co2_series(np.full(100, 5.0), np.arange(1.0, 101.0), np.full(100, 400.0))
    (summary,) = monthly_distribution_summary(s, "reference_co2").values()
    assert (summary.quantiles[25], summary.quantiles[50], summary.quantiles[75]) == (25.0, 50.0, 75.0)
    assert (summary.minimum, summary.maximum) == (1.0, 100.0)


def test_report_roundtrip_and_csv():
    sensors = {"b": [_result(M, 12.0, 10.0)], "a": [_result(M, 9.0, 11.0), MonthResult(MonthKey(2018, 2), 3, 4.0, status="gap")]}
    report = DriftReport.build(sensors, {"seed": 1})
    report.check()
    assert list(report.sensors) == ["a", "b"]
    back = DriftReport.from_dict(json.loads(json.dumps(report.to_dict())))
    assert back.to_dict() == report.to_dict()
    rows = report.csv_rows()
    assert [r["sensor_id"] for r in rows] == ["a", "a", "b"]
    assert rows[0]["rmse_difference"] == -2.0 and rows[1]["rmse_resampled"] is None
