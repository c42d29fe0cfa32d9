"""Acceptance criteria, one recorded verdict per criterion.

Each test prints a ``[PASS]``/``[FAIL]`` line (also collected into the
``acceptance criteria`` terminal section) and then asserts the verdict.
"""

import json
import time
from collections import defaultdict

import numpy as np
import pytest
from scipy.stats import spearmanr

from driftlab.cli import main
from driftlab.density import HistogramDensity2D, UniformRectDensity, estimate_histogram
from driftlab.ingest import RawStream, align_average, nearest_rank, remove_outliers
from driftlab.metrics import monthly_drift_eval, prediction_errors
from driftlab.model import EvalConfig, SensorSeries, partition_by_month
from driftlab.resample import ResamplePlan, compute_weights, draw_indices
from driftlab.sensor import BeerLambertEstimator, BeerLambertParams, estimate_co2, forward_ir
from driftlab.synth import (
    EnvironmentSpec,
    GainDrift,
    InstrumentSpec,
    default_fleet,
    generate_fleet,
    monthly_oracle,
    oracle_errors,
)

pytestmark = pytest.mark.slow

TRUE = BeerLambertParams(1.0, 1e-4)
DESIRED = UniformRectDensity((0.0, 20.0), (400.0, 500.0))


def _elapsed(t0):
    return time.perf_counter() - t0


def test_weights_and_draw_frequencies_on_four_points(acceptance_record):
    t0 = time.perf_counter()
    points = np.array([(1.0, 405.0), (3.0, 415.0), (3.0, 417.0), (25.0, 450.0)])
    # hand-built: cells [0,2)x[400,410), [2,4)x[410,420), [24,26)x[450,460)
    # carry masses 1/4, 1/2, 1/4, every cell has area 20
    hist = HistogramDensity2D(
        temp_edges=[0.0, 2.0, 4.0, 24.0, 26.0],
        co2_edges=[400.0, 410.0, 420.0, 450.0, 460.0],
        bin_prob=[[0.25, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0.25]],
    )
    # p_desired = 1/2000 inside; p_orig = 0.0125, 0.025, 0.025, 0.0125
    expected = np.array([0.04, 0.02, 0.02, 0.0]) / 0.08
    w = compute_weights(points, DESIRED, hist)
    weight_err = float(np.max(np.abs(w.normalized - expected)))
    draws = draw_indices(w, ResamplePlan(1_000_000, seed=11))
    freq = np.bincount(draws, minlength=4) / len(draws)
    freq_err = float(np.max(np.abs(freq - expected)))
    dt = _elapsed(t0)
    ok = weight_err <= 1e-12 and freq_err <= 0.002 and dt < 5
    acceptance_record(
        "1 four-point weights and draw frequencies", ok,
        f"max|w-w_hand|={weight_err:.1e} max|freq-w|={freq_err:.2e} t={dt:.2f}s",
    )
    assert ok


def _gaussian_environment(seed, n):
    rng = np.random.default_rng(seed)
    temperature = rng.normal(10.0, 9.0, n)
    co2 = rng.normal(450.0, 45.0, n)
    return temperature, co2, rng.standard_normal(n)


def test_importance_estimate_matches_direct_monte_carlo(acceptance_record):
    t0 = time.perf_counter()
    n = 100_000
    inst = InstrumentSpec(
        "a", TRUE, calibrated_params=BeerLambertParams(1.0003, 1e-4), ir_noise=1e-3,
        cold_coefficient=2e-3, cold_threshold=8.0,
    )
    estimator = BeerLambertEstimator(inst.calibration)
    worst = 0.0
    for seed in range(10):
        temperature, co2, eps = _gaussian_environment(seed, n)
        ts = np.arange(n, dtype=np.int64) * 60
        series = SensorSeries("a", ts, temperature, co2, ir_signal=inst.ir_signal(ts, temperature, co2, eps))
        w = compute_weights(series.points, DESIRED, estimate_histogram(series.points))
        err = prediction_errors(series, estimator)
        importance = float(np.sum(w.normalized * err**2))
        direct = float(np.mean(oracle_errors(inst, 0, DESIRED, n, seed=1000 + seed) ** 2))
        worst = max(worst, abs(importance - direct) / direct)
    dt = _elapsed(t0)
    ok = worst < 0.05 and dt < 30
    acceptance_record("2 importance vs direct Monte Carlo MSE", ok, f"worst rel diff={worst:.4f} t={dt:.2f}s")
    assert ok


def test_resampled_environment_converges_to_desired(acceptance_record):
    t0 = time.perf_counter()
    env = EnvironmentSpec(
        duration_days=31, cadence=60, temp_annual_amplitude=0.0, temp_diurnal_amplitude=7.0, temp_noise=4.0,
        co2_baseline=450.0, co2_diurnal_amplitude=30.0, co2_noise=25.0, spike_rate=0.05,
    )
    _, temperature, co2 = env.generate(3)
    points = np.column_stack([temperature, co2])
    w = compute_weights(points, DESIRED, estimate_histogram(points))
    drawn = points[draw_indices(w, ResamplePlan(100_000, seed=5))]
    counts, _, _ = np.histogram2d(drawn[:, 0], drawn[:, 1], bins=10, range=[[0, 20], [400, 500]])
    tv = 0.5 * float(np.abs(counts / len(drawn) - 0.01).sum())
    dt = _elapsed(t0)
    ok = tv < 0.05 and dt < 30
    acceptance_record("3 resampled environment TV distance", ok, f"TV={tv:.4f} t={dt:.2f}s")
    assert ok


def test_forward_inverse_roundtrip(acceptance_record):
    t0 = time.perf_counter()
    temperature, co2 = np.meshgrid(np.linspace(-40, 60, 50), np.linspace(1.0, 5000.0, 50))
    rel = 0.0
    for params in (TRUE, BeerLambertParams(2.5, 3e-4, 298.15)):
        back = estimate_co2(params, temperature, forward_ir(params, temperature, co2))
        rel = max(rel, float(np.max(np.abs(back - co2) / co2)))
    dt = _elapsed(t0)
    ok = rel < 1e-9 and dt < 1
    acceptance_record("4 estimator/forward roundtrip", ok, f"max rel err={rel:.1e} t={dt:.3f}s")
    assert ok


@pytest.fixture(scope="module")
def fleet_run():
    t0 = time.perf_counter()
    fleet = default_fleet(12, seed=42)
    dataset = generate_fleet(fleet.environment, fleet.instruments, seed=42)
    config = EvalConfig(rng_seed=42)
    results, oracle = {}, {}
    for inst in fleet.instruments:
        series = dataset[inst.sensor_id]
        results[inst.sensor_id] = monthly_drift_eval(series, config, BeerLambertEstimator(inst.calibration))
        months = [r.month for r in results[inst.sensor_id]]
        oracle[inst.sensor_id] = monthly_oracle(inst, months, DESIRED, 20000, seed=42)
    temps = {m: float(np.mean(p.temperature)) for m, p in partition_by_month(dataset[fleet.instruments[0].sensor_id]).items()}
    return results, oracle, temps, _elapsed(t0)


def test_pipeline_matches_oracle(acceptance_record, fleet_run):
    t0 = time.perf_counter()
    results, oracle, temps, setup = fleet_run
    checked = failed = 0
    worst = 0.0
    for sid, rows in results.items():
        for r in rows:
            if r.ess is None or r.ess < 100:
                continue
            checked += 1
            truth = oracle[sid][r.month]
            gap = abs(r.rmse_resampled - truth)
            worst = max(worst, gap / max(2.0, 0.1 * truth))
            failed += gap > max(2.0, 0.1 * truth)
    dt = setup + _elapsed(t0)
    ok = checked > 0 and failed == 0 and dt < 180 and len(temps) == 24
    acceptance_record(
        "5 pipeline vs oracle RMSE", ok,
        f"{checked} sensor-months (ESS>=100), {failed} outside tolerance, worst gap/tol={worst:.2f} t={dt:.1f}s",
    )
    assert ok


def test_cold_months_show_environment_effect(acceptance_record, fleet_run):
    t0 = time.perf_counter()
    results, _, temps, setup = fleet_run
    by_month = defaultdict(list)
    for rows in results.values():
        for r in rows:
            if r.rmse_difference is not None:
                by_month[r.month].append(abs(r.rmse_difference))
    coldest = sorted(temps, key=temps.get)[:2]
    centre = sum(DESIRED.temp_range) / 2
    mildest = sorted(temps, key=lambda m: abs(temps[m] - centre))[:4]
    cold = float(np.mean([v for m in coldest for v in by_month[m]]))
    mild = float(np.mean([v for m in mildest for v in by_month[m]]))
    dt = setup + _elapsed(t0)
    ok = cold >= 2 * mild and dt < 180
    acceptance_record(
        "6 cold-month vs mild-month |rmse difference|", ok,
        f"coldest {[str(m) for m in coldest]} {cold:.2f} ppm, mildest {[str(m) for m in mildest]} "
        f"{mild:.2f} ppm, ratio={cold / mild:.1f} t={dt:.1f}s",
    )
    assert ok


def test_drift_trend_recovery(acceptance_record):
    t0 = time.perf_counter()
    env = EnvironmentSpec()
    config = EvalConfig(rng_seed=3)
    rhos = []
    for k, slope in enumerate((-0.01, -0.02, -0.03)):
        inst = InstrumentSpec(f"d{k}", TRUE, drift=GainDrift("linear", slope_per_year=slope, origin=env.start),
                              ir_noise=5e-4)
        series = generate_fleet(env, [inst], seed=10 + k)[inst.sensor_id]
        rows = monthly_drift_eval(series, config, BeerLambertEstimator(inst.calibration))
        rhos.append(spearmanr(np.arange(len(rows)), [r.rmse_resampled for r in rows]).statistic)

    # stationary case: the primary run's monthly values against the band
    # spanned by 50 independent simulate+evaluate seeds (data noise and draws)
    inst = InstrumentSpec("flat", TRUE, ir_noise=5e-4)
    estimator = BeerLambertEstimator(inst.calibration)
    runs = []
    for seed in range(51):
        series = generate_fleet(env, [inst], seed=1000 + seed)["flat"]
        rows = monthly_drift_eval(series, EvalConfig(rng_seed=1000 + seed), estimator)
        runs.append([r.rmse_resampled for r in rows])
    runs = np.array(runs)
    primary, reps = runs[0], runs[1:]
    sigma = float(np.sqrt(np.mean(np.var(reps, axis=0, ddof=1))))
    centre = float(reps.mean())
    excess = float(np.max(np.abs(np.array(primary) - centre)) / (3 * sigma))
    dt = _elapsed(t0)
    ok = min(rhos) > 0.9 and excess <= 1.0 and dt < 180
    acceptance_record(
        "7 drift trend recovery and stationary band", ok,
        f"spearman={['%.3f' % r for r in rhos]} stationary range={max(primary) - min(primary):.3f} ppm "
        f"3sigma={3 * sigma:.3f} ppm max|dev|/3sigma={excess:.2f} t={dt:.1f}s",
    )
    assert ok


def _brute_average(raw, window):
    acc = defaultdict(lambda: defaultdict(list))
    for tag, recs in raw.items():
        for t, v in recs:
            acc[tag][t // window].append(v)
    common = set.intersection(*(set(d) for d in acc.values()))
    return {k: {tag: sum(acc[tag][k]) / len(acc[tag][k]) for tag in acc} for k in sorted(common)}


def test_preprocessing_against_brute_force(acceptance_record):
    t0 = time.perf_counter()
    worst_avg = 0.0
    sets_equal = cuts_equal = True
    for seed in range(20):
        rng = np.random.default_rng(seed)
        raw = {}
        for tag, lo, hi in (("temperature", -5, 25), ("ir_signal", 0.94, 0.97), ("reference_co2", 390, 520)):
            n = int(rng.integers(200, 2000))
            ts = np.sort(rng.integers(1_500_000_000, 1_500_000_000 + 600 * 400, n))
            raw[tag] = list(zip(ts.tolist(), rng.uniform(lo, hi, n).tolist()))
        streams = {
            tag: RawStream(tag, np.array([t for t, _ in r], dtype=np.int64), np.array([v for _, v in r]))
            for tag, r in raw.items()
        }
        series = align_average(streams, 600)
        expected = _brute_average(raw, 600)
        sets_equal &= (series.timestamps // 600).tolist() == list(expected)
        for i, k in enumerate(expected):
            for tag in raw:
                worst_avg = max(worst_avg, abs(getattr(series, tag)[i] - expected[k][tag]))

        # nearest-rank cut on the sensor channel, sorted-list oracle
        co2 = rng.normal(450, 30, int(rng.integers(1000, 5000)))
        s = SensorSeries("x", np.arange(len(co2)) * 600, np.full(len(co2), 10.0), np.full(len(co2), 450.0),
                         sensor_co2=co2)
        ordered = sorted(co2.tolist())
        cutoff = ordered[-(-len(ordered) * 999 // 1000) - 1]
        kept = remove_outliers(s, 0.999).sensor_co2.tolist()
        cuts_equal &= kept == [v for v in co2.tolist() if v <= cutoff]
        cuts_equal &= nearest_rank(co2, 0.999) == cutoff
    dt = _elapsed(t0)
    ok = sets_equal and cuts_equal and worst_avg <= 1e-12 and dt < 10
    acceptance_record(
        "8 preprocessing vs brute-force oracles", ok,
        f"windows equal={sets_equal} cut equal={cuts_equal} max avg err={worst_avg:.1e} t={dt:.2f}s",
    )
    assert ok


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_end_to_end_determinism(acceptance_record, tmp_path):
    t0 = time.perf_counter()
    codes = []
    for run in ("a", "b"):
        codes.append(main(["simulate", "--seed", "42", "--out", str(tmp_path / f"sim_{run}")]))
        codes.append(main(["evaluate", "--config", str(tmp_path / f"sim_{run}" / "evaluate.toml"),
                           "--out", str(tmp_path / f"ev_{run}")]))
    codes.append(main(["evaluate", "--config", str(tmp_path / "sim_a" / "evaluate.toml"),
                       "--out", str(tmp_path / "ev_jobs"), "--jobs", "3"]))
    sims_equal = _tree(tmp_path / "sim_a") == _tree(tmp_path / "sim_b")
    reports_equal = _tree(tmp_path / "ev_a") == _tree(tmp_path / "ev_b")
    jobs_equal = _tree(tmp_path / "ev_a") == _tree(tmp_path / "ev_jobs")
    seed = json.loads((tmp_path / "ev_a" / "report.json").read_text())["metadata"]["seed"]
    dt = _elapsed(t0)
    ok = codes == [0] * 5 and sims_equal and reports_equal and jobs_equal and seed == 42
    acceptance_record(
        "9 end-to-end determinism", ok,
        f"exit codes={codes} simulate identical={sims_equal} reports identical={reports_equal} "
        f"--jobs invariant={jobs_equal} t={dt:.1f}s",
    )
    assert ok
