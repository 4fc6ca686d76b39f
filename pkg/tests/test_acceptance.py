"""End-to-end acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL line in the terminal summary together with the
measured quantities. Monte Carlo reps are spread over all available cores;
reports do not depend on the number of workers.
"""
import itertools
import math
import os
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from aurora_eb.estimators import MethodOptions, auroral
from aurora_eb.oracles import NormalNormalSpec, nn_oracle_risks, nn_single_holdout_risks, van_trees_bound
from aurora_eb.regressors import knn_index, knn_predict_in_sample, knn_select_k
from aurora_eb.core import split_and_order
from aurora_eb.simlab import (
    LocationLikelihood,
    NormalPrior,
    ParetoLikelihood,
    ScenarioConfig,
    ThreePointPrior,
    UniformPrior,
    run_scenario,
    sample_scenario,
)

import _oracles as ref

WORKERS = os.cpu_count() or 1
pytestmark = pytest.mark.acceptance


def _run(config):
    return run_scenario(config, workers=WORKERS)


def _pooled(*se):
    return math.sqrt(sum(s * s for s in se))


@pytest.mark.criterion(1, "oracle identity suite")
def test_criterion_1_oracle_identities(record_property):
    start = time.perf_counter()
    grid = list(itertools.product([0.1, 0.4, 1, 4, 16, 100], [0.5, 1, 4, 16], [2, 3, 5, 10, 25, 50]))
    worst = 0.0
    worst_vt = 0.0
    for A, s2, K in grid:
        r = nn_oracle_risks(NormalNormalSpec(A, s2, 0.0, K))
        assert r.bayes_K <= r.avg_oracle <= r.bayes_Km1, (A, s2, K)
        rel = abs(r.avg_oracle - (r.bayes_Km1 - r.jackknife_correction)) / r.avg_oracle
        assert rel <= 1e-12, (A, s2, K, rel)
        worst = max(worst, rel)
        # exact in rational arithmetic; the float evaluation agrees to rounding
        Af, sf = Fraction(str(A)), Fraction(str(s2))
        exact = nn_oracle_risks(NormalNormalSpec(Af, sf, 0, K))
        assert van_trees_bound(1 / sf, 1 / Af, K) == exact.bayes_K
        assert exact.avg_oracle == exact.bayes_Km1 - exact.jackknife_correction
        vt = van_trees_bound(1 / s2, 1 / A, K)
        worst_vt = max(worst_vt, abs(vt - r.bayes_K) / r.bayes_K)
        assert worst_vt <= 4 * np.finfo(float).eps
    elapsed = time.perf_counter() - start
    record_property("grid_points", len(grid))
    record_property("max_rel_jackknife_error", f"{worst:.2e}")
    record_property("max_rel_van_trees_float_error", f"{worst_vt:.2e}")
    assert elapsed < 1.0


@pytest.mark.criterion(2, "Normal-Normal calibration against R_K")
def test_criterion_2_normal_normal_calibration(record_property):
    for A in (0.25, 4.0, 25.0):
        cfg = ScenarioConfig(10_000, 10, 50, 2002, NormalPrior(0.5, A), LocationLikelihood("normal", 4.0),
                             ("auroral", "ccl", "js"), MethodOptions(sigma2=4.0))
        rep = _run(cfg)
        target = nn_oracle_risks(NormalNormalSpec(A, 4.0, 0.5, 10)).bayes_K
        for m in ("auroral", "ccl", "js"):
            r = rep[m]
            tol = max(3 * r.se, 0.05 * target)
            record_property(f"A={A} {m}", f"mse={r.mse:.5f} se={r.se:.5f} R_K={target:.5f}")
            assert abs(r.mse - target) <= tol, (A, m, r.mse, target, tol)
        gap = abs(rep["ccl"].mse - rep["js"].mse)
        record_property(f"A={A} |ccl-js|", f"{gap:.2e}")
        assert gap < 1e-3


@pytest.mark.criterion(3, "Auroral weight patterns")
def test_criterion_3_weight_patterns(record_property):
    def weights(prior, family, seed):
        cfg = ScenarioConfig(50_000, 10, 1, seed, prior, LocationLikelihood(family, 4.0))
        _, Z = sample_scenario(cfg, 0)
        return auroral(Z)[1]

    checks = {}
    s = weights(NormalPrior(0.5, 400.0), "normal", 3001).averaged_slopes
    record_property("(a) normal slopes", np.round(s, 4).tolist())
    checks["a"] = bool(np.all(np.abs(s - 1 / 9) <= 0.03))

    s = weights(NormalPrior(0.5, 400.0), "rectangular", 3002).averaged_slopes
    record_property("(b) rectangular slopes", np.round(s, 4).tolist())
    checks["b"] = abs(s[0] - 0.5) <= 0.10 and abs(s[-1] - 0.5) <= 0.10 and bool(np.all(np.abs(s[1:-1]) < 0.07))

    s = weights(NormalPrior(0.5, 400.0), "laplace", 3003).averaged_slopes
    record_property("(c) laplace slopes", np.round(s, 4).tolist())
    checks["c"] = int(np.argmax(s)) + 1 == 5

    w = weights(NormalPrior(0.5, 0.4), "normal", 3004)
    shrink = 0.4 / (0.4 + 4 / 9)
    record_property("(d) informative", f"slope_sum={w.averaged_slopes.sum():.4f} intercept={w.intercept:.4f}")
    checks["d"] = abs(w.averaged_slopes.sum() - shrink) <= 0.05 and abs(w.intercept - 0.5 * (1 - shrink)) <= 0.05

    record_property("parts", " ".join(f"{k}={'PASS' if v else 'FAIL'}" for k, v in checks.items()))
    assert all(checks.values()), checks


@pytest.mark.criterion(4, "Rectangular efficiency")
def test_criterion_4_rectangular_efficiency(record_property):
    cfg = ScenarioConfig(10_000, 10, 50, 4004, NormalPrior(0.5, 100.0), LocationLikelihood("rectangular", 4.0),
                         ("auroral", "mean", "midrange"))
    rep = _run(cfg)
    a, m, mid = rep["auroral"], rep["mean"], rep["midrange"]
    ratio = a.mse / m.mse
    diff_se = np.std(np.subtract(a.per_rep, mid.per_rep), ddof=1) / math.sqrt(a.reps)
    record_property("mse", f"auroral={a.mse:.5f} mean={m.mse:.5f} midrange={mid.mse:.5f}")
    record_property("ratio auroral/mean", f"{ratio:.4f} (6/(B+1)={6 / 11:.4f})")
    assert 0.40 <= ratio <= 0.72
    assert abs(a.mse - mid.mse) <= max(3 * diff_se, 0.10 * mid.mse)


@pytest.mark.criterion(5, "kNN consistency and nonlinearity")
def test_criterion_5_knn_consistency(record_property):
    prior, lik = ThreePointPrior(16.0), LocationLikelihood("normal", 4.0)
    big = _run(ScenarioConfig(10_000, 10, 30, 5005, prior, lik, ("aurora-knn", "auroral")))
    small = _run(ScenarioConfig(1_000, 10, 30, 5006, prior, lik, ("aurora-knn",)))
    k_big, a_big, k_small = big["aurora-knn"], big["auroral"], small["aurora-knn"]
    record_property("aurora-knn n=1e4", f"{k_big.mse:.5f} +- {k_big.se:.5f}")
    record_property("aurora-knn n=1e3", f"{k_small.mse:.5f} +- {k_small.se:.5f}")
    record_property("auroral n=1e4", f"{a_big.mse:.5f} +- {a_big.se:.5f}")
    assert k_big.mse < k_small.mse
    assert k_big.mse < a_big.mse - 2 * _pooled(k_big.se, a_big.se)


@pytest.mark.criterion(6, "LOO oracle equivalence")
def test_criterion_6_loo_oracle(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(6006)
    k_max = 40
    for t in range(20):
        B = (4, 10)[t % 2]
        mu = rng.choice([-2.0, 0.0, 2.0], size=200)
        Z = mu[:, None] + rng.normal(size=(200, B))
        v = split_and_order(Z, t % B + 1)
        X, y = v.ordered_features, v.response
        index = knn_index(X)
        sel = knn_select_k(index, y, k_max)
        curve = ref.loo_curve(X.tolist(), y.tolist(), k_max)
        assert sel.loo_curve.tolist() == curve
        assert sel.k_star == ref.select_k(curve)
        for k in sorted({1, sel.k_star, k_max}):
            assert knn_predict_in_sample(index, y, k).tolist() == ref.knn_predict(X.tolist(), y.tolist(), k)
    elapsed = time.perf_counter() - start
    record_property("instances", 20)
    assert elapsed < 10.0


@pytest.mark.criterion(7, "Pareto ordering")
def test_criterion_7_pareto_ordering(record_property):
    methods = ("auroral", "aurora-knn", "mean", "median", "pareto-mle", "ccl")
    cfg = ScenarioConfig(10_000, 20, 30, 7007, UniformPrior(2.0, 10.0), ParetoLikelihood(3.0), methods,
                         MethodOptions(k_max=100))
    rep = _run(cfg)
    for m in methods:
        record_property(m, f"{rep[m].mse:.5f} +- {rep[m].se:.5f}")
    a = rep["auroral"]
    baselines = ("mean", "median", "pareto-mle", "ccl")
    for m in baselines:
        assert a.mse <= rep[m].mse - 2 * _pooled(a.se, rep[m].se), m
    best = min(rep[m].mse for m in baselines)
    assert a.mse <= rep["aurora-knn"].mse <= best


@pytest.mark.criterion(8, "single-holdout exact risks")
def test_criterion_8_single_holdout(record_property):
    cfg = ScenarioConfig(2_000, 10, 200, 8008, NormalPrior(0.5, 4.0), LocationLikelihood("normal", 4.0),
                         ("auroral-single", "ccl-single"), MethodOptions(holdout=1))
    rep = _run(cfg)
    exact_a, exact_c = nn_single_holdout_risks(NormalNormalSpec(4.0, 4.0, 0.5, 10), 2_000)
    for m, exact in (("auroral-single", exact_a), ("ccl-single", exact_c)):
        r = rep[m]
        record_property(m, f"mse={r.mse:.5f} se={r.se:.5f} exact={exact:.5f}")
        assert abs(r.mse - exact) <= 3 * r.se


@pytest.mark.criterion(9, "property suites standalone")
def test_criterion_9_property_suites(record_property):
    here = Path(__file__).parent
    start = time.perf_counter()
    res = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                          str(here / "test_properties.py")], capture_output=True, text=True, cwd=here.parent)
    elapsed = time.perf_counter() - start
    record_property("summary", res.stdout.strip().splitlines()[-1] if res.stdout.strip() else res.stderr[-200:])
    assert res.returncode == 0, res.stdout[-2000:]
    assert elapsed < 30.0
