"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line."""

import math

import numpy as np
import pytest
from scipy import stats

from lpineq.estimators import Dataset, bandwidth_rule, estimate_on_points, make_grid
from lpineq.kernels import get_kernel
from lpineq.normal import LambdaSpec, cov_lambda_mc, cov_lambda_pair, mean_lambda
from lpineq.power import PowerQuery, local_power_equality, local_power_inequality
from lpineq.simulation import (Constant, ExperimentConfig, draw, local_alternative, make_dgp,
                               pop_sigma_sq, run_experiment)
from lpineq.statistic import TestConfig, run_test

from conftest import ACCEPTANCE_LINES, synthetic
from oracle import direct_statistic

SEED = 20240917


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def null_grid():
    cfg = ExperimentConfig(dgps=["dgp0", "dgp1", "dgp2", "dgp3", "dgp4", "dgp5"], n=[1000],
                           c_h=[1.0], weights=["uniform"], replications=1000, base_seed=SEED)
    return run_experiment(cfg)


def test_criterion_1_null_size(null_grid):
    cell = null_grid.cell("dgp0-homo")
    r = cell.reject_rate
    report(1, 0.02 <= r <= 0.09, f"DGP0 size {r:.3f} (se {cell.mc_se:.3f}) in [0.02, 0.09]; "
                                 f"runtime of 6-design grid {null_grid.runtime:.0f}s")


def test_criterion_2_interior_null(null_grid):
    r = null_grid.cell("dgp1-homo").reject_rate
    report(2, r <= 0.01, f"DGP1 rejection rate {r:.3f} <= 0.01")


def test_criterion_3_power_monotone(null_grid):
    cells = [null_grid.cell(f"dgp{k}-homo") for k in (2, 3, 4, 5)]
    rates = [c.reject_rate for c in cells]
    ok = all(b.reject_rate - a.reject_rate > -2 * max(a.mc_se, b.mc_se)
             for a, b in zip(cells, cells[1:]))
    report(3, ok, "rates for c_m=0.20,0.15,0.10,0.05: " + ", ".join(f"{r:.3f}" for r in rates))


def test_criterion_4_sine():
    cfg = ExperimentConfig(dgps=["sine-homo", "sine-hetero"], n=[1000],
                           c_h=[0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5],
                           weights=["uniform", "inverse_se"], replications=500, base_seed=SEED + 1)
    res = run_experiment(cfg)
    worst = min(res.cells, key=lambda c: c.reject_rate)
    report(4, worst.reject_rate >= 0.95,
           f"minimum over {len(res.cells)} cells {worst.reject_rate:.3f} "
           f"({worst.dgp}, c_h={worst.c_h}, {worst.weight}) >= 0.95")


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_criterion_5_null_distribution(p):
    cfg = ExperimentConfig(dgps=["dgp0"], n=[2000], p=p, replications=2000, base_seed=SEED + 2)
    t = np.array(run_experiment(cfg).cells[0].t_stats)
    ks = stats.kstest(t[np.isfinite(t)], "norm").statistic
    report(5, ks <= 0.10, f"p={p:g}: KS distance {ks:.3f} <= 0.10 (mean {t.mean():.3f}, sd {t.std():.3f})")


def test_criterion_6_local_power_inequality():
    n = 2000
    dgp = local_alternative(Constant(1.0), n ** -0.5, "homo", "drift-1")
    cfg = ExperimentConfig(dgps=[dgp], n=[n], replications=2000, base_seed=SEED + 3)
    cell = run_experiment(cfg).cells[0]
    sigma = math.sqrt(pop_sigma_sq(make_dgp("dgp0-homo"), TestConfig()))
    pred = local_power_inequality(PowerQuery([1.0], [1.0], [1.0], sigma=sigma))
    gap = abs(cell.reject_rate - pred)
    report(6, gap <= 0.05, f"simulated {cell.reject_rate:.3f} (se {cell.mc_se:.3f}) vs "
                           f"predicted {pred:.3f}, gap {gap:.3f} <= 0.05")


def test_criterion_7_local_power_equality():
    n = 2000
    h = math.sqrt(1 / 12) * n ** -0.2
    dgp = local_alternative(Constant(1.0), n ** -0.5 * h ** -0.25, "homo", "drift-eq")
    cfg = ExperimentConfig(dgps=[dgp], n=[n], p=2.0, mode="two_sided", bandwidth=h,
                           replications=2000, base_seed=SEED + 4)
    cell = run_experiment(cfg).cells[0]
    tc = TestConfig(p=2.0, mode="two_sided", bandwidth=h)
    sigma = math.sqrt(pop_sigma_sq(make_dgp("dgp0-homo"), tc))
    pred = local_power_equality(PowerQuery([1.0], [1.0], [1.0], sigma=sigma, p=2,
                                           mode="two_sided", rate="root_n_h"))
    gap = abs(cell.reject_rate - pred)
    report(7, gap <= 0.07, f"simulated {cell.reject_rate:.3f} (se {cell.mc_se:.3f}) vs "
                           f"predicted {pred:.3f}, gap {gap:.3f} <= 0.07")


def _rel(a, b, floor):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def test_criterion_8_oracle_equivalence():
    worst = 0.0
    dgp = make_dgp("dgp0-homo")
    kernel = get_kernel("quartic2u")
    settings = [("one_sided", 1.0, "uniform"), ("one_sided", 2.0, "inverse_se"),
                ("two_sided", 2.0, "uniform"), ("two_sided", 1.0, "inverse_se")]
    for i in range(20):
        data = draw(dgp, 200, (SEED + 5, i))
        mode, p, weights = settings[i % 4]
        cfg = TestConfig(p=p, mode=mode, weights=weights)
        h = bandwidth_rule(1.0, data)
        rep = run_test(data, cfg)
        ref = direct_statistic(data.x, data.y, h, cfg.domain, 512, p=p, mode=mode, weights=weights)
        est = estimate_on_points(data, kernel, h, ref["points"])
        g_floor = 1e-3 * np.max(np.abs(ref["g"]))
        r_floor = 1e-3 * np.max(np.abs(ref["rho"]))
        worst = max(worst,
                    _rel(est.g, ref["g"], g_floor),
                    _rel(est.rho, ref["rho"], r_floor),
                    _rel(rep.gamma, ref["gamma"], 1e-300),
                    _rel(rep.a_hat, ref["a_hat"], 1e-300),
                    _rel(rep.sigma_matrix, ref["sigma_matrix"], 1e-300),
                    _rel(rep.t_stat, ref["t_stat"], 1e-12))
    report(8, worst <= 1e-9, f"max relative deviation over 20 datasets {worst:.2e} <= 1e-9")


def test_criterion_9_constants():
    spec = LambdaSpec(1)
    ts = np.array([-0.9, -0.5, 0.0, 0.5, 0.9])
    est, se = cov_lambda_mc(spec, ts)
    closed = cov_lambda_pair(spec, ts, "closed")
    z = np.abs(est - closed) / se
    m1 = mean_lambda(spec)
    c2 = float(cov_lambda_mc(LambdaSpec(2), 1.0)[0])
    ok = bool(np.all(z <= 3)) and abs(m1 - 0.3989422804) <= 1e-9 and abs(c2 - 1.25) <= 1e-3
    report(9, ok, f"c1 closed vs MC max |z| {z.max():.2f} <= 3; mean_lambda(1)={m1:.10f}; "
                  f"c2(1)={c2:.5f}")


def test_criterion_10_invariances():
    failures = []
    cfg1, cfg2 = TestConfig(), TestConfig(mode="two_sided", p=2.0)
    for seed in range(5):
        data = synthetic(300, 1, 2, seed=seed)
        base = run_test(data, cfg1)
        for c in (0.01, 3.7, 250.0):
            if not math.isclose(run_test(data.with_y(c * data.y), cfg1).t_stat, base.t_stat,
                                rel_tol=1e-9, abs_tol=1e-12):
                failures.append(f"scale c={c} seed={seed}")
        eq = run_test(data, cfg2).t_stat
        if not math.isclose(run_test(data.with_y(-data.y), cfg2).t_stat, eq, rel_tol=1e-9, abs_tol=1e-12):
            failures.append(f"sign flip seed={seed}")
        perm = np.random.default_rng(seed).permutation(data.n)
        if not math.isclose(run_test(Dataset(data.x[perm], data.y[perm]), cfg1).t_stat, base.t_stat,
                            rel_tol=1e-9, abs_tol=1e-12):
            failures.append(f"permutation seed={seed}")
        for cfg in (cfg1, cfg2):
            if min(run_test(data, cfg).gamma) < 0:
                failures.append(f"negative gamma seed={seed}")
    report(10, not failures, "scale, sign-flip, permutation, gamma >= 0"
           + ("" if not failures else f"; failed: {failures}"))
