"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the verdict lines
are also repeated in the terminal summary of any pytest run.
"""
import filecmp
import time

import mpmath
import numpy as np

from blat.backtest import BacktestConfig, run_backtest, write_report
from blat.core import FeatureSpec, MarketModel, RegressionParams, ViewSpec
from blat.fiv import ConjugateConfig, fiv_component, fiv_conjugate_t, sample_niw
from blat.hyper import ObservationPanel, gls_fit, kde_bandwidth
from blat.market_data import MembershipCalendar, active_universe, packaged_membership
from blat.optimizer import max_sharpe_longonly
from blat.posterior import blb_posterior, mbl_posterior, slp_posterior

from conftest import random_spd, record_verdict, regime_ohlcv, synthetic_ohlcv

WINDOWS = (50, 80, 100, 120, 150)


def verdict(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} ({detail})"
    print(line)
    record_verdict(line)
    assert ok, line


def test_criterion_01_classical_recovery():
    t0 = time.perf_counter()
    gen = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        m, k = 5, 3
        model = MarketModel(random_spd(gen, m), gen.normal(size=m), random_spd(gen, m))
        views = ViewSpec(gen.normal(size=(k, m)), gen.normal(size=k), gen.uniform(0.1, 1.0, k))
        feats = FeatureSpec(gen.normal(size=(m, 2)), 1e12 * np.eye(m))
        reg = RegressionParams(gen.normal(size=m), gen.normal(size=2 * m), np.zeros(m), np.zeros(2 * m), 1.0)
        a, b = mbl_posterior(model, views, feats, reg), blb_posterior(model, views)
        worst = max(worst, np.max(np.abs(a.mean - b.mean)), np.max(np.abs(a.cov - b.cov)))
    elapsed = time.perf_counter() - t0
    verdict(1, "classical recovery", worst <= 1e-8 and elapsed < 1.0,
            f"max deviation {worst:.2e}, {elapsed:.2f}s")


def test_criterion_02_ground_truth_limit():
    t0 = time.perf_counter()
    gen = np.random.default_rng(102)
    worst, monotone = 0.0, True
    scales = 10.0 ** -np.arange(2, 9)
    for _ in range(100):
        m = 5
        model = MarketModel(random_spd(gen, m), gen.normal(size=m), random_spd(gen, m))
        truth = gen.normal(size=m)
        # a rotation with bounded scales keeps the pick matrix well conditioned
        rot = np.linalg.qr(gen.normal(size=(m, m)))[0]
        pick = rot * gen.uniform(0.5, 2.0, m)
        feats = FeatureSpec(gen.normal(size=(m, 1)), random_spd(gen, m))
        reg = RegressionParams(gen.normal(size=m), gen.normal(size=m), np.zeros(m), np.zeros(m), 1.0)
        errs = []
        for s in scales:
            post = mbl_posterior(model, ViewSpec(pick, pick @ truth, s * np.ones(m)), feats, reg)
            errs.append(np.max(np.abs(post.mean - truth)))
        worst = max(worst, errs[-1])
        monotone &= bool(np.all(np.diff(errs) < 0))
    elapsed = time.perf_counter() - t0
    verdict(2, "ground-truth limit", worst <= 1e-4 and monotone and elapsed < 1.0,
            f"max error at 1e-8 {worst:.2e}, monotone={monotone}, {elapsed:.2f}s")


def test_criterion_03_features_replace_views():
    gen = np.random.default_rng(103)
    worst = 0.0
    for _ in range(100):
        m = 4
        model = MarketModel(random_spd(gen, m), gen.normal(size=m), random_spd(gen, m))
        q, omega = gen.normal(size=m), gen.uniform(0.05, 1.0, m)
        feats = FeatureSpec(gen.normal(size=(m, 2)), np.diag(omega))
        beta_f = gen.normal(size=2 * m)
        reg = RegressionParams(q - feats.block @ beta_f, beta_f, np.zeros(m), np.zeros(2 * m))
        a = slp_posterior(model, feats, reg)
        b = blb_posterior(model, ViewSpec(np.eye(m), q, omega))
        worst = max(worst, np.max(np.abs(a.mean - b.mean)), np.max(np.abs(a.cov - b.cov)))
    verdict(3, "features replace views", worst <= 1e-8, f"max deviation {worst:.2e}")


def test_criterion_04_mixture_vs_conjugate():
    t0 = time.perf_counter()
    m = 2
    gen = np.random.default_rng(104)
    model = MarketModel(random_spd(gen, m), gen.normal(size=m), random_spd(gen, m))
    feats = FeatureSpec(gen.normal(size=(m, 1)), 0.1 * np.eye(m))
    reg = RegressionParams(np.zeros(m), np.zeros(m), gen.normal(size=m), gen.normal(size=m))
    psi = np.array([[0.5, 0.1], [0.1, 0.3]])
    nu = m + 4.0
    t = fiv_conjugate_t(model, np.eye(m), reg, feats, ConjugateConfig(psi, nu, omega0=0.2 * np.eye(m)))
    n = 200_000
    draws = sample_niw(t.location, psi, nu, n, seed=2024)
    mean, cov = draws.mean(axis=0), np.cov(draws, rowvar=False)
    se = np.sqrt(np.diag(cov) / n)
    z = np.max(np.abs(mean - t.location) / se)
    target = t.covariance()
    rel = np.linalg.norm(cov - target) / np.linalg.norm(target)
    elapsed = time.perf_counter() - t0
    verdict(4, "mixture vs conjugate t", z < 4 and rel < 0.05 and elapsed < 30,
            f"mean z {z:.2f}, covariance rel err {rel:.3f}, {elapsed:.1f}s")


def test_criterion_05_posterior_collapse():
    gen = np.random.default_rng(105)
    worst_mean = worst_cov = 0.0
    for m in (1, 3):
        for _ in range(10):
            model = MarketModel(random_spd(gen, m), gen.normal(size=m), random_spd(gen, m))
            omega_f = random_spd(gen, m)
            feats = FeatureSpec(gen.normal(size=(m, 2)), omega_f)
            reg = RegressionParams(np.zeros(m), np.zeros(2 * m), gen.normal(size=m), gen.normal(size=2 * m))
            post = fiv_component(model, np.eye(m), reg, feats, 1e-10 * np.ones(m))
            worst_mean = max(worst_mean, np.max(np.abs(post.mean - (reg.alpha + feats.block @ reg.beta))))
            worst_cov = max(worst_cov, np.linalg.norm(post.cov - omega_f))
    verdict(5, "posterior collapse", worst_mean <= 1e-4 and worst_cov <= 1e-4,
            f"mean {worst_mean:.2e}, covariance {worst_cov:.2e}")


def test_criterion_06_gls_estimator():
    n, m, d = 500, 3, 2
    w = np.array([[0.04, 0.018, 0.0], [0.018, 0.09, 0.02], [0.0, 0.02, 0.05]])
    rel = []
    for seed in range(20):
        gen = np.random.default_rng(600 + seed)
        f = gen.normal(size=(n, m, d))
        alpha, beta = gen.normal(size=m), gen.normal(size=m * d)
        r = alpha + np.einsum("lia,ia->li", f, beta.reshape(m, d)) + gen.multivariate_normal(np.zeros(m), w, n)
        a, b = gls_fit(ObservationPanel(r, f), w)
        truth = np.concatenate([alpha, beta])
        rel.append(np.linalg.norm(np.concatenate([a, b]) - truth) / np.linalg.norm(truth))
    med = float(np.median(rel))
    # identity weight against per-asset least squares
    gen = np.random.default_rng(699)
    f = gen.normal(size=(n, m, d))
    r = gen.normal(size=(n, m)) + f[:, :, 0]
    a, b = gls_fit(ObservationPanel(r, f), np.eye(m))
    ols_dev = 0.0
    for i in range(m):
        coef = np.linalg.lstsq(np.column_stack([np.ones(n), f[:, i, :]]), r[:, i], rcond=None)[0]
        ols_dev = max(ols_dev, abs(a[i] - coef[0]), np.max(np.abs(b[d * i:d * i + d] - coef[1:])))
    verdict(6, "GLS estimator", med <= 0.05 and ols_dev <= 1e-10,
            f"median rel err {med:.4f}, OLS deviation {ols_dev:.1e}")


def test_criterion_07_optimizer_oracle():
    t0 = time.perf_counter()
    k = 100
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    grid = np.column_stack([i[keep] / k, j[keep] / k, 1 - (i[keep] + j[keep]) / k])
    gen = np.random.default_rng(107)
    shortfall, infeasible = -np.inf, 0.0
    for _ in range(50):
        mean = gen.normal(0.05, 0.1, 3)
        mean[gen.integers(3)] = abs(mean[0]) + 0.01
        cov = random_spd(gen, 3, floor=0.01) * 0.05
        res = max_sharpe_longonly(mean, cov)
        best = np.max(grid @ mean / np.sqrt(np.einsum("ri,ij,rj->r", grid, cov, grid)))
        shortfall = max(shortfall, best - res.sharpe)
        infeasible = max(infeasible, abs(res.w.sum() - 1), -res.w.min())
    elapsed = time.perf_counter() - t0
    verdict(7, "optimizer oracle", shortfall <= 1e-3 and infeasible <= 1e-10 and elapsed < 10,
            f"worst shortfall vs grid {shortfall:.2e}, feasibility {infeasible:.1e}, {elapsed:.1f}s")


def test_criterion_08_kde_bandwidth():
    mpmath.mp.dps = 50
    exact = float((mpmath.mpf(4) / 3) ** (mpmath.mpf(2) / 5) * mpmath.mpf(100) ** (-mpmath.mpf(2) / 5))
    h = kde_bandwidth(1, 100)
    verdict(8, "KDE bandwidth", abs(h - exact) <= 1e-6 and kde_bandwidth(2, 1) == 1.0,
            f"h(1,100)={h:.14f}, high precision {exact:.14f}, h(2,1)={kde_bandwidth(2, 1)}")


def _fold(data, report):
    close = {t: dict(zip(map(str, s.dates), s.adj_close)) for t, s in data.items()}
    rebal = {str(d): row for d, row in zip(report.rebalance_dates, report.weights)}
    days = [str(d) for d in report.wealth_dates]
    wealth, hold = 1.0, None
    for k, day in enumerate(days):
        if hold is not None:
            prev = days[k - 1]
            hold = [h * close[t][day] / close[t][prev] for h, t in zip(hold, report.tickers)]
            wealth = sum(hold)
        if day in rebal:
            hold = [wealth * x for x in rebal[day]]
    return wealth


def test_criterion_09_backtest_determinism(tmp_path):
    data = synthetic_ohlcv(["AAA", "BBB", "CCC"], start="2017-01-01", end="2019-12-31", seed=909)
    cal = MembershipCalendar(tuple((t, "2000-01-01", "2030-12-31") for t in data))
    same, worst = True, 0.0
    for model in ("markowitz", "slp_bl"):
        cfg = BacktestConfig(model=model, window_len=100, seed=1)
        first = run_backtest(cfg, data, cal)
        a = write_report(first, tmp_path / f"{model}_a")
        b = write_report(run_backtest(cfg, data, cal), tmp_path / f"{model}_b")
        same &= all(filecmp.cmp(x, y, shallow=False) for x, y in zip(a, b))
        worst = max(worst, abs(first.wealth[-1] / _fold(data, first) - 1))
    verdict(9, "backtest determinism and accounting", same and worst <= 1e-10,
            f"byte-identical={same}, fold rel err {worst:.1e}")


def _universe_data(calendar, start, end, seed):
    names = sorted({t for day in np.arange(np.datetime64(start), np.datetime64(end), 20)
                    for t in active_universe(calendar, day)})
    return synthetic_ohlcv(names, start=start, end=end, seed=seed)


def test_criterion_10_pipeline_end_to_end():
    t0 = time.perf_counter()
    rows, ok = [], True
    for name, seed in (("spdr_sectors", 1), ("djia", 2)):
        cal = packaged_membership(name)
        data = _universe_data(cal, "2017-01-01", "2019-12-31", seed)
        for window in WINDOWS:
            for model in ("markowitz", "slp_bl"):
                rep = run_backtest(BacktestConfig(model=model, window_len=window), data, cal)
                vals = [rep.metrics[k] for k in ("cumulative_return", "cagr", "sharpe", "max_drawdown",
                                                 "volatility", "avg_turnover")]
                ok &= bool(np.all(np.isfinite(vals)))
                rows.append((name, window, model))
    elapsed = time.perf_counter() - t0
    verdict(10, "pipeline end to end", ok and len(rows) == 20,
            f"{len(rows)} runs over two calendars and windows {WINDOWS}, all metric rows finite, {elapsed:.0f}s")


def test_turnover_smoke_report():
    """Directional check only: printed, never failed."""
    data = regime_ohlcv([f"S{i}" for i in range(6)], seed=5)
    cal = MembershipCalendar(tuple((t, "2000-01-01", "2030-12-31") for t in data))
    turn = {m: run_backtest(BacktestConfig(model=m, window_len=100), data, cal).metrics["avg_turnover"]
            for m in ("markowitz", "slp_bl")}
    lower = turn["slp_bl"] < turn["markowitz"]
    line = (f"INFO turnover smoke check (not gated): slp_bl {turn['slp_bl']:.1f}% vs markowitz "
            f"{turn['markowitz']:.1f}% -> {'lower' if lower else 'not lower'}")
    print(line)
    record_verdict(line)
