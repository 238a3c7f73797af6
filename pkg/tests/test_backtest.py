import filecmp

import numpy as np
import pytest

from blat.backtest import (BacktestConfig, compute_metrics, drift_weights, estimate_window, max_drawdown,
                           rebalance_rows, run_backtest, write_report)
from blat.errors import Bankrupt, ConfigError, InsufficientData
from blat.indicators import OhlcvSeries
from blat.market_data import MembershipCalendar

from conftest import synthetic_ohlcv

TICKERS = ["AAA", "BBB", "CCC"]


def everyone(tickers, start="2000-01-01", end="2030-12-31"):
    return MembershipCalendar(tuple((t, start, end) for t in tickers))


@pytest.fixture(scope="module")
def market():
    return synthetic_ohlcv(TICKERS, start="2018-01-01", end="2019-12-31", seed=11)


def fold_oracle(data, report):
    """Dollar holdings marched day by day from raw closes."""
    price = {t: dict(zip(map(str, s.dates), s.adj_close)) for t, s in data.items()}
    last = {}
    days = [str(d) for d in report.wealth_dates]
    rebal = {str(d): row for d, row in zip(report.rebalance_dates, report.weights)}
    wealth, hold = None, None
    for t in report.tickers:
        for d in sorted(price[t]):
            if d <= days[0]:
                last[t] = price[t][d]
    out = []
    for day in days:
        if hold is not None:
            for i, t in enumerate(report.tickers):
                if day in price[t]:
                    if t in last:
                        hold[i] *= price[t][day] / last[t]
                    last[t] = price[t][day]
            wealth = float(sum(hold))
        else:
            wealth = 1.0
        if day in rebal:
            hold = [wealth * w for w in rebal[day]]
        out.append(wealth)
    return np.array(out)


def test_drift_examples():
    assert np.array_equal(drift_weights([0.3, 0.7], [0.0, 0.0]).w, [0.3, 0.7])
    assert np.allclose(drift_weights([0.5, 0.5], [1.0, 0.0]).w, [2 / 3, 1 / 3])
    assert np.array_equal(drift_weights([1.0, 0.0], [0.37, -0.9]).w, [1.0, 0.0])
    with pytest.raises(Bankrupt):
        drift_weights([1.0, 0.0], [-1.0, 0.1])


def test_metric_examples():
    d = np.datetime64("2020-01-01") + np.arange(3)
    assert max_drawdown([1, 2, 3, 4]) == 0
    m = compute_metrics([1.0, 0.5, 1.0], d)
    assert m["max_drawdown"] == 0.5 and m["cumulative_return"] == 0.0
    m = compute_metrics([1.0, 1.0, 1.0], d, [np.array([0.0, 1.0])], [np.array([1.0, 0.0])])
    assert m["avg_turnover"] == 100.0
    assert np.isnan(compute_metrics([1.0, 1.1], d[:2])["avg_turnover"])
    with pytest.raises(InsufficientData):
        compute_metrics([1.0], d[:1])


def test_metric_formulas():
    w = np.array([1.0, 1.01, 0.99, 1.02, 1.05])
    d = np.datetime64("2020-01-01") + np.array([0, 1, 4, 5, 6])
    m = compute_metrics(w, d)
    r = w[1:] / w[:-1] - 1
    vol = r.std(ddof=1) * np.sqrt(252)
    assert np.isclose(m["volatility"], vol) and np.isclose(m["sharpe"], r.mean() * 252 / vol)
    assert np.isclose(m["cagr"], 1.05 ** (365.25 / 6) - 1)
    assert np.isclose(m["max_drawdown"], 1 - 0.99 / 1.01)


def test_config_validation():
    with pytest.raises(ConfigError):
        BacktestConfig(model="magic")
    with pytest.raises(ConfigError):
        BacktestConfig(window_len=1)
    with pytest.raises(ConfigError):
        BacktestConfig(rebalance="weekly")


def test_rebalance_rows_first_trading_day():
    dates = np.array(["2020-01-30", "2020-01-31", "2020-02-03", "2020-02-04", "2020-03-02"], dtype="datetime64[D]")
    assert list(rebalance_rows(dates, 0)) == [0, 2, 4]
    assert list(rebalance_rows(dates, 3)) == [4]


def test_single_asset(market):
    data = {"AAA": market["AAA"]}
    rep = run_backtest(BacktestConfig(model="markowitz", window_len=30), data, everyone(["AAA"]))
    assert np.all(rep.weights == 1.0)
    s = data["AAA"]
    i = int(np.searchsorted(s.dates, rep.wealth_dates[0]))
    assert np.allclose(rep.wealth, s.adj_close[i:] / s.adj_close[i], rtol=1e-12)


def test_equal_weight_resets(market):
    rep = run_backtest(BacktestConfig(model="equal_weight", window_len=30), market, everyone(TICKERS))
    assert np.allclose(rep.weights, 1 / 3)
    assert rep.rebalance_dates.shape[0] > 10
    assert np.all(np.array(rep.turnover) > 0)


def test_equal_weight_identical_assets_no_turnover(market):
    s = market["AAA"]
    data = {t: OhlcvSeries(s.dates, s.open, s.high, s.low, s.close, s.adj_close, s.volume, ticker=t)
            for t in TICKERS}
    rep = run_backtest(BacktestConfig(model="equal_weight", window_len=30), data, everyone(TICKERS))
    assert np.allclose(rep.turnover, 0, atol=1e-15)


@pytest.mark.parametrize("model", ["equal_weight", "markowitz", "slp_bl", "fiv_bl"])
def test_wealth_matches_fold(market, model):
    rep = run_backtest(BacktestConfig(model=model, window_len=40), market, everyone(TICKERS))
    assert np.allclose(rep.weights.sum(axis=1), 1, atol=1e-10) and np.all(rep.weights >= 0)
    oracle = fold_oracle(market, rep)
    assert abs(rep.wealth[-1] / oracle[-1] - 1) < 1e-10
    assert np.allclose(rep.wealth, oracle, rtol=1e-10)


def test_staggered_listing_and_gaps():
    data = synthetic_ohlcv(TICKERS, start="2018-01-01", end="2019-12-31", seed=12)
    c = data["CCC"]
    keep = np.arange(len(c)) >= 200
    keep[300] = False
    data["CCC"] = OhlcvSeries(c.dates[keep], c.open[keep], c.high[keep], c.low[keep], c.close[keep],
                              c.adj_close[keep], c.volume[keep], ticker="CCC")
    rep = run_backtest(BacktestConfig(model="markowitz", window_len=40), data, everyone(TICKERS))
    early = rep.rebalance_dates < c.dates[200 + 40 + 34]
    assert np.all(rep.weights[early, 2] == 0)
    assert any("excluded" in note for _, note in rep.flags)
    assert np.allclose(rep.wealth, fold_oracle(data, rep), rtol=1e-10)


def test_membership_windows_respected(market):
    cal = MembershipCalendar((("AAA", "2000-01-01", "2030-12-31"), ("BBB", "2000-01-01", "2030-12-31"),
                              ("CCC", "2000-01-01", "2019-06-30")))
    rep = run_backtest(BacktestConfig(model="equal_weight", window_len=30), market, cal)
    late = rep.rebalance_dates > np.datetime64("2019-06-30")
    assert np.all(rep.weights[late, 2] == 0) and np.allclose(rep.weights[late, :2], 0.5)


def test_deterministic_files(market, tmp_path):
    cfg = BacktestConfig(model="slp_bl", window_len=40, seed=3)
    a = write_report(run_backtest(cfg, market, everyone(TICKERS)), tmp_path / "a")
    b = write_report(run_backtest(cfg, market, everyone(TICKERS)), tmp_path / "b")
    for x, y in zip(a, b):
        assert filecmp.cmp(x, y, shallow=False)


@pytest.mark.parametrize("model", ["markowitz", "slp_bl"])
def test_no_look_ahead(market, model):
    cfg = BacktestConfig(model=model, window_len=40)
    full = run_backtest(cfg, market, everyone(TICKERS))
    cut_date = np.datetime64("2019-06-15")
    cut = run_backtest(cfg, {t: s.upto(cut_date) for t, s in market.items()}, everyone(TICKERS))
    n = cut.wealth.shape[0]
    assert np.array_equal(full.wealth[:n], cut.wealth)
    k = cut.rebalance_dates.shape[0]
    assert np.array_equal(full.weights[:k], cut.weights)


def test_too_little_history(market):
    data = {t: s.upto(s.dates[99]) for t, s in market.items()}
    with pytest.raises(InsufficientData):
        run_backtest(BacktestConfig(model="equal_weight", window_len=150), data, everyone(TICKERS))


def test_error_annotated_with_date(market):
    cal = MembershipCalendar((("ZZZ", "2000-01-01", "2030-12-31"),))
    with pytest.raises(Exception) as err:
        run_backtest(BacktestConfig(model="markowitz", window_len=30), market, cal)
    assert str(err.value).startswith("rebalance ")


def test_plug_compatible_models(market):
    a = run_backtest(BacktestConfig(model="markowitz", window_len=40), market, everyone(TICKERS))
    b = run_backtest(BacktestConfig(model="slp_bl", window_len=40), market, everyone(TICKERS))
    assert np.array_equal(a.rebalance_dates, b.rebalance_dates)
    assert np.array_equal(a.wealth_dates, b.wealth_dates)


def test_estimate_window_quantities(market):
    est = estimate_window(BacktestConfig(window_len=60), market)
    q = est.quantities
    assert est.tickers == tuple(TICKERS) and q["n"] == 60
    assert q["sigma"].shape == (3, 3) and q["beta_f"].shape == (27,)
    assert np.allclose(q["sigma0"], 0.5 * q["sigma"])
