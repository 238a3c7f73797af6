"""Rolling-window backtests with monthly rebalancing.

On the first trading day of every month the engine estimates a mean and a
covariance from the trailing window, picks long-only max-Sharpe weights (or
equal weights) at the close, and holds them, letting them drift with daily
returns, until the next rebalance.
"""
import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .core import FeatureSpec, MarketModel, RegressionParams
from .errors import Bankrupt, BlatError, ConfigError, EmptyUniverse, InsufficientData, InsufficientHistory, \
    NoRoot
from .fiv import OMEGA_BRACKET, ConjugateConfig, component_cov_trace, fiv_conjugate_t
from .hyper import ObservationPanel, error_matrix, estimate_hyperparameters, gls_fit, sample_moments, \
    standardize, with_ridge
from .indicators import WARMUP, indicator_frame
from .market_data import PriceTable, active_universe, build_return_panel, window_bounds
from .optimizer import WeightVector, max_sharpe_longonly
from .posterior import slp_predictive

MODELS = ("equal_weight", "markowitz", "slp_bl", "fiv_bl")
TRADING_DAYS = 252
METRIC_NAMES = ("cumulative_return", "cagr", "sharpe", "max_drawdown", "volatility", "avg_turnover")


@dataclass(frozen=True)
class BacktestConfig:
    model: str = "slp_bl"
    window_len: int = 100
    rebalance: str = "monthly"
    tau: float = 0.5
    delta: float = 1.0
    seed: int = 0
    regress_on: str = "returns"
    covariance_mode: str = "predictive"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}, got {self.model!r}")
        if int(self.window_len) != self.window_len or self.window_len < 2:
            raise ConfigError(f"window_len must be an integer >= 2, got {self.window_len!r}")
        if self.rebalance != "monthly":
            raise ConfigError(f"rebalance must be 'monthly', got {self.rebalance!r}")
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau!r}")
        if self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta!r}")
        if self.regress_on not in ("returns", "prices"):
            raise ConfigError(f"regress_on must be 'returns' or 'prices', got {self.regress_on!r}")
        if self.covariance_mode not in ("predictive", "posterior"):
            raise ConfigError(f"covariance_mode must be 'predictive' or 'posterior', got {self.covariance_mode!r}")
        object.__setattr__(self, "window_len", int(self.window_len))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass
class BacktestReport:
    """Outcome of one run.

    ``weights`` has one row per rebalance date and one column per ticker in
    ``tickers`` (zeros for names outside the universe). ``wealth`` starts at 1
    on the first rebalance date. ``flags`` lists (date, note) pairs for ridges,
    exclusions, fallbacks and clamps.
    """

    config: BacktestConfig
    tickers: tuple
    rebalance_dates: np.ndarray
    weights: np.ndarray
    wealth_dates: np.ndarray
    wealth: np.ndarray
    metrics: dict
    turnover: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def drift_weights(w, period_returns):
    """Weights after one period: w_i (1 + r_i) / sum_j w_j (1 + r_j)."""
    arr = np.asarray(w, dtype=float)
    grown = arr * (1.0 + np.asarray(period_returns, dtype=float))
    total = grown.sum()
    if not total > 0:
        raise Bankrupt(f"portfolio value factor {total} is not positive")
    return WeightVector(w=grown / total)


def max_drawdown(wealth):
    wealth = np.asarray(wealth, dtype=float)
    return float(np.max(1.0 - wealth / np.maximum.accumulate(wealth)))


def turnover(new, drifted):
    """One-way turnover 0.5 * sum |new - drifted| as a fraction."""
    return 0.5 * float(np.sum(np.abs(np.asarray(new, dtype=float) - np.asarray(drifted, dtype=float))))


def compute_metrics(wealth, dates, new_weights=(), drifted_weights=()):
    """Performance summary of a wealth path.

    ``new_weights``/``drifted_weights`` pair each rebalance after the first with
    the drifted holdings it replaced; ``avg_turnover`` is their mean one-way
    turnover in percent (NaN when there is none).
    """
    wealth = np.asarray(wealth, dtype=float)
    if wealth.shape[0] < 2:
        raise InsufficientData("need at least 2 wealth points")
    dates = np.asarray(dates, dtype="datetime64[D]")
    daily = wealth[1:] / wealth[:-1] - 1.0
    growth = wealth[-1] / wealth[0]
    days = float((dates[-1] - dates[0]) / np.timedelta64(1, "D"))
    cagr = growth ** (365.25 / days) - 1.0 if days > 0 else float("nan")
    vol = float(np.std(daily, ddof=1) * np.sqrt(TRADING_DAYS)) if daily.shape[0] > 1 else float("nan")
    mean = float(np.mean(daily))
    sharpe = mean * TRADING_DAYS / vol if vol > 0 else float("nan")
    turns = [turnover(a, b) for a, b in zip(new_weights, drifted_weights)]
    return {
        "cumulative_return": float(growth - 1.0),
        "cagr": float(cagr),
        "sharpe": float(sharpe),
        "max_drawdown": max_drawdown(wealth),
        "volatility": vol,
        "avg_turnover": 100.0 * float(np.mean(turns)) if turns else float("nan"),
    }


def _daily_returns(adj):
    """Close-to-close returns against the last available price; 0 where a price is missing."""
    out = np.zeros_like(adj)
    for j in range(adj.shape[1]):
        have = np.isfinite(adj[:, j])
        idx = np.flatnonzero(have)
        if idx.size > 1:
            out[idx[1:], j] = adj[idx[1:], j] / adj[idx[:-1], j] - 1.0
    return out


def rebalance_rows(dates, first_row):
    """Rows holding the first trading day of a month, at or after ``first_row``."""
    months = dates.astype("datetime64[M]")
    starts = np.flatnonzero(np.concatenate([[True], months[1:] != months[:-1]]))
    return starts[starts >= first_row]


class _Context:
    """Precomputed aligned prices, returns and indicator features."""

    def __init__(self, config, data):
        self.table = PriceTable.from_series(data)
        self.returns = _daily_returns(self.table.adj_close)
        n, t = self.table.adj_close.shape
        self.features = np.full((n, t, 9), np.nan)
        for j, ticker in enumerate(self.table.tickers):
            s = data[ticker]
            vals, _ = indicator_frame(s, obv_window=config.window_len)
            self.features[np.searchsorted(self.table.dates, s.dates), j] = vals


def _flag(flags, date, note):
    flags.append((str(date), note))


def _ridged(a, name, flags, date):
    out, ridge = with_ridge(a, name)
    if ridge:
        _flag(flags, date, f"ridge {ridge:.3g} added to {name}")
    return out


def _feature_estimates(config, rets, feats, prices, flags, date):
    """Hyperparameters for the feature models.

    Returns ``(MarketModel, FeatureSpec, RegressionParams, ridged sigma, raw)``
    where ``raw`` holds the unridged estimates for reporting.
    """
    z_win, z_now = standardize(feats[:-1], feats[-1])
    n, m = rets.shape
    theta0, sigma = sample_moments(rets)
    sig = _ridged(sigma, "sigma", flags, date)
    if config.regress_on == "returns":
        hp = estimate_hyperparameters(rets, z_win, config.tau, on_singular="pinv")
        omega_f = _ridged(hp.omega_f, "omega_f", flags, date)
        reg = RegressionParams(hp.alpha_f, hp.beta_f, hp.alpha, hp.beta)
        dropped = int(hp.dropped.sum())
        raw_omega, h = hp.omega_f, hp.bandwidth
    else:
        # regress next-day price levels, then map the implied prices back to returns
        level = prices[-1]
        panel = ObservationPanel(prices[1:], z_win)
        err = error_matrix(panel, on_singular="pinv")
        scale = np.diag(level)
        om_p = _ridged(err.omega_f, "omega_f", flags, date)
        w_theta = _ridged(err.omega_f + scale @ sigma @ scale, "omega_f_plus_sigma", flags, date)
        a_f, b_f = gls_fit(panel, w_theta, on_singular="pinv")
        a, b = gls_fit(panel, om_p, on_singular="pinv")
        inv = np.repeat(1.0 / level, z_win.shape[2])
        reg = RegressionParams(a_f / level - 1.0, b_f * inv, a / level - 1.0, b * inv)
        raw_omega, h = err.omega_f / np.outer(level, level), err.bandwidth
        omega_f = _ridged(raw_omega, "omega_f", flags, date)
        dropped = int(err.dropped.sum())
    if dropped:
        _flag(flags, date, f"{dropped} zero-variance feature columns dropped")
    model = MarketModel(sigma=sig, prior_mean=theta0, prior_cov=config.tau * sig, tau=config.tau,
                        delta=config.delta)
    raw = {"theta0": theta0, "sigma": sigma, "sigma0": config.tau * sigma, "omega_f": raw_omega,
           "bandwidth": h, "n": n}
    return model, FeatureSpec(z_now, omega_f), reg, sig, raw


def _fiv_moments(model, features, reg, sigma, flags, date):
    m = model.m
    pick = np.eye(m)
    cfg = ConjugateConfig(psi_prime=(np.trace(sigma) / m) * np.eye(m), nu_prime=m + 2)
    try:
        t = fiv_conjugate_t(model, pick, reg, features, cfg)
    except NoRoot:
        goal = np.trace(cfg.sigma_prime0)
        ends = [abs(component_cov_trace(model, pick, features, w) - goal) for w in OMEGA_BRACKET]
        w0 = OMEGA_BRACKET[int(np.argmin(ends))]
        _flag(flags, date, f"omega0 clamped to {w0:g}")
        t = fiv_conjugate_t(model, pick, reg, features, replace(cfg, omega0=w0 * np.eye(m)))
    return t.location, t.covariance()


def _target(config, ctx, row, tickers, flags):
    """Mean and covariance handed to the optimizer at one rebalance."""
    date = ctx.table.dates[row]
    start, end = window_bounds(ctx.table, date, config.window_len)
    cols = [ctx.table.column(t) for t in tickers]
    prices = ctx.table.adj_close[start:end + 1][:, cols]
    rets = prices[1:] / prices[:-1] - 1.0
    if config.model == "markowitz":
        mean, sigma = sample_moments(rets)
        return mean, _ridged(sigma, "sigma", flags, date)
    feats = ctx.features[start:end + 1][:, cols]
    model, features, reg, sig, _ = _feature_estimates(config, rets, feats, prices, flags, date)
    if config.model == "fiv_bl":
        return _fiv_moments(model, features, reg, sig, flags, date)
    pred = slp_predictive(model, features, reg)
    return pred.mean, pred.cov if config.covariance_mode == "predictive" else pred.posterior.cov


def _eligible(config, ctx, universe, date, flags):
    """Tickers with complete prices and warmed-up indicators over the window."""
    panel = build_return_panel(ctx.table, universe, date, config.window_len)
    start, end = window_bounds(ctx.table, date, config.window_len)
    tickers = [t for t in panel.tickers
               if np.all(np.isfinite(ctx.features[start:end + 1, ctx.table.column(t)]))]
    short = sorted(set(panel.excluded) | (set(panel.tickers) - set(tickers)))
    if short:
        _flag(flags, date, "excluded " + " ".join(short))
    if not tickers:
        raise EmptyUniverse(f"no eligible ticker on {date}")
    return tickers


def _weights_at(config, ctx, calendar, row, flags):
    date = ctx.table.dates[row]
    active = active_universe(calendar, date)
    missing = [t for t in active if t not in ctx.table.tickers]
    if missing:
        _flag(flags, date, "no price data for " + " ".join(missing))
    tickers = _eligible(config, ctx, [t for t in active if t in ctx.table.tickers], date, flags)
    m = len(tickers)
    if config.model == "equal_weight" or m == 1:
        w = np.full(m, 1.0 / m)
    else:
        mean, cov = _target(config, ctx, row, tickers, flags)
        res = max_sharpe_longonly(mean, cov, seed=config.seed)
        if res.fallback:
            _flag(flags, date, f"optimizer fallback: {res.fallback}")
        w = res.w
    full = np.zeros(len(ctx.table.tickers))
    full[[ctx.table.column(t) for t in tickers]] = w
    return full


def _annotate(exc, date):
    exc.rebalance_date = str(date)
    if exc.args:
        exc.args = (f"rebalance {date}: {exc.args[0]}",) + exc.args[1:]
    return exc


def run_backtest(config, data, calendar):
    """Run the rolling-window protocol; deterministic in (config, data, calendar)."""
    ctx = _Context(config, data)
    dates = ctx.table.dates
    rows = rebalance_rows(dates, config.window_len + WARMUP - 1)
    if rows.size == 0:
        raise InsufficientData(
            f"no rebalance date has {config.window_len} returns plus {WARMUP - 1} warm-up rows of history")
    flags, weights = [], []
    for row in rows:
        try:
            weights.append(_weights_at(config, ctx, calendar, row, flags))
        except BlatError as exc:
            raise _annotate(exc, dates[row]) from None
    weights = np.array(weights)

    first = rows[0]
    wealth = np.empty(dates.shape[0] - first)
    wealth[0] = 1.0
    held = weights[0]
    news, drifted = [], []
    k = 1
    for j in range(first + 1, dates.shape[0]):
        r = ctx.returns[j]
        try:
            wealth[j - first] = wealth[j - first - 1] * (1.0 + held @ r)
            held = drift_weights(held, r).w
        except Bankrupt as exc:
            raise _annotate(exc, dates[j]) from None
        if not wealth[j - first] > 0:
            raise _annotate(Bankrupt(f"wealth {wealth[j - first]} is not positive"), dates[j])
        if k < rows.size and rows[k] == j:
            news.append(weights[k])
            drifted.append(held)
            held = weights[k]
            k += 1
    metrics = compute_metrics(wealth, dates[first:], news, drifted)
    return BacktestReport(
        config=config, tickers=ctx.table.tickers, rebalance_dates=dates[rows], weights=weights,
        wealth_dates=dates[first:], wealth=wealth, metrics=metrics,
        turnover=[turnover(a, b) for a, b in zip(news, drifted)], flags=flags)


@dataclass
class WindowEstimate:
    tickers: tuple
    window_start: np.datetime64
    window_end: np.datetime64
    quantities: dict
    flags: list


def estimate_window(config, data, window_end=None):
    """Every hyperparameter the feature models use, for one window.

    The window holds ``config.window_len`` returns ending at ``window_end``
    (default: the last date in ``data``) over all tickers with complete data.
    """
    ctx = _Context(config, data)
    dates = ctx.table.dates
    if dates.shape[0] == 0:
        raise InsufficientData("no price rows")
    date = dates[-1] if window_end is None else np.datetime64(window_end, "D")
    start, end = window_bounds(ctx.table, date, config.window_len)
    if start < WARMUP - 1:
        raise InsufficientHistory(
            f"window of {config.window_len} returns needs {config.window_len + WARMUP} rows, have {end + 1}")
    flags = []
    tickers = _eligible(config, ctx, ctx.table.tickers, dates[end], flags)
    cols = [ctx.table.column(t) for t in tickers]
    prices = ctx.table.adj_close[start:end + 1][:, cols]
    rets = prices[1:] / prices[:-1] - 1.0
    feats = ctx.features[start:end + 1][:, cols]
    _, _, reg, _, raw = _feature_estimates(config, rets, feats, prices, flags, dates[end])
    q = dict(raw)
    q.update(alpha_f=reg.alpha_f, beta_f=reg.beta_f, alpha=reg.alpha, beta=reg.beta)
    return WindowEstimate(tuple(tickers), dates[start + 1], dates[end], q, flags)


def fmt(x):
    return format(float(x), ".12g")


def write_report(report, outdir):
    """Write metrics.csv, wealth.csv, weights.csv and flags.csv into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    cfg = report.config

    def dump(name, header, rows):
        with open(os.path.join(outdir, name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    dump("metrics.csv", ("model", "window_len") + METRIC_NAMES,
         [[cfg.model, cfg.window_len] + [fmt(report.metrics[k]) for k in METRIC_NAMES]])
    dump("wealth.csv", ("date", "wealth"),
         [[str(d), fmt(v)] for d, v in zip(report.wealth_dates, report.wealth)])
    dump("weights.csv", ("date",) + tuple(report.tickers),
         [[str(d)] + [fmt(v) for v in row] for d, row in zip(report.rebalance_dates, report.weights)])
    dump("flags.csv", ("date", "note"), report.flags)
    return [os.path.join(outdir, n) for n in ("metrics.csv", "wealth.csv", "weights.csv", "flags.csv")]
