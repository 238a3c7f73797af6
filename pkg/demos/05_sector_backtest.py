"""Monthly-rebalanced backtest on the bundled sector membership calendar.

No market data ships with the package, so this simulates one price series per
ticker that was ever a member; pass a CSV path to use real data instead:

    python demos/05_sector_backtest.py prices.csv
"""
import sys
import tempfile

import numpy as np

from blat import BacktestConfig, OhlcvSeries, load_ohlcv, packaged_membership, run_backtest, write_report

calendar = packaged_membership("spdr_sectors")

if len(sys.argv) > 1:
    data = load_ohlcv(sys.argv[1])
else:
    gen = np.random.default_rng(11)
    dates = np.arange(np.datetime64("2017-01-01"), np.datetime64("2019-12-31"))
    dates = dates[np.is_busday(dates)]
    data = {}
    for t in calendar.tickers:
        close = 30 * np.exp(np.cumsum(gen.normal(3e-4, 0.011, len(dates))))
        spread = np.abs(gen.normal(0, 0.003, len(dates)))
        data[t] = OhlcvSeries(dates, close, close * (1 + spread), close * (1 - spread), close, close,
                              gen.integers(1e5, 1e6, len(dates)).astype(float), ticker=t)

header = f"{'model':>12s} {'window':>6s} {'cum.ret':>8s} {'CAGR':>7s} {'Sharpe':>7s} {'maxDD':>7s} {'vol':>7s} {'turn%':>6s}"
print(header)
for window in (50, 100, 150):
    for model in ("equal_weight", "markowitz", "slp_bl"):
        rep = run_backtest(BacktestConfig(model=model, window_len=window), data, calendar)
        x = rep.metrics
        print(f"{model:>12s} {window:>6d} {x['cumulative_return']:8.3f} {x['cagr']:7.3f} {x['sharpe']:7.2f} "
              f"{x['max_drawdown']:7.3f} {x['volatility']:7.3f} {x['avg_turnover']:6.1f}")

out = tempfile.mkdtemp(prefix="blat_")
write_report(rep, out)
print("last report written to", out)
