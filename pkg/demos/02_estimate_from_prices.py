"""Estimate every feature-model input from a price history.

Simulates four tickers, computes the nine indicators, and runs the window
estimator used by the backtest. The printout covers the pieces a user usually
wants to eyeball: moments, the indicator error matrix and the regression fit.
"""
import numpy as np

from blat import BacktestConfig, OhlcvSeries, compute_indicators, estimate_window

np.set_printoptions(precision=5, suppress=True, linewidth=110)

gen = np.random.default_rng(7)
dates = np.arange(np.datetime64("2021-01-01"), np.datetime64("2022-06-30"))
dates = dates[np.is_busday(dates)]
n = len(dates)
data = {}
for ticker, drift in zip(("ALFA", "BRVO", "CHRL", "DLTA"), (4e-4, 1e-4, -2e-4, 3e-4)):
    close = 40 * np.exp(np.cumsum(gen.normal(drift, 0.012, n)))
    spread = np.abs(gen.normal(0, 0.004, n))
    data[ticker] = OhlcvSeries(dates, close, close * (1 + spread), close * (1 - spread), close, close,
                               gen.integers(10_000, 90_000, n).astype(float), ticker=ticker)

vec = compute_indicators(data["ALFA"], dates[-1])
print("indicators for ALFA on", vec.date)
for name, v in vec.as_dict().items():
    print(f"  {name:>15s} {v:12.4f}")

est = estimate_window(BacktestConfig(window_len=120), data)
q = est.quantities
print(f"\nwindow {est.window_start} .. {est.window_end}, {q['n']} returns, bandwidth {q['bandwidth']:.4f}")
print("sample means (annualised):", 252 * q["theta0"])
print("indicator error matrix (diagonal):", np.diag(q["omega_f"]))
print("largest standardized slopes per asset:")
for i, t in enumerate(est.tickers):
    block = q["beta_f"][9 * i:9 * i + 9]
    top = np.argsort(-np.abs(block))[:3]
    print(f"  {t}: " + ", ".join(f"{vec.names[k]}={block[k]:+.2e}" for k in top))
for when, note in est.flags:
    print("flag:", when, note)
