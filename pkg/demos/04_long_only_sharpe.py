"""Long-only maximum Sharpe weights with a solver certificate.

Compares the constrained optimum with the unconstrained tangency portfolio,
shows the upper bound the solver proves, and what happens when no asset has a
positive expected return.
"""
import time

import numpy as np

from blat import max_sharpe_longonly, sharpe, unconstrained_mv

np.set_printoptions(precision=4, suppress=True)
gen = np.random.default_rng(3)

m = 8
a = gen.normal(size=(m, m))
cov = 0.02 * (a @ a.T / m + 0.2 * np.eye(m))
mean = gen.normal(0.04, 0.05, m)

tangency = unconstrained_mv(mean, cov, 1.0).w
print("tangency (normalised):", tangency / tangency.sum())

t0 = time.perf_counter()
res = max_sharpe_longonly(mean, cov)
print(f"long-only weights:     {res.w}  ({time.perf_counter() - t0:.2f}s)")
print(f"achieved Sharpe {res.sharpe:.6f}, proven bound {res.bound:.6f}")
print(f"equal weight Sharpe {sharpe(np.full(m, 1 / m), mean, cov):.6f}")

res = max_sharpe_longonly(-np.abs(mean), cov)
print("all means negative ->", res.fallback, res.w)
