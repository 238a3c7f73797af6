"""When the view noise itself is uncertain.

Puts an inverse-Wishart prior on the view covariance and compares a brute-force
mixture average with the closed-form Student-t approximation. The t gets
heavier tails as the prior dof shrinks.
"""
import numpy as np

from blat import (ConjugateConfig, NoRoot, FeatureSpec, MarketModel, OmegaPrior, RegressionParams, fiv_conjugate_t,
                  fiv_mixture_mc)

np.set_printoptions(precision=5, suppress=True)

sigma = np.array([[0.03, 0.01], [0.01, 0.02]])
model = MarketModel(sigma=sigma, prior_mean=[0.04, 0.03], prior_cov=0.5 * sigma)
features = FeatureSpec([[1.2, -0.4], [0.3, 0.9]], 0.004 * np.eye(2))
reg = RegressionParams(np.zeros(2), np.zeros(4), alpha=[0.01, 0.0], beta=[0.02, 0.01, -0.01, 0.03])
pick = np.eye(2)

for dof in (4.0, 8.0, 30.0):
    prior = OmegaPrior.inverse_wishart(0.01 * (dof - 3) * np.eye(2), dof)
    mc_mean, mc_cov = fiv_mixture_mc(model, pick, reg, features, prior, 100_000, seed=1)
    print(f"inverse-Wishart dof {dof:>4.0f}: mixture mean {mc_mean}, sd {np.sqrt(np.diag(mc_cov))}")

# the implied prior spread must be reachable by some isotropic view noise
psi = 0.006 * np.eye(2)
for nu in (5.0, 10.0, 50.0):
    t = fiv_conjugate_t(model, pick, reg, features, ConjugateConfig(psi * (nu - 1), nu))
    print(f"conjugate nu' {nu:>4.0f}: location {t.location}, effective dof {t.effective_dof:.0f}, "
          f"sd {np.sqrt(np.diag(t.covariance()))}")

try:
    fiv_conjugate_t(model, pick, reg, features, ConjugateConfig(0.1 * np.eye(2), 5.0))
except NoRoot as exc:
    print("too wide a prior spread:", exc)
