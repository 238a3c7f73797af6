"""Three ways of blending a market prior with extra information.

Starts from a three-asset market, adds two analyst views, then lets a set of
per-asset signals play the role of views. Prints the posterior means side by
side so the pull of each source is visible.
"""
import numpy as np

from blat import (FeatureSpec, MarketModel, RegressionParams, ViewSpec, blb_posterior, mbl_posterior,
                  reverse_optimize, slp_posterior)

np.set_printoptions(precision=4, suppress=True)

sigma = np.array([[0.040, 0.012, 0.006],
                  [0.012, 0.025, 0.004],
                  [0.006, 0.004, 0.010]])
tau = 0.5
cap_weights = np.array([0.5, 0.3, 0.2])

# equilibrium returns implied by cap weights
prior_mean = reverse_optimize(2.5, sigma, tau * sigma, cap_weights)
model = MarketModel(sigma=sigma, prior_mean=prior_mean, prior_cov=tau * sigma)
print("implied equilibrium means:", prior_mean)

# asset 0 beats asset 1 by 2%, asset 2 returns 5%
views = ViewSpec(pick=[[1, -1, 0], [0, 0, 1]], views=[0.02, 0.05], uncertainty=[0.001, 0.002])
classical = blb_posterior(model, views)
print("with two views:          ", classical.mean)

# one signal per asset, read as a noisy estimate of the mean
signal = np.array([[0.8], [-0.3], [0.1]])
features = FeatureSpec(signal, 0.002 * np.eye(3))
reg = RegressionParams(alpha_f=np.full(3, 0.03), beta_f=np.array([0.05, 0.05, 0.05]),
                       alpha=np.zeros(3), beta=np.zeros(3))
print("signal-implied means:    ", reg.alpha_f + features.block @ reg.beta_f)
print("signals only:            ", slp_posterior(model, features, reg).mean)
print("views and signals:       ", mbl_posterior(model, views, features, reg).mean)

# a nearly flat signal error leaves the classical answer untouched
vague = FeatureSpec(signal, 1e12 * np.eye(3))
gap = np.abs(mbl_posterior(model, views, vague, RegressionParams.classical(3, 1)).mean - classical.mean).max()
print(f"vague signals change the view posterior by {gap:.1e}")
