"""Closed-form Gaussian posteriors and predictives.

Three models share one recipe: accumulate a precision matrix and a linear
term from the prior and each Gaussian likelihood, then solve.

* ``blb_*``  -- prior plus noisy views ``P theta = q + eps``.
* ``mbl_*``  -- adds the feature likelihood ``theta = alpha^F + F beta^F + eps^F``
  and generalises the views to ``q + eps = P(alpha + F beta + gamma theta)``.
* ``slp_*``  -- prior plus the feature likelihood only.

Predictives integrate ``r ~ N(theta, Sigma)`` against the posterior, which
adds ``Sigma`` to the posterior covariance.
"""
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._linalg import as_vector, spd_inverse, spd_solve, symmetrize
from .core import PosteriorGaussian
from .errors import ShapeMismatch


@dataclass(frozen=True)
class PredictiveGaussian:
    mean: np.ndarray
    cov: np.ndarray
    posterior: PosteriorGaussian


def _check_dims(model, views=None, features=None):
    m = model.m
    if views is not None and views.m != m:
        raise ShapeMismatch(f"views address {views.m} assets, model has {m}")
    if features is not None and features.m != m:
        raise ShapeMismatch(f"features describe {features.m} assets, model has {m}")


def _solve(precision, linear):
    mean = spd_solve(precision, linear)
    cov = symmetrize(spd_solve(precision, np.eye(precision.shape[0])))
    return PosteriorGaussian(mean=mean, cov=cov, precision=precision)


def _prior_terms(model):
    prior_prec = spd_inverse(model.prior_cov, "prior_cov")
    return prior_prec, prior_prec @ model.prior_mean


def _view_precision(views):
    return np.diag(1.0 / np.diag(views.uncertainty))


def _feature_terms(features, alpha, beta):
    err_prec = spd_inverse(features.error, "omega_f", error="invertible")
    implied = alpha + features.block @ beta
    return err_prec, implied


def _predictive(model, post):
    return PredictiveGaussian(mean=post.mean, cov=model.sigma + post.cov, posterior=post)


def blb_posterior(model, views):
    """Posterior over theta under the prior and the classical noisy views."""
    _check_dims(model, views)
    prior_prec, prior_lin = _prior_terms(model)
    P, vprec = views.pick, _view_precision(views)
    precision = symmetrize(prior_prec + P.T @ vprec @ P)
    return _solve(precision, prior_lin + P.T @ vprec @ views.views)


def blb_predictive(model, views):
    return _predictive(model, blb_posterior(model, views))


def mbl_posterior(model, views, features, reg):
    """Mixed-effect posterior.

    The precision carries ``gamma**2 P^T Omega^-1 P`` (what completing the
    square gives); the linear term carries ``gamma P^T Omega^-1 (q - P alpha - P F beta)``.
    """
    _check_dims(model, views, features)
    prior_prec, prior_lin = _prior_terms(model)
    err_prec, implied = _feature_terms(features, reg.alpha_f, reg.beta_f)
    P, vprec, g = views.pick, _view_precision(views), reg.gamma
    resid = views.views - P @ reg.alpha - P @ (features.block @ reg.beta)
    precision = symmetrize(prior_prec + err_prec + g * g * (P.T @ vprec @ P))
    linear = prior_lin + err_prec @ implied + g * (P.T @ vprec @ resid)
    return _solve(precision, linear)


def mbl_predictive(model, views, features, reg):
    return _predictive(model, mbl_posterior(model, views, features, reg))


def slp_posterior(model, features, reg):
    """Posterior when features act as noisy observations of theta itself."""
    _check_dims(model, features=features)
    prior_prec, prior_lin = _prior_terms(model)
    err_prec, implied = _feature_terms(features, reg.alpha_f, reg.beta_f)
    precision = symmetrize(prior_prec + err_prec)
    return _solve(precision, prior_lin + err_prec @ implied)


def slp_predictive(model, features, reg):
    return _predictive(model, slp_posterior(model, features, reg))


def gaussian_product_marginal(mean1, cov1, mean2, cov2):
    """Distribution N(mean2, cov1 + cov2).

    Its density at ``mean1`` equals the integral over x of
    N(x; mean1, cov1) * N(x; mean2, cov2). ``cov1`` may be zero (a point mass)
    as long as the sum stays positive-definite.
    """
    mean1 = as_vector(mean1, "mean1")
    mean2 = as_vector(mean2, "mean2")
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=float))
    n = mean1.shape[0]
    if mean2.shape[0] != n or cov1.shape != (n, n) or cov2.shape != (n, n):
        raise ShapeMismatch("means and covariances must share one dimension")
    return stats.multivariate_normal(mean=mean2, cov=cov1 + cov2)
