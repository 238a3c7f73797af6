"""Domain value objects shared by the inference engines.

All arrays are copied and marked read-only on construction, so instances can
be shared freely between threads.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._linalg import as_square, as_vector, cholesky
from .errors import InvalidDof, NotPositiveDefinite, OutOfRange, ShapeMismatch


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _diag_matrix(u, name):
    u = np.asarray(u, dtype=float)
    if u.ndim <= 1:
        u = np.diag(np.atleast_1d(u))
    u = as_square(u, name)
    if np.any(u - np.diag(np.diag(u))):
        raise ShapeMismatch(f"{name} must be diagonal")
    return u


@dataclass(frozen=True)
class MarketModel:
    """Intrinsic covariance, Gaussian prior on the latent mean, and scalars.

    ``sigma`` is the return covariance around the latent mean, ``prior_mean``
    and ``prior_cov`` define the prior N(prior_mean, prior_cov), ``tau`` is the
    prior scaling used when ``prior_cov = tau * sigma`` and ``delta`` is the
    risk-aversion coefficient.
    """

    sigma: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    tau: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        sigma = as_square(self.sigma, "sigma")
        m = sigma.shape[0]
        prior_cov = as_square(self.prior_cov, "prior_cov")
        if prior_cov.shape != (m, m):
            raise ShapeMismatch(f"prior_cov has shape {prior_cov.shape}, expected {(m, m)}")
        object.__setattr__(self, "sigma", _frozen(sigma))
        object.__setattr__(self, "prior_cov", _frozen(prior_cov))
        object.__setattr__(self, "prior_mean", _frozen(as_vector(self.prior_mean, "prior_mean", m)))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def m(self):
        return self.sigma.shape[0]

    @classmethod
    def from_tau(cls, sigma, prior_mean, tau=1.0, delta=1.0):
        """Model with prior covariance ``tau * sigma``."""
        sigma = np.asarray(sigma, dtype=float)
        return cls(sigma, prior_mean, tau * sigma, tau=tau, delta=delta)


def validate_market_model(model):
    """Raise if any MarketModel invariant fails; otherwise return None."""
    cholesky(model.sigma, "sigma")
    cholesky(model.prior_cov, "prior_cov")
    if not (0.0 < model.tau <= 1.0):
        raise OutOfRange("tau", model.tau, "(0, 1]")
    if not model.delta >= 0.0:
        raise OutOfRange("delta", model.delta, "[0, inf)")


@dataclass(frozen=True)
class ViewSpec:
    """k portfolio views: pick matrix P (k x m), view vector q, diagonal Omega.

    ``uncertainty`` may be given as a vector of view variances or as a
    diagonal matrix; it is stored as the matrix.
    """

    pick: np.ndarray
    views: np.ndarray
    uncertainty: np.ndarray

    def __post_init__(self):
        pick = np.atleast_2d(np.asarray(self.pick, dtype=float))
        k = pick.shape[0]
        if np.any(np.all(pick == 0.0, axis=1)):
            raise ShapeMismatch("pick has an all-zero row")
        unc = _diag_matrix(self.uncertainty, "uncertainty")
        if unc.shape != (k, k):
            raise ShapeMismatch(f"uncertainty has shape {unc.shape}, expected {(k, k)}")
        if np.any(np.diag(unc) <= 0.0):
            raise OutOfRange("uncertainty", np.diag(unc).min(), "diagonal must be > 0")
        object.__setattr__(self, "pick", _frozen(pick))
        object.__setattr__(self, "views", _frozen(as_vector(self.views, "views", k)))
        object.__setattr__(self, "uncertainty", _frozen(unc))

    @property
    def k(self):
        return self.pick.shape[0]

    @property
    def m(self):
        return self.pick.shape[1]


def build_block_feature(per_asset):
    """Stack per-asset feature vectors into the block-diagonal m x (d*m) matrix.

    >>> build_block_feature([[1, 2], [3, 4]])
    array([[1., 2., 0., 0.],
           [0., 0., 3., 4.]])
    """
    vecs = [np.atleast_1d(np.asarray(f, dtype=float)) for f in per_asset]
    if not vecs:
        raise ShapeMismatch("need at least one asset")
    d = vecs[0].shape[0]
    if d < 1 or any(v.ndim != 1 or v.shape[0] != d for v in vecs):
        raise ShapeMismatch("per-asset feature vectors must share one length d >= 1")
    m = len(vecs)
    block = np.zeros((m, d * m))
    for i, v in enumerate(vecs):
        block[i, d * i:d * (i + 1)] = v
    return block


@dataclass(frozen=True)
class FeatureSpec:
    """Per-asset features f_i, their block matrix F and the error matrix Omega^F."""

    per_asset: np.ndarray
    error: np.ndarray
    block: np.ndarray = field(init=False)

    def __post_init__(self):
        per_asset = np.asarray(self.per_asset, dtype=float)
        if per_asset.ndim == 1:
            per_asset = per_asset[:, None]
        block = build_block_feature(list(per_asset))
        m = per_asset.shape[0]
        err = as_square(self.error, "omega_f")
        if err.shape != (m, m):
            raise ShapeMismatch(f"omega_f has shape {err.shape}, expected {(m, m)}")
        scale = max(1.0, float(np.max(np.abs(err))))
        if not np.allclose(err, err.T, rtol=0.0, atol=1e-10 * scale):
            raise NotPositiveDefinite("omega_f", "not symmetric")
        if np.linalg.eigvalsh(0.5 * (err + err.T)).min() < -1e-10 * scale:
            raise NotPositiveDefinite("omega_f", "has a negative eigenvalue")
        object.__setattr__(self, "per_asset", _frozen(per_asset))
        object.__setattr__(self, "error", _frozen(err))
        object.__setattr__(self, "block", _frozen(block))

    @property
    def m(self):
        return self.per_asset.shape[0]

    @property
    def d(self):
        return self.per_asset.shape[1]


@dataclass(frozen=True)
class RegressionParams:
    """Intercepts and slopes of the two feature regressions plus the view scale.

    ``alpha_f``/``beta_f`` belong to the theta <- F regression, ``alpha``/``beta``
    and ``gamma`` to the view regression. Slope vectors have length d*m and are
    laid out asset by asset.
    """

    alpha_f: np.ndarray
    beta_f: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        m = as_vector(self.alpha_f, "alpha_f").shape[0]
        beta_f = as_vector(self.beta_f, "beta_f")
        if beta_f.shape[0] % m:
            raise ShapeMismatch("beta_f length must be a multiple of m")
        object.__setattr__(self, "alpha_f", _frozen(as_vector(self.alpha_f, "alpha_f")))
        object.__setattr__(self, "beta_f", _frozen(beta_f))
        object.__setattr__(self, "alpha", _frozen(as_vector(self.alpha, "alpha", m)))
        object.__setattr__(self, "beta", _frozen(as_vector(self.beta, "beta", beta_f.shape[0])))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def classical(cls, m, d):
        """All regression terms zero and gamma = 1 (the plain noisy-views model)."""
        z, zb = np.zeros(m), np.zeros(m * d)
        return cls(z, zb, z, zb, 1.0)

    @property
    def d(self):
        return self.beta_f.shape[0] // self.alpha_f.shape[0]

    def beta_blocks(self):
        """Per-asset slices of ``beta`` as an (m, d) array."""
        return self.beta.reshape(self.alpha.shape[0], self.d)


@dataclass(frozen=True)
class PosteriorGaussian:
    """Gaussian law over the latent mean and the precision matrix behind it."""

    mean: np.ndarray
    cov: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        for name in ("mean", "cov", "precision"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class StudentTPredictive:
    """Multivariate t with location, scale matrix and the nominal dof nu'.

    The density itself has ``dof - m + 1`` degrees of freedom (what integrating
    an inverse-Wishart(Psi', nu') covariance out of a Gaussian gives); that
    number is exposed as ``effective_dof`` and used by every method here.
    """

    location: np.ndarray
    scale: np.ndarray
    dof: float

    def __post_init__(self):
        loc = _frozen(np.atleast_1d(self.location))
        m = loc.shape[0]
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scale", _frozen(as_square(self.scale, "scale")))
        object.__setattr__(self, "dof", float(self.dof))
        if self.dof <= m - 1:
            raise InvalidDof(f"dof={self.dof} must exceed m - 1 = {m - 1}")

    @property
    def m(self):
        return self.location.shape[0]

    @property
    def effective_dof(self):
        return self.dof - self.m + 1

    def covariance(self):
        nu = self.effective_dof
        if nu <= 2:
            raise InvalidDof(f"covariance undefined for effective dof {nu} <= 2")
        return nu / (nu - 2.0) * np.asarray(self.scale)

    def distribution(self):
        return stats.multivariate_t(loc=self.location, shape=self.scale, df=self.effective_dof)

    def pdf(self, x):
        return self.distribution().pdf(x)

    def logpdf(self, x):
        return self.distribution().logpdf(x)
