"""Hyperparameter estimation from a window of returns and per-asset features.

The pipeline: sample moments for Sigma (and a Markowitz prior), a KDE
rule-of-thumb bandwidth that scales feature variances, per-asset OLS slopes
giving the feature error matrix Omega^F = B H B^T, and GLS fits of the two
feature regressions.
"""
from dataclasses import dataclass, field

import numpy as np

from ._linalg import as_square, as_vector, is_positive_definite, spd_inverse, symmetrize
from .errors import InsufficientData, NotPositiveDefinite, OutOfRange, ShapeMismatch, SingularDesign
from .fiv import ConjugateConfig

RIDGE_REL = 1e-8
RIDGE_FLOOR = 1e-12
_GRAM_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ObservationPanel:
    """Aligned observations: returns (n, m), features (n, m, d), optional dates."""

    returns: np.ndarray
    features: np.ndarray = None
    dates: tuple = None

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        object.__setattr__(self, "returns", r)
        if self.features is not None:
            f = np.asarray(self.features, dtype=float)
            if f.ndim == 2:
                f = f[:, :, None]
            if f.shape[:2] != r.shape:
                raise ShapeMismatch(f"features {f.shape} do not align with returns {r.shape}")
            object.__setattr__(self, "features", f)
        if self.dates is not None and len(self.dates) != r.shape[0]:
            raise ShapeMismatch("dates do not align with returns")

    @property
    def n(self):
        return self.returns.shape[0]

    @property
    def m(self):
        return self.returns.shape[1]

    @property
    def d(self):
        return 0 if self.features is None else self.features.shape[2]

    def feature_blocks(self):
        """Block-diagonal F_l for every observation, shape (n, m, d*m)."""
        n, m, d = self.features.shape
        out = np.zeros((n, m, d * m))
        for i in range(m):
            out[:, i, d * i:d * (i + 1)] = self.features[:, i, :]
        return out


@dataclass(frozen=True)
class ErrorMatrixEstimate:
    bandwidth: float
    scaled_var: np.ndarray
    ols_block: np.ndarray
    omega_f: np.ndarray
    intercepts: np.ndarray = None
    dropped: np.ndarray = None


def _returns_of(panel):
    if isinstance(panel, ObservationPanel):
        return panel.returns
    r = np.asarray(panel, dtype=float)
    return r[:, None] if r.ndim == 1 else r


def sample_moments(panel):
    """Sample mean and unbiased (n - 1) covariance of the returns."""
    r = _returns_of(panel)
    if r.shape[0] < 2:
        raise InsufficientData(f"need at least 2 observations, got {r.shape[0]}")
    m = r.shape[1]
    return r.mean(axis=0), np.cov(r, rowvar=False, ddof=1).reshape(m, m)


def reverse_optimize(delta, sigma, sigma0, w_cap):
    """Prior mean delta (Sigma + Sigma0) w_cap implied by market-cap weights."""
    sigma = as_square(sigma, "sigma")
    sigma0 = as_square(sigma0, "sigma0")
    w_cap = as_vector(w_cap, "w_cap", sigma.shape[0])
    if sigma0.shape != sigma.shape:
        raise ShapeMismatch("sigma and sigma0 must have the same shape")
    if abs(w_cap.sum() - 1.0) > 1e-8:
        raise OutOfRange("w_cap", w_cap.sum(), "entries must sum to 1")
    return delta * (sigma + sigma0) @ w_cap


def kde_bandwidth(dm, n):
    """Rule-of-thumb bandwidth (4 / (dm + 2))**(2 / (dm + 4)) * n**(-2 / (dm + 4))."""
    if dm < 1 or n < 1:
        raise OutOfRange("dm, n", (dm, n), ">= 1")
    p = 2.0 / (dm + 4.0)
    return (4.0 / (dm + 2.0)) ** p * float(n) ** (-p)


def zero_variance(x, axis=0):
    x = np.asarray(x, dtype=float)
    scale = np.maximum(1.0, np.max(np.abs(x), axis=axis)) ** 2
    return np.var(x, axis=axis) <= 1e-20 * scale


def _solve_gram(gram, rhs, on_singular, what):
    cond = np.linalg.cond(gram) if gram.size else 1.0
    if np.isfinite(cond) and cond < _GRAM_COND_LIMIT:
        return np.linalg.solve(gram, rhs)
    if on_singular == "pinv":
        return np.linalg.lstsq(gram, rhs, rcond=None)[0]
    raise SingularDesign(f"{what}: design is singular (condition number {cond:.3g})")


def gls_fit(panel, weight, on_singular="raise"):
    """GLS / Gaussian maximum-likelihood fit of r_l = alpha + F_l beta + eps.

    ``eps ~ N(0, weight)`` with one constant covariance across observations.
    Features with zero in-sample variance get beta = 0. ``on_singular="pinv"``
    returns the minimum-norm solution instead of raising SingularDesign.
    Returns ``(alpha, beta)`` with beta laid out asset by asset.
    """
    if panel.features is None:
        raise ShapeMismatch("panel has no features")
    r, f = panel.returns, panel.features
    n, m, d = f.shape
    w_inv = spd_inverse(weight, "weight")
    if w_inv.shape != (m, m):
        raise ShapeMismatch("weight must be m x m")
    r_bar, f_bar = r.mean(axis=0), f.mean(axis=0)
    r_c, f_c = r - r_bar, f - f_bar
    # F_l is block-diagonal, so the Gram matrix is assembled from the raw (n, m, d) features
    gram = np.einsum("lia,ij,ljb->iajb", f_c, w_inv, f_c, optimize=True).reshape(m * d, m * d)
    rhs = np.einsum("lia,ij,lj->ia", f_c, w_inv, r_c, optimize=True).reshape(-1)
    active = ~zero_variance(f, axis=0).reshape(-1)
    beta = np.zeros(m * d)
    if active.any():
        beta[active] = _solve_gram(gram[np.ix_(active, active)], rhs[active], on_singular, "gls_fit")
    return r_bar - np.einsum("ia,ia->i", f_bar, beta.reshape(m, d)), beta


def error_matrix(panel, on_singular="raise"):
    """Feature error matrix from per-asset OLS slopes and KDE-scaled variances.

    H = diag(h * Var(f_ij)), B is block-diagonal with asset i's OLS slopes of
    r_i on f_i, and Omega^F = B H B^T. Zero-variance features are dropped: slope
    and H entry are 0 and ``dropped`` marks them.
    """
    if panel.features is None:
        raise ShapeMismatch("panel has no features")
    n, m, d = panel.features.shape
    if n < d + 2:
        raise InsufficientData(f"need n >= d + 2 = {d + 2} observations, got {n}")
    h = kde_bandwidth(d * m, n)
    dropped = zero_variance(panel.features, axis=0)
    var = np.where(dropped, 0.0, panel.features.var(axis=0, ddof=1))
    slopes = np.zeros((m, d))
    intercepts = np.zeros(m)
    for i in range(m):
        keep = ~dropped[i]
        x = np.column_stack([np.ones(n), panel.features[:, i, keep]])
        y = panel.returns[:, i]
        coef = _solve_gram(x.T @ x, x.T @ y, on_singular, f"error_matrix asset {i}")
        intercepts[i] = coef[0]
        slopes[i, keep] = coef[1:]
    block = np.zeros((m, d * m))
    for i in range(m):
        block[i, d * i:d * (i + 1)] = slopes[i]
    scaled = np.diag(h * var.reshape(-1))
    omega_f = symmetrize(block @ scaled @ block.T)
    return ErrorMatrixEstimate(h, scaled, block, omega_f, intercepts, dropped)


def niw_defaults(m):
    """Weakly informative inverse-Wishart defaults: Psi' = I_m, nu' = m + 2."""
    if m < 1:
        raise OutOfRange("m", m, ">= 1")
    return ConjugateConfig(psi_prime=np.eye(m), nu_prime=m + 2)


def with_ridge(a, name="matrix"):
    """Return ``(a + ridge * I, ridge)``, ridge = 0 when ``a`` is already PD.

    Otherwise ridge = 1e-8 * trace / m (floored at 1e-12).
    """
    a = symmetrize(as_square(a, name))
    if is_positive_definite(a):
        return a, 0.0
    m = a.shape[0]
    ridge = max(RIDGE_REL * float(np.trace(a)) / m, RIDGE_FLOOR)
    out = a + ridge * np.eye(m)
    if not is_positive_definite(out):
        raise NotPositiveDefinite(name, "still indefinite after ridge")
    return out, ridge


def standardize(window, current):
    """z-score features column-wise over ``window`` (n, m, d) and apply to ``current`` (m, d).

    Constant columns map to 0.
    """
    mu = window.mean(axis=0)
    sd = window.std(axis=0, ddof=1)
    flat = zero_variance(window, axis=0)
    sd = np.where(flat, 1.0, sd)
    z_win = np.where(flat, 0.0, (window - mu) / sd)
    z_cur = np.where(flat, 0.0, (current - mu) / sd)
    return z_win, z_cur


@dataclass(frozen=True)
class Hyperparameters:
    """Everything estimated for one window.

    ``theta0`` is the sample-mean (Markowitz) prior and ``sigma0 = tau * sigma``.
    ``alpha_f``/``beta_f`` come from GLS with weight Omega^F + Sigma,
    ``alpha``/``beta`` from GLS with weight Omega^F.
    """

    theta0: np.ndarray
    sigma: np.ndarray
    sigma0: np.ndarray
    alpha_f: np.ndarray
    beta_f: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    omega_f: np.ndarray
    bandwidth: float
    n: int
    ridge: dict = field(default_factory=dict)
    dropped: np.ndarray = None


def estimate_hyperparameters(returns, features, tau, on_singular="pinv"):
    """Run the full estimation pipeline on aligned (n, m) returns and (n, m, d) features."""
    panel = ObservationPanel(returns, features)
    theta0, sigma = sample_moments(panel)
    err = error_matrix(panel, on_singular=on_singular)
    ridge = {}
    omega_f_inv_ready, ridge["omega_f"] = with_ridge(err.omega_f, "omega_f")
    w_theta, ridge["omega_f_plus_sigma"] = with_ridge(err.omega_f + sigma, "omega_f_plus_sigma")
    _, ridge["sigma"] = with_ridge(sigma, "sigma")
    alpha_f, beta_f = gls_fit(panel, w_theta, on_singular=on_singular)
    alpha, beta = gls_fit(panel, omega_f_inv_ready, on_singular=on_singular)
    return Hyperparameters(
        theta0=theta0, sigma=sigma, sigma0=tau * sigma, alpha_f=alpha_f, beta_f=beta_f,
        alpha=alpha, beta=beta, omega_f=err.omega_f, bandwidth=err.bandwidth, n=panel.n,
        ridge=ridge, dropped=err.dropped)
