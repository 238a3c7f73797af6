"""Feature-influenced views: latent (q, Omega) marginalised out.

Conditional on Omega the posterior over theta is Gaussian
(:func:`fiv_component`); the full posterior is the continuous mixture of those
components under a prior on Omega, evaluated here by plain Monte Carlo
(:func:`fiv_mixture_mc`). The conjugate shortcut freezes the component mean at
a reference ``Omega_0`` and puts an inverse-Wishart prior on the component
covariance, which gives a multivariate t (:func:`fiv_conjugate_t`).
"""
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ._linalg import as_square, check_conditioning, cholesky, spd_inverse, symmetrize
from .core import PosteriorGaussian, StudentTPredictive, _diag_matrix
from .errors import InvalidDof, NoRoot, OutOfRange, SamplerFailure, ShapeMismatch

OMEGA_BRACKET = (1e-10, 1e6)
MC_CHUNK = 50_000
MAX_RESAMPLE = 100


def make_rng(seed, stream=0):
    """Counter-based generator; ``stream`` selects an independent substream."""
    bitgen = np.random.Philox(key=int(seed) % 2**64)
    if stream:
        bitgen = bitgen.jumped(stream)
    return np.random.Generator(bitgen)


@dataclass(frozen=True)
class OmegaPrior:
    """Prior on the view-uncertainty matrix: a point mass or an inverse-Wishart."""

    kind: str
    omega0: np.ndarray = None
    scale: np.ndarray = None
    dof: float = None

    @classmethod
    def point_mass(cls, omega0):
        omega0 = _diag_matrix(omega0, "omega0")
        if np.any(np.diag(omega0) <= 0):
            raise OutOfRange("omega0", np.diag(omega0).min(), "diagonal must be > 0")
        return cls("point_mass", omega0=omega0)

    @classmethod
    def inverse_wishart(cls, scale, dof):
        scale = as_square(scale, "scale")
        cholesky(scale, "scale")
        k = scale.shape[0]
        if dof <= k - 1:
            raise InvalidDof(f"inverse-Wishart dof {dof} must exceed k - 1 = {k - 1}")
        return cls("inverse_wishart", scale=scale, dof=float(dof))

    @property
    def k(self):
        return (self.omega0 if self.kind == "point_mass" else self.scale).shape[0]


@dataclass(frozen=True)
class ConjugateConfig:
    """Inverse-Wishart hyperparameters for the component covariance.

    ``omega0`` is the reference view uncertainty at which the component mean is
    frozen; leave it as None to back-solve it with :func:`solve_omega0`.
    """

    psi_prime: np.ndarray
    nu_prime: float
    omega0: np.ndarray = None

    @property
    def m(self):
        return np.atleast_2d(self.psi_prime).shape[0]

    @property
    def sigma_prime0(self):
        """Reference covariance Psi' / (nu' - m + 1)."""
        return np.asarray(self.psi_prime, dtype=float) / (self.nu_prime - self.m + 1)


def _implied(reg, features):
    return reg.alpha + features.block @ reg.beta


def _component_moments(prior_prec, prior_lin, pick, target, omega_f, omega, guard=True):
    oprec = spd_inverse(omega, "omega")
    a = pick.T @ oprec @ pick
    g = symmetrize(prior_prec + a)
    if guard:
        check_conditioning(g, "G")
    g_inv = symmetrize(np.linalg.solve(g, np.eye(g.shape[0])))
    mean = g_inv @ (prior_lin + a @ target)
    gain = g_inv @ a
    cov = symmetrize(g_inv + gain @ omega_f @ gain.T)
    return mean, cov, g


def _setup(model, pick, features):
    pick = np.atleast_2d(np.asarray(pick, dtype=float))
    if pick.shape[1] != model.m or features.m != model.m:
        raise ShapeMismatch("pick, features and model disagree on the asset count")
    prior_prec = spd_inverse(model.prior_cov, "prior_cov")
    return pick, prior_prec, prior_prec @ model.prior_mean


def fiv_component(model, pick, reg, features, omega):
    """Gaussian posterior over theta for one fixed view uncertainty ``omega``.

    mean = G^-1 (Sigma0^-1 theta0 + P^T Omega^-1 P (alpha + F beta))
    cov  = G^-1 + K Omega^F K^T,   K = G^-1 P^T Omega^-1 P,
    with G = Sigma0^-1 + P^T Omega^-1 P. A vector ``omega`` is read as a
    diagonal; any SPD matrix is accepted (inverse-Wishart draws are dense).
    """
    pick, prior_prec, prior_lin = _setup(model, pick, features)
    omega = _diag_matrix(omega, "omega") if np.ndim(omega) <= 1 else as_square(omega, "omega")
    if omega.shape != (pick.shape[0],) * 2:
        raise ShapeMismatch(f"omega has shape {omega.shape}, expected k x k with k={pick.shape[0]}")
    mean, cov, g = _component_moments(
        prior_prec, prior_lin, pick, _implied(reg, features), np.asarray(features.error), omega)
    return PosteriorGaussian(mean=mean, cov=cov, precision=g)


def sample_inverse_wishart(scale, dof, size, rng):
    """Draw ``size`` matrices from IW(scale, dof) via the Bartlett decomposition.

    If W ~ Wishart(scale^-1, dof) with Bartlett factor T = L A (L the Cholesky
    factor of scale^-1, A lower triangular with chi and normal entries), then
    W^-1 = T^-T T^-1 is the inverse-Wishart draw.
    """
    scale = as_square(scale, "scale")
    p = scale.shape[0]
    if dof <= p - 1:
        raise InvalidDof(f"dof {dof} must exceed p - 1 = {p - 1}")
    chol = np.linalg.cholesky(spd_inverse(scale, "scale"))
    a = np.zeros((size, p, p))
    rows, cols = np.tril_indices(p, -1)
    a[:, rows, cols] = rng.standard_normal((size, rows.size))
    diag = np.arange(p)
    a[:, diag, diag] = np.sqrt(rng.chisquare(dof - diag, size=(size, p)))
    t_inv = np.linalg.inv(chol @ a)
    out = np.swapaxes(t_inv, 1, 2) @ t_inv
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def _mvn_batch(means, covs, rng):
    chol = np.linalg.cholesky(covs)
    z = rng.standard_normal(means.shape)
    return means + np.einsum("nij,nj->ni", chol, z)


def _chunks(n):
    start = 0
    while start < n:
        yield start, min(n, start + MC_CHUNK)
        start += MC_CHUNK


def _draw_omegas(prior, size, rng):
    if prior.kind == "point_mass":
        return np.broadcast_to(prior.omega0, (size,) + prior.omega0.shape)
    omegas = sample_inverse_wishart(prior.scale, prior.dof, size, rng)
    for _ in range(MAX_RESAMPLE):
        bad = ~(np.linalg.cond(omegas) < 1e12)
        if not bad.any():
            return omegas
        omegas[bad] = sample_inverse_wishart(prior.scale, prior.dof, int(bad.sum()), rng)
    raise SamplerFailure(f"Omega draws stayed singular after {MAX_RESAMPLE} resampling rounds")


def fiv_mixture_mc(model, pick, reg, features, prior, n_samples, seed):
    """Empirical mean and covariance of theta under the Omega mixture.

    Draws Omega from ``prior``, evaluates the component, and samples theta from
    it. Work is split into fixed-size chunks, chunk ``i`` using substream ``i``
    of ``seed``, so results depend only on (inputs, n_samples, seed).
    """
    if n_samples < 1000:
        raise OutOfRange("n_samples", n_samples, ">= 1000")
    pick, prior_prec, prior_lin = _setup(model, pick, features)
    if prior.k != pick.shape[0]:
        raise ShapeMismatch("prior dimension does not match the number of views")
    target = _implied(reg, features)
    omega_f = np.asarray(features.error)
    m = model.m
    thetas = np.empty((n_samples, m))
    for i, (lo, hi) in enumerate(_chunks(n_samples)):
        rng = make_rng(seed, i)
        omegas = _draw_omegas(prior, hi - lo, rng)
        oprec = np.linalg.inv(omegas)
        a = pick.T @ oprec @ pick
        g = prior_prec + a
        g_inv = np.linalg.inv(g)
        g_inv = 0.5 * (g_inv + np.swapaxes(g_inv, 1, 2))
        means = np.einsum("nij,nj->ni", g_inv, prior_lin + a @ target)
        gain = g_inv @ a
        covs = g_inv + gain @ omega_f @ np.swapaxes(gain, 1, 2)
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        thetas[lo:hi] = _mvn_batch(means, covs, rng)
    return thetas.mean(axis=0), np.cov(thetas, rowvar=False).reshape(m, m)


def niw_marginal_t(mu, psi, nu):
    """Marginal of theta when theta | S ~ N(mu, S) and S ~ IW(psi, nu)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    psi = as_square(psi, "psi")
    m = mu.shape[0]
    if psi.shape != (m, m):
        raise ShapeMismatch("psi must be m x m")
    if nu <= m - 1:
        raise InvalidDof(f"nu={nu} must exceed m - 1 = {m - 1}")
    return StudentTPredictive(location=mu, scale=psi / (nu - m + 1), dof=nu)


def sample_niw(mu, psi, nu, size, seed):
    """Draw theta by sampling S ~ IW(psi, nu) then theta ~ N(mu, S)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    out = np.empty((size, mu.shape[0]))
    for i, (lo, hi) in enumerate(_chunks(size)):
        rng = make_rng(seed, i)
        covs = sample_inverse_wishart(psi, nu, hi - lo, rng)
        out[lo:hi] = _mvn_batch(np.broadcast_to(mu, (hi - lo, mu.shape[0])), covs, rng)
    return out


def component_cov_trace(model, pick, features, omega_scale):
    """trace of the component covariance at Omega = omega_scale * I."""
    pick, prior_prec, prior_lin = _setup(model, pick, features)
    k = pick.shape[0]
    _, cov, _ = _component_moments(
        prior_prec, prior_lin, pick, np.zeros(model.m), np.asarray(features.error),
        omega_scale * np.eye(k), guard=False)
    return float(np.trace(cov))


def solve_omega0(model, pick, features, target_sigma_prime):
    """Isotropic Omega_0 = w I whose component covariance matches the target trace.

    ``w`` is found by bisection on [1e-10, 1e6].
    """
    target = as_square(target_sigma_prime, "target_sigma_prime")
    cholesky(target, "target_sigma_prime")
    goal = float(np.trace(target))
    k = np.atleast_2d(pick).shape[0]

    def resid(w):
        return component_cov_trace(model, pick, features, w) - goal

    lo, hi = OMEGA_BRACKET
    f_lo, f_hi = resid(lo), resid(hi)
    if f_lo == 0.0:
        return lo * np.eye(k)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoRoot(
            f"trace of the component covariance spans [{f_lo + goal:.6g}, {f_hi + goal:.6g}] "
            f"on w in [{lo:g}, {hi:g}] and never reaches {goal:.6g}")
    w = optimize.bisect(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    return w * np.eye(k)


def fiv_conjugate_t(model, pick, reg, features, cfg):
    """Student-t posterior from the Normal-inverse-Wishart approximation.

    The location is the component mean evaluated at ``cfg.omega0`` (back-solved
    when absent); the scale is Psi' / (nu' - m + 1). Intrinsic Sigma is dropped,
    so this also serves as the predictive law of returns.
    """
    m = model.m
    psi = as_square(cfg.psi_prime, "psi_prime")
    if psi.shape != (m, m):
        raise ShapeMismatch("psi_prime must be m x m")
    if cfg.nu_prime <= m - 1:
        raise InvalidDof(f"nu_prime={cfg.nu_prime} must exceed m - 1 = {m - 1}")
    omega0 = cfg.omega0
    if omega0 is None:
        omega0 = solve_omega0(model, pick, features, psi / (cfg.nu_prime - m + 1))
    comp = fiv_component(model, pick, reg, features, omega0)
    return StudentTPredictive(location=comp.mean, scale=psi / (cfg.nu_prime - m + 1), dof=cfg.nu_prime)
