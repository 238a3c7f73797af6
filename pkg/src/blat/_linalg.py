"""Small Cholesky-based helpers. No jitter is ever added here."""
import numpy as np
from scipy import linalg

from .errors import NonInvertibleError, NotPositiveDefinite, ShapeMismatch, SingularMatrix

COND_LIMIT = 1e12


def as_square(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {a.shape}")
    return a


def as_vector(v, name, size=None):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1:
        raise ShapeMismatch(f"{name} must be a vector, got shape {v.shape}")
    if size is not None and v.shape[0] != size:
        raise ShapeMismatch(f"{name} has length {v.shape[0]}, expected {size}")
    return v


def cholesky(a, name, sym_tol=1e-10):
    """Lower Cholesky factor of ``a``; raises NotPositiveDefinite on failure."""
    a = as_square(a, name)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if not np.allclose(a, a.T, rtol=0.0, atol=sym_tol * scale):
        raise NotPositiveDefinite(name, "not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(name, str(exc)) from None


def is_positive_definite(a):
    try:
        cholesky(a, "matrix")
    except (NotPositiveDefinite, ShapeMismatch):
        return False
    return True


def spd_inverse(a, name, error="pd"):
    """Inverse of an SPD matrix through its Cholesky factor.

    ``error="invertible"`` reports failure as NonInvertibleError(name) instead
    of NotPositiveDefinite(name).
    """
    try:
        c = cholesky(a, name)
    except NotPositiveDefinite:
        if error == "invertible":
            raise NonInvertibleError(name) from None
        raise
    inv = linalg.cho_solve((c, True), np.eye(c.shape[0]))
    return 0.5 * (inv + inv.T)


def check_conditioning(g, name, limit=COND_LIMIT):
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > limit:
        raise SingularMatrix(name, cond)
    return cond


def spd_solve(g, rhs, name="G"):
    """Solve ``g x = rhs`` for SPD ``g`` with a conditioning guard."""
    check_conditioning(g, name)
    try:
        c = linalg.cho_factor(g, lower=True)
    except np.linalg.LinAlgError:
        raise SingularMatrix(name) from None
    return linalg.cho_solve(c, rhs)


def symmetrize(a):
    return 0.5 * (a + a.T)
