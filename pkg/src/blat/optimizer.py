"""Mean-variance weights: the unconstrained quadratic objective and long-only max Sharpe.

The long-only problem is solved by Dinkelbach iteration on the parametric
problem ``max mean.w - lam * sqrt(w' cov w)`` over the simplex. The inner problem
is concave, so batched projected gradient with random restarts gives its
maximum together with a Frank-Wolfe duality gap, which turns into an upper bound
on the best achievable Sharpe ratio. The final support is then polished with
the exact KKT solution when that solution checks out.
"""
from dataclasses import dataclass, field

import numpy as np

from ._linalg import as_square, as_vector, check_conditioning, cholesky, spd_solve
from .errors import InvalidDelta, ShapeMismatch, ZeroVariance

N_RESTARTS = 50
MAX_ITER = 10_000
LAMBDA_TOL = 1e-8
_SUPPORT_TOL = 1e-9
_STEP_MIN, _STEP_MAX = 1e-16, 1e8
_SCREEN_ITER = 100


@dataclass(frozen=True)
class WeightVector:
    """Portfolio weights plus solver metadata.

    ``fallback`` is ``"min_variance"`` when no asset had a positive mean and the
    long-only minimum-variance portfolio was returned instead.
    """

    w: np.ndarray
    sharpe: float = None
    bound: float = None
    fallback: str = None
    meta: dict = field(default_factory=dict)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.w, dtype=dtype)

    def __len__(self):
        return len(self.w)


def _inputs(mean, cov):
    cov = as_square(cov, "cov")
    mean = as_vector(mean, "mean", cov.shape[0])
    return mean, cov


def unconstrained_mv(mean, cov, delta):
    """Stationary point ``cov^-1 mean / delta`` of ``w.mean - delta/2 w' cov w``."""
    if not delta > 0:
        raise InvalidDelta(f"delta must be positive, got {delta}")
    mean, cov = _inputs(mean, cov)
    return WeightVector(w=spd_solve(cov, mean, name="cov") / delta)


def sharpe(w, mean, cov):
    """``w.mean / sqrt(w' cov w)`` with a zero risk-free rate."""
    w = as_vector(np.asarray(w, dtype=float), "w")
    mean, cov = _inputs(mean, cov)
    if w.shape[0] != mean.shape[0]:
        raise ShapeMismatch("w and mean differ in length")
    var = float(w @ cov @ w)
    if not var > 0:
        raise ZeroVariance(f"portfolio variance is {var}")
    return float(w @ mean) / np.sqrt(var)


def project_simplex(v):
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    flat = v.ndim == 1
    v2 = np.atleast_2d(v)
    m = v2.shape[1]
    u = -np.sort(-v2, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, m + 1)
    rho = np.count_nonzero(u - css / idx > 0, axis=1) - 1
    theta = css[np.arange(v2.shape[0]), rho] / (rho + 1)
    out = np.maximum(v2 - theta[:, None], 0.0)
    return out[0] if flat else out


def _maximize_concave(value, grad, w0, max_iter=MAX_ITER, tol=1e-11):
    """Batched projected-gradient ascent with Armijo backtracking, one row per start.

    A row stops once its Frank-Wolfe gap or its step length drops below ``tol``.
    """
    w = project_simplex(w0)
    step = np.ones(w.shape[0])
    f = value(w)
    live = np.ones(w.shape[0], dtype=bool)
    for _ in range(max_iter):
        rows = np.flatnonzero(live)
        if rows.size == 0:
            break
        g = grad(w[rows])
        gap = _fw_gap(g, w[rows])
        done = gap <= tol * np.maximum(1.0, np.abs(f[rows]))
        pending = ~done
        for _ in range(60):
            if not pending.any():
                break
            sel = rows[pending]
            cand = project_simplex(w[sel] + step[sel, None] * g[pending])
            diff = cand - w[sel]
            fc = value(cand)
            model = f[sel] + np.sum(g[pending] * diff, axis=1) - np.sum(diff * diff, axis=1) / (2 * step[sel])
            ok = fc >= model - 1e-15 * np.abs(model)
            moved = np.max(np.abs(diff), axis=1)
            acc = sel[ok]
            w[acc], f[acc] = cand[ok], fc[ok]
            done[np.flatnonzero(pending)[ok & (moved < tol)]] = True
            step[sel[~ok]] = np.maximum(step[sel[~ok]] * 0.5, _STEP_MIN)
            stuck = ~ok & (step[sel] <= _STEP_MIN)
            done[np.flatnonzero(pending)[stuck]] = True
            pending[np.flatnonzero(pending)[ok | stuck]] = False
        live[rows[done]] = False
        step[rows] = np.minimum(step[rows] * 1.5, _STEP_MAX)
    return w, f


def _fw_gap(g, w):
    return np.max(g, axis=1) - np.sum(g * w, axis=1)


def _starts(m, rng, n_restarts):
    starts = [np.full(m, 1.0 / m)]
    starts.extend(np.eye(m))
    starts.extend(rng.dirichlet(np.ones(m), size=max(n_restarts - len(starts), 0)))
    return np.array(starts[:max(n_restarts, m + 1)])


def _kkt_polish(mean, cov, w, target):
    """Exact optimum on the support of ``w`` if it passes the KKT test.

    ``target`` is the right-hand side of the stationarity system: ``mean`` for
    max Sharpe, a vector of ones for min variance.
    """
    support = np.flatnonzero(w > _SUPPORT_TOL)
    if support.size == 0:
        return None
    sub = cov[np.ix_(support, support)]
    try:
        x = np.linalg.solve(sub, target[support])
    except np.linalg.LinAlgError:
        return None
    total = x.sum()
    if not total > 0 or np.any(x <= 0):
        return None
    out = np.zeros_like(w)
    out[support] = x / total
    cw = cov @ out
    if target is mean:
        ret, var = out @ mean, out @ cw
        viol = mean - (ret / var) * cw
    else:
        viol = (out @ cw) - cw
    others = np.setdiff1d(np.arange(w.size), support)
    scale = max(1.0, np.max(np.abs(target)))
    if others.size and np.max(viol[others]) > 1e-10 * scale:
        return None
    return out


def _finish(w):
    w = np.where(w < 0, 0.0, w)
    return w / w.sum()


def _min_variance(cov, rng, n_restarts):
    m = cov.shape[0]

    def value(W):
        return -np.einsum("ri,ij,rj->r", W, cov, W)

    def grad(W):
        return -2.0 * W @ cov

    W, f = _maximize_concave(value, grad, _starts(m, rng, n_restarts))
    best = W[np.argmax(f)]
    polished = _kkt_polish(np.zeros(m), cov, best, np.ones(m))
    if polished is not None and polished @ cov @ polished <= best @ cov @ best:
        best = polished
    return _finish(best)


def max_sharpe_longonly(mean, cov, seed=0, n_restarts=N_RESTARTS):
    """Long-only, fully invested maximum-Sharpe weights (risk-free rate 0).

    Falls back to long-only minimum variance when no mean is positive.
    """
    mean, cov = _inputs(mean, cov)
    cholesky(cov, "cov")
    check_conditioning(cov, "cov")
    m = mean.shape[0]
    if m == 1:
        w = np.ones(1)
        return WeightVector(w=w, sharpe=float(mean[0] / np.sqrt(cov[0, 0])))
    rng = np.random.default_rng(seed)
    if not np.max(mean) > 0:
        w = _min_variance(cov, rng, n_restarts)
        return WeightVector(w=w, sharpe=sharpe(w, mean, cov), fallback="min_variance")

    sig_lb = np.sqrt(max(np.linalg.eigvalsh(cov)[0], 0.0) / m)
    starts = _starts(m, rng, n_restarts)
    vertex = mean / np.sqrt(np.diag(cov))
    best = np.eye(m)[np.argmax(vertex)]
    warm = best
    lam = float(np.max(vertex))
    bound = np.inf
    iterations = 0
    for iterations in range(1, 101):
        def value(W, lam=lam):
            return W @ mean - lam * np.sqrt(np.einsum("ri,ij,rj->r", W, cov, W))

        def grad(W, lam=lam):
            cw = W @ cov
            sd = np.sqrt(np.sum(W * cw, axis=1))
            return mean - lam * cw / sd[:, None]

        if iterations == 1:
            # short screening run over all restarts, then refine the winner
            W, f = _maximize_concave(value, grad, np.vstack([best, starts]), max_iter=_SCREEN_ITER)
            warm = W[int(np.argmax(f))]
        W, f = _maximize_concave(value, grad, warm[None, :])
        k = 0
        gap = _fw_gap(grad(W[k:k + 1]), W[k:k + 1])[0]
        bound = min(bound, lam + max(f[k] + gap, 0.0) / sig_lb)
        cand = W[k]
        new_lam = sharpe(cand, mean, cov)
        warm = cand
        if new_lam > lam:
            best = cand
        if f[k] <= LAMBDA_TOL * max(1.0, abs(lam)) or new_lam - lam <= LAMBDA_TOL * max(1.0, abs(lam)):
            lam = max(lam, new_lam)
            break
        lam = new_lam
    polished = _kkt_polish(mean, cov, best, mean)
    if polished is not None and sharpe(polished, mean, cov) >= sharpe(best, mean, cov) - 1e-12:
        best = polished
    w = _finish(best)
    achieved = sharpe(w, mean, cov)
    # certify at the final ratio: the parametric value is 0 there, so the bound hinges on the FW gap
    cw = cov @ w
    g = mean - achieved * cw / np.sqrt(w @ cw)
    gap = float(np.max(g) - g @ w)
    f_final = float(w @ mean - achieved * np.sqrt(w @ cw))
    bound = min(bound, achieved + max(f_final + gap, 0.0) / sig_lb)
    return WeightVector(w=w, sharpe=achieved, bound=max(bound, achieved),
                        meta={"iterations": iterations, "polished": polished is not None})
