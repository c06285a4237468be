"""Reference optimisers and aggregators: ERM-GD, SGD, SVRG, geometric median,
median-of-means gradients, OLS, geomed-of-OLS and LAD."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .rgd import Trajectory


class ConvergenceWarning(RuntimeWarning):
    pass


def erm_gd_step(grads):
    """Sample mean of the per-example gradients."""
    grads = np.asarray(grads, dtype=float)
    if grads.ndim != 2 or grads.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) gradient matrix")
    return grads.mean(axis=0)


def _weiszfeld_step(y, points, weights, atol):
    dist = np.linalg.norm(points - y, axis=1)
    hit = dist <= atol
    eta = weights[hit].sum()
    keep = ~hit
    if not np.any(keep):
        return y, 0.0
    inv = weights[keep] / dist[keep]
    T = inv @ points[keep] / inv.sum()
    if eta == 0:
        return T, 0.0
    # Vardi-Zhang modification when the iterate sits on a data point.
    R = inv @ (points[keep] - y)
    r = float(np.linalg.norm(R))
    if r <= eta:
        return y, r
    return (1.0 - eta / r) * T + (eta / r) * y, r


def geometric_median(points, tol=1e-12, max_iter=10_000, weights=None):
    """Minimiser of the (weighted) sum of Euclidean distances to ``points``.

    Modified Weiszfeld iteration started from the coordinate-wise median. A
    :class:`ConvergenceWarning` is emitted if the step size has not dropped
    below ``tol * (1 + ||y||)`` within ``max_iter`` iterations.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("need at least one point")
    if points.shape[0] == 1:
        return points[0].copy()
    weights = np.ones(points.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    scale = 1.0 + float(np.max(np.abs(points)))
    atol = 1e-14 * scale
    y = np.median(points, axis=0)
    for _ in range(max_iter):
        y_new, _ = _weiszfeld_step(y, points, weights, atol)
        moved = float(np.linalg.norm(y_new - y))
        y = y_new
        if moved <= tol * (1.0 + float(np.linalg.norm(y))):
            return y
    warnings.warn(f"Weiszfeld did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2)
    return y


def median_residual(m, points):
    """Norm of ``sum_i (m - p_i) / ||m - p_i||`` over points distinct from ``m``."""
    diff = np.asarray(m, float) - np.atleast_2d(points)
    dist = np.linalg.norm(diff, axis=1)
    keep = dist > 0
    return float(np.linalg.norm((diff[keep] / dist[keep, None]).sum(axis=0)))


@dataclass(frozen=True)
class PartitionScheme:
    """Disjoint blocks covering ``range(n)``: contiguous after a seeded shuffle."""

    blocks: tuple

    @classmethod
    def shuffled(cls, n: int, k: int, seed):
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        perm = rng.permutation(n)
        return cls(tuple(np.array_split(perm, k)))

    @property
    def k(self):
        return len(self.blocks)


def mom_gradient(grads, k: int, seed=0):
    """Geometric median of ``k`` block means of the gradient rows."""
    grads = np.asarray(grads, dtype=float)
    part = PartitionScheme.shuffled(grads.shape[0], k, seed)
    means = np.array([grads[b].mean(axis=0) for b in part.blocks])
    return geometric_median(means)


def ols_analytic(X, y):
    """Minimum-norm least-squares solution (SVD based)."""
    w, *_ = np.linalg.lstsq(np.asarray(X, float), np.asarray(y, float), rcond=None)
    return w


def geomed_partitions(n: int, d: int) -> int:
    return max(2, n // (2 * d))


def geomed_of_ols(X, y, seed=0, k=None):
    """Geometric median of OLS fits on ``k = max(2, n // (2d))`` disjoint blocks."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, d = X.shape
    k = geomed_partitions(n, d) if k is None else k
    k = min(k, n)
    part = PartitionScheme.shuffled(n, k, seed)
    small = [len(b) for b in part.blocks if len(b) < d]
    if small:
        warnings.warn(f"{len(small)} of {k} blocks have fewer than d={d} rows; "
                      "using minimum-norm solutions there", RuntimeWarning, stacklevel=2)
    cands = np.array([ols_analytic(X[b], y[b]) for b in part.blocks])
    return geometric_median(cands)


def lad_objective(w, X, y):
    return float(np.mean(np.abs(X @ w - y)))


def lad_fit(X, y, budget: int, w0=None):
    """Least absolute deviations by normalised subgradient descent.

    Each iteration costs ``n`` gradient evaluations; steps decay as
    ``h / sqrt(t + 1)`` with ``h`` set from the initial residual scale. The
    best iterate seen is returned, so the objective never exceeds its value
    at ``w0`` (default: the OLS fit).
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, d = X.shape
    w = ols_analytic(X, y) if w0 is None else np.array(w0, dtype=float)
    n_iter = max(1, budget // n)
    res = X @ w - y
    x_scale = float(np.median(np.linalg.norm(X, axis=1))) or 1.0
    h = max(float(np.median(np.abs(res))), 1e-8) / x_scale
    best, best_obj = w.copy(), lad_objective(w, X, y)
    for t in range(n_iter):
        g = X.T @ np.sign(res) / n
        gn = float(np.linalg.norm(g))
        if gn == 0:
            break
        w = w - h / np.sqrt(t + 1.0) * g / gn
        res = X @ w - y
        obj = float(np.mean(np.abs(res)))
        if obj < best_obj:
            best, best_obj = w.copy(), obj
    return best


def sgd_run(task, w0, step: float, max_evals: int, seed=0, record_every: int = 1) -> Trajectory:
    """Plain SGD with single-example updates drawn uniformly with replacement.

    One update costs one gradient evaluation; iterates are stored every
    ``record_every`` updates (plus the last one).
    """
    if max_evals <= 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    w = np.array(w0, dtype=float)
    if w.shape != (task.d,):
        raise ValueError("initial iterate does not match task dimension")
    its, evals, norms = [w.copy()], [0], []
    idx = rng.integers(0, task.n, size=max_evals)
    for t in range(max_evals):
        g = task.grads(w, idx[t:t + 1])[0]
        w = w - step * g
        if (t + 1) % record_every == 0 or t + 1 == max_evals:
            its.append(w.copy())
            evals.append(t + 1)
            norms.append(float(np.linalg.norm(g)))
    steps = np.full(len(its) - 1, step)
    return Trajectory(np.array(its), steps, np.array(norms), np.array(evals))


def svrg_run(task, w0, step: float, max_evals: int, seed=0, inner: int | None = None,
             record_every: int = 1) -> Trajectory:
    """SVRG (Johnson and Zhang) with an ``n/2``-step inner loop by default.

    A full gradient at the anchor costs ``n`` evaluations; each inner update
    evaluates two single-example gradients (current point and anchor) and
    costs 2. The run stops before any step that would exceed the budget.
    """
    if max_evals <= 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    n = task.n
    inner = max(1, n // 2) if inner is None else inner
    w = np.array(w0, dtype=float)
    if w.shape != (task.d,):
        raise ValueError("initial iterate does not match task dimension")
    its, evals, norms = [w.copy()], [0], []
    spent, count = 0, 0
    while spent + n <= max_evals:
        anchor = w.copy()
        mu = task.grads(anchor).mean(axis=0)
        spent += n
        for _ in range(inner):
            if spent + 2 > max_evals:
                break
            i = rng.integers(0, n, size=1)
            g = task.grads(w, i)[0] - task.grads(anchor, i)[0] + mu
            w = w - step * g
            spent += 2
            count += 1
            if count % record_every == 0:
                its.append(w.copy())
                evals.append(spent)
                norms.append(float(np.linalg.norm(g)))
    if evals[-1] != spent:
        its.append(w.copy())
        evals.append(spent)
        norms.append(float("nan"))
    steps = np.full(len(its) - 1, step)
    return Trajectory(np.array(its), steps, np.array(norms), np.array(evals))
