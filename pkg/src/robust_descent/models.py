"""Losses, risks and per-example gradients for the benchmark tasks.

Every task exposes ``losses(w, idx=None)`` returning per-example losses and
``grads(w, idx=None)`` returning the matching ``(m, d)`` gradient matrix.
``idx`` selects a subset of examples; ``None`` means all of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


def _rows(n, idx):
    if idx is None:
        return slice(None)
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"example index out of range [0, {n})")
    return idx


def _check_dim(w, d):
    w = np.asarray(w, dtype=float)
    if w.shape != (d,):
        raise ValueError(f"parameter has shape {w.shape}, expected ({d},)")
    return w


@dataclass
class QuadraticRiskTask:
    """Noisy observations of the quadratic risk ``<Sigma w, w>/2 + <w, u> + c``.

    Example ``i`` contributes ``r_i(w) = (<w_star - w, x_i> + eps_i)**2 / 2``;
    with centred noise of variance ``noise_var`` and ``E x x^T = Sigma`` the
    expectation of ``r_i`` is exactly the risk.
    """

    Sigma: np.ndarray
    w_star: np.ndarray
    X: np.ndarray
    eps: np.ndarray
    noise_var: float
    u: np.ndarray = field(init=False)
    c: float = field(init=False)

    def __post_init__(self):
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        self.w_star = np.asarray(self.w_star, dtype=float)
        if not np.allclose(self.Sigma, self.Sigma.T):
            raise ValueError("Sigma must be symmetric")
        if np.linalg.eigvalsh(self.Sigma).min() <= 0:
            raise ValueError("Sigma must be positive definite")
        self.u = -self.Sigma @ self.w_star
        self.c = 0.5 * self.w_star @ self.Sigma @ self.w_star + 0.5 * self.noise_var

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def mu(self):
        """Strong convexity constant: smallest eigenvalue of Sigma."""
        return float(np.linalg.eigvalsh(self.Sigma)[0])

    @property
    def Lambda(self):
        """Smoothness constant: largest eigenvalue of Sigma."""
        return float(np.linalg.eigvalsh(self.Sigma)[-1])

    def true_risk(self, w):
        w = _check_dim(w, self.d)
        return float(0.5 * w @ self.Sigma @ w + w @ self.u + self.c)

    def risk_grad(self, w):
        w = _check_dim(w, self.d)
        return self.Sigma @ w + self.u

    def excess_risk(self, w):
        diff = _check_dim(w, self.d) - self.w_star
        return float(0.5 * diff @ self.Sigma @ diff)

    def residuals(self, w, idx=None):
        rows = _rows(self.n, idx)
        w = _check_dim(w, self.d)
        return self.X[rows] @ (self.w_star - w) + self.eps[rows]

    def losses(self, w, idx=None):
        return 0.5 * self.residuals(w, idx) ** 2

    def grads(self, w, idx=None):
        rows = _rows(self.n, idx)
        return -self.residuals(w, idx)[:, None] * self.X[rows]

    def empirical_minimizer(self):
        # Least squares of eps on X, shifted back by w_star.
        shift, *_ = np.linalg.lstsq(self.X, self.eps, rcond=None)
        return self.w_star + shift

    def grad_second_moments(self, w):
        """Exact ``E g_j(w)**2`` per coordinate, for isotropic Gaussian inputs.

        Valid when ``Sigma = sigma2 * I``; uses Isserlis' theorem.
        """
        sigma2 = self.Sigma[0, 0]
        if not np.allclose(self.Sigma, sigma2 * np.eye(self.d)):
            raise ValueError("closed form needs an isotropic input covariance")
        diff = self.w_star - _check_dim(w, self.d)
        return sigma2**2 * (diff @ diff + 2.0 * diff**2) + self.noise_var * sigma2


def quadratic_true_risk(task: QuadraticRiskTask, w) -> float:
    return task.true_risk(w)


def noisy_quadratic_loss_grad(task: QuadraticRiskTask, w, i: int):
    if not 0 <= i < task.n:
        raise IndexError(f"example index {i} out of range [0, {task.n})")
    return task.grads(w, [i])[0]


@dataclass
class RegressionTask:
    """Linear regression under the squared loss ``(<w, x> - y)**2``.

    ``X_test``/``y_test`` hold an optional held-out set; ``input_var`` is the
    per-coordinate input variance used for the exact excess risk.
    """

    X: np.ndarray
    y: np.ndarray
    w_star: np.ndarray | None = None
    X_test: np.ndarray | None = None
    y_test: np.ndarray | None = None
    noise: object = None
    input_var: float = 1.0

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def residuals(self, w, idx=None):
        rows = _rows(self.n, idx)
        return self.X[rows] @ _check_dim(w, self.d) - self.y[rows]

    def losses(self, w, idx=None):
        return self.residuals(w, idx) ** 2

    def grads(self, w, idx=None):
        rows = _rows(self.n, idx)
        return 2.0 * self.residuals(w, idx)[:, None] * self.X[rows]

    def excess_risk(self, w):
        # Excess squared-loss risk for independent isotropic inputs.
        diff = _check_dim(w, self.d) - self.w_star
        return float(self.input_var * diff @ diff)


def squared_loss_grad(task: RegressionTask, w, i: int):
    if not 0 <= i < task.n:
        raise IndexError(f"example index {i} out of range [0, {task.n})")
    return task.grads(w, [i])[0]


@dataclass
class LogisticTask:
    """Multiclass logistic regression with ``C - 1`` free score vectors.

    The last class is the reference class with scores pinned at zero, so the
    parameter has dimension ``(C - 1) * F``. Each per-example loss carries the
    full penalty ``reg * ||w||**2``.
    """

    X: np.ndarray
    labels: np.ndarray
    C: int
    reg: float = 0.0
    X_test: np.ndarray | None = None
    labels_test: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.C < 2:
            raise ValueError("need at least two classes")
        if self.reg < 0:
            raise ValueError("regularisation weight must be non-negative")
        for lab in (self.labels, self.labels_test):
            if lab is not None and lab.size and (lab.min() < 0 or lab.max() >= self.C):
                raise ValueError(f"labels must lie in [0, {self.C})")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def F(self):
        return self.X.shape[1]

    @property
    def d(self):
        return (self.C - 1) * self.F

    def _scores(self, w, X):
        W = _check_dim(w, self.d).reshape(self.C - 1, self.F)
        free = X @ W.T
        return np.hstack([free, np.zeros((X.shape[0], 1))])

    def losses(self, w, idx=None):
        rows = _rows(self.n, idx)
        X, lab = self.X[rows], self.labels[rows]
        scores = self._scores(w, X)
        nll = logsumexp(scores, axis=1) - scores[np.arange(len(lab)), lab]
        return nll + self.reg * float(np.dot(w, w))

    def grads(self, w, idx=None):
        rows = _rows(self.n, idx)
        X, lab = self.X[rows], self.labels[rows]
        scores = self._scores(w, X)
        probs = np.exp(scores - logsumexp(scores, axis=1, keepdims=True))
        probs[np.arange(len(lab)), lab] -= 1.0
        # Outer products (m, C-1, F) flattened row-major to match w's layout.
        g = probs[:, : self.C - 1, None] * X[:, None, :]
        return g.reshape(len(lab), self.d) + 2.0 * self.reg * np.asarray(w, dtype=float)

    def predict(self, w, X=None):
        X = self.X if X is None else X
        return np.argmax(self._scores(w, X), axis=1)

    def error_rate(self, w, X=None, labels=None):
        if X is None:
            X, labels = self.X_test, self.labels_test
        return float(np.mean(self.predict(w, X) != labels))


def logistic_loss_grad(task: LogisticTask, w, i: int):
    if not 0 <= i < task.n:
        raise IndexError(f"example index {i} out of range [0, {task.n})")
    return task.grads(w, [i])[0]


@dataclass
class FDReport:
    max_rel_error: float
    tol: float
    numeric: np.ndarray
    analytic: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tol)


def finite_diff_check(loss_fn, grad_fn, w, tol=1e-6) -> FDReport:
    """Compare ``grad_fn(w)`` with central differences of the scalar ``loss_fn``.

    Step per coordinate is ``1e-6 * (1 + |w_j|)``. The reported error is
    ``max_j |numeric_j - analytic_j| / max(1, ||analytic||_inf)``.
    """
    w = np.asarray(w, dtype=float)
    analytic = np.asarray(grad_fn(w), dtype=float)
    numeric = np.empty_like(w)
    for j in range(w.size):
        h = 1e-6 * (1.0 + abs(w[j]))
        up, down = w.copy(), w.copy()
        up[j] += h
        down[j] -= h
        numeric[j] = (loss_fn(up) - loss_fn(down)) / (2.0 * h)
    scale = max(1.0, float(np.max(np.abs(analytic), initial=0.0)))
    err = float(np.max(np.abs(numeric - analytic), initial=0.0)) / scale
    return FDReport(max_rel_error=err, tol=tol, numeric=numeric, analytic=analytic)
