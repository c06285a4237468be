"""Robust gradient descent with per-coordinate smoothed-mean gradient estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .catoni import check_delta, default_noise_precision, norm_cdf, scale_for, smoothed_mean


@dataclass(frozen=True)
class VarianceBoundPolicy:
    """Per-coordinate variance bound: ``multiplier`` times the empirical second moment."""

    multiplier: float = 0.5
    mode: str = "empirical-second-moment"

    def __post_init__(self):
        if not self.multiplier > 0:
            raise ValueError("variance multiplier must be positive")
        if self.mode != "empirical-second-moment":
            raise ValueError(f"unknown variance-bound mode {self.mode!r}")

    def bounds(self, grads):
        return self.multiplier * np.mean(np.square(grads), axis=0)


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha / lambda_bar`` (fixed) or ``1 / ((2 + t) lambda_bar)`` (decaying).

    ``lambda_bar = 2 mu Lambda / (mu + Lambda)`` for a ``mu``-strongly convex,
    ``Lambda``-smooth risk. Use :meth:`constant` for a plain fixed step.
    """

    kind: str = "fixed"
    alpha: float = 0.1
    lambda_bar: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "decaying"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "fixed" and not 0 < self.alpha < 1:
            raise ValueError("fixed schedule needs 0 < alpha < 1")
        if not self.lambda_bar > 0:
            raise ValueError("lambda_bar must be positive")

    @classmethod
    def constant(cls, step: float):
        if not step > 0:
            raise ValueError("step must be positive")
        # alpha / lambda_bar == step with alpha kept inside (0, 1).
        return cls(kind="fixed", alpha=0.5, lambda_bar=0.5 / step)

    @staticmethod
    def lambda_bar_for(mu: float, Lambda: float) -> float:
        return 2.0 * mu * Lambda / (mu + Lambda)


def step_size(schedule: StepSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    if schedule.kind == "fixed":
        return schedule.alpha / schedule.lambda_bar
    return 1.0 / ((2.0 + t) * schedule.lambda_bar)


def project(w, center, radius: float):
    """Euclidean projection of ``w`` onto the ball ``B(center, radius)``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    w = np.asarray(w, dtype=float)
    center = np.asarray(center, dtype=float)
    diff = w - center
    dist = float(np.linalg.norm(diff))
    if dist <= radius:
        return w
    return center + diff * (radius / dist)


def estimate_risk_gradient(grads, delta: float, policy: VarianceBoundPolicy = VarianceBoundPolicy(), beta=None):
    """Robust per-coordinate estimate of the mean of the rows of ``grads``.

    Coordinates whose variance bound is zero (all entries zero) return 0.
    """
    grads = np.asarray(grads, dtype=float)
    if grads.ndim != 2 or grads.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) gradient matrix")
    n = grads.shape[0]
    delta = check_delta(delta)
    if beta is None:
        beta = default_noise_precision(delta)
    v = policy.bounds(grads)
    out = np.zeros(grads.shape[1])
    live = v > 0
    if np.any(live):
        s = scale_for(v[live], n, delta)
        out[live] = smoothed_mean(grads[:, live], s, beta)
    return out


@dataclass
class RgdConfig:
    """Settings for one robust gradient descent run.

    ``max_evals`` counts per-example gradient computations; ``n_iter`` caps
    the number of updates. At least one must be set; the run stops at
    whichever is exhausted first.
    """

    delta: float = 0.005
    schedule: StepSchedule = field(default_factory=StepSchedule)
    policy: VarianceBoundPolicy = field(default_factory=VarianceBoundPolicy)
    n_iter: int | None = None
    max_evals: int | None = None
    projection_radius: float | None = None
    projection_center: np.ndarray | None = None
    minibatch: int | None = None
    coord_subset: int | None = None
    beta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_iter is None and self.max_evals is None:
            raise ValueError("set n_iter and/or max_evals")
        for name in ("n_iter", "max_evals", "minibatch", "coord_subset"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be positive")
        if self.projection_radius is not None and not self.projection_radius > 0:
            raise ValueError("projection_radius must be positive")


@dataclass
class Trajectory:
    iterates: np.ndarray
    step_sizes: np.ndarray
    grad_norms: np.ndarray
    evals: np.ndarray

    @property
    def final(self):
        return self.iterates[-1]

    def __len__(self):
        return len(self.iterates)


def descent(direction: Callable, w0, schedule: StepSchedule, n_iter: int | None = None,
            max_evals: int | None = None, evals_per_step: int = 0, projection=None) -> Trajectory:
    """Generic first-order loop ``w <- w - step(t) * direction(w, t)``.

    ``projection`` is an optional callable applied after each update.
    """
    if n_iter is None and max_evals is None:
        raise ValueError("set n_iter and/or max_evals")
    if n_iter is not None and n_iter <= 0:
        raise ValueError("n_iter must be positive")
    if max_evals is not None:
        if evals_per_step <= 0 or max_evals < evals_per_step:
            raise ValueError("evaluation budget allows no update")
        by_budget = max_evals // evals_per_step
        n_iter = by_budget if n_iter is None else min(n_iter, by_budget)
    w = np.array(w0, dtype=float)
    iterates = [w.copy()]
    steps, norms = [], []
    for t in range(n_iter):
        g = direction(w, t)
        a = step_size(schedule, t)
        w = w - a * g
        if projection is not None:
            w = projection(w)
        iterates.append(w.copy())
        steps.append(a)
        norms.append(float(np.linalg.norm(g)))
    evals = evals_per_step * np.arange(n_iter + 1)
    return Trajectory(np.array(iterates), np.array(steps), np.array(norms), evals)


def robust_direction(task, config: RgdConfig, rng: np.random.Generator):
    """Build the per-step robust gradient direction used by :func:`rgd_run`."""
    n, d = task.n, task.d
    batch = None if config.minibatch is None else min(config.minibatch, n)
    subset = None if config.coord_subset is None else min(config.coord_subset, d)

    def direction(w, t):
        idx = None if batch is None else rng.choice(n, size=batch, replace=False)
        G = task.grads(w, idx)
        if subset is None or subset >= d:
            return estimate_risk_gradient(G, config.delta, config.policy, config.beta)
        coords = rng.choice(d, size=subset, replace=False)
        out = G.mean(axis=0)
        out[coords] = estimate_risk_gradient(G[:, coords], config.delta, config.policy, config.beta)
        return out

    return direction, (n if batch is None else batch)


def rgd_run(task, config: RgdConfig, w0) -> Trajectory:
    """Run robust gradient descent on ``task`` from ``w0``."""
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (task.d,):
        raise ValueError(f"initial iterate has shape {w0.shape}, task dimension is {task.d}")
    rng = np.random.default_rng(config.seed)
    direction, per_step = robust_direction(task, config, rng)
    projection = None
    if config.projection_radius is not None:
        center = w0 if config.projection_center is None else np.asarray(config.projection_center, float)
        radius = config.projection_radius
        projection = lambda w: project(w, center, radius)  # noqa: E731
    return descent(direction, w0, config.schedule, config.n_iter, config.max_evals,
                   evals_per_step=per_step, projection=projection)


def oracle_run(risk_grad: Callable, w0, schedule: StepSchedule, n_iter: int) -> Trajectory:
    """Ideal gradient descent driven by the exact risk gradient."""
    return descent(lambda w, t: risk_grad(w), w0, schedule, n_iter=n_iter)


def update_variance_bound(grads, alpha: float, V: float, grad_norm: float) -> float:
    """Upper bound on ``E||w_{t+1} - w_t||**2`` for one robust step of size ``alpha``.

    ``V`` bounds every coordinate's gradient second moment; ``n`` and ``d``
    are read off the shape of ``grads``.
    """
    n, d = np.shape(grads)
    if alpha < 0 or V < 0 or grad_norm < 0:
        raise ValueError("alpha, V and grad_norm must be non-negative")
    b2 = V * d / n
    folded = math.sqrt(V / n) * (1.0 - 2.0 * float(norm_cdf(-1.0 / math.sqrt(d)))) + math.sqrt(
        2.0 * V * d / (n * math.pi)
    ) * math.exp(-2.0 * d)
    return 2.0 * alpha**2 * (d * math.sqrt(2.0 * math.pi * b2) / 2.0 * folded + grad_norm**2)


def uniform_init(d: int, rng: np.random.Generator, low=-0.05, high=0.05):
    return rng.uniform(low, high, size=d)


def perturbed_init(w_star, half_width, rng: np.random.Generator):
    """``w_star + Unif[-half_width, half_width]`` per coordinate."""
    w_star = np.asarray(w_star, dtype=float)
    return w_star + rng.uniform(-1.0, 1.0, size=w_star.shape) * half_width
