"""Synthetic noise families, task generators and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import QuadraticRiskTask, RegressionTask

FAMILIES = ("normal", "lognormal", "loglogistic", "triangular-symmetric", "pareto", "student-t")
N_LEVELS = 15
SD_LOW, SD_HIGH = 0.3, 20.0

# Fixed shapes for the families calibrated through a scale parameter.
DEFAULT_SHAPES = {"loglogistic": {"c": 4.0}, "pareto": {"alpha": 3.5}, "student-t": {"df": 3.0}}


def level_sd(level: int) -> float:
    """Target noise standard deviation for ``level`` in 1..15 (even grid on [0.3, 20])."""
    if not 1 <= int(level) <= N_LEVELS or int(level) != level:
        raise ValueError(f"noise level must be an integer in 1..{N_LEVELS}, got {level!r}")
    return float(np.linspace(SD_LOW, SD_HIGH, N_LEVELS)[int(level) - 1])


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _fisk_moment(c, k):
    # E X^k / scale^k for the log-logistic law with shape c (needs k < c).
    t = k * math.pi / c
    return t / math.sin(t)


@dataclass
class NoiseSpec:
    """A centred noise law.

    ``params`` holds the family's natural parameters:

    - normal: ``sd``
    - lognormal: ``meanlog``, ``sdlog``
    - loglogistic: ``c`` (shape), ``scale``
    - triangular-symmetric: ``half_width``
    - pareto: ``alpha`` (shape), ``xm`` (minimum)
    - student-t: ``df``, ``scale``
    """

    family: str
    params: dict
    level: int | None = None
    allow_infinite_variance: bool = False
    _var: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        self.params = {k: float(v) for k, v in self.params.items()}
        self._var = self._variance()
        if not math.isfinite(self._var) and not self.allow_infinite_variance:
            raise ValueError(f"{self.family} with {self.params} has infinite variance")

    def _variance(self):
        p, f = self.params, self.family
        if f == "normal":
            return p["sd"] ** 2
        if f == "lognormal":
            s2 = p["sdlog"] ** 2
            return math.expm1(s2) * math.exp(2.0 * p["meanlog"] + s2)
        if f == "loglogistic":
            if p["c"] <= 2:
                return math.inf
            return p["scale"] ** 2 * (_fisk_moment(p["c"], 2) - _fisk_moment(p["c"], 1) ** 2)
        if f == "triangular-symmetric":
            return p["half_width"] ** 2 / 6.0
        if f == "pareto":
            a = p["alpha"]
            if a <= 2:
                return math.inf
            return p["xm"] ** 2 * a / ((a - 1.0) ** 2 * (a - 2.0))
        if p["df"] <= 2:
            return math.inf
        return p["scale"] ** 2 * p["df"] / (p["df"] - 2.0)

    @property
    def variance(self) -> float:
        return self._var

    @property
    def sd(self) -> float:
        return math.sqrt(self._var)

    @property
    def raw_mean(self) -> float:
        """Mean of the uncentred law, subtracted from every draw."""
        p, f = self.params, self.family
        if f == "lognormal":
            return math.exp(p["meanlog"] + p["sdlog"] ** 2 / 2.0)
        if f == "loglogistic":
            if p["c"] <= 1:
                raise ValueError("log-logistic mean is infinite for c <= 1")
            return p["scale"] * _fisk_moment(p["c"], 1)
        if f == "pareto":
            if p["alpha"] <= 1:
                raise ValueError("Pareto mean is infinite for alpha <= 1")
            return p["alpha"] * p["xm"] / (p["alpha"] - 1.0)
        return 0.0

    def sample(self, n: int, rng) -> np.ndarray:
        rng = as_rng(rng)
        p, f = self.params, self.family
        if f == "normal":
            raw = rng.normal(0.0, p["sd"], n)
        elif f == "lognormal":
            raw = rng.lognormal(p["meanlog"], p["sdlog"], n)
        elif f == "loglogistic":
            u = rng.random(n)
            raw = p["scale"] * (u / (1.0 - u)) ** (1.0 / p["c"])
        elif f == "triangular-symmetric":
            raw = rng.triangular(-p["half_width"], 0.0, p["half_width"], n)
        elif f == "pareto":
            raw = p["xm"] * (1.0 + rng.pareto(p["alpha"], n))
        else:
            raw = p["scale"] * rng.standard_t(p["df"], n)
        return raw - self.raw_mean

    @property
    def support(self):
        """Support of the centred law, as ``(low, high)``."""
        p, f = self.params, self.family
        if f == "triangular-symmetric":
            return (-p["half_width"], p["half_width"])
        if f in ("lognormal", "loglogistic"):
            return (-self.raw_mean, math.inf)
        if f == "pareto":
            return (p["xm"] - self.raw_mean, math.inf)
        return (-math.inf, math.inf)


def noise_at_level(family: str, level: int, **shape) -> NoiseSpec:
    """Noise law of ``family`` whose standard deviation equals ``level_sd(level)``.

    Scale parameters are solved in closed form; ``shape`` overrides the fixed
    shape of log-logistic (``c``), Pareto (``alpha``) and Student-t (``df``).
    """
    sd = level_sd(level)
    if family == "normal":
        params = {"sd": sd}
    elif family == "lognormal":
        meanlog = float(shape.get("meanlog", 0.0))
        # sd^2 = (q - 1) q e^{2 meanlog} with q = e^{sdlog^2}.
        q = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * sd**2 * math.exp(-2.0 * meanlog)))
        params = {"meanlog": meanlog, "sdlog": math.sqrt(math.log(q))}
    elif family == "triangular-symmetric":
        params = {"half_width": sd * math.sqrt(6.0)}
    elif family in DEFAULT_SHAPES:
        shp = {**DEFAULT_SHAPES[family], **shape}
        unit = NoiseSpec(family, {**shp, "scale": 1.0, "xm": 1.0}).sd
        key = "xm" if family == "pareto" else "scale"
        params = {**shp, key: sd / unit}
    else:
        raise ValueError(f"unknown noise family {family!r}")
    return NoiseSpec(family, params, level=level)


def sample_noise(spec: NoiseSpec, n: int, seed) -> np.ndarray:
    return spec.sample(n, as_rng(seed))


def wstar_sequence(k):
    """``pi/4 + (-1)**(k-1) (k-1) pi/8`` for 1-based ``k``."""
    k = np.asarray(k)
    return np.pi / 4.0 + (-1.0) ** (k - 1) * (k - 1) * np.pi / 8.0


def gen_wstar(d: int, seed, pool: int = 500) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be positive")
    idx = as_rng(seed).integers(1, pool + 1, size=d)
    return wstar_sequence(idx)


def _streams(seed, k):
    if isinstance(seed, np.random.Generator):
        return seed.spawn(k)
    if isinstance(seed, np.random.SeedSequence):
        return [np.random.default_rng(s) for s in seed.spawn(k)]
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def gen_noisy_quadratic(n: int, d: int, noise: NoiseSpec, seed, cov=None, w_star=None) -> QuadraticRiskTask:
    """Noisy quadratic risk task with Gaussian inputs.

    ``cov`` defaults to the identity; a 1-D ``cov`` is read as a diagonal.
    """
    r_w, r_x, r_e = _streams(seed, 3)
    Sigma = np.eye(d) if cov is None else np.asarray(cov, dtype=float)
    if Sigma.ndim == 1:
        Sigma = np.diag(Sigma)
    if w_star is None:
        w_star = gen_wstar(d, r_w)
    chol = np.linalg.cholesky(Sigma)
    X = r_x.standard_normal((n, d)) @ chol.T
    eps = noise.sample(n, r_e)
    return QuadraticRiskTask(Sigma=Sigma, w_star=np.asarray(w_star, float), X=X, eps=eps,
                             noise_var=noise.variance)


def gen_regression(n: int, d: int, noise: NoiseSpec, seed, m: int = 1000, input_var: float = 1.0) -> RegressionTask:
    """Training sample of size ``n`` and an independent test set of size ``m``."""
    r_w, r_x, r_e, r_xt, r_et = _streams(seed, 5)
    w_star = gen_wstar(d, r_w)
    sd = math.sqrt(input_var)
    X = sd * r_x.standard_normal((n, d))
    y = X @ w_star + noise.sample(n, r_e)
    X_test = sd * r_xt.standard_normal((m, d))
    y_test = X_test @ w_star + noise.sample(m, r_et)
    return RegressionTask(X=X, y=y, w_star=w_star, X_test=X_test, y_test=y_test,
                          noise=noise, input_var=input_var)


def rmse(w, X, y) -> float:
    return float(np.sqrt(np.mean((X @ w - y) ** 2)))


def excess_test_rmse(w, w_star, X_test, y_test) -> float:
    return rmse(np.asarray(w, float), X_test, y_test) - rmse(np.asarray(w_star, float), X_test, y_test)


METRICS = ("excess_emp_risk", "excess_true_risk", "dist_to_wstar", "test_metric")


@dataclass
class TrialRecord:
    """Per-iteration metrics of one seeded run of one method."""

    trial: int
    seed: int
    method: str
    iterations: np.ndarray
    metrics: dict

    def __post_init__(self):
        self.iterations = np.asarray(self.iterations, dtype=int)
        filled = {}
        for name in METRICS:
            arr = np.asarray(self.metrics.get(name, np.full(len(self.iterations), np.nan)), dtype=float)
            if arr.shape != self.iterations.shape:
                raise ValueError(f"metric {name!r} has {arr.shape}, expected {self.iterations.shape}")
            filled[name] = arr
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}")
        self.metrics = filled

    def final(self, name: str) -> float:
        return float(self.metrics[name][-1])


def risk_stats(records) -> dict:
    """Mean and (population) variance over trials of each metric, per iteration.

    Returns ``{metric: (mean, var)}``; all records must share their iteration grid.
    """
    records = list(records)
    if not records:
        raise ValueError("no trial records")
    grid = records[0].iterations
    for r in records[1:]:
        if not np.array_equal(r.iterations, grid):
            raise ValueError("records have different iteration grids")
    out = {}
    for name in METRICS:
        stack = np.vstack([r.metrics[name] for r in records])
        out[name] = (stack.mean(axis=0), stack.var(axis=0))
    return out
