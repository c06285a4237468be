"""Named invariant checks for every module, runnable from the CLI.

Each check returns a :class:`CheckResult`; :func:`run_validation_suite`
runs all of them (or a named subset) and never raises on a failed check.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import baselines, catoni, models, rgd, synthdata


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


QUAD_GRID_A = (-5.0, -2.0, -1.4, -0.5, 0.0, 0.5, 1.4, 2.0, 5.0)
QUAD_GRID_B = (0.01, 0.1, 0.5, 1.0, 3.0)


def quad_oracle(a: float, b: float) -> float:
    """``E psi(a + bZ)`` by adaptive quadrature split at the two kinks of ``psi``.

    The saturated pieces are exact normal tail masses; only the cubic piece
    is integrated numerically, over a finite interval in ``z``.
    """
    z_lo, z_hi = (-catoni.SQRT2 - a) / b, (catoni.SQRT2 - a) / b
    tails = catoni.PSI_MAX * (catoni.norm_cdf(-z_hi) - catoni.norm_cdf(z_lo))
    lo, hi = max(z_lo, -40.0), min(z_hi, 40.0)
    if lo >= hi:
        return float(tails)

    def f(z):
        u = a + b * z
        return (u - u**3 / 6.0) * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    pts = [p for p in (0.0,) if lo < p < hi]
    mid, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(tails) + mid


def gauss_hermite_oracle(a: float, b: float, nodes: int = 200) -> float:
    """Plain probabilists' Gauss-Hermite rule for ``E psi(a + bZ)``."""
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    return float(np.sum(w * catoni.truncate(a + b * z)) / math.sqrt(2.0 * math.pi))


def _grid_error(oracle):
    worst = 0.0
    for a in QUAD_GRID_A:
        for b in QUAD_GRID_B:
            worst = max(worst, abs(catoni.smoothed_psi_expectation(a, b) - oracle(a, b)))
    return worst


def check_quadrature(tol=1e-8):
    err = _grid_error(quad_oracle)
    return CheckResult("catoni.closed_form_vs_quadrature", err <= tol, f"max error {err:.3e} (tol {tol:g})")


def check_oddness(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 3, 2000)
    b = rng.uniform(0.01, 5, 2000)
    err = float(np.max(np.abs(catoni.smoothed_psi_expectation(-a, b) + catoni.smoothed_psi_expectation(a, b))))
    return CheckResult("catoni.oddness", err <= 1e-14, f"max |E(-a)+E(a)| {err:.2e}")


def check_lipschitz(seed=0, pairs=1000, n=50, delta=0.05):
    rng = np.random.default_rng(seed)
    beta = catoni.default_noise_precision(delta)
    c_rho = catoni.lipschitz_factor(beta)
    x = rng.standard_t(2.5, (n, pairs)) * rng.uniform(0.1, 10, pairs)
    x2 = x + rng.normal(0, 1, (n, pairs)) * (rng.random((n, pairs)) < 0.3)
    s = rng.uniform(0.5, 20, pairs)
    lhs = np.abs(catoni.smoothed_mean(x, s, beta) - catoni.smoothed_mean(x2, s, beta))
    rhs = c_rho / n * np.abs(x - x2).sum(axis=0)
    bad = int(np.sum(lhs > rhs + 1e-10))
    return CheckResult("catoni.l1_lipschitz", bad == 0, f"{bad} violations over {pairs} pairs (c_rho={c_rho:.6f})")


def lognormal_coverage(reps=2000, n=500, delta=0.05, sdlog=1.75, seed=0):
    """Fraction of replications where the deviation radius is exceeded."""
    rng = np.random.default_rng(seed)
    mean = math.exp(sdlog**2 / 2.0)
    var = math.expm1(sdlog**2) * math.exp(sdlog**2)
    v = var  # centred law, so the second moment equals the variance
    x = rng.lognormal(0.0, sdlog, (n, reps)) - mean
    p = catoni.SmoothingParams.tuned(v, n, delta)
    est = catoni.smoothed_mean(x, p.s, p.beta)
    return float(np.mean(np.abs(est) > catoni.deviation_bound(v, n, delta)))


def check_coverage(limit=0.07):
    rate = lognormal_coverage()
    return CheckResult("catoni.deviation_coverage", rate <= limit, f"violation rate {rate:.4f} (limit {limit})")


def check_boundedness(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_cauchy((30, 500)) * 1e3
    s = rng.uniform(0.1, 10, 500)
    est = catoni.smoothed_mean(x, s, 2.0)
    ok = bool(np.all(np.abs(est) <= s * catoni.PSI_MAX * (1 + 1e-15)))
    return CheckResult("catoni.boundedness", ok, "|estimate| <= s * 2 sqrt2 / 3")


def _quadratic(mu=1.0, Lambda=4.0, d=2, seed=0):
    rng = np.random.default_rng(seed)
    Sigma = np.diag(np.linspace(mu, Lambda, d))
    w_star = rng.normal(size=d)
    return Sigma, w_star, lambda w: Sigma @ (w - w_star)


def ulp_floor(w_star):
    # Iterates cannot resolve distances to w* below a few ulps of w*.
    return 8.0 * np.finfo(float).eps * max(1.0, float(np.linalg.norm(w_star)))


def oracle_contraction_violations(alphas=(0.1, 0.5, 0.9), T=200, seed=0):
    Sigma, w_star, grad = _quadratic(seed=seed)
    lam = rgd.StepSchedule.lambda_bar_for(1.0, 4.0)
    w0 = w_star + np.array([3.0, -2.0])
    r0 = np.linalg.norm(w0 - w_star)
    bad = 0
    for alpha in alphas:
        traj = rgd.oracle_run(grad, w0, rgd.StepSchedule("fixed", alpha, lam), T)
        dist = np.linalg.norm(traj.iterates - w_star, axis=1)
        bound = (1.0 - alpha) ** (np.arange(T + 1) / 2.0) * r0
        bad += int(np.sum(dist > bound + ulp_floor(w_star)))
    return bad


def oracle_decay_violations(offset=1, T=200, seed=0):
    """Steps violating ``||w_T - w*|| <= ||w_0 - w*|| / sqrt(T + offset)``."""
    Sigma, w_star, grad = _quadratic(seed=seed)
    lam = rgd.StepSchedule.lambda_bar_for(1.0, 4.0)
    w0 = w_star + np.array([3.0, -2.0])
    traj = rgd.oracle_run(grad, w0, rgd.StepSchedule("decaying", 0.5, lam), T)
    dist = np.linalg.norm(traj.iterates - w_star, axis=1)
    bound = dist[0] / np.sqrt(np.arange(T + 1) + offset)
    return int(np.sum(dist > bound * (1 + 1e-12) + ulp_floor(w_star)))


def max_valid_alpha(mu=1.0, Lambda=4.0):
    """Largest ``alpha`` with ``alpha / lambda_bar <= 2 / (mu + Lambda)``.

    Beyond it the one-step contraction behind the fixed-schedule bound no
    longer holds, and large ``alpha`` can even diverge.
    """
    return 4.0 * mu * Lambda / (mu + Lambda) ** 2


def check_contraction():
    # The bound is tight at max_valid_alpha(); stay strictly inside.
    alphas = (0.1, 0.5, 0.6)
    assert max(alphas) < max_valid_alpha()
    bad = oracle_contraction_violations(alphas)
    return CheckResult("rgd.oracle_contraction_fixed", bad == 0,
                       f"{bad} violations, alpha in {tuple(round(a, 3) for a in alphas)}, T<=200")


def check_decay():
    bad = oracle_decay_violations(offset=1)
    return CheckResult("rgd.oracle_decay", bad == 0, f"{bad} violations of the 1/sqrt(T+1) bound, T<=200")


def check_projection(seed=0):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(500):
        c = rng.normal(size=3)
        r = rng.uniform(0.1, 3)
        w = c + rng.normal(0, 3, 3)
        p = rgd.project(w, c, r)
        q = c + rng.normal(size=3)
        q = rgd.project(q, c, r)
        ok &= np.linalg.norm(p - c) <= r * (1 + 1e-12)
        ok &= np.allclose(rgd.project(p, c, r), p, rtol=0, atol=1e-12)
        ok &= np.linalg.norm(p - q) <= np.linalg.norm(w - q) + 1e-12
    return CheckResult("rgd.projection", bool(ok), "inside ball, idempotent, non-expansive towards the ball")


def _small_task(seed=0, n=200, d=3):
    return synthdata.gen_noisy_quadratic(n, d, synthdata.noise_at_level("lognormal", 8), seed)


def check_rgd_determinism():
    task = _small_task()
    cfg = rgd.RgdConfig(schedule=rgd.StepSchedule.constant(0.1), n_iter=30, minibatch=50, coord_subset=2, seed=7)
    t1 = rgd.rgd_run(task, cfg, np.zeros(3))
    t2 = rgd.rgd_run(task, cfg, np.zeros(3))
    same = t1.iterates.tobytes() == t2.iterates.tobytes()
    return CheckResult("rgd.determinism", same, "identical config and seed give identical iterates")


def check_coord_subset():
    task = _small_task()
    base = dict(schedule=rgd.StepSchedule.constant(0.1), n_iter=20, seed=3)
    full = rgd.rgd_run(task, rgd.RgdConfig(**base), np.zeros(3))
    sub = rgd.rgd_run(task, rgd.RgdConfig(coord_subset=5, **base), np.zeros(3))
    same = np.array_equal(full.iterates, sub.iterates)
    return CheckResult("rgd.coord_subset_reduces", same, "coord_subset >= d equals the full update")


def fd_worst_errors(points=100, seed=0):
    """Worst finite-difference error per model over random points."""
    rng = np.random.default_rng(seed)
    q = synthdata.gen_noisy_quadratic(30, 4, synthdata.noise_at_level("student-t", 5), rng)
    reg = synthdata.gen_regression(30, 4, synthdata.noise_at_level("normal", 3), rng, m=5)
    X = rng.random((30, 3))
    lab = rng.integers(0, 3, 30)
    lg = models.LogisticTask(X, lab, 3, reg=0.01)
    out = {}
    for name, task, scale in (("quadratic", q, 2.0), ("regression", reg, 2.0), ("logistic", lg, 1.0)):
        worst = 0.0
        for _ in range(points):
            w = rng.normal(0, scale, task.d)
            i = int(rng.integers(task.n))
            rep = models.finite_diff_check(lambda v: task.losses(v, [i])[0], lambda v: task.grads(v, [i])[0], w)
            worst = max(worst, rep.max_rel_error)
        out[name] = worst
    return out


def check_gradients(tol=1e-6):
    errs = fd_worst_errors()
    ok = all(e <= tol for e in errs.values())
    return CheckResult("models.finite_difference", ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


def check_quadratic_identity(seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    Sigma = A @ A.T + 0.5 * np.eye(4)
    task = models.QuadraticRiskTask(Sigma, rng.normal(size=4), rng.normal(size=(5, 4)), rng.normal(size=5), 1.3)
    worst = 0.0
    for _ in range(100):
        w = rng.normal(0, 3, 4)
        diff = w - task.w_star
        gap = task.true_risk(w) - task.true_risk(task.w_star)
        worst = max(worst, abs(gap - 0.5 * diff @ Sigma @ diff) / max(1.0, abs(gap)))
    return CheckResult("models.quadratic_excess_identity", worst <= 1e-12, f"max rel error {worst:.1e}")


def check_logistic_convexity(seed=0):
    rng = np.random.default_rng(seed)
    task = models.LogisticTask(rng.random((40, 5)), rng.integers(0, 4, 40), 4, reg=0.001)
    bad = 0
    for _ in range(200):
        u, v = rng.normal(0, 3, task.d), rng.normal(0, 3, task.d)
        f = lambda w: task.losses(w).mean()  # noqa: E731
        bad += f(0.5 * (u + v)) > 0.5 * (f(u) + f(v)) + 1e-12
    return CheckResult("models.logistic_midpoint_convexity", bad == 0, f"{bad} violations over 200 segments")


def check_weiszfeld(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        pts = rng.normal(size=(int(rng.integers(3, 30)), int(rng.integers(2, 6))))
        m = baselines.geometric_median(pts)
        if np.min(np.linalg.norm(pts - m, axis=1)) > 1e-9:
            worst = max(worst, baselines.median_residual(m, pts) / len(pts))
    return CheckResult("baselines.weiszfeld_residual", worst <= 1e-6, f"max residual / n {worst:.1e}")


def check_mom_invariance(seed=0):
    rng = np.random.default_rng(seed)
    G = rng.standard_t(2.5, (60, 3))
    part = baselines.PartitionScheme.shuffled(60, 6, 11)
    means = np.array([G[b].mean(axis=0) for b in part.blocks])
    perm = rng.permutation(6)
    a = baselines.geometric_median(means)
    b = baselines.geometric_median(means[perm])
    same_seed = np.array_equal(baselines.mom_gradient(G, 6, 11), baselines.mom_gradient(G, 6, 11))
    ok = bool(np.allclose(a, b, atol=1e-9) and same_seed)
    return CheckResult("baselines.mom_invariance", ok, "block order and reruns do not change the estimate")


def check_baseline_determinism():
    task = _small_task()
    a = baselines.svrg_run(task, np.zeros(3), 0.01, 2000, seed=4)
    b = baselines.svrg_run(task, np.zeros(3), 0.01, 2000, seed=4)
    c = baselines.sgd_run(task, np.zeros(3), 0.01, 500, seed=4)
    e = baselines.sgd_run(task, np.zeros(3), 0.01, 500, seed=4)
    ok = np.array_equal(a.iterates, b.iterates) and np.array_equal(c.iterates, e.iterates)
    return CheckResult("baselines.determinism", bool(ok), "SGD and SVRG rerun bitwise identically")


def check_centering(draws=1_000_000, seed=0):
    worst = 0.0
    for fam in synthdata.FAMILIES:
        spec = synthdata.noise_at_level(fam, 5)
        x = synthdata.sample_noise(spec, draws, seed)
        worst = max(worst, abs(x.mean()) / (x.std() / math.sqrt(draws)))
    return CheckResult("synthdata.centering", worst <= 3.0, f"max |mean| / s.e. {worst:.2f}")


def check_level_monotone():
    ok = True
    for fam in synthdata.FAMILIES:
        sds = [synthdata.noise_at_level(fam, k).sd for k in range(1, 16)]
        ok &= bool(np.all(np.diff(sds) > 0))
    return CheckResult("synthdata.level_monotone", ok, "sd increases with level for every family")


def check_generator_purity():
    spec = synthdata.noise_at_level("pareto", 7)
    a = synthdata.gen_regression(50, 3, spec, 9, m=20)
    b = synthdata.gen_regression(50, 3, spec, 9, m=20)
    ok = all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("X", "y", "w_star", "X_test", "y_test"))
    return CheckResult("synthdata.purity", ok, "generators are pure functions of (parameters, seed)")


def check_results_csv():
    from .experiments import ExperimentConfig, read_results, run_experiment

    cfg = ExperimentConfig(kind="controlled", methods=["erm", "rgdmult"], n=100, trials=2, n_iter=5, seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        p1 = run_experiment(cfg, f"{tmp}/a")
        p2 = run_experiment(cfg, f"{tmp}/b", threads=2)
        same = p1.read_bytes() == p2.read_bytes()
        recs = read_results(p1)
    ok = same and len(recs) == 4 and all(len(r.iterations) == 6 for r in recs)
    return CheckResult("bench_cli.results_csv", ok, "byte-identical across thread counts; rows parse into records")


CHECKS = {
    "catoni.closed_form_vs_quadrature": check_quadrature,
    "catoni.oddness": check_oddness,
    "catoni.l1_lipschitz": check_lipschitz,
    "catoni.deviation_coverage": check_coverage,
    "catoni.boundedness": check_boundedness,
    "rgd.oracle_contraction_fixed": check_contraction,
    "rgd.oracle_decay": check_decay,
    "rgd.projection": check_projection,
    "rgd.determinism": check_rgd_determinism,
    "rgd.coord_subset_reduces": check_coord_subset,
    "models.finite_difference": check_gradients,
    "models.quadratic_excess_identity": check_quadratic_identity,
    "models.logistic_midpoint_convexity": check_logistic_convexity,
    "baselines.weiszfeld_residual": check_weiszfeld,
    "baselines.mom_invariance": check_mom_invariance,
    "baselines.determinism": check_baseline_determinism,
    "synthdata.centering": check_centering,
    "synthdata.level_monotone": check_level_monotone,
    "synthdata.purity": check_generator_purity,
    "bench_cli.results_csv": check_results_csv,
}


def run_validation_suite(only=None) -> list[CheckResult]:
    """Run the named checks (all by default); a crashing check counts as failed."""
    names = list(CHECKS) if only is None else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}")
    out = []
    for name in names:
        try:
            out.append(CHECKS[name]())
        except Exception as exc:  # report, keep going
            out.append(CheckResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return out
