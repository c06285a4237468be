import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_descent import catoni, rgd, synthdata
from robust_descent.baselines import erm_gd_step
from robust_descent.rgd import (
    RgdConfig,
    StepSchedule,
    VarianceBoundPolicy,
    estimate_risk_gradient,
    oracle_run,
    project,
    rgd_run,
    step_size,
    update_variance_bound,
)
from robust_descent.validation import oracle_contraction_violations, oracle_decay_violations


@pytest.fixture(scope="module")
def task():
    return synthdata.gen_noisy_quadratic(300, 3, synthdata.noise_at_level("lognormal", 10), 5)


# -- estimate_risk_gradient --------------------------------------------------

def test_all_zero_matrix_gives_zero():
    assert np.array_equal(estimate_risk_gradient(np.zeros((10, 4)), 0.05), np.zeros(4))


def test_zero_column_skipped():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(20, 3))
    G[:, 1] = 0.0
    out = estimate_risk_gradient(G, 0.05)
    assert out[1] == 0.0 and np.all(np.isfinite(out))


def test_single_column_matches_scalar_estimator():
    rng = np.random.default_rng(1)
    g = rng.standard_t(3, 80)
    delta = 0.02
    v = 0.5 * np.mean(g**2)
    p = catoni.SmoothingParams.tuned(v, 80, delta)
    expected = catoni.smoothed_mean(g, p.s, p.beta)
    assert estimate_risk_gradient(g[:, None], delta)[0] == pytest.approx(expected, rel=1e-15)


def test_policy_multiplier_and_beta_override():
    rng = np.random.default_rng(2)
    G = rng.normal(1, 3, (50, 2))
    v = 3.0 * np.mean(G**2, axis=0)
    s = catoni.scale_for(v, 50, 0.1)
    expected = catoni.smoothed_mean(G, s, 7.0)
    got = estimate_risk_gradient(G, 0.1, VarianceBoundPolicy(3.0), beta=7.0)
    assert np.allclose(got, expected, rtol=1e-15, atol=0)


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        estimate_risk_gradient(np.zeros((0, 3)), 0.05)


def test_large_multiplier_approaches_sample_mean():
    rng = np.random.default_rng(3)
    G = rng.normal(size=(100, 3))
    est = estimate_risk_gradient(G, 0.05, VarianceBoundPolicy(1e12))
    assert np.allclose(est, erm_gd_step(G), atol=1e-8)


def test_gaussian_rows_within_deviation_bound_at_rate():
    rng = np.random.default_rng(4)
    delta, n, reps = 0.05, 500, 400
    mean = np.array([1.0, -2.0])
    # v is the policy's bound; the radius uses the true second moments.
    v_true = 1.0 + mean**2
    radius = [catoni.deviation_bound(v, n, delta) for v in v_true]
    miss = np.zeros(2)
    for _ in range(reps):
        G = mean + rng.standard_normal((n, 2))
        miss += np.abs(estimate_risk_gradient(G, delta) - mean) > radius
    assert np.all(miss / reps <= delta)


# -- schedules / projection --------------------------------------------------

@pytest.mark.parametrize("sched, t, expected", [
    (StepSchedule("decaying", 0.5, 1.0), 0, 0.5),
    (StepSchedule("fixed", 0.1, 2.0), 0, 0.05),
    (StepSchedule("fixed", 0.1, 2.0), 999, 0.05),
    (StepSchedule("decaying", 0.5, 0.5), 8, 0.2),
])
def test_step_size_examples(sched, t, expected):
    assert step_size(sched, t) == pytest.approx(expected, rel=1e-15)


def test_schedule_validation():
    for kw in (dict(kind="fixed", alpha=1.0), dict(kind="fixed", alpha=0.0), dict(kind="other"),
               dict(lambda_bar=0.0)):
        with pytest.raises(ValueError):
            StepSchedule(**kw)
    with pytest.raises(ValueError):
        step_size(StepSchedule(), -1)
    assert step_size(StepSchedule.constant(0.37), 5) == pytest.approx(0.37)
    assert StepSchedule.lambda_bar_for(1.0, 4.0) == pytest.approx(1.6)


def test_project_examples():
    assert np.array_equal(project([0.1, 0.2], [0, 0], 1.0), [0.1, 0.2])
    assert np.allclose(project([3.0, 4.0], [0, 0], 1.0), [0.6, 0.8])
    with pytest.raises(ValueError):
        project([1.0], [0.0], 0.0)


vec3 = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3).map(np.array)


@given(vec3, vec3, st.floats(1e-2, 1e2), vec3)
def test_project_properties(w, c, r, q):
    p = project(w, c, r)
    fp = 1e-12 * (1 + np.linalg.norm(c) + np.linalg.norm(w))
    assert np.linalg.norm(p - c) <= r + fp
    assert np.allclose(project(p, c, r), p, rtol=1e-12, atol=1e-9)
    inside = project(q, c, r)
    assert np.linalg.norm(p - inside) <= np.linalg.norm(w - inside) + fp


# -- runs --------------------------------------------------------------------

def test_oracle_contraction_inside_valid_range():
    assert oracle_contraction_violations((0.1, 0.3, 0.5, 0.6)) == 0


def test_oracle_decay_one_over_root_t_plus_one():
    assert oracle_decay_violations(offset=1) == 0


def test_oracle_run_reaches_minimiser():
    Sigma = np.diag([1.0, 4.0])
    w_star = np.array([0.5, -1.0])
    traj = oracle_run(lambda w: Sigma @ (w - w_star), np.zeros(2), StepSchedule("fixed", 0.5, 1.6), 200)
    assert len(traj) == 201 and traj.step_sizes.shape == (200,)
    assert np.allclose(traj.final, w_star, atol=1e-12)


def test_rgd_run_is_deterministic(task):
    cfg = RgdConfig(schedule=StepSchedule.constant(0.1), n_iter=25, minibatch=40, coord_subset=2, seed=11)
    a = rgd_run(task, cfg, np.zeros(3))
    b = rgd_run(task, cfg, np.zeros(3))
    assert a.iterates.tobytes() == b.iterates.tobytes()


def test_rgd_run_different_seed_changes_minibatches(task):
    base = dict(schedule=StepSchedule.constant(0.1), n_iter=5, minibatch=40)
    a = rgd_run(task, RgdConfig(seed=1, **base), np.zeros(3))
    b = rgd_run(task, RgdConfig(seed=2, **base), np.zeros(3))
    assert not np.array_equal(a.iterates, b.iterates)


def test_coord_subset_at_least_d_equals_full(task):
    base = dict(schedule=StepSchedule.constant(0.1), n_iter=15, seed=0)
    full = rgd_run(task, RgdConfig(**base), np.zeros(3))
    for m in (3, 10):
        sub = rgd_run(task, RgdConfig(coord_subset=m, **base), np.zeros(3))
        assert np.array_equal(full.iterates, sub.iterates)


def test_coord_subset_uses_sample_mean_elsewhere(task):
    rng = np.random.default_rng(0)
    cfg = RgdConfig(schedule=StepSchedule.constant(0.1), n_iter=1, coord_subset=1)
    direction, per_step = rgd.robust_direction(task, cfg, rng)
    w = np.ones(3)
    g = direction(w, 0)
    mean = task.grads(w).mean(axis=0)
    robust = estimate_risk_gradient(task.grads(w), cfg.delta)
    is_mean = np.isclose(g, mean, rtol=1e-13, atol=0)
    is_robust = np.isclose(g, robust, rtol=1e-13, atol=0)
    assert np.all(is_mean | is_robust) and is_robust.sum() >= 1 and per_step == task.n


def test_budget_accounting(task):
    cfg = RgdConfig(schedule=StepSchedule.constant(0.05), max_evals=1000, minibatch=64)
    traj = rgd_run(task, cfg, np.zeros(3))
    assert traj.evals[-1] <= 1000 and traj.evals[-1] + 64 > 1000
    assert len(traj) == 1000 // 64 + 1
    cfg = RgdConfig(schedule=StepSchedule.constant(0.05), max_evals=10 * task.n, n_iter=4)
    assert len(rgd_run(task, cfg, np.zeros(3))) == 5


def test_projection_keeps_iterates_in_ball(task):
    cfg = RgdConfig(schedule=StepSchedule.constant(0.5), n_iter=30, projection_radius=0.3,
                    projection_center=np.zeros(3))
    traj = rgd_run(task, cfg, np.zeros(3))
    assert np.all(np.linalg.norm(traj.iterates, axis=1) <= 0.3 * (1 + 1e-12))


def test_run_errors(task):
    with pytest.raises(ValueError):
        RgdConfig()
    with pytest.raises(ValueError):
        RgdConfig(n_iter=0)
    with pytest.raises(ValueError):
        RgdConfig(n_iter=5, minibatch=0)
    with pytest.raises(ValueError):
        rgd_run(task, RgdConfig(n_iter=5), np.zeros(4))
    with pytest.raises(ValueError):
        rgd_run(task, RgdConfig(max_evals=task.n - 1), np.zeros(3))


def test_rgd_beats_erm_under_lognormal_noise():
    spec = synthdata.NoiseSpec("lognormal", {"meanlog": 0.0, "sdlog": 1.75})
    final = {"erm": [], "rgd": []}
    for seed in range(12):
        t = synthdata.gen_noisy_quadratic(500, 2, spec, seed)
        w0 = t.w_star + 5.0
        sched = StepSchedule.constant(0.1)
        final["rgd"].append(t.excess_risk(rgd_run(t, RgdConfig(n_iter=150), w0).final))
        erm = rgd.descent(lambda w, k: t.grads(w).mean(axis=0), w0, sched, n_iter=150)
        final["erm"].append(t.excess_risk(erm.final))
    assert np.median(final["rgd"]) < np.median(final["erm"])


# -- update variance diagnostic ---------------------------------------------

def test_update_variance_bound_zero_step():
    assert update_variance_bound(np.zeros((500, 2)), 0.0, 1.0, 3.0) == 0.0


def test_update_variance_bound_formula():
    n, d, V, alpha = 500, 2, 1.0, 0.1
    b2 = V * d / n
    inner = math.sqrt(V / n) * (1 - 2 * float(catoni.norm_cdf(-1 / math.sqrt(d)))) \
        + math.sqrt(2 * V * d / (n * math.pi)) * math.exp(-2 * d)
    expected = 2 * alpha**2 * (d * math.sqrt(2 * math.pi * b2) / 2 * inner)
    assert update_variance_bound(np.zeros((n, d)), alpha, V, 0.0) == pytest.approx(expected, rel=1e-14)
    # Hand arithmetic: 2 * 0.01 * 0.158533 * (0.023278 + 0.000924).
    assert expected == pytest.approx(7.6735e-5, rel=1e-4)


def test_update_variance_bound_rejects_negative():
    with pytest.raises(ValueError):
        update_variance_bound(np.zeros((5, 2)), -0.1, 1.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 10.0), st.floats(0.0, 5.0))
def test_update_variance_bound_monotone_in_step(alpha, V, gnorm):
    g = np.zeros((100, 3))
    assert update_variance_bound(g, alpha, V, gnorm) <= update_variance_bound(g, alpha + 0.1, V, gnorm)


def test_initialisers():
    rng = np.random.default_rng(0)
    w = rgd.uniform_init(1000, rng)
    assert w.min() >= -0.05 and w.max() <= 0.05
    p = rgd.perturbed_init(np.ones(1000), 2.5, rng)
    assert np.all(np.abs(p - 1) <= 2.5)
