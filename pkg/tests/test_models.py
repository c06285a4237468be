import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_descent import models, synthdata
from robust_descent.baselines import ols_analytic
from robust_descent.models import (
    LogisticTask,
    QuadraticRiskTask,
    RegressionTask,
    finite_diff_check,
    logistic_loss_grad,
    noisy_quadratic_loss_grad,
    quadratic_true_risk,
    squared_loss_grad,
)
from robust_descent.validation import fd_worst_errors


def _quad(seed=0, n=20, d=3):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    Sigma = A @ A.T + np.eye(d)
    return QuadraticRiskTask(Sigma, rng.normal(size=d), rng.normal(size=(n, d)), rng.normal(size=n), 1.0)


def test_true_risk_minimised_at_wstar():
    t = _quad()
    assert np.allclose(t.risk_grad(t.w_star), 0.0, atol=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(50):
        w = rng.normal(0, 3, 3)
        assert quadratic_true_risk(t, w) - quadratic_true_risk(t, t.w_star) >= 0


def test_true_risk_arithmetic():
    t = QuadraticRiskTask(np.eye(2), np.zeros(2), np.zeros((1, 2)), np.zeros(1), 0.0)
    assert t.u.tolist() == [0.0, 0.0] and t.c == 0.0
    assert quadratic_true_risk(t, np.array([1.0, 0.0])) == 0.5


def test_excess_identity():
    t = _quad(2)
    rng = np.random.default_rng(2)
    for _ in range(20):
        w = rng.normal(size=3)
        diff = w - t.w_star
        gap = t.true_risk(w) - t.true_risk(t.w_star)
        assert gap == pytest.approx(0.5 * diff @ t.Sigma @ diff, rel=1e-12, abs=1e-12)
        assert t.excess_risk(w) == pytest.approx(gap, rel=1e-12, abs=1e-12)


def test_quadratic_validation():
    with pytest.raises(ValueError):
        QuadraticRiskTask(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2), np.zeros((1, 2)), np.zeros(1), 1.0)
    with pytest.raises(ValueError):
        QuadraticRiskTask(-np.eye(2), np.zeros(2), np.zeros((1, 2)), np.zeros(1), 1.0)
    t = _quad()
    with pytest.raises(ValueError):
        t.true_risk(np.zeros(4))
    with pytest.raises(IndexError):
        noisy_quadratic_loss_grad(t, np.zeros(3), t.n)


def test_quadratic_grad_zero_at_wstar_without_noise():
    t = _quad()
    t.eps[:] = 0.0
    assert np.array_equal(noisy_quadratic_loss_grad(t, t.w_star, 3), np.zeros(3))


def test_quadratic_grad_formula():
    t = _quad()
    w = np.array([0.3, -0.1, 2.0])
    i = 4
    r = (t.w_star - w) @ t.X[i] + t.eps[i]
    assert np.allclose(noisy_quadratic_loss_grad(t, w, i), -r * t.X[i], rtol=1e-15)


def test_quadratic_mean_gradient_is_unbiased():
    spec = synthdata.noise_at_level("student-t", 6)
    t = synthdata.gen_noisy_quadratic(100_000, 3, spec, 3, cov=np.array([1.0, 2.0, 0.5]))
    w = t.w_star + np.array([1.0, -1.0, 0.5])
    g = t.grads(w).mean(axis=0)
    se = t.grads(w).std(axis=0) / math.sqrt(t.n)
    assert np.all(np.abs(g - t.Sigma @ (w - t.w_star)) <= 4 * se)


def test_mu_lambda_are_extreme_eigenvalues():
    t = synthdata.gen_noisy_quadratic(10, 3, synthdata.noise_at_level("normal", 1), 0, cov=np.array([0.5, 2.0, 1.0]))
    assert t.mu == pytest.approx(0.5) and t.Lambda == pytest.approx(2.0)


def test_grad_second_moments_monte_carlo():
    spec = synthdata.noise_at_level("normal", 4)
    t = synthdata.gen_noisy_quadratic(400_000, 2, spec, 9)
    w = t.w_star + np.array([0.7, -0.4])
    emp = np.mean(t.grads(w) ** 2, axis=0)
    assert np.allclose(emp, t.grad_second_moments(w), rtol=0.02)
    aniso = synthdata.gen_noisy_quadratic(10, 2, spec, 0, cov=np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        aniso.grad_second_moments(np.zeros(2))


def test_empirical_minimiser_zeroes_mean_gradient():
    t = _quad(n=50)
    assert np.allclose(t.grads(t.empirical_minimizer()).mean(axis=0), 0.0, atol=1e-12)


# -- regression --------------------------------------------------------------

def _reg(seed=0, n=40, d=3):
    return synthdata.gen_regression(n, d, synthdata.noise_at_level("normal", 3), seed, m=10)


def test_squared_loss_grad_zero_residual():
    t = _reg()
    t.y = t.X @ t.w_star
    assert np.array_equal(squared_loss_grad(t, t.w_star, 0), np.zeros(3))


def test_squared_loss_grad_formula_and_range():
    t = _reg()
    w = np.ones(3)
    assert np.allclose(squared_loss_grad(t, w, 2), 2 * (t.X[2] @ w - t.y[2]) * t.X[2], rtol=1e-15)
    with pytest.raises(IndexError):
        squared_loss_grad(t, w, -1)


def test_ols_zeroes_mean_gradient():
    t = _reg(n=100)
    w = ols_analytic(t.X, t.y)
    assert np.allclose(t.grads(w).mean(axis=0), 0.0, atol=1e-12)


def test_regression_excess_risk():
    t = RegressionTask(np.zeros((1, 2)), np.zeros(1), w_star=np.array([1.0, 1.0]), input_var=2.0)
    assert t.excess_risk(np.array([2.0, 1.0])) == pytest.approx(2.0)


# -- logistic ----------------------------------------------------------------

def test_logistic_uniform_loss_at_zero():
    rng = np.random.default_rng(0)
    t = LogisticTask(rng.random((10, 4)), np.tile([0, 1], 5), 2, reg=0.5)
    assert np.allclose(t.losses(np.zeros(t.d)), math.log(2))


def test_logistic_dimension_and_reference_class():
    rng = np.random.default_rng(1)
    t = LogisticTask(rng.random((6, 5)), rng.integers(0, 4, 6), 4)
    assert t.d == 15
    scores = t._scores(rng.normal(size=15), t.X)
    assert np.all(scores[:, -1] == 0)


def test_logistic_regulariser_gradient():
    rng = np.random.default_rng(2)
    t = LogisticTask(rng.random((8, 3)), rng.integers(0, 3, 8), 3, reg=0.25)
    t0 = LogisticTask(t.X, t.labels, 3, reg=0.0)
    w = rng.normal(size=t.d)
    diff = t.grads(w) - t0.grads(w)
    assert np.allclose(diff, 2 * 0.25 * w, rtol=1e-14)
    assert np.allclose(logistic_loss_grad(t, w, 3), t.grads(w, [3])[0])


def test_logistic_label_validation():
    with pytest.raises(ValueError):
        LogisticTask(np.zeros((2, 2)), np.array([0, 2]), 2)
    with pytest.raises(ValueError):
        LogisticTask(np.zeros((2, 2)), np.array([0, 1]), 1)
    with pytest.raises(ValueError):
        LogisticTask(np.zeros((2, 2)), np.array([0, 1]), 2, reg=-1.0)


def test_logistic_predict_and_error_rate():
    X = np.array([[1.0], [-1.0]])
    t = LogisticTask(X, np.array([0, 1]), 2, X_test=X, labels_test=np.array([0, 1]))
    assert t.error_rate(np.array([5.0])) == 0.0
    assert t.error_rate(np.array([-5.0])) == 1.0


def test_logistic_stable_for_large_scores():
    t = LogisticTask(np.array([[1.0, 1.0]]), np.array([1]), 2)
    assert np.isfinite(t.losses(np.array([800.0, 800.0]))).all()
    assert np.isfinite(t.grads(np.array([800.0, 800.0]))).all()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_logistic_midpoint_convexity(seed):
    rng = np.random.default_rng(seed)
    t = LogisticTask(rng.random((15, 3)), rng.integers(0, 3, 15), 3, reg=0.01)
    u, v = rng.normal(0, 5, t.d), rng.normal(0, 5, t.d)
    f = lambda w: t.losses(w).mean()  # noqa: E731
    assert f(0.5 * (u + v)) <= 0.5 * (f(u) + f(v)) + 1e-12


# -- finite differences ------------------------------------------------------

def test_fd_on_quadratic_loss():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    rep = finite_diff_check(lambda w: 0.5 * w @ A @ w, lambda w: A @ w, np.array([0.3, -2.0]))
    assert rep.passed and rep.max_rel_error <= 1e-6


def test_fd_on_constant_loss():
    rep = finite_diff_check(lambda w: 3.0, lambda w: np.zeros_like(w), np.ones(4))
    assert rep.passed and np.array_equal(rep.numeric, np.zeros(4))


def test_fd_detects_wrong_gradient():
    rep = finite_diff_check(lambda w: np.sum(w**2), lambda w: 3 * w, np.array([1.0, 2.0]))
    assert not rep.passed


def test_fd_all_models_at_random_points():
    errs = fd_worst_errors(points=100, seed=5)
    assert all(e <= 1e-6 for e in errs.values()), errs


def test_module_helpers_delegate():
    t = _quad()
    assert np.array_equal(models.noisy_quadratic_loss_grad(t, np.zeros(3), 0), t.grads(np.zeros(3), [0])[0])
