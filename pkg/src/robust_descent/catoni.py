"""Closed-form smoothed Catoni-type mean estimator.

Each observation ``x`` is multiplied by ``1 + eps`` with ``eps ~ N(0, 1/beta)``,
rescaled by ``s``, passed through the soft truncation ``truncate`` and the
noise is integrated out analytically. For very large inputs, where the
polynomial-plus-correction form cancels badly, the saturated tails stay in
closed form and the bounded cubic piece uses a fixed Gauss-Legendre rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

SQRT2 = math.sqrt(2.0)
PSI_MAX = 2.0 * SQRT2 / 3.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)

DELTA_MIN = 1e-12
DELTA_MAX = 1.0 - 1e-12

# |V| beyond this makes Phi(-V) and exp(-V^2/2) exactly 0 or 1 in double precision.
_V_CLIP = 60.0
# Above this magnitude of the cubic part, cancellation in poly + correction is
# no longer negligible and the tail/middle split is used instead.
_POLY_SWITCH = 1e3


def norm_cdf(x):
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / SQRT2)


def _norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def check_delta(delta: float) -> float:
    """Validate a confidence level, clamping values numerically at 0 or 1."""
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    if delta < DELTA_MIN or delta > DELTA_MAX:
        clamped = min(max(delta, DELTA_MIN), DELTA_MAX)
        warnings.warn(
            f"delta={delta!r} clamped to {clamped!r}", RuntimeWarning, stacklevel=3
        )
        delta = clamped
    return delta


@dataclass(frozen=True)
class SmoothingParams:
    """Confidence ``delta``, scale ``s`` and noise precision ``beta``."""

    delta: float
    s: float
    beta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not self.s > 0:
            raise ValueError(f"scale s must be positive, got {self.s!r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta!r}")

    @classmethod
    def tuned(cls, v: float, n: int, delta: float, beta: float | None = None):
        """Parameters with the error-bound-minimising scale for variance bound ``v``."""
        delta = check_delta(delta)
        if beta is None:
            beta = default_noise_precision(delta)
        return cls(delta=delta, s=scale_for(v, n, delta), beta=beta)


def truncate(u):
    """Soft truncation: ``u - u**3/6`` on ``[-sqrt2, sqrt2]``, constant outside."""
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) <= SQRT2, u - u**3 / 6.0, np.sign(u) * PSI_MAX)
    return out if out.ndim else float(out)


def _check_b(b):
    b = np.asarray(b, dtype=float)
    if np.any(~(b > 0)):
        raise ValueError("noise scale b must be strictly positive")
    return b


def _correction(a, b):
    with np.errstate(over="ignore", divide="ignore"):
        vm = np.clip((SQRT2 - a) / b, -_V_CLIP, _V_CLIP)
        vp = np.clip((SQRT2 + a) / b, -_V_CLIP, _V_CLIP)
    fm = norm_cdf(-vm)
    fp = norm_cdf(-vp)
    em = np.exp(-0.5 * vm**2)
    ep = np.exp(-0.5 * vp**2)
    t1 = PSI_MAX * (fm - fp)
    t2 = -(a - a**3 / 6.0) * (fm + fp)
    t3 = b / _SQRT_2PI * (1.0 - a**2 / 2.0) * (ep - em)
    t4 = a * b**2 / 2.0 * (fp + fm + (vp * ep + vm * em) / _SQRT_2PI)
    t5 = b**3 / (6.0 * _SQRT_2PI) * ((2.0 + vm**2) * em - (2.0 + vp**2) * ep)
    return t1 + t2 + t3 + t4 + t5


def correction(a, b):
    """Five-term correction making the cubic expansion of ``E psi(a + bZ)`` exact.

    ``E psi(a + b Z) = a (1 - b**2 / 2) - a**3 / 6 + correction(a, b)`` for
    ``Z ~ N(0, 1)``. The correction accounts for the mass of ``a + bZ`` that
    falls in the saturated branches of ``truncate``.
    """
    a = np.asarray(a, dtype=float)
    b = _check_b(b)
    out = _correction(a, b)
    return out if out.ndim else float(out)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def _split_expectation(a, b):
    # Saturated tails in closed form plus the cubic piece over |u| <= sqrt2.
    # Only reached when |a| is large; the middle piece then matters only for
    # b >~ 0.25, where the Gaussian weight is smooth on the interval.
    a = a[:, None]
    b = b[:, None]
    with np.errstate(over="ignore", divide="ignore"):
        lo = np.clip((-SQRT2 - a) / b, -_V_CLIP, _V_CLIP)
        hi = np.clip((SQRT2 - a) / b, -_V_CLIP, _V_CLIP)
    tails = PSI_MAX * (norm_cdf(-hi) - norm_cdf(lo))
    u = SQRT2 * _GL_NODES
    dens = _norm_pdf((u - a) / b) / b
    middle = SQRT2 * np.sum(_GL_WEIGHTS * (u - u**3 / 6.0) * dens, axis=1)
    return tails[:, 0] + middle


def _expectation(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.empty(a.shape)
    zero = b == 0
    # b == 0 means no noise at all: the expectation is psi itself.
    out[zero] = truncate(a[zero])
    live = ~zero
    # psi is odd and the noise symmetric: evaluate at |a| so oddness is exact.
    sgn = np.sign(a[live])
    aa, bb = np.abs(a[live]), b[live]
    size = np.abs(aa) ** 3 + np.abs(aa) * bb**2 + bb**3
    direct = size <= _POLY_SWITCH
    res = np.empty(aa.shape)
    ad, bd = aa[direct], bb[direct]
    res[direct] = ad * (1.0 - bd**2 / 2.0) - ad**3 / 6.0 + _correction(ad, bd)
    res[~direct] = _split_expectation(aa[~direct], bb[~direct])
    # The exact value lies in [-PSI_MAX, PSI_MAX]; trim last-ulp rounding.
    out[live] = sgn * np.minimum(res, PSI_MAX)
    return out


def smoothed_psi_expectation(a, b):
    """``E[truncate(a + b Z)]`` for standard normal ``Z``, in closed form."""
    a = np.asarray(a, dtype=float)
    b = _check_b(b)
    out = _expectation(a, b)
    return out if out.ndim else float(out)


def smoothed_mean(x, s, beta, axis=0):
    """Noise-smoothed truncated mean of ``x`` along ``axis``.

    Parameters
    ----------
    x : array_like
        Observations. With a 2-D array and ``axis=0`` each column is
        estimated separately.
    s : float or array_like
        Positive scale, broadcastable against the reduced shape.
    beta : float
        Precision of the multiplicative Gaussian noise.

    Returns
    -------
    float or ndarray
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0 or x.shape[axis] == 0:
        raise ValueError("cannot estimate a mean from an empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("scale s must be strictly positive")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    s_b = np.expand_dims(s, axis) if s.ndim else s
    a = x / s_b
    b = np.abs(a) / math.sqrt(beta)
    out = s * np.mean(_expectation(a, b), axis=axis)
    return out if np.ndim(out) else float(out)


def smoothed_mean_params(x, params: SmoothingParams) -> float:
    return smoothed_mean(x, params.s, params.beta)


def scale_for(v, n: int, delta: float):
    """Scale ``sqrt(n v / (2 log(1/delta)))``."""
    delta = check_delta(delta)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("variance bound must be non-negative")
    out = np.sqrt(n * v / (2.0 * math.log(1.0 / delta)))
    return out if out.ndim else float(out)


def default_noise_precision(delta: float) -> float:
    """Noise precision ``sqrt(2 log(1/delta))`` paired with the tuned scale."""
    delta = check_delta(delta)
    return math.sqrt(2.0 * math.log(1.0 / delta))


def deviation_bound(v: float, n: int, delta: float) -> float:
    """High-probability deviation radius of the tuned estimator."""
    delta = check_delta(delta)
    if not v > 0 or n < 1:
        raise ValueError("need v > 0 and n >= 1")
    return math.sqrt(2.0 * v * math.log(1.0 / delta) / n) + math.sqrt(v / n)


def folded_normal_mean(a, b):
    """``E|X|`` for ``X ~ N(a, b**2)``."""
    a = np.asarray(a, dtype=float)
    b = _check_b(b)
    out = a * (1.0 - 2.0 * norm_cdf(-a / b)) + b * math.sqrt(2.0 / math.pi) * np.exp(
        -(a**2) / (2.0 * b**2)
    )
    return out if out.ndim else float(out)


def lipschitz_factor(beta: float) -> float:
    """l1-Lipschitz constant ``E|1 + eps|`` of the estimator, eps ~ N(0, 1/beta)."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    return float(folded_normal_mean(1.0, 1.0 / math.sqrt(beta)))
