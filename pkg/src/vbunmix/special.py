"""Scalar kernels for the truncated-normal and GIG(-1/2) moments.

All functions accept scalars or arrays and broadcast like ufuncs. Scalar input
gives a numpy scalar back.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, log_ndtr

from .errors import DomainError

__all__ = [
    "TruncatedNormalMoments",
    "GigHalfMoments",
    "hazard_ratio",
    "truncated_normal_moments",
    "gig_half_moments",
]

_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_SQRT_HALF = np.sqrt(0.5)

# Below this standardized location the variance 1 - h*(h + t) cancels
# catastrophically; the Mills-ratio continued fraction takes over.
_TAIL_SWITCH = -5.0
# 40 terms reach machine precision for every t <= -5.
_CF_DEPTH = 40


@dataclass(frozen=True)
class TruncatedNormalMoments:
    """Mean and variance of N(mu, sigma^2) restricted to [0, inf)."""

    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class GigHalfMoments:
    """E[x] and E[1/x] for a GIG(a, b, -1/2) variable."""

    mean: np.ndarray
    mean_inverse: np.ndarray


def _scalar_or_array(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


def hazard_ratio(z):
    """Standard normal density over CDF, ``phi(z) / Phi(z)``.

    For ``z <= 0`` the ratio is ``sqrt(2/pi) / erfcx(-z / sqrt(2))``, which
    never forms the vanishing numerator and denominator separately. For
    ``z > 0`` it is evaluated in log space.

    Raises
    ------
    DomainError
        If any input is not finite.
    """
    z = np.asarray(z, dtype=float)
    if not np.isfinite(z).all():
        raise DomainError("hazard_ratio requires finite input")
    return _scalar_or_array(_hazard(z))


def _hazard(z):
    with np.errstate(over="ignore"):
        lower = _SQRT_2_OVER_PI / erfcx(-z * _SQRT_HALF)
    upper = np.exp(-0.5 * z * z - _HALF_LOG_2PI - log_ndtr(z))
    return np.where(z <= 0.0, lower, upper)


def _mills_tail(u):
    """Continued-fraction terms for the lower tail, ``u = -mu/sigma >= 5``.

    Returns ``(c, d)`` with ``c = 1/(u + d)`` and ``d = 2/(u + 3/(u + ...))``.
    The standardized truncated mean is ``c`` and the standardized variance is
    ``(d - c) / (u + d)``; neither involves a cancelling difference.
    """
    t = np.zeros_like(u)
    for k in range(_CF_DEPTH, 1, -1):
        t = k / (u + t)
    return 1.0 / (u + t), t


def truncated_normal_moments(mu, sigma):
    """Moments of a normal distribution truncated to the nonnegative axis.

    Parameters
    ----------
    mu : float or array_like
        Location of the untruncated normal.
    sigma : float or array_like
        Scale of the untruncated normal, strictly positive.

    Returns
    -------
    TruncatedNormalMoments
        ``mean = mu + sigma * h(mu/sigma)`` and
        ``variance = sigma^2 * (1 - (mu/sigma) h - h^2)`` with ``h`` the
        hazard ratio. Deep in the lower tail both come from a continued
        fraction so that they stay accurate down to ``mu/sigma = -1e300``.
    """
    mu, sigma = np.broadcast_arrays(np.asarray(mu, dtype=float),
                                    np.asarray(sigma, dtype=float))
    if not ((sigma > 0.0) & (sigma < np.inf)).all():
        raise DomainError("sigma must be finite and strictly positive")
    if not np.isfinite(mu).all():
        raise DomainError("mu must be finite")
    t = mu / sigma
    h = _hazard(t)
    g = t + h
    std_mean = g
    std_var = 1.0 - h * g

    tail = t < _TAIL_SWITCH
    if tail.any():
        std_mean = np.array(std_mean)
        std_var = np.array(std_var)
        u = -t[tail]
        c, d = _mills_tail(u)
        std_mean[tail] = c
        std_var[tail] = (d - c) / (u + d)

    mean = sigma * std_mean
    variance = sigma * sigma * std_var
    return TruncatedNormalMoments(_scalar_or_array(mean), _scalar_or_array(variance))


def gig_half_moments(a, b):
    """First moment and inverse moment of GIG(a, b, p=-1/2).

    The density is proportional to ``x^(-3/2) exp(-(a x + b / x) / 2)``. Since
    ``K_{-1/2} = K_{1/2}`` the moments collapse to ``E[x] = sqrt(b/a)`` and
    ``E[1/x] = sqrt(a/b) + 1/b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (((a > 0.0) & (a < np.inf)).all() and ((b > 0.0) & (b < np.inf)).all()):
        raise DomainError("GIG parameters a and b must be positive and finite")
    mean = np.sqrt(b / a)
    mean_inverse = np.sqrt(a / b) + 1.0 / b
    return GigHalfMoments(_scalar_or_array(mean), _scalar_or_array(mean_inverse))
