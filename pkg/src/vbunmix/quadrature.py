"""Quadrature oracles for the closed-form moments.

Nothing here calls into :mod:`vbunmix.special`; every value comes from
adaptive Gauss-Kronrod integration (``scipy.integrate.quad``) of an explicit
density. Positive-support integrals use the substitution ``x = exp(s)`` and
all integrands are rescaled so the integral is O(1) before integrating.
"""
import math

from scipy import integrate
from scipy.special import kve

QUAD_OPTS = dict(epsabs=1e-14, epsrel=1e-13, limit=200)


def _quad(f, lo, hi, points=None):
    val, _ = integrate.quad(f, lo, hi, points=points, **QUAD_OPTS)
    return val


def hazard_ratio(z):
    """``phi(z) / Phi(z)`` by integrating the normal density."""
    z = float(z)
    if z <= 0.0:
        # Phi(z) / phi(z) = int_0^inf exp(z s - s^2 / 2) ds
        inv = _quad(lambda s: math.exp(z * s - 0.5 * s * s), 0.0, math.inf)
        return 1.0 / inv
    cdf = 0.5 + _quad(lambda x: math.exp(-0.5 * x * x), 0.0, z) / math.sqrt(2 * math.pi)
    return math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) / cdf


def truncated_normal_moments(mu, sigma):
    """(mean, variance) of N(mu, sigma^2) on [0, inf), two-pass quadrature."""
    t = float(mu) / float(sigma)
    if t >= 0.0:
        kernel = lambda x: math.exp(-0.5 * (x - t) ** 2)
        segments = [(0.0, t), (t, t + 40.0)]
    else:
        # exp(-(x - t)^2 / 2) with the constant exp(-t^2 / 2) divided out
        kernel = lambda x: math.exp(t * x - 0.5 * x * x)
        segments = [(0.0, 40.0)]

    def integral(f):
        return sum(_quad(f, lo, hi) for lo, hi in segments if hi > lo)

    z0 = integral(kernel)
    m = integral(lambda x: x * kernel(x)) / z0
    v = integral(lambda x: (x - m) ** 2 * kernel(x)) / z0
    return m * sigma, v * sigma * sigma


def _positive_integral(log_kernel, center, width=40.0):
    """``int_0^inf exp(log_kernel(x)) dx`` via ``x = exp(s)`` around ``log(center)``."""
    s0 = math.log(center)
    return _quad(lambda s: math.exp(log_kernel(math.exp(s)) + s), s0 - width, s0 + width,
                 points=[s0])


def gig_half_moments(a, b):
    """(E[x], E[1/x]) for x ~ GIG(a, b, -1/2).

    Moments are integrated and divided by the Bessel normalizer
    ``2 (b/a)^(-1/4) K_{1/2}(sqrt(a b))``.
    """
    a, b = float(a), float(b)
    z = math.sqrt(a * b)
    # exp(z) rescaling: kernel peak value is then at most 1
    log_kernel = lambda x: -1.5 * math.log(x) - 0.5 * (a * x + b / x) + z
    norm = 2.0 * (b / a) ** -0.25 * kve(0.5, z)
    center = math.sqrt(b / a)
    m1 = _positive_integral(lambda x: log_kernel(x) + math.log(x), center)
    mi = _positive_integral(lambda x: log_kernel(x) - math.log(x), center)
    return m1 / norm, mi / norm


def gig_normalizer_ratio(a, b):
    """Quadrature of the unnormalized GIG(-1/2) kernel over its Bessel constant (should be 1)."""
    a, b = float(a), float(b)
    z = math.sqrt(a * b)
    log_kernel = lambda x: -1.5 * math.log(x) - 0.5 * (a * x + b / x) + z
    return _positive_integral(log_kernel, math.sqrt(b / a)) / (2.0 * (b / a) ** -0.25 * kve(0.5, z))


def laplace_marginal_log_density(w, b, beta):
    """Log of ``int p(w | alpha, beta) p(alpha | b) d alpha`` for one coordinate.

    ``p(w | alpha, beta)`` is the zero-mean normal with precision
    ``beta * alpha`` truncated to ``w >= 0`` (hence the factor 2), and
    ``p(alpha | b)`` is the inverse gamma with shape 1 and scale ``b / 2``.
    """
    w, b, beta = float(w), float(b), float(beta)
    if w < 0.0:
        return -math.inf
    shift = math.sqrt(b * beta) * w

    def log_kernel(alpha):
        log_trunc_normal = math.log(2.0) + 0.5 * math.log(beta * alpha / (2 * math.pi)) \
            - 0.5 * beta * alpha * w * w
        log_igamma = math.log(b / 2.0) - 2.0 * math.log(alpha) - 0.5 * b / alpha
        return log_trunc_normal + log_igamma + shift

    center = math.sqrt(b / (beta * w * w)) if w > 0.0 else b
    return math.log(_positive_integral(log_kernel, center, width=60.0)) - shift


def positive_density_moments(log_density, center, orders=(0, 1, 2), width=120.0):
    """Raw moments ``int x^k exp(log_density(x)) dx`` over ``(0, inf)``.

    The wide default window keeps shape parameters below one (mass piling up
    near zero) inside the integration range.
    """
    ref = log_density(center)
    out = []
    for k in orders:
        val = _positive_integral(lambda x: log_density(x) - ref + k * math.log(x), center, width)
        out.append(val * math.exp(ref))
    return out


def total_mass(log_density, lower, upper, points=None):
    """Integral of ``exp(log_density)`` over ``[lower, upper]``."""
    return _quad(lambda x: math.exp(log_density(x)), lower, upper, points=points)
