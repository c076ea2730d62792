"""The quadrature oracles themselves, against 40-digit mpmath integration."""
import mpmath
import pytest

from vbunmix import quadrature

mpmath.mp.dps = 40


@pytest.mark.parametrize("z", [-35, -3, 0, 2, 30])
def test_hazard_oracle(z):
    exact = mpmath.npdf(z) / mpmath.ncdf(z)
    assert quadrature.hazard_ratio(z) == pytest.approx(float(exact), rel=1e-13)


@pytest.mark.parametrize("t", [-25, -4, 0, 6])
def test_truncated_normal_oracle(t):
    z = mpmath.ncdf(t)
    h = mpmath.npdf(t) / z
    mean, var = quadrature.truncated_normal_moments(t, 1.0)
    assert mean == pytest.approx(float(t + h), rel=1e-13)
    assert var == pytest.approx(float(1 - t * h - h * h), rel=1e-12)


@pytest.mark.parametrize("a,b", [(2.5, 0.3), (1e-3, 1e3)])
def test_gig_oracle(a, b):
    k = lambda x, p: x ** p * x ** mpmath.mpf(-1.5) * mpmath.exp(-(a * x + b / x) / 2)
    norm = mpmath.quad(lambda x: k(x, 0), [0, mpmath.sqrt(b / a), mpmath.inf])
    m1 = mpmath.quad(lambda x: k(x, 1), [0, mpmath.sqrt(b / a), mpmath.inf]) / norm
    mi = mpmath.quad(lambda x: k(x, -1), [0, mpmath.sqrt(b / a), mpmath.inf]) / norm
    got = quadrature.gig_half_moments(a, b)
    assert got[0] == pytest.approx(float(m1), rel=1e-12)
    assert got[1] == pytest.approx(float(mi), rel=1e-12)
