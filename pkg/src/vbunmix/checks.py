"""Oracle suites: closed forms against quadrature, VB against Gibbs.

Each check returns a :class:`CheckResult` carrying the worst measured error
and the tolerance it was held to.
"""
import math
from typing import NamedTuple

import numpy as np

from . import quadrature, special
from .engine import EngineOptions, run
from .fixtures import GIBBS_FIXTURE, load_fixture, load_gibbs_reference
from .model import (Hyperparameters, abundance_log_prior, laplace_marginal_log_density,
                    noise_precision_log_prior, precision_log_prior, scale_log_prior)

SPECIAL_RTOL = 1e-10
MARGINAL_RTOL = 1e-8
NORMALIZATION_ATOL = 1e-8


class CheckResult(NamedTuple):
    name: str
    error: float
    tolerance: float

    @property
    def passed(self):
        return self.error <= self.tolerance

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<40s} error={self.error:.3e}  tol={self.tolerance:.1e}"


def _rel(a, b):
    return abs(a - b) / abs(b)


def hazard_grid():
    """Log-spaced magnitudes on both sides of zero, spanning [-35, 35]."""
    mags = np.logspace(-3, math.log10(35.0), 30)
    return np.concatenate([-mags[::-1], [0.0], mags])


def truncation_grid():
    """``(mu, sigma)`` pairs with ``mu / sigma`` covering [-30, 30]."""
    ratios = np.concatenate([np.linspace(-30, -5, 11), np.linspace(-4.5, 4.5, 13),
                             np.linspace(5, 30, 6)])
    return [(r * s, s) for r in ratios for s in (0.3, 1.0, 7.0)]


def gig_grid():
    vals = np.logspace(-3, 3, 7)
    return [(a, b) for a in vals for b in vals]


def check_hazard_ratio(perturb=1.0):
    err = max(_rel(special.hazard_ratio(z) * perturb, quadrature.hazard_ratio(z))
              for z in hazard_grid())
    return CheckResult("hazard_ratio vs quadrature", err, SPECIAL_RTOL)


def check_truncated_normal():
    err = 0.0
    for mu, sigma in truncation_grid():
        got = special.truncated_normal_moments(mu, sigma)
        ref = quadrature.truncated_normal_moments(mu, sigma)
        err = max(err, _rel(got.mean, ref[0]), _rel(got.variance, ref[1]))
    return CheckResult("truncated_normal_moments vs quadrature", err, SPECIAL_RTOL)


def check_gig():
    err = 0.0
    for a, b in gig_grid():
        got = special.gig_half_moments(a, b)
        ref = quadrature.gig_half_moments(a, b)
        err = max(err, _rel(got.mean, ref[0]), _rel(got.mean_inverse, ref[1]))
    return CheckResult("gig_half_moments vs quadrature", err, SPECIAL_RTOL)


def check_laplace_marginal(n_points=50, seed=0):
    """Closed-form truncated Laplace density vs the alpha-integrated hierarchy."""
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(n_points):
        w = rng.exponential(1.0)
        b = 10.0 ** rng.uniform(-2, 2)
        beta = 10.0 ** rng.uniform(-2, 3)
        closed = laplace_marginal_log_density([w], [b], beta)
        integrated = quadrature.laplace_marginal_log_density(w, b, beta)
        err = max(err, abs(math.expm1(closed - integrated)))
    return CheckResult("truncated Laplace marginal vs hierarchy", err, MARGINAL_RTOL)


def check_prior_normalization():
    hyper = Hyperparameters(rho=2.5, delta=0.7, kappa=1.5, nu=3.0)
    cases = [
        (lambda x: noise_precision_log_prior(x, hyper), 2.5 / 0.7),
        (lambda x: precision_log_prior(x, 1.3), 0.65),
        (lambda x: scale_log_prior(x, hyper), 0.5),
        (lambda x: abundance_log_prior([x], 2.0, 3.0), 0.3),
    ]
    err = 0.0
    for logpdf, center in cases:
        mass = quadrature.positive_density_moments(logpdf, center, orders=(0,))[0]
        err = max(err, abs(mass - 1.0))
    return CheckResult("prior densities integrate to one", err, NORMALIZATION_ATOL)


def gibbs_agreement_errors(vb_w, gibbs_w, rel=0.10, small=0.05, absolute=0.02):
    """Per-coefficient error normalized by its allowance (pass iff <= 1)."""
    vb_w = np.asarray(vb_w)
    gibbs_w = np.asarray(gibbs_w)
    allowance = np.where(gibbs_w < small, absolute, rel * gibbs_w)
    return np.abs(vb_w - gibbs_w) / allowance


def check_gibbs_agreement(perturb=1.0):
    inst = load_fixture(GIBBS_FIXTURE)
    ref = load_gibbs_reference()
    result = run(inst.y, inst.phi, Hyperparameters(), EngineOptions())
    ratios = gibbs_agreement_errors(result.abundances * perturb, ref.mean_w)
    return CheckResult("VB vs Gibbs posterior means (ratio)", float(ratios.max()), 1.0)


def run_all(inject_fault=False):
    """Every suite in order. ``inject_fault`` corrupts two checks on purpose
    so the harness itself can be tested."""
    bump = 1.5 if inject_fault else 1.0
    return [
        check_hazard_ratio(perturb=bump),
        check_truncated_normal(),
        check_gig(),
        check_laplace_marginal(),
        check_prior_normalization(),
        check_gibbs_agreement(perturb=bump),
    ]
