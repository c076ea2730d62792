"""Bayesian model objects: endmembers, hyperparameters, variational state.

Every state array may carry leading batch dimensions. A single pixel uses
``mean_w`` of shape ``(N,)`` and a scalar ``mean_beta``. A batch of ``P``
pixels uses ``(P, N)`` and ``(P,)``. The engine broadcasts over those leading
axes.
"""
from dataclasses import dataclass, field, fields, replace
import math

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, InvariantViolation, ShapeError

#: Added to ``y^T y`` when seeding the noise precision.
INIT_EPS = 1e-12


@dataclass(frozen=True)
class EndmemberMatrix:
    """Known ``M x N`` signature matrix with cached column energies.

    Parameters
    ----------
    columns : array_like, shape (M, N)
        One spectral signature per column.
    labels : tuple of str, optional
        Endmember names; defaults to ``em01``, ``em02``, ...
    """

    columns: np.ndarray
    labels: tuple = ()
    column_sq_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cols = np.array(self.columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        if cols.ndim != 2 or cols.shape[0] < 1 or cols.shape[1] < 1:
            raise ShapeError(f"endmember matrix must be M x N with M, N >= 1, got {cols.shape}")
        if not np.all(np.isfinite(cols)):
            raise DomainError("endmember matrix contains non-finite entries")
        sq = np.einsum("mn,mn->n", cols, cols)
        if np.any(sq <= 0.0):
            bad = np.flatnonzero(sq <= 0.0).tolist()
            raise DomainError(f"endmember columns {bad} have zero norm")
        cols.setflags(write=False)
        sq.setflags(write=False)
        labels = tuple(self.labels) or tuple(f"em{i + 1:02d}" for i in range(cols.shape[1]))
        if len(labels) != cols.shape[1]:
            raise ShapeError(f"{len(labels)} labels for {cols.shape[1]} endmembers")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "column_sq_norms", sq)
        object.__setattr__(self, "labels", labels)

    @property
    def n_bands(self):
        return self.columns.shape[0]

    @property
    def n_endmembers(self):
        return self.columns.shape[1]

    def select_bands(self, keep):
        """Matrix restricted to the rows flagged (or indexed) by ``keep``."""
        return EndmemberMatrix(self.columns[keep], self.labels)

    def condition_number(self):
        return float(np.linalg.cond(self.columns))


@dataclass(frozen=True)
class Hyperparameters:
    """Gamma hyperparameters: ``(rho, delta)`` for the noise precision and
    ``(kappa, nu)`` for the sparsity scales."""

    rho: float = 1e-6
    delta: float = 1e-6
    kappa: float = 1e-6
    nu: float = 1e-6

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"hyperparameter {f.name} must be positive and finite, got {v}")


@dataclass
class PosteriorState:
    """Moments of every mean-field factor for one pixel (or a batch).

    ``mean_w_sq`` is always stored as ``mean_w**2 + sigma_tr_sq`` and
    ``residual`` tracks ``y - Phi @ mean_w`` incrementally.
    """

    mean_w: np.ndarray
    mu: np.ndarray
    sigma_sq: np.ndarray
    sigma_tr_sq: np.ndarray
    mean_w_sq: np.ndarray
    mean_alpha: np.ndarray
    mean_inv_alpha: np.ndarray
    mean_b: np.ndarray
    mean_beta: np.ndarray
    residual: np.ndarray

    def copy(self):
        return replace(self, **{f.name: np.array(getattr(self, f.name), copy=True)
                                for f in fields(self)})

    def take(self, index):
        """Sub-batch along the leading pixel axis."""
        return PosteriorState(**{f.name: getattr(self, f.name)[index] for f in fields(self)})

    def put(self, index, other):
        for f in fields(self):
            getattr(self, f.name)[index] = getattr(other, f.name)

    def first_nonfinite(self):
        """Name of the first field holding a NaN or infinity, else ``None``."""
        for f in fields(self):
            if not np.all(np.isfinite(getattr(self, f.name))):
                return f.name
        return None

    def check_invariants(self, y, phi, residual_rtol=1e-8):
        """Raise :class:`InvariantViolation` unless every structural invariant holds."""
        name = self.first_nonfinite()
        if name is not None:
            raise InvariantViolation(f"{name} is not finite")
        for name in ("sigma_sq", "sigma_tr_sq", "mean_w_sq", "mean_alpha",
                     "mean_inv_alpha", "mean_b", "mean_beta"):
            if not np.all(getattr(self, name) > 0.0):
                raise InvariantViolation(f"{name} must be strictly positive")
        if not np.all(self.mean_w >= 0.0):
            raise InvariantViolation("mean_w must be nonnegative")
        if not np.array_equal(self.mean_w_sq, np.square(self.mean_w) + self.sigma_tr_sq):
            raise InvariantViolation("mean_w_sq != mean_w**2 + sigma_tr_sq")
        fresh = np.asarray(y, dtype=float) - self.mean_w @ phi.columns.T
        scale = np.maximum(np.linalg.norm(y, axis=-1), np.linalg.norm(fresh, axis=-1))
        drift = np.linalg.norm(self.residual - fresh, axis=-1)
        if np.any(drift > residual_rtol * np.maximum(scale, np.finfo(float).tiny)):
            raise InvariantViolation(f"residual drift {np.max(drift):.3e} exceeds tolerance")


@dataclass(frozen=True)
class ConvergenceReport:
    """Outcome of one pixel's coordinate-ascent run."""

    iterations: int
    final_delta: float
    converged: bool


def as_spectra(y, phi):
    """Validate pixel spectra against ``phi`` and return them as floats."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] != phi.n_bands:
        raise ShapeError(f"spectrum length {y.shape[-1:] or ()} does not match M={phi.n_bands}")
    if not np.all(np.isfinite(y)):
        raise DomainError("pixel spectrum contains non-finite values")
    return y


def init_state(y, phi, hyper=None):
    """Starting point for coordinate ascent.

    Abundances start at zero, ``<alpha> = <b> = 1`` with ``<1/alpha> = 2``,
    and the noise precision at ``M / (y^T y + 1e-12)``. The abundance
    variances are set to the untruncated values implied by those moments.
    ``hyper`` is accepted for interface symmetry; the start does not depend
    on it.
    """
    y = as_spectra(y, phi)
    batch = y.shape[:-1]
    n = phi.n_endmembers
    ones = np.ones(batch + (n,))
    mean_beta = phi.n_bands / (np.einsum("...m,...m->...", y, y) + INIT_EPS)
    sigma_sq = 1.0 / (np.asarray(mean_beta)[..., None] * (1.0 + phi.column_sq_norms))
    mean_w = np.zeros(batch + (n,))
    return PosteriorState(
        mean_w=mean_w,
        mu=np.zeros(batch + (n,)),
        sigma_sq=sigma_sq,
        sigma_tr_sq=sigma_sq.copy(),
        mean_w_sq=np.square(mean_w) + sigma_sq,
        mean_alpha=ones.copy(),
        mean_inv_alpha=2.0 * ones,
        mean_b=ones.copy(),
        mean_beta=np.array(mean_beta, dtype=float),
        residual=y.copy(),
    )


# --- densities used by validation ------------------------------------------------

def laplace_marginal_log_density(w, b, beta):
    """Log density of the nonnegatively truncated Laplace prior on ``w``.

    ``sum_i [0.5 log(beta b_i) - sqrt(b_i beta) w_i]``, or ``-inf`` when any
    ``w_i`` is negative.
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    b = np.broadcast_to(np.asarray(b, dtype=float), w.shape)
    beta = float(np.squeeze(beta))
    if np.any(w < 0.0):
        return -math.inf
    return float(np.sum(0.5 * np.log(beta * b) - np.sqrt(b * beta) * w))


def gamma_log_density(x, shape, rate):
    """Log of ``Gamma(x; shape, rate)``; ``-inf`` off the positive axis."""
    if x <= 0.0:
        return -math.inf
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * math.log(x) - rate * x


def inverse_gamma_log_density(x, shape, scale):
    """Log of ``IGamma(x; shape, scale)``; ``-inf`` off the positive axis."""
    if x <= 0.0:
        return -math.inf
    return shape * math.log(scale) - gammaln(shape) - (shape + 1.0) * math.log(x) - scale / x


def noise_precision_log_prior(beta, hyper):
    """``Gamma(beta; rho, delta)``."""
    return gamma_log_density(beta, hyper.rho, hyper.delta)


def abundance_log_prior(w, alpha, beta):
    """Zero-mean normal with precisions ``beta * alpha`` truncated to ``w >= 0``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), w.shape)
    if np.any(w < 0.0):
        return -math.inf
    prec = beta * alpha
    return float(np.sum(math.log(2.0) + 0.5 * np.log(prec / (2 * math.pi)) - 0.5 * prec * w * w))


def precision_log_prior(alpha, b):
    """``IGamma(alpha; 1, b / 2)``."""
    return inverse_gamma_log_density(alpha, 1.0, 0.5 * b)


def scale_log_prior(b, hyper):
    """``Gamma(b; kappa, nu)``."""
    return gamma_log_density(b, hyper.kappa, hyper.nu)
