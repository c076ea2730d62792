"""Ground truth and independent checks: synthetic instances, a Gibbs sampler
on the same hierarchical model, and a nonnegative least-squares baseline."""
from dataclasses import dataclass
import hashlib
import math
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import optimize
from scipy.special import ndtr, ndtri

from .errors import ConvergenceError, DomainError, ParseError, RefusalError, ShapeError
from .model import EndmemberMatrix, Hyperparameters, as_spectra

GIBBS_MAX_BANDS = 50
GIBBS_MAX_ENDMEMBERS = 8
# Standardized truncation point above which inverse-CDF sampling gives way
# to exponential-proposal rejection.
_REJECTION_SWITCH = 4.0


@dataclass(frozen=True)
class SyntheticInstance:
    phi: EndmemberMatrix
    w_true: np.ndarray
    noise_precision_true: float
    y: np.ndarray
    seed: int
    snr_db: float = math.inf
    correlation: float = 0.0

    @property
    def support(self):
        return np.flatnonzero(self.w_true > 0)


def _bumps(rng, bands, count, width_range, span=(0.0, 1.0)):
    out = np.zeros_like(bands)
    for _ in range(count):
        center = rng.uniform(*span)
        width = rng.uniform(*width_range)
        out += rng.uniform(0.5, 1.0) * np.exp(-0.5 * ((bands - center) / width) ** 2)
    return out / np.linalg.norm(out)


def pseudo_spectra(rng, n_bands, n_endmembers, correlation):
    """Smooth positive signatures sharing a broad base spectrum.

    Column ``j`` is ``sqrt(c) * base + sqrt(1 - c) * own_j`` with unit-norm
    ``base`` and ``own_j`` built from Gaussian bumps. The narrow ``own_j``
    bumps are centred inside the j-th of ``n_endmembers`` equal band
    intervals, so they barely overlap and pairwise cosine similarity tracks
    ``c``.
    """
    bands = np.linspace(0.0, 1.0, n_bands)
    step = 1.0 / max(n_bands - 1, 1)
    base = _bumps(rng, bands, 3, (0.2, 0.4))
    cols = np.empty((n_bands, n_endmembers))
    for j in range(n_endmembers):
        span = ((j + 0.15) / n_endmembers, (j + 0.85) / n_endmembers)
        width = (max(0.1 / n_endmembers, step), max(0.25 / n_endmembers, 1.5 * step))
        own = _bumps(rng, bands, int(rng.integers(1, 4)), width, span)
        col = math.sqrt(correlation) * base + math.sqrt(1.0 - correlation) * own
        cols[:, j] = rng.uniform(0.4, 1.0) * col / col.max()
    return cols


def generate_instance(M, N, K, snr_db, correlation, seed):
    """Draw a sparse unmixing problem ``y = Phi w + n``.

    ``K`` active abundances are drawn uniform on (0.1, 1). The noise variance
    is ``(||Phi w||^2 / M) / 10^(snr_db / 10)``; ``snr_db = inf`` gives a
    noiseless ``y``.
    """
    if not (1 <= K <= N <= M):
        raise DomainError(f"need 1 <= K <= N <= M, got K={K}, N={N}, M={M}")
    if not 0.0 <= correlation < 1.0:
        raise DomainError("correlation must lie in [0, 1)")
    if math.isnan(snr_db):
        raise DomainError("snr_db must not be NaN")
    rng = np.random.default_rng(seed)
    phi = EndmemberMatrix(pseudo_spectra(rng, M, N, correlation))
    w = np.zeros(N)
    active = rng.choice(N, size=K, replace=False)
    w[active] = rng.uniform(0.1, 1.0, size=K)
    signal = phi.columns @ w
    noise = rng.standard_normal(M)
    if math.isinf(snr_db):
        precision = math.inf
        y = signal
    else:
        variance = (signal @ signal / M) / 10.0 ** (snr_db / 10.0)
        precision = 1.0 / variance
        y = signal + math.sqrt(variance) * noise
    return SyntheticInstance(phi, w, precision, y, int(seed), float(snr_db), float(correlation))


def realized_snr_db(instance):
    signal = instance.phi.columns @ instance.w_true
    noise = instance.y - signal
    return 10.0 * math.log10((signal @ signal) / (noise @ noise))


# --- fixture files ---------------------------------------------------------------

_FIXTURE_FILES = ("phi.txt", "w_true.txt", "y.txt")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_instance(instance, directory):
    """Write ``phi.txt``, ``w_true.txt``, ``y.txt`` and a ``manifest.txt``
    holding parameters and SHA-256 checksums."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.savetxt(d / "phi.txt", instance.phi.columns, fmt="%.17g")
    np.savetxt(d / "w_true.txt", instance.w_true, fmt="%.17g")
    np.savetxt(d / "y.txt", instance.y, fmt="%.17g")
    m, n = instance.phi.columns.shape
    lines = [
        f"M={m}", f"N={n}", f"K={instance.support.size}",
        f"snr_db={float(instance.snr_db)!r}", f"correlation={float(instance.correlation)!r}",
        f"seed={instance.seed}", f"noise_precision_true={float(instance.noise_precision_true)!r}",
    ]
    lines += [f"sha256:{name}={_sha256(d / name)}" for name in _FIXTURE_FILES]
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_manifest(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def load_instance(directory):
    """Read a fixture written by :func:`save_instance`, verifying checksums."""
    d = Path(directory)
    meta = read_manifest(d / "manifest.txt")
    for name in _FIXTURE_FILES:
        expected = meta.get(f"sha256:{name}")
        if expected != _sha256(d / name):
            raise ParseError(f"checksum mismatch for {d / name}")
    phi = EndmemberMatrix(np.loadtxt(d / "phi.txt", ndmin=2))
    return SyntheticInstance(
        phi=phi,
        w_true=np.loadtxt(d / "w_true.txt", ndmin=1),
        noise_precision_true=float(meta["noise_precision_true"]),
        y=np.loadtxt(d / "y.txt", ndmin=1),
        seed=int(meta["seed"]),
        snr_db=float(meta["snr_db"]),
        correlation=float(meta["correlation"]),
    )


# --- Gibbs sampler ---------------------------------------------------------------

def sample_truncated_normal(rng, mu, sigma):
    """One draw from N(mu, sigma^2) restricted to [0, inf)."""
    a = -mu / sigma
    if a <= _REJECTION_SWITCH:
        # upper-tail inverse CDF, accurate where the kept mass is small
        x = -ndtri(rng.uniform() * ndtr(-a))
    else:
        lam = 0.5 * (a + math.sqrt(a * a + 4.0))
        while True:
            x = a + rng.exponential(1.0 / lam)
            if rng.uniform() <= math.exp(-0.5 * (x - lam) ** 2):
                break
    return sigma * max(x - a, 0.0)


def sample_gig_half(rng, a, b):
    """One draw from GIG(a, b, -1/2), i.e. inverse Gaussian with mean
    ``sqrt(b/a)`` and shape ``b``."""
    return rng.wald(math.sqrt(b / a), b)


class GibbsResult(NamedTuple):
    mean_w: np.ndarray
    var_w: np.ndarray
    se_w: np.ndarray
    mean_beta: float
    se_beta: float
    n_samples: int


def _batch_means_se(draws, n_batches=50):
    usable = (draws.shape[0] // n_batches) * n_batches
    means = draws[:usable].reshape(n_batches, -1, *draws.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)


def gibbs_sample(y, phi, hyper=None, n_samples=50_000, burn_in=5_000, seed=0):
    """Posterior means of ``w`` and ``beta`` by Gibbs sampling.

    Each sweep draws ``beta`` from its Gamma conditional, then for every
    endmember ``w_i`` (truncated normal), ``alpha_i`` (GIG(-1/2)) and
    ``b_i`` (Gamma). Standard errors use 50 batch means.

    Raises
    ------
    RefusalError
        For problems larger than 50 bands or 8 endmembers.
    """
    hyper = hyper or Hyperparameters()
    if phi.n_bands > GIBBS_MAX_BANDS or phi.n_endmembers > GIBBS_MAX_ENDMEMBERS:
        raise RefusalError(
            f"Gibbs oracle limited to M <= {GIBBS_MAX_BANDS}, N <= {GIBBS_MAX_ENDMEMBERS}")
    y = as_spectra(y, phi)
    if y.ndim != 1:
        raise ShapeError("gibbs_sample expects a single spectrum")
    rng = np.random.default_rng(seed)
    cols = phi.columns
    sq = phi.column_sq_norms
    m, n = cols.shape

    w = np.full(n, 0.1)
    alpha = np.ones(n)
    b = np.ones(n)
    residual = y - cols @ w
    beta_shape = hyper.rho + 0.5 * (m + n)

    w_draws = np.empty((n_samples, n))
    beta_draws = np.empty(n_samples)
    for it in range(burn_in + n_samples):
        rate = hyper.delta + 0.5 * (residual @ residual) + 0.5 * (alpha @ (w * w))
        beta = rng.gamma(beta_shape, 1.0 / rate)
        for i in range(n):
            col = cols[:, i]
            precision = alpha[i] + sq[i]
            mu = (col @ residual + sq[i] * w[i]) / precision
            new = sample_truncated_normal(rng, mu, 1.0 / math.sqrt(beta * precision))
            residual += col * (w[i] - new)
            w[i] = new
            alpha[i] = sample_gig_half(rng, beta * max(new * new, 1e-30), b[i])
            b[i] = rng.gamma(hyper.kappa + 1.0, 1.0 / (hyper.nu + 0.5 / alpha[i]))
        if it >= burn_in:
            w_draws[it - burn_in] = w
            beta_draws[it - burn_in] = beta

    return GibbsResult(
        mean_w=w_draws.mean(axis=0),
        var_w=w_draws.var(axis=0, ddof=1),
        se_w=_batch_means_se(w_draws),
        mean_beta=float(beta_draws.mean()),
        se_beta=float(_batch_means_se(beta_draws)),
        n_samples=n_samples,
    )


# --- NNLS baseline ---------------------------------------------------------------

def kkt_residual(x, y, phi):
    """Scaled KKT violation ``max |min(x, grad)| / max |Phi^T y|`` of NNLS."""
    a = phi.columns
    grad = a.T @ (a @ x - y)
    scale = max(float(np.max(np.abs(a.T @ y))), np.finfo(float).tiny)
    return float(np.max(np.abs(np.minimum(x, grad)))) / scale


def nnls_baseline(y, phi, tol=1e-8):
    """Unregularized ``argmin ||y - Phi w||`` over ``w >= 0``.

    Raises
    ------
    ConvergenceError
        When the solver's result fails the KKT test at ``tol``.
    """
    y = as_spectra(y, phi)
    try:
        x, _ = optimize.nnls(phi.columns, y, maxiter=50 * phi.n_endmembers)
    except RuntimeError as exc:
        raise ConvergenceError(str(exc), math.inf) from exc
    res = kkt_residual(x, y, phi)
    if not res <= tol:
        raise ConvergenceError("NNLS solution fails KKT conditions", res)
    return x
