"""Mean-field coordinate ascent for sparse nonnegative unmixing.

One sweep refreshes the noise precision, then visits each endmember ``i``
in turn and refreshes ``q(w_i)``, ``q(alpha_i)`` and ``q(b_i)``. Every
update reads the freshest values (Gauss-Seidel order).

The update functions work on a single pixel state or a batch with leading
pixel axes. Endmember indices are 0-based.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
import math
from typing import NamedTuple

import numpy as np

from .errors import DomainError, NumericalFailure
from .model import ConvergenceReport, Hyperparameters, as_spectra, init_state
from .special import gig_half_moments, truncated_normal_moments

#: Lower bound on <w_i^2> before it enters the GIG parameter.
W_SQ_FLOOR = 1e-30
#: Abundance row written for pixels whose inference failed.
SENTINEL = -1.0
#: Pixels per work unit in :func:`unmix_image`; fixed so results never
#: depend on the thread count.
CHUNK_SIZE = 1024


@dataclass(frozen=True)
class EngineOptions:
    """Stopping rule: ``max_i |delta <w_i>| <= tolerance`` after at least
    ``min_sweeps`` sweeps, giving up after ``max_sweeps``."""

    tolerance: float = 1e-6
    max_sweeps: int = 500
    min_sweeps: int = 5

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise DomainError("tolerance must be positive")
        if not 1 <= self.min_sweeps <= self.max_sweeps:
            raise DomainError("need 1 <= min_sweeps <= max_sweeps")


def _check_index(i, phi):
    if not 0 <= i < phi.n_endmembers:
        raise DomainError(f"endmember index {i} outside [0, {phi.n_endmembers})")


def update_noise_factor(state, y, phi, hyper):
    """Refresh ``<beta>`` from the Gamma factor of the noise precision.

    The expected squared error is ``||residual||^2 + sum_i sigma_tr_i^2
    phi_i^T phi_i`` and the expected prior energy is
    ``sum_i <alpha_i> <w_i^2>``.
    """
    prior_energy = np.sum(state.mean_alpha * state.mean_w_sq, axis=-1)
    misfit = (np.sum(state.residual * state.residual, axis=-1)
              + np.sum(state.sigma_tr_sq * phi.column_sq_norms, axis=-1))
    shape2 = 2.0 * hyper.rho + phi.n_bands + phi.n_endmembers
    state.mean_beta[...] = shape2 / (2.0 * hyper.delta + prior_energy + misfit)
    return state.mean_beta


def update_abundance_factor(i, state, y, phi):
    """Refresh the truncated-normal factor ``q(w_i)`` and its moments.

    ``sigma_i^2 = 1 / (<beta> (<alpha_i> + |phi_i|^2))`` and ``mu_i`` projects
    the partial residual ``y - sum_{j != i} phi_j <w_j>`` onto ``phi_i``. The
    stored residual is updated by ``phi_i (old - new)``.
    """
    _check_index(i, phi)
    col = phi.columns[:, i]
    old = np.array(state.mean_w[..., i])
    precision = state.mean_alpha[..., i] + phi.column_sq_norms[i]
    sigma_sq = 1.0 / (state.mean_beta * precision)
    # phi_i^T (residual + phi_i old) without materializing the partial residual;
    # einsum (not BLAS) keeps each row's result independent of the batch size
    mu = (np.einsum("...m,m->...", state.residual, col)
          + old * phi.column_sq_norms[i]) / precision
    try:
        mom = truncated_normal_moments(mu, np.sqrt(sigma_sq))
    except DomainError as exc:
        name = "mu" if np.all(np.isfinite(sigma_sq)) else "sigma_sq"
        raise NumericalFailure(None, name, f"abundance {i}: {exc}") from exc
    state.mu[..., i] = mu
    state.sigma_sq[..., i] = sigma_sq
    state.mean_w[..., i] = mom.mean
    state.sigma_tr_sq[..., i] = mom.variance
    state.mean_w_sq[..., i] = np.square(mom.mean) + mom.variance
    state.residual += col * (old - mom.mean)[..., None]


def update_precision_factor(i, state):
    """Refresh ``<alpha_i>`` and ``<1/alpha_i>`` from GIG(<beta><w_i^2>, <b_i>, -1/2)."""
    a = state.mean_beta * np.maximum(state.mean_w_sq[..., i], W_SQ_FLOOR)
    try:
        mom = gig_half_moments(a, state.mean_b[..., i])
    except DomainError as exc:
        raise NumericalFailure(None, "mean_alpha", f"precision {i}: {exc}") from exc
    state.mean_alpha[..., i] = mom.mean
    state.mean_inv_alpha[..., i] = mom.mean_inverse


def update_scale_factor(i, state, hyper):
    """Refresh ``<b_i>`` from Gamma(kappa + 1, nu + <1/alpha_i> / 2)."""
    state.mean_b[..., i] = (hyper.kappa + 1.0) / (hyper.nu + 0.5 * state.mean_inv_alpha[..., i])


def sweep(state, y, phi, hyper):
    """One outer iteration, updating ``state`` in place."""
    update_noise_factor(state, y, phi, hyper)
    for i in range(phi.n_endmembers):
        update_abundance_factor(i, state, y, phi)
        update_precision_factor(i, state)
        update_scale_factor(i, state, hyper)
    return state


def _row_first_nonfinite(state):
    """Per-row name of the first non-finite field ('' when the row is clean)."""
    rows = state.mean_beta.shape[0]
    names = np.full(rows, "", dtype=object)
    for f in fields(state):
        arr = getattr(state, f.name).reshape(rows, -1)
        bad = ~np.all(np.isfinite(arr), axis=1) & (names == "")
        names[bad] = f.name
    return names


def _sweep_rows(state, y, phi, hyper):
    """Sweep a 2-D batch; returns per-row failure names.

    If a kernel rejects the batch, each row is retried alone so that one bad
    pixel cannot take its neighbours down with it.
    """
    saved = state.copy()
    try:
        with np.errstate(all="ignore"):
            sweep(state, y, phi, hyper)
        return _row_first_nonfinite(state)
    except NumericalFailure:
        pass
    names = np.full(y.shape[0], "", dtype=object)
    for r in range(y.shape[0]):
        row = saved.take(slice(r, r + 1))
        try:
            with np.errstate(all="ignore"):
                sweep(row, y[r:r + 1], phi, hyper)
            names[r] = _row_first_nonfinite(row)[0]
        except NumericalFailure as exc:
            names[r] = exc.parameter
        state.put(slice(r, r + 1), row)
    return names


class BatchOutcome(NamedTuple):
    state: object
    sweeps: np.ndarray
    final_delta: np.ndarray
    converged: np.ndarray
    failures: dict


def _iterate(y, phi, hyper, opts):
    """Run every row of ``y`` (shape ``(P, M)``) to its own stopping point.

    Rows leave the working set as soon as they converge or fail, so each row
    follows exactly the trajectory it would follow alone.
    """
    pixels = y.shape[0]
    with np.errstate(over="ignore", divide="ignore"):
        # Overflowing spectra surface as a per-row failure in the first sweep.
        state = init_state(y, phi, hyper)
    sweeps = np.zeros(pixels, dtype=int)
    final_delta = np.full(pixels, math.inf)
    converged = np.zeros(pixels, dtype=bool)
    failures = {}
    active = np.arange(pixels)
    for k in range(1, opts.max_sweeps + 1):
        sub = state.take(active)
        previous = sub.mean_w.copy()
        bad = _sweep_rows(sub, y[active], phi, hyper)
        with np.errstate(invalid="ignore"):
            delta = np.max(np.abs(sub.mean_w - previous), axis=-1)
        state.put(active, sub)
        sweeps[active] = k
        final_delta[active] = delta
        ok = bad == ""
        for r in np.flatnonzero(~ok):
            failures[int(active[r])] = NumericalFailure(k, bad[r])
        done = ok & (k >= opts.min_sweeps) & (delta <= opts.tolerance)
        converged[active[done]] = True
        active = active[ok & ~done]
        if active.size == 0:
            break
    return BatchOutcome(state, sweeps, final_delta, converged, failures)


class RunResult(NamedTuple):
    abundances: np.ndarray
    noise_precision: float
    report: ConvergenceReport
    state: object


def run(y, phi, hyper=None, opts=None):
    """Infer one pixel's abundances.

    Returns
    -------
    RunResult
        ``abundances`` are the posterior means ``<w>``; ``noise_precision``
        is ``<beta>``; ``state`` holds every final moment.

    Raises
    ------
    NumericalFailure
        If a non-finite value appears; carries the sweep index and the name
        of the offending parameter.
    """
    hyper = hyper or Hyperparameters()
    opts = opts or EngineOptions()
    y = as_spectra(y, phi)
    if y.ndim != 1:
        raise DomainError("run expects a single spectrum; use unmix_image for batches")
    out = _iterate(y[None, :], phi, hyper, opts)
    if out.failures:
        raise out.failures[0]
    state = out.state.take(0)
    report = ConvergenceReport(int(out.sweeps[0]), float(out.final_delta[0]),
                               bool(out.converged[0]))
    return RunResult(state.mean_w.copy(), float(state.mean_beta), report, state)


@dataclass
class ImageResult:
    """Per-pixel results of :func:`unmix_image`, shaped like the input's
    leading axes. Failed pixels hold :data:`SENTINEL` abundances and NaN
    noise precision."""

    abundances: np.ndarray
    noise_precision: np.ndarray
    sweeps: np.ndarray
    final_delta: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    failures: dict

    def sweep_histogram(self):
        """``{sweep_count: n_pixels}`` over all pixels (failed ones included)."""
        counts = np.bincount(self.sweeps.ravel())
        return {int(k): int(c) for k, c in enumerate(counts) if c}


def unmix_image(pixels, phi, hyper=None, opts=None, threads=1):
    """Unmix every pixel of ``pixels`` (shape ``(..., M)``) independently.

    Pixels are split into fixed chunks of :data:`CHUNK_SIZE` that may run on
    ``threads`` worker threads; results are merged by pixel index, so the
    output is bit-identical for any thread count and equals :func:`run`
    pixel by pixel.
    """
    hyper = hyper or Hyperparameters()
    opts = opts or EngineOptions()
    pixels = as_spectra(pixels, phi)
    lead = pixels.shape[:-1]
    flat = pixels.reshape(-1, phi.n_bands)
    total = flat.shape[0]
    n = phi.n_endmembers

    abundances = np.empty((total, n))
    beta = np.empty(total)
    sweeps = np.zeros(total, dtype=int)
    final_delta = np.empty(total)
    converged = np.zeros(total, dtype=bool)
    failed = np.zeros(total, dtype=bool)
    failures = {}

    starts = range(0, total, CHUNK_SIZE)

    def work(start):
        return start, _iterate(flat[start:start + CHUNK_SIZE], phi, hyper, opts)

    if threads > 1 and total > CHUNK_SIZE:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, starts))
    else:
        results = [work(s) for s in starts]

    for start, out in results:
        sl = slice(start, start + out.sweeps.shape[0])
        abundances[sl] = out.state.mean_w
        beta[sl] = out.state.mean_beta
        sweeps[sl] = out.sweeps
        final_delta[sl] = out.final_delta
        converged[sl] = out.converged
        for r, exc in out.failures.items():
            failed[start + r] = True
            failures[start + r] = exc
    abundances[failed] = SENTINEL
    beta[failed] = np.nan

    return ImageResult(
        abundances=abundances.reshape(lead + (n,)),
        noise_precision=beta.reshape(lead),
        sweeps=sweeps.reshape(lead),
        final_delta=final_delta.reshape(lead),
        converged=converged.reshape(lead),
        failed=failed.reshape(lead),
        failures=failures,
    )
