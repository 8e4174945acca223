from __future__ import annotations

import logging
import math
from collections import namedtuple

import backoff
import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .common import trace, write_csv
from .errors import OperatorError, SingularShiftError
from .operator import DiscreteSchrodinger

logger = logging.getLogger(__name__)

DENSE_CROSSOVER = 3000
SLICE_SIZE = 40
MAX_SHIFT_RETRIES = 3
SHIFT_PERTURBATION = 1e-10
PIVOT_TOLERANCE = 1e-14
RESIDUAL_TOLERANCE = 1e-8

# density: Weyl count of eigenvalues per unit energy, bounding the terms outside the window
SpectralWindow = namedtuple(
    "SpectralWindow",
    ["h", "interval", "eigenvalues", "complete", "max_residual", "density"],
    defaults=(float("nan"), None),
)


def _block_inertia(d, scale):
    negative = 0
    n = len(d)
    subdiagonal = np.diag(d, -1)
    i = 0
    while i < n:
        if i + 1 < n and subdiagonal[i] != 0.0:
            values = np.linalg.eigvalsh(d[i : i + 2, i : i + 2])
            i += 2
        else:
            values = np.array([d[i, i]])
            i += 1
        if np.any(np.abs(values) <= PIVOT_TOLERANCE * scale):
            raise SingularShiftError("shift is numerically an eigenvalue")
        negative += int(np.count_nonzero(values < 0.0))
    return negative


class ShiftedFactorization:
    """Symmetric factorization of A - shift*I, perturbing the shift when it is singular."""

    def __init__(self, op, shift, dense=False):
        self.op = op
        self.requested = float(shift)
        self.shift = float(shift)
        self.dense = dense
        self.lu = None
        self.negative = None

    def perturb(self):
        step = SHIFT_PERTURBATION * (abs(self.shift) if self.shift else 1.0)
        self.shift += step
        logger.debug("Singular shift, moved from %r to %r", self.shift - step, self.shift)

    @backoff.on_exception(
        backoff.constant,
        SingularShiftError,
        max_tries=MAX_SHIFT_RETRIES + 1,
        interval=0,
        jitter=None,
        on_backoff=lambda details: details["args"][0].perturb(),
        backoff_log_level=logging.WARNING,
    )
    def factorize(self):
        if self.dense:
            self.negative = self._dense_negative()
        else:
            self.negative = self._sparse_negative()
        return self.negative

    def _dense_negative(self):
        shifted = self.op.dense() - self.shift * np.eye(self.op.N)
        _, d, _ = linalg.ldl(shifted, lower=True)
        return _block_inertia(d, max(np.abs(shifted).max(), np.finfo(float).tiny))

    def _sparse_negative(self):
        shifted = self.op.shifted(self.shift)
        try:
            lu = splu(
                shifted,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as error:
            raise SingularShiftError(f"factorization failed: {error}") from error
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise SingularShiftError("factorization left the diagonal, inertia is not readable")
        diagonal = lu.U.diagonal()
        if np.any(np.abs(diagonal) <= PIVOT_TOLERANCE * max(np.abs(diagonal).max(), np.finfo(float).tiny)):
            raise SingularShiftError("shift is numerically an eigenvalue")
        self.lu = lu
        return int(np.count_nonzero(diagonal < 0.0))

    def inverse_operator(self):
        if self.lu is None:
            self.dense = False
            self.factorize()
        return LinearOperator(self.op.standard.shape, matvec=self.lu.solve, dtype=float)


def inertia_count(op, energy, dense=None, dense_crossover=DENSE_CROSSOVER):
    """Number of eigenvalues of the standard-form operator below ``energy``."""
    if dense is None:
        dense = op.N <= dense_crossover
    count = ShiftedFactorization(op, energy, dense=dense).factorize()
    trace(logger, "inertia(%r) = %d for %r", energy, count, op)
    return count


def weyl_density(op):
    """Area / (4 pi h^2), the large-energy number of eigenvalues per unit energy."""
    return op.pencil.area / (4.0 * math.pi * op.h**2)


def _check_window(op, interval):
    lower, upper = (float(value) for value in interval)
    if not lower < upper:
        raise OperatorError(f"empty spectral window [{lower}, {upper})")
    if op.N < 3:
        raise OperatorError(f"operator dimension {op.N} is below 3")
    return lower, upper


def _dense_window(op, lower, upper):
    pad = 1e-9 * max(1.0, abs(lower), abs(upper))
    values, vectors = linalg.eigh(op.dense(), subset_by_value=(lower - pad, upper + pad))
    inside = (values >= lower) & (values < upper)
    residuals = [op.residual(value, vectors[:, index]) for index, value in enumerate(values) if inside[index]]
    return np.sort(values[inside]), max(residuals, default=0.0)


def _slices(op, lower, upper, below_lower, below_upper, slice_size, dense):
    pending = [(lower, upper, below_lower, below_upper)]
    slices = []
    while pending:
        a, b, count_a, count_b = pending.pop()
        if count_b - count_a <= slice_size or b - a <= 1e-12 * max(1.0, abs(a), abs(b)):
            slices.append((a, b, count_b - count_a))
            continue
        middle = 0.5 * (a + b)
        count_middle = inertia_count(op, middle, dense=dense)
        pending.append((middle, b, count_middle, count_b))
        pending.append((a, middle, count_a, count_middle))
    return sorted(slices)


def _lanczos_slice(op, a, b, count, max_iter):
    factorization = ShiftedFactorization(op, 0.5 * (a + b))
    factorization.factorize()
    inverse = factorization.inverse_operator()
    k = min(count + max(4, count // 4), op.N - 1)
    while True:
        converged = True
        try:
            values, vectors = eigsh(
                op.standard,
                k=k,
                sigma=factorization.shift,
                which="LM",
                OPinv=inverse,
                maxiter=max_iter,
                tol=0,
            )
        except ArpackNoConvergence as error:
            logger.warning("Lanczos did not converge in [%r, %r); keeping %d values", a, b, len(error.eigenvalues))
            values, vectors, converged = error.eigenvalues, error.eigenvectors, False
        inside = (values >= a) & (values < b)
        if not converged or np.count_nonzero(inside) >= count or k >= op.N - 1:
            break
        k = min(2 * k, op.N - 1)
        trace(logger, "Widening Lanczos block to %d in [%r, %r)", k, a, b)
    residuals = [op.residual(value, vectors[:, index]) for index, value in enumerate(values) if inside[index]]
    return np.sort(values[inside]), converged, max(residuals, default=0.0)


def eigen_window(op, interval, dense_crossover=DENSE_CROSSOVER, slice_size=SLICE_SIZE, max_iter=None, method="auto"):
    """All eigenvalues in the half-open window [lower, upper), certified by inertia counts."""
    lower, upper = _check_window(op, interval)
    if method not in ("auto", "dense", "lanczos"):
        raise OperatorError(f"unknown eigensolver method {method!r}")
    dense = method == "dense" or (method == "auto" and op.N <= dense_crossover)
    below_lower = inertia_count(op, lower, dense=dense)
    below_upper = inertia_count(op, upper, dense=dense)
    expected = below_upper - below_lower
    if expected == 0:
        return SpectralWindow(op.h, (lower, upper), np.empty(0), True, 0.0, weyl_density(op))

    if dense:
        eigenvalues, residual = _dense_window(op, lower, upper)
        converged = True
    else:
        parts, converged, residual = [], True, 0.0
        for a, b, count in _slices(op, lower, upper, below_lower, below_upper, slice_size, dense):
            if count == 0:
                continue
            values, slice_converged, slice_residual = _lanczos_slice(op, a, b, count, max_iter)
            trace(logger, "Slice [%r, %r): %d of %d eigenvalues", a, b, len(values), count)
            parts.append(values)
            converged &= slice_converged
            residual = max(residual, slice_residual)
        eigenvalues = np.sort(np.concatenate(parts)) if parts else np.empty(0)

    if residual > RESIDUAL_TOLERANCE:
        logger.warning(
            "Window [%r, %r) at h=%r: largest eigenpair residual %.3g exceeds %.3g",
            lower,
            upper,
            op.h,
            residual,
            RESIDUAL_TOLERANCE,
        )
    complete = converged and len(eigenvalues) == expected
    if not complete:
        logger.warning(
            "Window [%r, %r) at h=%r: found %d eigenvalues, inertia expects %d",
            lower,
            upper,
            op.h,
            len(eigenvalues),
            expected,
        )
    logger.debug("Window [%r, %r) at h=%r holds %d eigenvalues", lower, upper, op.h, len(eigenvalues))
    return SpectralWindow(op.h, (lower, upper), eigenvalues, complete, residual, weyl_density(op))


class OperatorSpectrum:
    """Spectrum source backed by a discrete pencil and a fixed potential."""

    def __init__(self, pencil, potential, dense_crossover=DENSE_CROSSOVER, slice_size=SLICE_SIZE, max_iter=None):
        self.pencil = pencil
        self.potential = np.asarray(potential, dtype=float)
        self.dense_crossover = dense_crossover
        self.slice_size = slice_size
        self.max_iter = max_iter

    @property
    def potential_range(self):
        return float(self.potential.min()), float(self.potential.max())

    def operator(self, h):
        return DiscreteSchrodinger(self.pencil, self.potential, h)

    def window(self, h, interval):
        return eigen_window(
            self.operator(h),
            interval,
            dense_crossover=self.dense_crossover,
            slice_size=self.slice_size,
            max_iter=self.max_iter,
        )


def write_spectrum_csv(windows, path):
    rows = [(window.h, value) for window in windows for value in window.eigenvalues]
    write_csv(path, ("h", "lambda"), rows)
