"""Hessian-signature models for the leading density and their selection.

A point critical value with r hyperbolic directions has leading density
A / |f1(w1 t) f2(w2 t)| with f = sin for elliptic and sinh for hyperbolic
directions.  A circle of critical points carries an extra 1/sqrt(t).
All fits work on log D with log A profiled out.

Samples may carry the half-width delta of the bump they were measured
with; the model is then averaged over that bump before it is compared.
"""

from __future__ import annotations

import logging
from collections import namedtuple

import numpy as np
from scipy import ndimage, optimize, special

from .common import read_csv, write_csv
from .errors import FitError
from .trace import bump

logger = logging.getLogger(__name__)

ELLIPTIC = "elliptic"
HYPERBOLIC = "hyperbolic"
ELLIPTIC_CIRCLE = "elliptic-circle"
HYPERBOLIC_CIRCLE = "hyperbolic-circle"

# kinds of the first and second model frequency for r = 0, 1, 2
POINT_MODELS = {
    0: (ELLIPTIC, ELLIPTIC),
    1: (HYPERBOLIC, ELLIPTIC),
    2: (HYPERBOLIC, HYPERBOLIC),
}
SYMMETRIC_MODELS = (0, 2)
CIRCLE_MODELS = {ELLIPTIC_CIRCLE: ELLIPTIC, HYPERBOLIC_CIRCLE: HYPERBOLIC}

FREQUENCY_RANGE = (0.1, 20.0)
POINT_GRID = 100
CIRCLE_GRID = 60
REFINE_STARTS = 6
BUMP_NODES = 32
HUBER_SCALE = 0.1
MIN_SAMPLES = 8
AMBIGUITY_GAP = 0.10
MAX_LOG_RESIDUAL = 0.25
COLLAPSE_TOLERANCE = 1e-2
SPLIT_RATIO = 1.25

DensityModel = namedtuple(
    "DensityModel",
    ["r", "alpha1", "alpha2", "kinds", "amplitude", "residual", "gap", "ambiguous", "runner_up", "resolved"],
    defaults=(True,),
)
CircleModel = namedtuple("CircleModel", ["kind", "omega", "amplitude", "residual", "gap", "ambiguous"])

# sample times, log densities, quadrature times (n, k) and log weights (k,)
DensityData = namedtuple("DensityData", ["t", "log_d", "nodes", "log_weights"])


def _log_factor(kind, x):
    function = np.sin if kind == ELLIPTIC else np.sinh
    return np.log(np.maximum(np.abs(function(x)), 1e-300))


def point_density(t, r, omegas, amplitude=1.0):
    """A / |f1(w1 t) f2(w2 t)| for the model with r hyperbolic factors."""
    t = np.asarray(t, dtype=float)
    first, second = POINT_MODELS[r]
    return amplitude * np.exp(-_log_factor(first, omegas[0] * t) - _log_factor(second, omegas[1] * t))


def circle_density(t, kind, omega, amplitude=1.0):
    t = np.asarray(t, dtype=float)
    return amplitude * np.exp(-_log_factor(CIRCLE_MODELS[kind], omega * t)) / np.sqrt(t)


def _huber(residuals):
    return float(np.sum(special.huber(HUBER_SCALE, residuals)))


def _profiled(log_d, log_shape):
    """Residuals with the best log-amplitude removed."""
    log_amplitude = np.mean(log_d - log_shape, axis=-1, keepdims=True)
    return log_d - log_shape - log_amplitude, log_amplitude[..., 0]


def _bump_rule(count=BUMP_NODES):
    nodes, weights = np.polynomial.legendre.leggauss(count)
    weights = weights * bump(nodes)
    return nodes, np.log(weights / np.sum(weights))


def _prepare(samples):
    rows = sorted(tuple(float(value) for value in sample) for sample in samples)
    if len(rows) < MIN_SAMPLES:
        raise FitError(f"need at least {MIN_SAMPLES} density samples, got {len(rows)}")
    t = np.array([row[0] for row in rows])
    d = np.array([row[1] for row in rows])
    delta = np.array([row[2] if len(row) > 2 else 0.0 for row in rows])
    if np.any(t <= 0.0) or not np.all(np.isfinite(d)) or np.any(d <= 0.0):
        raise FitError("density samples need positive times and finite positive values")
    if not np.all(np.isfinite(delta)) or np.any(delta < 0.0) or np.any(delta >= t):
        raise FitError("bump half-widths must satisfy 0 <= delta < t0")
    if np.any(delta > 0.0):
        u, log_weights = _bump_rule()
        nodes = t[:, None] + delta[:, None] * u[None, :]
    else:
        nodes, log_weights = t[:, None], np.zeros(1)
    return DensityData(t, np.log(d), nodes, log_weights)


def _averaged(log_values, log_weights):
    return special.logsumexp(log_values + log_weights, axis=-1)


def _point_shape(r, omegas, data):
    first, second = POINT_MODELS[r]
    log_values = -_log_factor(first, omegas[0] * data.nodes) - _log_factor(second, omegas[1] * data.nodes)
    return _averaged(log_values, data.log_weights)


def _clipped(x):
    return np.exp(np.clip(x, np.log(FREQUENCY_RANGE[0] / 2), np.log(2 * FREQUENCY_RANGE[1])))


def _starts(losses, count):
    """Grid cells that are local minima of the loss, best first."""
    local = losses == ndimage.minimum_filter(losses, size=3, mode="nearest")
    local &= np.isfinite(losses)
    flat = np.flatnonzero(local)
    return flat[np.argsort(losses.ravel()[flat])][:count]


def _fit_point_model(r, data):
    first, second = POINT_MODELS[r]
    t, log_d = data.t, data.log_d
    grid = np.geomspace(*FREQUENCY_RANGE, POINT_GRID)

    shapes_first = -_log_factor(first, np.outer(grid, t))
    shapes_second = -_log_factor(second, np.outer(grid, t))
    log_shape = shapes_first[:, None, :] + shapes_second[None, :, :]
    residuals, _ = _profiled(log_d, log_shape)
    losses = np.sum(special.huber(HUBER_SCALE, residuals), axis=-1)
    if r in SYMMETRIC_MODELS:
        losses[np.tril_indices(POINT_GRID, -1)] = np.inf

    def objective(x):
        return _huber(_profiled(log_d, _point_shape(r, _clipped(x), data))[0])

    best = None
    for flat in _starts(losses, REFINE_STARTS):
        i, j = np.unravel_index(flat, losses.shape)
        result = optimize.minimize(
            objective,
            np.log([grid[i], grid[j]]),
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000},
        )
        if best is None or result.fun < best.fun:
            best = result

    omegas = _clipped(best.x)
    residuals, log_amplitude = _profiled(log_d, _point_shape(r, omegas, data))
    rms = float(np.sqrt(np.mean(residuals**2)))
    return omegas, float(np.exp(log_amplitude)), rms


def _split(omegas, ratio):
    """Frequencies with ratio ``ratio`` and the same sum of squares as ``omegas``."""
    total = float(np.sum(np.square(omegas)))
    low = np.sqrt(total / (1.0 + ratio**2))
    return np.array([low, ratio * low])


def split_residual(samples, model, ratio=SPLIT_RATIO):
    """Log residual of ``model`` with its frequencies pulled apart to ``ratio``.

    The sum of squared frequencies, which fixes the small-t curvature of
    log D, is kept, so the change from ``model.residual`` is what the
    samples say about the split alone.
    """
    if model.r not in SYMMETRIC_MODELS:
        raise FitError(f"frequency splits are only defined for r in {SYMMETRIC_MODELS}, got r={model.r}")
    data = _prepare(samples)
    shape = _point_shape(model.r, _split((model.alpha1, model.alpha2), ratio), data)
    residuals, _ = _profiled(data.log_d, shape)
    return float(np.sqrt(np.mean(residuals**2)))


def _collapsed(omegas):
    return abs(omegas[1] - omegas[0]) <= COLLAPSE_TOLERANCE * max(omegas)


def classify_signature(samples, ambiguity_gap=AMBIGUITY_GAP, max_log_residual=MAX_LOG_RESIDUAL, T=None):
    """Fit the three point models to (t0, D) or (t0, D, delta) samples and pick the best one.

    The reported model frequencies are ordered so that alpha1 <= alpha2,
    ``kinds`` follows the same order and ``r`` is the Morse index.  When a
    two-frequency model settles on equal frequencies that the samples
    cannot tell from a split pair, ``resolved`` is False.
    """
    data = _prepare(samples)
    t = data.t
    if T is not None and t[-1] - t[0] < 0.5 * T:
        raise FitError(f"density samples span {t[-1] - t[0]:.3g}, less than half of T={T}")

    fits = {r: _fit_point_model(r, data) for r in POINT_MODELS}
    ranked = sorted(fits, key=lambda key: fits[key][-1])
    best, runner_up = ranked[0], ranked[1]
    best_rms = fits[best][-1]
    gap = fits[runner_up][-1] - best_rms
    ambiguous = gap < ambiguity_gap * best_rms or best_rms > max_log_residual

    omegas, amplitude, rms = fits[best]
    pairs = sorted(zip(omegas.tolist(), POINT_MODELS[best]))
    model = DensityModel(
        r=best,
        alpha1=pairs[0][0],
        alpha2=pairs[1][0],
        kinds=(pairs[0][1], pairs[1][1]),
        amplitude=amplitude,
        residual=rms,
        gap=gap,
        ambiguous=ambiguous,
        runner_up=runner_up,
    )
    for r in ranked:
        logger.debug("Point model r=%d: omegas=%s rms=%.4g", r, fits[r][0], fits[r][-1])
    if ambiguous:
        logger.warning(
            "Signature fit is ambiguous: r=%d rms=%.3g, runner-up r=%d gap=%.3g; try a longer t0 range",
            best,
            rms,
            runner_up,
            gap,
        )
    if best in SYMMETRIC_MODELS and _collapsed(omegas):
        split = split_residual(samples, model)
        if split - rms < ambiguity_gap * rms:
            logger.warning(
                "Frequencies collapsed to %.4g, but a %.3g:1 split fits as well (rms %.3g vs %.3g)",
                model.alpha1,
                SPLIT_RATIO,
                split,
                rms,
            )
            model = model._replace(resolved=False)
    return model


def _fit_circle_model(kind, data):
    factor_kind = CIRCLE_MODELS[kind]
    log_d = data.log_d

    def shape(omega):
        log_values = -_log_factor(factor_kind, omega * data.nodes) - 0.5 * np.log(data.nodes)
        return _averaged(log_values, data.log_weights)

    def objective(log_omega):
        return _huber(_profiled(log_d, shape(np.exp(log_omega)))[0])

    grid = np.log(np.geomspace(*FREQUENCY_RANGE, CIRCLE_GRID))
    losses = [objective(value) for value in grid]
    index = int(np.argmin(losses))
    bracket = (grid[max(index - 1, 0)], grid[min(index + 1, len(grid) - 1)])
    result = optimize.minimize_scalar(objective, bounds=bracket, method="bounded", options={"xatol": 1e-10})
    log_omega = result.x if result.fun <= losses[index] else grid[index]

    omega = float(np.exp(log_omega))
    residuals, log_amplitude = _profiled(log_d, shape(omega))
    return omega, float(np.exp(log_amplitude)), float(np.sqrt(np.mean(residuals**2)))


def classify_circle(samples, ambiguity_gap=AMBIGUITY_GAP, max_log_residual=MAX_LOG_RESIDUAL):
    """Decide between an elliptic and a hyperbolic circle of critical points."""
    data = _prepare(samples)
    fits = {kind: _fit_circle_model(kind, data) for kind in CIRCLE_MODELS}
    best, other = sorted(fits, key=lambda key: fits[key][-1])
    omega, amplitude, rms = fits[best]
    gap = fits[other][-1] - rms
    ambiguous = gap < ambiguity_gap * rms or rms > max_log_residual
    if ambiguous:
        logger.warning("Circle fit is ambiguous: %s rms=%.3g gap=%.3g", best, rms, gap)
    return CircleModel(best, omega, amplitude, rms, gap, ambiguous)


def read_density_csv(path):
    """(t0, D) pairs from a CSV with columns t0 and D, or (t0, D, delta) triples when it has a delta column."""
    rows = read_csv(path)
    try:
        if rows and "delta" in rows[0]:
            return [(float(row["t0"]), float(row["D"]), float(row["delta"])) for row in rows]
        return [(float(row["t0"]), float(row["D"])) for row in rows]
    except (KeyError, ValueError) as error:
        raise FitError(f"cannot read density samples from {path}: {error}", path=str(path)) from error


def write_density_csv(samples, path):
    samples = [tuple(sample) for sample in samples]
    header = ("t0", "D", "delta") if samples and len(samples[0]) > 2 else ("t0", "D")
    write_csv(path, header, samples)
