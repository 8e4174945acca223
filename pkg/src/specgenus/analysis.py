"""Critical energies from the h-scaling of the trace, and leading-density samples."""

from __future__ import annotations

import enum
import logging
import math
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import integrate, optimize

from .common import trace, write_csv
from .errors import FitError, IncompleteWindowError, SweepError
from .trace import EnergyCutoff, TestFunction, trace_rows, upsilon

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 5e-3
REFINE_TOLERANCE = 1e-3
FINE_SCAN_POINTS = 41
RATIO_TOLERANCE = 0.10
POLE_GROWTH = 10.0
# t0 + delta stays below this fraction of T, away from the first period of the flow
DENSITY_REACH = 0.8
MIN_H_VALUES = 3
MIN_H_SPAN = 2.0


class ScalingClass(str, enum.Enum):
    REGULAR = "Regular"
    POINT_CRITICAL = "PointCritical"
    CIRCLE_DEGENERATE = "CircleDegenerate"
    UNCLASSIFIED_DEGENERATE = "UnclassifiedDegenerate"
    AMBIGUOUS = "Ambiguous"


CRITICAL_CLASSES = (
    ScalingClass.POINT_CRITICAL,
    ScalingClass.CIRCLE_DEGENERATE,
    ScalingClass.UNCLASSIFIED_DEGENERATE,
)

ScalingThresholds = namedtuple(
    "ScalingThresholds",
    ["regular", "point", "circle", "unclassified"],
    defaults=(1.5, 0.25, (-0.75, -0.25), -0.9),
)
ScalingFit = namedtuple("ScalingFit", ["p", "intercept", "residual", "scaling_class", "diagnostic"], defaults=("",))
Candidate = namedtuple("Candidate", ["E", "fit", "bracket", "values"])
DensitySample = namedtuple("DensitySample", ["t0", "delta", "D", "uncertainty", "extrapolated", "pole_flag"])


def classify_exponent(p, thresholds=ScalingThresholds()):
    if p >= thresholds.regular:
        return ScalingClass.REGULAR
    if abs(p) <= thresholds.point:
        return ScalingClass.POINT_CRITICAL
    if thresholds.circle[0] <= p <= thresholds.circle[1]:
        return ScalingClass.CIRCLE_DEGENERATE
    if p <= thresholds.unclassified:
        return ScalingClass.UNCLASSIFIED_DEGENERATE
    return ScalingClass.AMBIGUOUS


def fit_scaling(h_values, values, floor=0.0, thresholds=ScalingThresholds()):
    """Least-squares exponent p of |Upsilon| ~ h^p and its class."""
    h_values = np.asarray(h_values, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(h_values) < MIN_H_VALUES or len(values) != len(h_values):
        raise FitError(f"need at least {MIN_H_VALUES} (h, value) pairs, got {len(values)}")
    if not np.all(np.isfinite(values)):
        raise FitError("trace values must be finite")
    magnitudes = np.abs(values)
    if np.any(magnitudes <= floor) or np.any(magnitudes == 0.0):
        return ScalingFit(math.inf, -math.inf, 0.0, ScalingClass.REGULAR, "below floor")

    log_h = np.log(h_values)
    log_values = np.log(magnitudes)
    p, intercept = np.polyfit(log_h, log_values, 1)
    residual = float(np.sqrt(np.mean((np.polyval((p, intercept), log_h) - log_values) ** 2)))
    if np.any(np.sign(values) != np.sign(values[0])):
        return ScalingFit(float(p), float(intercept), residual, ScalingClass.AMBIGUOUS, "sign change across h")
    return ScalingFit(float(p), float(intercept), residual, classify_exponent(p, thresholds))


def check_h_list(h_list):
    h_list = [float(h) for h in h_list]
    if len(h_list) < MIN_H_VALUES:
        raise SweepError(f"need at least {MIN_H_VALUES} values of h, got {len(h_list)}")
    if any(h <= 0.0 for h in h_list):
        raise SweepError("h values must be positive")
    if any(later >= earlier for earlier, later in zip(h_list, h_list[1:])):
        raise SweepError("h values must be strictly descending")
    if h_list[0] / h_list[-1] < MIN_H_SPAN * (1.0 - 1e-12):
        raise SweepError(f"h values must span at least a factor {MIN_H_SPAN}")
    return h_list


def _covering(energies, margin):
    pad = 1e-9 * max(1.0, abs(energies[0]), abs(energies[-1]))
    return energies[0] - margin - pad, energies[-1] + margin + pad


def trace_values(source, energies, h, tf, cutoff):
    """Upsilon(E, h) for every E from a single eigenvalue window."""
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    window = source.window(h, _covering(energies, cutoff.reach(tf) * h))
    if not window.complete:
        raise IncompleteWindowError(f"window {window.interval} at h={h} is incomplete", h=h)
    return [upsilon(window, E, tf, cutoff) for E in energies]


class EnergySweep:
    """Upsilon over an energy grid and a descending list of h values."""

    def __init__(self, energies, h_values, samples, tf, cutoff, source=None):
        self.energies = np.asarray(energies, dtype=float)
        self.h_values = list(h_values)
        self.samples = samples
        self.tf = tf
        self.cutoff = cutoff
        self.source = source

    def __repr__(self):
        return f"EnergySweep({len(self.energies)} energies, h={self.h_values})"

    @property
    def values(self):
        """Matrix of trace values, one row per energy and one column per h."""
        return np.array([[sample.value for sample in column] for column in self.samples]).T

    @property
    def moduli(self):
        """Moduli of the one-sided traces, laid out like ``values``."""
        return np.array([[abs(sample.analytic) for sample in column] for column in self.samples]).T

    def floor(self, relative_floor=RELATIVE_FLOOR):
        moduli = self.moduli
        return relative_floor * float(moduli.max()) if moduli.size else 0.0

    def fits(self, relative_floor=RELATIVE_FLOOR, thresholds=ScalingThresholds()):
        floor = self.floor(relative_floor)
        return [fit_scaling(self.h_values, row, floor, thresholds) for row in self.moduli]

    def rows(self):
        for column in self.samples:
            yield from trace_rows(column)


def sweep(source, energies, h_list, tf, cutoff=None, workers=1):
    """Trace values over the grid, one certified eigenvalue window per h."""
    energies = np.asarray(energies, dtype=float)
    if energies.ndim != 1 or len(energies) == 0:
        raise SweepError("energy grid must be a nonempty list")
    if np.any(np.diff(energies) <= 0.0):
        raise SweepError("energy grid must be strictly ascending")
    h_list = check_h_list(h_list)
    low, high = source.potential_range
    if not high > low:
        raise SweepError(f"potential is constant ({low}); it has no critical values to sweep")
    cutoff = cutoff or EnergyCutoff()

    def run(h):
        try:
            return trace_values(source, energies, h, tf, cutoff)
        except IncompleteWindowError:
            logger.warning("Dropping h=%r from the sweep: eigenvalue window is incomplete", h)
            return None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        columns = list(executor.map(run, h_list))

    kept = [(h, column) for h, column in zip(h_list, columns) if column is not None]
    if len(kept) < MIN_H_VALUES:
        raise IncompleteWindowError(
            f"only {len(kept)} h values have complete windows, need {MIN_H_VALUES}",
            h_values=[h for h, _ in kept],
        )
    logger.info("Swept %d energies over h=%s", len(energies), [h for h, _ in kept])
    return EnergySweep(energies, [h for h, _ in kept], [column for _, column in kept], tf, cutoff, source)


def _clusters(flags):
    clusters, current = [], []
    for index, flagged in enumerate(flags):
        if flagged:
            current.append(index)
        elif current:
            clusters.append(current)
            current = []
    if current:
        clusters.append(current)
    return clusters


def _strong_peaks(magnitudes):
    top = magnitudes.max()
    peaks = 0
    for index in range(len(magnitudes)):
        left = magnitudes[index - 1] if index > 0 else -np.inf
        right = magnitudes[index + 1] if index + 1 < len(magnitudes) else -np.inf
        if magnitudes[index] >= left and magnitudes[index] > right and magnitudes[index] > 0.5 * top:
            peaks += 1
    return peaks


def _refine(sweep_result, bracket, tolerance):
    h_min = sweep_result.h_values[-1]
    tf, cutoff, source = sweep_result.tf, sweep_result.cutoff, sweep_result.source
    window = source.window(h_min, _covering(np.array(bracket), cutoff.reach(tf) * h_min))
    if not window.complete:
        raise IncompleteWindowError(f"refinement window at h={h_min} is incomplete", h=h_min)

    def magnitude(E):
        return abs(upsilon(window, E, tf, cutoff).analytic)

    grid = np.linspace(bracket[0], bracket[1], FINE_SCAN_POINTS)
    magnitudes = np.array([magnitude(E) for E in grid])
    if _strong_peaks(magnitudes) > 1:
        logger.warning(
            "Several critical values share the bracket [%.6g, %.6g]; refine the energy grid",
            bracket[0],
            bracket[1],
        )
    best = int(np.argmax(magnitudes))
    low, high = grid[max(best - 1, 0)], grid[min(best + 1, len(grid) - 1)]
    if high <= low:
        return float(grid[best])
    result = optimize.minimize_scalar(
        lambda E: -magnitude(E), bounds=(low, high), method="bounded", options={"xatol": tolerance}
    )
    return float(result.x) if -result.fun >= magnitudes[best] else float(grid[best])


def locate_critical(
    sweep_result,
    relative_floor=RELATIVE_FLOOR,
    thresholds=ScalingThresholds(),
    refine_tolerance=REFINE_TOLERANCE,
):
    """Candidate critical energies: non-Regular clusters refined to the peak of |Upsilon|."""
    if sweep_result.source is None:
        raise SweepError("the sweep carries no spectrum source to refine against")
    fits = sweep_result.fits(relative_floor, thresholds)
    floor = sweep_result.floor(relative_floor)
    energies = sweep_result.energies
    low, high = sweep_result.source.potential_range
    tolerance = refine_tolerance * (high - low)

    candidates = []
    for cluster in _clusters([fit.scaling_class != ScalingClass.REGULAR for fit in fits]):
        bracket = (
            float(energies[max(cluster[0] - 1, 0)]),
            float(energies[min(cluster[-1] + 1, len(energies) - 1)]),
        )
        if bracket[1] <= bracket[0]:
            refined = bracket[0]
        else:
            refined = _refine(sweep_result, bracket, tolerance)
        values = [
            abs(trace_values(sweep_result.source, [refined], h, sweep_result.tf, sweep_result.cutoff)[0].analytic)
            for h in sweep_result.h_values
        ]
        fit = fit_scaling(sweep_result.h_values, values, floor, thresholds)
        trace(logger, "Cluster %s refined to E=%r with %s", cluster, refined, fit)
        if fit.scaling_class not in CRITICAL_CLASSES:
            logger.debug("Dropping cluster at E=%r: refined class %s", refined, fit.scaling_class.value)
            continue
        if candidates and abs(candidates[-1].E - refined) <= tolerance:
            logger.debug("Cluster at E=%r duplicates the candidate at E=%r", refined, candidates[-1].E)
            continue
        candidates.append(Candidate(refined, fit, bracket, values))
    logger.info("Located %d candidate critical values", len(candidates))
    return candidates


def default_t0_grid(T, start=0.15, stop=0.75, count=12):
    return T * np.linspace(start, stop, count)


def extrapolate(h_values, values, ratio_tolerance=RATIO_TOLERANCE):
    """Limit of c0 + c1 h as h -> 0, checked against the fit without the largest h.

    Returns (limit, uncertainty, extrapolated); when the two fits disagree by
    more than ``ratio_tolerance`` the smallest-h value is returned instead.
    Complex values are extrapolated as they are.
    """
    h_values = np.asarray(h_values, dtype=float)
    values = np.asarray(values)
    order = np.argsort(h_values)[::-1]
    h_values, values = h_values[order], values[order]
    if len(h_values) < MIN_H_VALUES:
        raise FitError(f"need at least {MIN_H_VALUES} h values to extrapolate")

    def limit(h, f):
        matrix = np.column_stack([np.ones_like(h), h])
        coefficients, *_ = np.linalg.lstsq(matrix, f, rcond=None)
        return coefficients[0]

    full = limit(h_values, values)
    reduced = limit(h_values[1:], values[1:])
    spread = float(abs(full - reduced))
    if spread <= ratio_tolerance * abs(full):
        return full.item(), spread, True
    fallback = values[-1].item()
    logger.warning(
        "Extrapolation in h did not settle (|%.4g| vs |%.4g|); using the smallest-h value",
        abs(full),
        abs(reduced),
    )
    return fallback, max(spread, float(abs(fallback - full))), False


def density_samples(
    source,
    E_c,
    T,
    h_list,
    t0_grid=None,
    delta=None,
    cutoff=None,
    circle=False,
    ratio_tolerance=RATIO_TOLERANCE,
):
    """Leading-density samples D(t0) = |c0(t0)| / int phi_hat at a critical value.

    c0 is the h -> 0 limit of the one-sided trace (times sqrt(h) on a circle),
    normalized by the integral of the positive-time bump.
    """
    h_list = check_h_list(h_list)
    t0_grid = default_t0_grid(T) if t0_grid is None else np.asarray(t0_grid, dtype=float)
    if len(t0_grid) < 2:
        raise FitError("the t0 grid needs at least two points")
    if delta is None:
        delta = float(np.min(np.diff(t0_grid))) / 4.0
    functions = [TestFunction(t0, delta, T) for t0 in t0_grid if t0 + delta <= DENSITY_REACH * T]
    if len(functions) < len(t0_grid):
        logger.warning(
            "Dropped %d test functions reaching past %g T, close to the first period",
            len(t0_grid) - len(functions),
            DENSITY_REACH,
        )
    if len(functions) < 2:
        raise FitError(f"fewer than two test functions stay below {DENSITY_REACH} T")
    cutoff = cutoff or EnergyCutoff()

    reach = max(cutoff.reach(tf) for tf in functions)
    windows = {}
    for h in h_list:
        window = source.window(h, _covering(np.array([E_c]), reach * h))
        if not window.complete:
            raise IncompleteWindowError(f"density window at h={h} is incomplete", h=h)
        windows[h] = window

    samples = []
    for tf in functions:
        values = []
        for h in h_list:
            value = upsilon(windows[h], E_c, tf, cutoff).analytic
            values.append(value * math.sqrt(h) if circle else value)
        c0, uncertainty, extrapolated = extrapolate(h_list, values, ratio_tolerance)
        half_norm = 0.5 * tf.norm
        D = abs(c0) / half_norm
        pole = bool(samples) and D > POLE_GROWTH * samples[-1].D
        if pole:
            logger.warning("Density grows more than %gx at t0=%.4g; close to a pole", POLE_GROWTH, tf.t0)
        samples.append(DensitySample(tf.t0, delta, D, uncertainty / half_norm, extrapolated, pole))
    return samples


def predicted_leading(frequencies, tf):
    """int phi_hat(t) nu_t dt with nu_t built from classical frequencies.

    ``frequencies`` is a list of (alpha, kind) pairs; an elliptic frequency
    contributes 1/|2 sin(alpha t/2)| and a hyperbolic one 1/|2 sinh(alpha t/2)|.
    """

    def density(t):
        value = 1.0
        for alpha, kind in frequencies:
            factor = math.sin(alpha * t / 2.0) if kind == "elliptic" else math.sinh(alpha * t / 2.0)
            value /= abs(2.0 * factor)
        return value

    value, _ = integrate.quad(
        lambda t: float(tf.phi_hat(t)) * density(t), tf.t0 - tf.delta, tf.t0 + tf.delta, epsrel=1e-10, limit=200
    )
    return 2.0 * value


def leading_ratios(source, E_c, frequencies, functions, h_list, cutoff=None):
    """Extrapolated leading coefficient over the predicted one, one ratio per test function.

    Only the modulus is compared, so the ratio is the modulus of the unknown
    global constant and should not depend on the test function.
    """
    h_list = check_h_list(h_list)
    cutoff = cutoff or EnergyCutoff()
    ratios = []
    for tf in functions:
        values = [trace_values(source, [E_c], h, tf, cutoff)[0].analytic for h in h_list]
        c0, _, _ = extrapolate(h_list, values)
        ratios.append(2.0 * abs(c0) / predicted_leading(frequencies, tf))
    return ratios


def write_sweep_csv(sweep_result, path):
    write_csv(path, ("E", "h", "t0", "delta", "value", "modulus"), sweep_result.rows())


def write_density_samples_csv(samples, path):
    write_csv(
        path,
        ("t0", "delta", "D", "uncertainty", "extrapolated", "pole_flag"),
        [tuple(sample) for sample in samples],
    )
