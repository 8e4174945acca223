"""Orchestration of the spectral and classical routes, and the run report.

Each ``cmd_*`` function wraps one documented operation, reads everything it
needs from a RunConfig and writes its results under the configured output
directory.  ``cmd_analyze`` chains them into the full genus recovery and
compares the outcome with the classical oracle.
"""

from __future__ import annotations

import contextlib
import logging
import math
import os
import platform
import time
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy

from .__version__ import __version__
from .analysis import (
    ScalingClass,
    ScalingThresholds,
    default_t0_grid,
    density_samples,
    locate_critical,
    sweep,
    write_density_samples_csv,
    write_sweep_csv,
)
from .classify import (
    ELLIPTIC_CIRCLE,
    MIN_SAMPLES,
    DensityModel,
    classify_circle,
    classify_signature,
    read_density_csv,
)
from .common import write_json
from .errors import EXIT_AMBIGUOUS, EXIT_DISAGREEMENT, EXIT_OK, FitError, SweepError
from .meshio import load_mesh
from .morse import Convexity, genericity_check, oracle
from .operator import assemble_laplace
from .spectrum import OperatorSpectrum, write_spectrum_csv
from .surface import euler_characteristic_mesh, make_builtin, make_height, rotate
from .trace import EnergyCutoff, default_support, detection_test_function, make_test_function, write_phi_csv

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
AUTO_ENERGY_PAD = 0.05
AUTO_ENERGY_POINTS = 40
MATCH_FRACTION = 0.01

MATCH = "match"
INDEX_MISMATCH = "index_mismatch"
MISSING = "missing"
SPURIOUS = "spurious"

ClassifiedCritical = namedtuple("ClassifiedCritical", ["E", "fit", "model", "samples", "density_file", "diagnostic"])


class WarningCollector(logging.Handler):
    """Keeps the text of every warning logged below the package logger."""

    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages = []

    def emit(self, record):
        self.messages.append(f"{record.name}: {record.getMessage()}")


@contextlib.contextmanager
def collect_warnings(name="specgenus"):
    collector = WarningCollector()
    target = logging.getLogger(name)
    target.addHandler(collector)
    try:
        yield collector.messages
    finally:
        target.removeHandler(collector)


@contextlib.contextmanager
def timed(timings, name):
    started = time.perf_counter()
    try:
        yield
    finally:
        timings[name] = round(time.perf_counter() - started, 3)


def output_dir(config):
    os.makedirs(config.output, exist_ok=True)
    return config.output


def conformal_function(spec):
    if spec is None:
        return None
    if spec["kind"] == "constant":
        value = float(spec["value"])
        return lambda points: np.full(np.shape(points)[:-1], value)
    a, b = float(spec["a"]), float(spec["b"])
    return lambda points: a + b * np.asarray(points, dtype=float)[..., 2]


def build_surface(config):
    section = config.surface
    if section.family is not None:
        surface = make_builtin(section.family, section.resolution, **section.params)
    else:
        surface = load_mesh(section.mesh, section.format)
    if section.rotation is not None:
        surface = rotate(surface, np.array(section.rotation))
    factor = conformal_function(section.conformal_factor)
    if factor is not None:
        surface = surface.with_conformal_factor(factor)
    return surface


def build_height(surface, config):
    return make_height(surface, config.height.direction, config.height.margin)


def build_source(surface, height, config):
    solver = config.solver
    return OperatorSpectrum(
        assemble_laplace(surface),
        height(surface.vertices),
        dense_crossover=solver.dense_crossover,
        slice_size=solver.lanczos_block,
        max_iter=solver.lanczos_max_iter,
    )


def scaling_thresholds(config):
    classifier = config.classifier
    return ScalingThresholds(classifier.regular, classifier.point, tuple(classifier.circle), classifier.unclassified)


def energy_cutoff(config):
    return EnergyCutoff(config.trace.cutoff, config.trace.sharpness)


def support(config, report=None):
    """Configured T, or the default below the shortest linearized period."""
    if config.trace.T is not None:
        return config.trace.T
    alphas = [alpha for point in (report.points if report else ()) for alpha, _ in point.frequencies]
    if not alphas:
        logger.warning("No linearized frequencies available; using the default support %g", default_support())
    return default_support(max(alphas) if alphas else None)


def detection_function(config, T):
    return detection_test_function(T, config.trace.t0_fraction, config.trace.delta_fraction)


def energy_grid(config, value_range, tf):
    """Energies for the sweep; unset bounds pad the potential range and an unset step follows the peak width."""
    energy = config.energy
    low, high = value_range
    span = high - low
    if not span > 0.0:
        raise SweepError("the potential is constant; there is no energy range to sweep")
    lower = low - AUTO_ENERGY_PAD * span if energy.lower is None else energy.lower
    upper = high + AUTO_ENERGY_PAD * span if energy.upper is None else energy.upper
    step = energy.step
    if step is None:
        step = min(span / AUTO_ENERGY_POINTS, min(config.h_list) / (2.0 * tf.delta))
    count = int(math.floor((upper - lower) / step + 1e-9)) + 1
    if count < 3:
        raise SweepError(f"energy grid [{lower}, {upper}] with step {step} has fewer than 3 points")
    return lower + step * np.arange(count)


def run_oracle(config, surface=None, height=None):
    surface = surface if surface is not None else build_surface(config)
    height = height if height is not None else build_height(surface, config)
    report = oracle(surface, height)
    genericity = genericity_check(report, config.seed)
    if not genericity.generic:
        logger.warning(
            "Height function is not generic (%s); a small rotation of the direction should fix it",
            ", ".join(genericity.reasons),
        )
    return report, genericity


def genericity_record(genericity):
    return {
        "generic": genericity.generic,
        "reasons": list(genericity.reasons),
        "suggested_rotation": genericity.rotation,
    }


def cmd_oracle(config):
    """Classical report only; writes report.json."""
    with collect_warnings() as warnings:
        report, genericity = run_oracle(config)
    write_json(
        os.path.join(output_dir(config), "report.json"),
        {
            "schema_version": SCHEMA_VERSION,
            "config_hash": config.digest,
            "oracle": report.as_dict(),
            "genericity": genericity_record(genericity),
            "warnings": warnings,
        },
    )
    return report


def spectrum_filename(h):
    return f"spectrum_h{h:g}.csv"


def cmd_spectrum(config, h_values=None, interval=None):
    """Eigenvalue windows, one CSV per h; the default window is the potential range."""
    surface = build_surface(config)
    height = build_height(surface, config)
    source = build_source(surface, height, config)
    if interval is None:
        low, high = source.potential_range
        interval = (
            low if config.energy.lower is None else config.energy.lower,
            high if config.energy.upper is None else config.energy.upper,
        )
    directory = output_dir(config)
    windows = []
    for h in h_values or config.h_list:
        window = source.window(h, interval)
        if not window.complete:
            logger.warning("Spectral window at h=%g is not certified complete", h)
        write_spectrum_csv([window], os.path.join(directory, spectrum_filename(h)))
        windows.append(window)
    return windows


def write_sweep_spectra(result, directory):
    """The eigenvalue window behind each h column of a sweep, one CSV per h; returns the file names."""
    names = []
    for h, column in zip(result.h_values, result.samples):
        name = spectrum_filename(h)
        write_spectrum_csv([column[0].window], os.path.join(directory, name))
        names.append(name)
    return names


def _sweep_setup(config, surface, height, report=None):
    T = support(config, report)
    tf = detection_function(config, T)
    energies = energy_grid(config, height.value_range, tf)
    return T, tf, energies


def cmd_sweep(config):
    """Trace sweep over the energy grid; writes sweep.csv."""
    surface = build_surface(config)
    height = build_height(surface, config)
    report = run_oracle(config, surface, height)[0] if config.trace.T is None else None
    _, tf, energies = _sweep_setup(config, surface, height, report)
    source = build_source(surface, height, config)
    result = sweep(source, energies, config.h_list, tf, energy_cutoff(config), config.solver.workers)
    write_sweep_csv(result, os.path.join(output_dir(config), "sweep.csv"))
    return result


def cmd_classify(samples_path, circle=False, ambiguity_gap=0.10, max_log_residual=0.25, out=None):
    """Density model for a (t0, D) samples file; writes classification.json when ``out`` is given."""
    samples = read_density_csv(samples_path)
    if circle:
        model = classify_circle(samples, ambiguity_gap, max_log_residual)
    else:
        model = classify_signature(samples, ambiguity_gap, max_log_residual)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        write_json(os.path.join(out, "classification.json"), model_record(model))
    return model


def cmd_mktest(t0, delta, T, s_grid, out):
    """phi sampled on ``s_grid``; writes phi.csv and returns its path."""
    tf = make_test_function(t0, delta, T)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "phi.csv")
    write_phi_csv(tf, s_grid, path)
    return path


def model_record(model):
    if model is None:
        return None
    if isinstance(model, DensityModel):
        return {
            "model": "point",
            "r": model.r,
            "kinds": list(model.kinds),
            "model_frequencies": [model.alpha1, model.alpha2],
            "linearized_frequencies": [2.0 * model.alpha1, 2.0 * model.alpha2],
            "amplitude": model.amplitude,
            "residual": model.residual,
            "gap": model.gap,
            "runner_up": model.runner_up,
            "ambiguous": model.ambiguous,
            "frequencies_resolved": model.resolved,
        }
    return {
        "model": "circle",
        "kind": model.kind,
        "model_frequencies": [model.omega],
        "linearized_frequencies": [2.0 * model.omega],
        "amplitude": model.amplitude,
        "residual": model.residual,
        "gap": model.gap,
        "ambiguous": model.ambiguous,
    }


def fit_inputs(samples):
    """(t0, D, delta) triples of the settled samples, or of all samples when too few settled."""
    settled = [sample for sample in samples if sample.extrapolated and not sample.pole_flag]
    if len(settled) < MIN_SAMPLES:
        logger.warning(
            "Only %d of %d density samples settled in h; fitting all of them", len(settled), len(samples)
        )
        settled = samples
    return [(sample.t0, sample.D, sample.delta) for sample in settled]


def classify_candidate(source, candidate, T, h_list, config, cutoff, directory, index):
    """Density samples and the signature model for one located critical value."""
    scaling_class = candidate.fit.scaling_class
    if scaling_class == ScalingClass.UNCLASSIFIED_DEGENERATE:
        logger.warning("Critical value near E=%.6g is more degenerate than a circle; not classified", candidate.E)
        return ClassifiedCritical(candidate.E, candidate.fit, None, [], None, "unclassified degenerate")
    circle = scaling_class == ScalingClass.CIRCLE_DEGENERATE
    trace_config = config.trace
    t0_grid = default_t0_grid(T, trace_config.t0_start, trace_config.t0_stop, trace_config.t0_count)
    samples = density_samples(source, candidate.E, T, h_list, t0_grid, trace_config.delta, cutoff, circle)
    path = os.path.join(directory, f"density_{index}.csv")
    write_density_samples_csv(samples, path)

    inputs = fit_inputs(samples)
    classifier = config.classifier
    try:
        if circle:
            model = classify_circle(inputs, classifier.ambiguity_gap, classifier.max_log_residual)
        else:
            model = classify_signature(inputs, classifier.ambiguity_gap, classifier.max_log_residual, T=T)
    except FitError as error:
        logger.warning("Density fit failed at E=%.6g: %s", candidate.E, error.message)
        return ClassifiedCritical(candidate.E, candidate.fit, None, samples, os.path.basename(path), error.message)
    return ClassifiedCritical(candidate.E, candidate.fit, model, samples, os.path.basename(path), "")


def spectral_index(item):
    """('point', r), ('circle', transverse index) or None when unclassified."""
    if item.model is None:
        return None
    if isinstance(item.model, DensityModel):
        return ("point", item.model.r)
    return ("circle", 0 if item.model.kind == ELLIPTIC_CIRCLE else 1)


def is_ambiguous(item):
    return item.model is None or item.model.ambiguous or item.fit.scaling_class == ScalingClass.AMBIGUOUS


def spectral_morse(classified):
    """Counts, Euler characteristic and genus from the classified critical values."""
    counts = [0, 0, 0]
    circles = 0
    complete = True
    for item in classified:
        index = spectral_index(item)
        if index is None or is_ambiguous(item):
            complete = False
            continue
        kind, value = index
        if kind == "point":
            counts[value] += 1
        else:
            circles += 1
    chi = counts[0] - counts[1] + counts[2] if complete else None
    genus = None
    if chi is not None and not circles and chi % 2 == 0 and chi <= 2:
        genus = (2 - chi) // 2
    if genus == 0 and sum(counts) == 2:
        convexity = Convexity.CONSISTENT_WITH_CONVEX
    elif genus == 0 and sum(counts) > 2:
        convexity = Convexity.NON_CONVEX_DETECTED
    else:
        convexity = Convexity.NOT_APPLICABLE
    return {"counts": counts, "circles": circles, "chi": chi, "genus": genus, "convexity": convexity}


def _oracle_items(report):
    items = []
    for point in report.points:
        items.append((point.value, "degenerate" if point.degenerate else "point", point.index))
    for critical_set in report.sets:
        kind = "circle" if critical_set.kind == "circle" else "flat"
        items.append((critical_set.value, kind, critical_set.transverse_index))
    return sorted(items, key=lambda item: item[0])


def agreement(classified, report, tolerance):
    """Per-critical-value verdicts and the aggregate full / partial / none."""
    entries = []
    used = set()
    for value, kind, index in _oracle_items(report):
        free = [i for i in range(len(classified)) if i not in used]
        nearest = min(free, key=lambda i: abs(classified[i].E - value), default=None)
        if nearest is None or abs(classified[nearest].E - value) > tolerance:
            entries.append(
                {"E_oracle": value, "E_spectral": None, "oracle": [kind, index], "spectral": None, "verdict": MISSING}
            )
            continue
        used.add(nearest)
        found = spectral_index(classified[nearest])
        verdict = MATCH if found == (kind, index) else INDEX_MISMATCH
        entries.append(
            {
                "E_oracle": value,
                "E_spectral": classified[nearest].E,
                "oracle": [kind, index],
                "spectral": list(found) if found else None,
                "verdict": verdict,
            }
        )
    for i, item in enumerate(classified):
        if i not in used:
            found = spectral_index(item)
            entries.append(
                {
                    "E_oracle": None,
                    "E_spectral": item.E,
                    "oracle": None,
                    "spectral": list(found) if found else None,
                    "verdict": SPURIOUS,
                }
            )

    verdicts = [entry["verdict"] for entry in entries]
    if verdicts and all(verdict == MATCH for verdict in verdicts):
        aggregate = "full"
    elif MATCH in verdicts:
        aggregate = "partial"
    else:
        aggregate = "none"
    return {"verdict": aggregate, "tolerance": tolerance, "entries": entries}


def critical_record(item):
    fit = item.fit
    return {
        "E": item.E,
        "scaling": {
            "p": fit.p,
            "intercept": fit.intercept,
            "residual": fit.residual,
            "class": fit.scaling_class,
            "diagnostic": fit.diagnostic,
        },
        "classification": model_record(item.model),
        "density_file": item.density_file,
        "diagnostic": item.diagnostic,
    }


def _warn_close_candidates(candidates, min_separation):
    if min_separation is None:
        return
    for earlier, later in zip(candidates, candidates[1:]):
        if later.E - earlier.E < min_separation:
            logger.warning(
                "Critical values at E=%.6g and E=%.6g are closer than %g; both are kept",
                earlier.E,
                later.E,
                min_separation,
            )


def exit_code_for(classified, aggregate):
    if any(is_ambiguous(item) for item in classified):
        return EXIT_AMBIGUOUS
    if aggregate != "full":
        return EXIT_DISAGREEMENT
    return EXIT_OK


def cmd_analyze(config):
    """Full run: returns the report mapping (also written to report.json) and the exit code."""
    directory = output_dir(config)
    timings = {}
    with collect_warnings() as warnings:
        with timed(timings, "surface"):
            surface = build_surface(config)
            height = build_height(surface, config)
        with ThreadPoolExecutor(max_workers=1) as executor:
            oracle_future = executor.submit(run_oracle, config, surface, height)
            with timed(timings, "operator"):
                source = build_source(surface, height, config)
            report = oracle_future.result()[0] if config.trace.T is None else None
            T, tf, energies = _sweep_setup(config, surface, height, report)
            cutoff = energy_cutoff(config)

            with timed(timings, "sweep"):
                result = sweep(source, energies, config.h_list, tf, cutoff, config.solver.workers)
                write_sweep_csv(result, os.path.join(directory, "sweep.csv"))
                spectra = write_sweep_spectra(result, directory)
            with timed(timings, "locate"):
                candidates = locate_critical(
                    result,
                    config.classifier.relative_floor,
                    scaling_thresholds(config),
                    config.energy.refine_tolerance,
                )
                _warn_close_candidates(candidates, config.energy.min_separation)
            with timed(timings, "classify"):
                classified = [
                    classify_candidate(source, candidate, T, result.h_values, config, cutoff, directory, index)
                    for index, candidate in enumerate(candidates)
                ]
            with timed(timings, "oracle_wait"):
                report, genericity = oracle_future.result()

        low, high = height.value_range
        step = float(energies[1] - energies[0])
        tolerance = max(step, MATCH_FRACTION * (high - low))
        spectral = spectral_morse(classified)
        matched = agreement(classified, report, tolerance)
        exit_code = exit_code_for(classified, matched["verdict"])

    run_report = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config.digest,
        "surface": {
            "name": surface.name,
            "representation": surface.representation,
            "vertices": surface.n_vertices,
            "faces": len(surface.faces),
            "params": surface.params,
            "euler_characteristic_mesh": euler_characteristic_mesh(surface),
        },
        "height": {"direction": height.direction, "offset": height.offset, "value_range": height.value_range},
        "test_function": {"T": T, "t0": tf.t0, "delta": tf.delta, "cutoff": config.trace.cutoff},
        "energy_grid": {"lower": energies[0], "upper": energies[-1], "step": step, "count": len(energies)},
        "h_list": list(result.h_values),
        "spectra": spectra,
        "critical": [critical_record(item) for item in classified],
        "spectral": spectral,
        "oracle": report.as_dict(),
        "genericity": genericity_record(genericity),
        "agreement": matched,
        "convexity": {"spectral": spectral["convexity"], "oracle": report.convexity},
        "warnings": sorted(warnings),
        "exit_code": exit_code,
        "provenance": {
            "specgenus": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
            "seed": config.seed,
            "timings": timings,
        },
    }
    write_json(os.path.join(directory, "report.json"), run_report)
    logger.info(
        "Spectral genus %s, oracle genus %s, agreement %s",
        spectral["genus"],
        report.genus,
        matched["verdict"],
    )
    return run_report, exit_code
