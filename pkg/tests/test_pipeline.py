import json
import logging
import math
import os

import numpy as np
import pytest

from specgenus.analysis import Candidate, ScalingClass, ScalingFit, sweep
from specgenus.classify import ELLIPTIC, ELLIPTIC_CIRCLE, HYPERBOLIC, CircleModel, DensityModel, write_density_csv
from specgenus.common import read_csv
from specgenus.config import load_config, parse_config
from specgenus.errors import EXIT_AMBIGUOUS, EXIT_DISAGREEMENT, EXIT_OK, SweepError
from specgenus.morse import Convexity, CriticalPoint, CriticalSet, assemble_report
from specgenus.pipeline import (
    ClassifiedCritical,
    agreement,
    build_surface,
    classify_candidate,
    cmd_analyze,
    cmd_classify,
    cmd_mktest,
    cmd_oracle,
    cmd_spectrum,
    cmd_sweep,
    collect_warnings,
    conformal_function,
    energy_grid,
    exit_code_for,
    is_ambiguous,
    model_record,
    spectral_index,
    spectral_morse,
    support,
    write_sweep_spectra,
)
from specgenus.synthetic import HarmonicLadder, point_density_samples
from specgenus.trace import EnergyCutoff, TestFunction, default_support, detection_test_function

POINT_FIT = ScalingFit(0.0, 0.0, 0.0, ScalingClass.POINT_CRITICAL)
CIRCLE_FIT = ScalingFit(-0.5, 0.0, 0.0, ScalingClass.CIRCLE_DEGENERATE)


def point(E, r, ambiguous=False):
    kinds = (ELLIPTIC, ELLIPTIC) if r == 0 else (ELLIPTIC, HYPERBOLIC) if r == 1 else (HYPERBOLIC, HYPERBOLIC)
    model = DensityModel(r, 0.7, 0.7, kinds, 1.0, 0.01, 0.5, ambiguous, (r + 1) % 3)
    return ClassifiedCritical(E, POINT_FIT, model, [], None, "")


def circle(E, kind=ELLIPTIC_CIRCLE):
    return ClassifiedCritical(E, CIRCLE_FIT, CircleModel(kind, 0.5, 1.0, 0.01, 0.5, False), [], None, "")


def oracle_point(index, value):
    return CriticalPoint((0.0, 0.0, value), value, index, (2 - index, index), (), {})


@pytest.fixture
def sphere_report():
    return assemble_report([oracle_point(0, 0.1), oracle_point(2, 2.1)])


def test_spectral_morse_of_a_sphere():
    spectral = spectral_morse([point(0.1, 0), point(2.1, 2)])
    assert spectral == {
        "counts": [1, 0, 1],
        "circles": 0,
        "chi": 2,
        "genus": 0,
        "convexity": Convexity.CONSISTENT_WITH_CONVEX,
    }


def test_spectral_morse_of_a_torus():
    spectral = spectral_morse([point(0.1, 0), point(1.1, 1), point(4.1, 1), point(5.1, 2)])
    assert spectral["chi"] == 0
    assert spectral["genus"] == 1
    assert spectral["convexity"] is Convexity.NOT_APPLICABLE


def test_spectral_morse_of_a_dented_sphere():
    spectral = spectral_morse([point(0.1, 0), point(0.57, 0), point(0.6, 1), point(2.1, 2)])
    assert spectral["genus"] == 0
    assert spectral["convexity"] is Convexity.NON_CONVEX_DETECTED


def test_spectral_morse_with_circles_has_no_genus():
    spectral = spectral_morse([circle(0.1), circle(1.1, "hyperbolic-circle")])
    assert spectral["circles"] == 2
    assert spectral["chi"] == 0
    assert spectral["genus"] is None


def test_ambiguous_value_voids_the_euler_characteristic():
    unclassified = ClassifiedCritical(1.0, POINT_FIT, None, [], None, "fit failed")
    for classified in ([point(0.1, 0), point(2.1, 2, ambiguous=True)], [point(0.1, 0), unclassified]):
        spectral = spectral_morse(classified)
        assert spectral["chi"] is None
        assert spectral["genus"] is None


def test_full_agreement(sphere_report):
    classified = [point(0.11, 0), point(2.09, 2)]
    matched = agreement(classified, sphere_report, 0.05)
    assert matched["verdict"] == "full"
    assert [entry["verdict"] for entry in matched["entries"]] == ["match", "match"]
    assert matched["entries"][0]["spectral"] == ["point", 0]
    assert exit_code_for(classified, matched["verdict"]) == EXIT_OK


def test_partial_agreement(sphere_report):
    classified = [point(0.1, 0), point(1.0, 1), point(2.1, 1)]
    matched = agreement(classified, sphere_report, 0.05)
    assert matched["verdict"] == "partial"
    assert sorted(entry["verdict"] for entry in matched["entries"]) == ["index_mismatch", "match", "spurious"]
    assert exit_code_for(classified, matched["verdict"]) == EXIT_DISAGREEMENT


def test_missing_values(sphere_report):
    matched = agreement([point(0.1, 0)], sphere_report, 0.05)
    assert [entry["verdict"] for entry in matched["entries"]] == ["match", "missing"]
    assert agreement([], sphere_report, 0.05)["verdict"] == "none"


def test_circles_are_matched_against_critical_sets():
    report = assemble_report([], [CriticalSet("circle", 0.1, [], 0, 0), CriticalSet("circle", 1.1, [], 1, 0)])
    matched = agreement([circle(0.1), circle(1.1, "hyperbolic-circle")], report, 0.05)
    assert matched["verdict"] == "full"


def test_ambiguity_takes_precedence_over_disagreement():
    classified = [point(0.1, 0, ambiguous=True)]
    assert exit_code_for(classified, "none") == EXIT_AMBIGUOUS
    assert exit_code_for(classified, "full") == EXIT_AMBIGUOUS


def test_energy_grid_defaults(small_sphere_document):
    config = parse_config(dict(small_sphere_document, trace={"T": 2.0}))
    tf = detection_test_function(2.0)
    energies = energy_grid(config, (0.1, 2.1), tf)
    assert len(energies) == 45
    assert energies[0] == pytest.approx(0.0)
    assert energies[1] - energies[0] == pytest.approx(0.05)
    assert energies[-1] == pytest.approx(2.2)


def test_energy_grid_explicit_bounds(small_sphere_document):
    config = parse_config(dict(small_sphere_document, energy={"lower": 0.5, "upper": 1.0, "step": 0.1}))
    energies = energy_grid(config, (0.1, 2.1), TestFunction(1.0, 0.3, 2.0))
    np.testing.assert_allclose(energies, [0.5, 0.6, 0.7, 0.8, 0.9, 1.0])


def test_energy_grid_errors(small_sphere_document):
    config = parse_config(small_sphere_document)
    tf = TestFunction(1.0, 0.3, 2.0)
    with pytest.raises(SweepError):
        energy_grid(config, (1.0, 1.0), tf)
    narrow = parse_config(dict(small_sphere_document, energy={"lower": 0.0, "upper": 0.1, "step": 0.08}))
    with pytest.raises(SweepError):
        energy_grid(narrow, (0.1, 2.1), tf)


def test_support(small_sphere_document, sphere_report, caplog):
    configured = parse_config(dict(small_sphere_document, trace={"T": 1.5}))
    assert support(configured) == 1.5
    config = parse_config(small_sphere_document)
    frequencies = ((math.sqrt(2.0), ELLIPTIC), (math.sqrt(2.0), ELLIPTIC))
    report = sphere_report._replace(points=[p._replace(frequencies=frequencies) for p in sphere_report.points])
    assert support(config, report) == pytest.approx(default_support(math.sqrt(2.0)))
    with caplog.at_level(logging.WARNING, logger="specgenus"):
        assert support(config) == default_support()
    assert "default support" in caplog.text


def test_collect_warnings():
    with collect_warnings() as warnings:
        logging.getLogger("specgenus.sweep_worker").warning("window %d incomplete", 2)
        logging.getLogger("specgenus.sweep_worker").info("not collected")
    assert warnings == ["specgenus.sweep_worker: window 2 incomplete"]


def test_conformal_function():
    points = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -2.0]])
    assert conformal_function(None) is None
    np.testing.assert_allclose(conformal_function({"kind": "constant", "value": 2.0})(points), [2.0, 2.0])
    np.testing.assert_allclose(conformal_function({"kind": "linear_z", "a": 3.0, "b": 0.5})(points), [3.5, 2.0])


def test_build_surface_from_a_mesh(write_config, off_file, small_sphere_document):
    config = load_config(write_config(dict(small_sphere_document, surface={"mesh": off_file.name})))
    surface = build_surface(config)
    assert surface.n_vertices == 4
    assert surface.name == "tetrahedron"


def test_cmd_oracle(small_sphere_document):
    config = parse_config(small_sphere_document)
    report = cmd_oracle(config)
    assert report.counts == (1, 0, 1)
    with open(os.path.join(config.output, "report.json"), encoding="utf-8") as fp:
        written = json.load(fp)
    assert written["config_hash"] == config.digest
    assert written["oracle"]["genus"] == 0
    assert written["oracle"]["counts"] == [1, 0, 1]
    assert set(written["genericity"]) == {"generic", "reasons", "suggested_rotation"}


def test_cmd_spectrum(small_sphere_document):
    config = parse_config(small_sphere_document)
    windows = cmd_spectrum(config, h_values=[0.4], interval=(0.5, 1.5))
    assert len(windows) == 1
    rows = read_csv(os.path.join(config.output, "spectrum_h0.4.csv"))
    values = [float(row["lambda"]) for row in rows]
    assert len(values) == len(windows[0].eigenvalues)
    assert all(0.5 <= value < 1.5 for value in values)
    assert values == sorted(values)


def test_cmd_sweep(small_sphere_document):
    config = parse_config(dict(small_sphere_document, trace={"T": 2.0}))
    result = cmd_sweep(config)
    assert len(result.energies) == 45
    assert result.values.shape == (45, 3)
    assert np.all(np.isfinite(result.values))
    rows = read_csv(os.path.join(config.output, "sweep.csv"))
    assert len(rows) == 45 * 3
    assert {float(row["h"]) for row in rows} == {0.4, 0.3, 0.2}


def test_cmd_classify(tmp_path):
    samples = tmp_path / "density.csv"
    write_density_csv(point_density_samples(1, (0.7, 1.3), np.linspace(0.2, 2.0, 12), amplitude=2.0), samples)
    model = cmd_classify(samples, out=tmp_path / "out")
    assert model.r == 1
    with open(tmp_path / "out" / "classification.json", encoding="utf-8") as fp:
        record = json.load(fp)
    assert record["model"] == "point"
    assert record["r"] == 1
    assert record["linearized_frequencies"] == pytest.approx([1.4, 2.6], rel=2e-2)


def test_cmd_mktest(tmp_path):
    path = cmd_mktest(1.0, 0.3, 2.0, np.linspace(0.0, 4.0, 5), tmp_path / "phi")
    rows = read_csv(path)
    assert [float(row["s"]) for row in rows] == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert float(rows[0]["phi"]) == pytest.approx(TestFunction(1.0, 0.3, 2.0).norm)


def test_classify_candidate_on_a_ladder_minimum(small_sphere_document, tmp_path):
    config = parse_config(small_sphere_document)
    ladder = HarmonicLadder(0.0, (1.5, 1.0))
    candidate = Candidate(0.0, POINT_FIT, (-0.1, 0.1), [])
    T = default_support(1.5)
    item = classify_candidate(ladder, candidate, T, [0.1, 0.07, 0.05], config, EnergyCutoff(), str(tmp_path), 0)
    assert spectral_index(item) == ("point", 0)
    assert not is_ambiguous(item)
    assert item.density_file == "density_0.csv"
    assert (tmp_path / "density_0.csv").exists()
    record = model_record(item.model)
    assert record["frequencies_resolved"]
    assert record["linearized_frequencies"] == pytest.approx([1.0, 1.5], rel=2e-2)


def test_write_sweep_spectra(tmp_path):
    ladder = HarmonicLadder(0.0, (1.5, 1.0))
    result = sweep(ladder, [0.0], [0.1, 0.07, 0.05], TestFunction(1.2, 0.4, 1.8))
    names = write_sweep_spectra(result, str(tmp_path))
    assert names == ["spectrum_h0.1.csv", "spectrum_h0.07.csv", "spectrum_h0.05.csv"]
    for name, column in zip(names, result.samples):
        values = [float(row["lambda"]) for row in read_csv(tmp_path / name)]
        assert len(values) == len(column[0].window.eigenvalues) > 0
        assert values == sorted(values)


@pytest.mark.slow
def test_cmd_analyze_writes_a_complete_report(small_sphere_document):
    config = parse_config(small_sphere_document)
    report, exit_code = cmd_analyze(config)
    assert exit_code in (EXIT_OK, EXIT_DISAGREEMENT, EXIT_AMBIGUOUS)
    assert report["exit_code"] == exit_code
    assert report["oracle"]["counts"] == [1, 0, 1]
    assert report["h_list"] == [0.4, 0.3, 0.2]
    assert report["warnings"] == sorted(report["warnings"])
    with open(os.path.join(config.output, "report.json"), encoding="utf-8") as fp:
        written = json.load(fp)
    assert written["schema_version"] == "1.0"
    assert written["surface"]["euler_characteristic_mesh"] == 2
    assert written["agreement"]["verdict"] in ("full", "partial", "none")
    assert os.path.exists(os.path.join(config.output, "sweep.csv"))
    for item in written["critical"]:
        if item["density_file"]:
            assert os.path.exists(os.path.join(config.output, item["density_file"]))
    assert written["spectra"] == ["spectrum_h0.4.csv", "spectrum_h0.3.csv", "spectrum_h0.2.csv"]
    for name in written["spectra"]:
        assert os.path.exists(os.path.join(config.output, name))
    verdicts = {entry["verdict"] for entry in written["agreement"]["entries"]}
    assert verdicts <= {"match", "index_mismatch", "spurious", "missing"}
    if written["agreement"]["verdict"] == "full" and written["spectral"]["genus"] is not None:
        assert written["spectral"]["genus"] == written["oracle"]["genus"] == 0
