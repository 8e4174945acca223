import json
import logging

import numpy as np
import pytest
from click.testing import CliRunner

from specgenus.classify import write_density_csv
from specgenus.cli import main
from specgenus.common import read_csv
from specgenus.config import ConfigManager
from specgenus.synthetic import point_density_samples


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def run():
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(main, ["--no-spinner", *[str(arg) for arg in args]])

    return invoke


def read_json(path):
    with open(path, encoding="utf-8") as fp:
        return json.load(fp)


def test_help_lists_the_commands(run):
    result = run("--help")
    assert result.exit_code == 0
    for command in ("analyze", "oracle", "sweep", "spectrum", "classify", "mktest", "config"):
        assert command in result.output


def test_mktest(run, tmp_path):
    result = run("mktest", "--t0", 1.0, "--delta", 0.3, "--T", 2.0, "--s-count", 5, "--out", tmp_path)
    assert result.exit_code == 0, result.output
    rows = read_csv(tmp_path / "phi.csv")
    assert [float(row["s"]) for row in rows] == [0.0, 2.5, 5.0, 7.5, 10.0]


def test_mktest_rejects_a_wide_bump(run, tmp_path):
    result = run("mktest", "--t0", 1.0, "--delta", 1.0, "--T", 3.0, "--out", tmp_path)
    assert result.exit_code == 1
    assert read_json(tmp_path / "error.json")["code"] == "test_function"


def test_invalid_config_exits_with_two(run, write_config, small_sphere_document, tmp_path):
    path = write_config(dict(small_sphere_document, h_list=[0.2, 0.3, 0.4]))
    result = run("analyze", "--config", path, "--out", tmp_path / "failed")
    assert result.exit_code == 2
    record = read_json(tmp_path / "failed" / "error.json")
    assert record["code"] == "config"
    assert record["field"] == "h_list"
    assert "h_list" in result.output


def test_missing_config_file(run, tmp_path):
    result = run("oracle", "--config", tmp_path / "absent.json")
    assert result.exit_code == 2


def test_oracle(run, write_config, small_sphere_document):
    result = run("oracle", "--config", write_config(small_sphere_document))
    assert result.exit_code == 0, result.output
    assert "Counts (1, 0, 1), chi=2, genus=0" in result.output


def test_spectrum(run, write_config, small_sphere_document, tmp_path):
    path = write_config(small_sphere_document)
    result = run("spectrum", "--config", path, "--h", 0.4, "--lower", 0.5, "--upper", 1.5, "--out", tmp_path / "s")
    assert result.exit_code == 0, result.output
    assert "h=0.4:" in result.output
    assert (tmp_path / "s" / "spectrum_h0.4.csv").exists()


def test_spectrum_needs_both_bounds(run, write_config, small_sphere_document):
    result = run("spectrum", "--config", write_config(small_sphere_document), "--lower", 0.5)
    assert result.exit_code == 2


def test_classify(run, tmp_path):
    samples = tmp_path / "density.csv"
    write_density_csv(point_density_samples(0, (0.8, 1.2), np.linspace(0.2, 2.0, 12)), samples)
    result = run("classify", samples, "--out", tmp_path / "c")
    assert result.exit_code == 0, result.output
    assert "r=0 kinds=elliptic/elliptic" in result.output
    assert read_json(tmp_path / "c" / "classification.json")["r"] == 0


def test_classify_ambiguous_exits_with_four(run, tmp_path):
    samples = tmp_path / "density.csv"
    noisy = point_density_samples(2, (0.8, 1.2), np.linspace(0.2, 2.0, 12), noise=0.05, seed=1)
    write_density_csv(noisy, samples)
    result = run("classify", samples, "--max-log-residual", 1e-6)
    assert result.exit_code == 4
    assert "ambiguous" in result.output


def test_config_set(run):
    result = run("config", "set", "--parent", "defaults", "--parent", "solver", "workers", "3")
    assert result.exit_code == 0, result.output
    assert ConfigManager().defaults == {"solver": {"workers": 3}}
