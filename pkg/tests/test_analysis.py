import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from specgenus.analysis import (
    EnergySweep,
    ScalingClass,
    check_h_list,
    classify_exponent,
    density_samples,
    extrapolate,
    fit_scaling,
    leading_ratios,
    locate_critical,
    predicted_leading,
    sweep,
    write_sweep_csv,
)
from specgenus.classify import classify_signature
from specgenus.common import read_csv
from specgenus.errors import FitError, OperatorError, SweepError
from specgenus.synthetic import CircleLadder, HarmonicLadder, point_density_samples, random_point_cases
from specgenus.trace import EnergyCutoff, TestFunction, default_support, upsilon

H_LIST = [0.1, 0.07, 0.05]


@pytest.fixture
def ladder():
    return HarmonicLadder(0.0, (1.5, 1.0))


@pytest.fixture
def tf():
    return TestFunction(1.2, 0.4, 1.8)


def test_harmonic_ladder_eigenvalues(ladder):
    assert ladder.alphas == (1.0, 1.5)
    values = ladder.eigenvalues(0.1, (-1.0, 0.4))
    # n1 + 1.5 n2 < 2.75 for lambda = 0.1 (n1 + 1/2 + 1.5 (n2 + 1/2)) < 0.4
    expected = sorted(0.1 * (n1 + 0.5 + 1.5 * (n2 + 0.5)) for n1 in range(4) for n2 in range(3))
    expected = [value for value in expected if value < 0.4]
    assert_allclose(values, expected)
    assert ladder.window(0.1, (-1.0, 0.4)).complete


def test_ladder_validation():
    with pytest.raises(OperatorError):
        HarmonicLadder(0.0, (1.0,))
    with pytest.raises(OperatorError):
        HarmonicLadder(0.0, (0.0, 1.0))
    with pytest.raises(OperatorError):
        CircleLadder(0.0, 1.0, -1.0)
    with pytest.raises(OperatorError):
        HarmonicLadder(0.0, (1.0, 2.0)).window(0.1, (1.0, 0.0))


def test_upsilon_on_harmonic_ladder_matches_closed_form(ladder, tf):
    window = ladder.window(0.05, (-5.0, 5.0))
    sample = upsilon(window, 0.0, tf, EnergyCutoff())
    assert sample.value == pytest.approx(ladder.exact_upsilon(tf), rel=5e-3)


def test_upsilon_on_circle_ladder_matches_leading_term(tf):
    ladder = CircleLadder(0.0, 1.0, 1.0)
    h = 0.01
    window = ladder.window(h, (-1.0, 1.0))
    sample = upsilon(window, 0.0, tf, EnergyCutoff())
    assert sample.value == pytest.approx(ladder.exact_leading(tf, h), rel=2e-2)


@pytest.mark.parametrize(
    "p, expected",
    [
        (2.0, ScalingClass.REGULAR),
        (1.5, ScalingClass.REGULAR),
        (0.0, ScalingClass.POINT_CRITICAL),
        (-0.2, ScalingClass.POINT_CRITICAL),
        (-0.5, ScalingClass.CIRCLE_DEGENERATE),
        (-1.0, ScalingClass.UNCLASSIFIED_DEGENERATE),
        (0.8, ScalingClass.AMBIGUOUS),
        (-0.85, ScalingClass.AMBIGUOUS),
    ],
)
def test_classify_exponent(p, expected):
    assert classify_exponent(p) is expected


@pytest.mark.parametrize("p", [2.0, 0.0, -0.5, -1.2])
def test_fit_scaling_recovers_power_laws(p):
    h = np.array([0.4, 0.2, 0.1])
    fit = fit_scaling(h, 3.0 * h**p)
    assert fit.p == pytest.approx(p)
    assert fit.intercept == pytest.approx(math.log(3.0))
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert fit.scaling_class is classify_exponent(p)


def test_fit_scaling_below_floor_is_regular():
    fit = fit_scaling([0.4, 0.2, 0.1], [1e-3, 1e-2, 0.0], floor=1e-4)
    assert fit.scaling_class is ScalingClass.REGULAR
    assert fit.p == math.inf
    assert fit.diagnostic == "below floor"


def test_fit_scaling_sign_change_is_ambiguous():
    fit = fit_scaling([0.4, 0.2, 0.1], [1.0, -1.0, 1.0])
    assert fit.scaling_class is ScalingClass.AMBIGUOUS
    assert fit.diagnostic == "sign change across h"


def test_fit_scaling_errors():
    with pytest.raises(FitError):
        fit_scaling([0.4, 0.2], [1.0, 1.0])
    with pytest.raises(FitError):
        fit_scaling([0.4, 0.2, 0.1], [1.0, math.nan, 1.0])


@pytest.mark.parametrize(
    "h_list",
    [[0.4, 0.2], [0.4, 0.2, 0.2], [0.1, 0.2, 0.4], [0.4, 0.3, 0.25], [0.4, 0.2, -0.1]],
)
def test_check_h_list_errors(h_list):
    with pytest.raises(SweepError):
        check_h_list(h_list)


def test_check_h_list():
    assert check_h_list([0.4, 0.3, 0.2]) == [0.4, 0.3, 0.2]


def test_extrapolate_linear_data():
    limit, uncertainty, extrapolated = extrapolate([0.4, 0.2, 0.1], [1.8, 1.4, 1.2])
    assert limit == pytest.approx(1.0)
    assert uncertainty == pytest.approx(0.0, abs=1e-12)
    assert extrapolated


def test_extrapolate_complex_data():
    h = np.array([0.1, 0.2, 0.4])
    limit, _, extrapolated = extrapolate(h, (1.0 + 2.0j) + (0.5 - 1.0j) * h)
    assert limit == pytest.approx(1.0 + 2.0j)
    assert extrapolated


def test_extrapolate_falls_back_to_smallest_h():
    limit, uncertainty, extrapolated = extrapolate([0.4, 0.2, 0.1], [1.0, 1.0, 10.0])
    assert limit == 10.0
    assert not extrapolated
    assert uncertainty > 1.0


def test_sweep_on_harmonic_ladder(ladder, tf):
    energies = np.linspace(-0.2, 0.2, 5)
    result = sweep(ladder, energies, H_LIST, tf)
    assert result.h_values == H_LIST
    assert result.values.shape == (5, 3)
    assert result.moduli.shape == (5, 3)
    # the ladder scales with h, so the trace at its bottom does not depend on h
    assert_allclose(result.values[2], ladder.exact_upsilon(tf), rtol=5e-3)
    assert len(list(result.rows())) == 15
    fits = result.fits()
    assert fits[2].scaling_class is ScalingClass.POINT_CRITICAL


def test_sweep_with_workers_matches_serial(ladder, tf):
    energies = np.linspace(-0.1, 0.1, 3)
    serial = sweep(ladder, energies, H_LIST, tf)
    threaded = sweep(ladder, energies, H_LIST, tf, workers=3)
    assert_allclose(threaded.values, serial.values)


def test_sweep_validation(ladder, tf):
    with pytest.raises(SweepError):
        sweep(ladder, [], H_LIST, tf)
    with pytest.raises(SweepError):
        sweep(ladder, [0.1, 0.0], H_LIST, tf)
    with pytest.raises(SweepError):
        sweep(HarmonicLadder(1.0, (1.0, 1.5), span=0.0), [1.0], H_LIST, tf)


def test_write_sweep_csv(tmp_path, ladder, tf):
    result = sweep(ladder, [0.0], H_LIST, tf)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(result, path)
    rows = read_csv(path)
    assert [float(row["h"]) for row in rows] == H_LIST
    assert set(rows[0]) == {"E", "h", "t0", "delta", "value", "modulus"}


def test_locate_critical_finds_nothing_far_below_the_spectrum(ladder, tf):
    result = sweep(ladder, [-12.0, -11.0, -10.0], H_LIST, tf)
    assert locate_critical(result) == []


def test_locate_critical_needs_a_source(tf):
    result = EnergySweep([0.0], H_LIST, [], tf, EnergyCutoff())
    with pytest.raises(SweepError):
        locate_critical(result)


def test_predicted_leading_matches_the_harmonic_ladder(ladder, tf):
    predicted = predicted_leading([(1.0, "elliptic"), (1.5, "elliptic")], tf)
    assert predicted == pytest.approx(-ladder.exact_upsilon(tf), rel=1e-6)


def test_leading_ratios_are_one_on_the_harmonic_ladder(ladder):
    functions = [TestFunction(1.0, 0.3, 1.8), TestFunction(1.4, 0.3, 1.8)]
    ratios = leading_ratios(ladder, 0.0, [(1.0, "elliptic"), (1.5, "elliptic")], functions, H_LIST)
    assert ratios == pytest.approx([1.0, 1.0], rel=1e-2)


def test_density_samples_recover_the_ladder_frequencies(ladder):
    T = default_support(1.5)
    samples = density_samples(ladder, 0.0, T, H_LIST)
    assert len(samples) == 12
    assert all(sample.extrapolated for sample in samples)
    assert not any(sample.pole_flag for sample in samples)
    assert max(sample.t0 + sample.delta for sample in samples) <= 0.8 * T
    model = classify_signature([(sample.t0, sample.D, sample.delta) for sample in samples], T=T)
    assert model.r == 0
    assert not model.ambiguous
    assert model.resolved
    assert (model.alpha1, model.alpha2) == pytest.approx((0.5, 0.75), rel=2e-2)
    assert model.alpha2 / model.alpha1 == pytest.approx(1.5, rel=5e-2)


def test_density_samples_stay_clear_of_the_first_period(ladder, caplog):
    T = default_support(1.5)
    with caplog.at_level(logging.WARNING, logger="specgenus"):
        samples = density_samples(ladder, 0.0, T, H_LIST, t0_grid=T * np.linspace(0.15, 0.9, 12))
    assert len(samples) == 10
    assert all(sample.t0 + sample.delta <= 0.8 * T for sample in samples)
    assert "Dropped 2 test functions" in caplog.text
    with pytest.raises(FitError):
        density_samples(ladder, 0.0, T, H_LIST, t0_grid=T * np.array([0.85, 0.9]))


def test_density_samples_need_two_test_functions(ladder):
    with pytest.raises(FitError):
        density_samples(ladder, 0.0, 2.0, H_LIST, t0_grid=[1.0])


def test_point_density_samples_are_reproducible():
    first = point_density_samples(1, (0.7, 1.3), np.linspace(0.2, 2.0, 10), noise=0.05, seed=3)
    second = point_density_samples(1, (0.7, 1.3), np.linspace(0.2, 2.0, 10), noise=0.05, seed=3)
    assert first == second
    assert len(first) == 10


def test_random_point_cases():
    cases = random_point_cases(30, seed=11)
    assert len(cases) == 30
    assert {r for r, _, _ in cases} <= {0, 1, 2}
    for _, omegas, samples in cases:
        assert all(0.5 <= omega <= 3.0 for omega in omegas)
        assert len(samples) == 20
