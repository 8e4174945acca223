import numpy as np
import pytest
from scipy import integrate

from specgenus.classify import (
    ELLIPTIC,
    HYPERBOLIC,
    DensityModel,
    classify_circle,
    classify_signature,
    point_density,
    read_density_csv,
    split_residual,
    write_density_csv,
)
from specgenus.errors import FitError
from specgenus.synthetic import circle_density_samples, point_density_samples, random_point_cases
from specgenus.trace import BUMP_INTEGRAL, bump

T_GRID = np.linspace(0.2, 2.0, 12)


def test_point_density_models():
    t = np.array([0.5, 1.0])
    assert point_density(t, 0, (1.0, 2.0)) == pytest.approx(1.0 / np.abs(np.sin(t) * np.sin(2.0 * t)))
    assert point_density(t, 1, (1.0, 2.0), 3.0) == pytest.approx(3.0 / np.abs(np.sinh(t) * np.sin(2.0 * t)))
    assert point_density(t, 2, (1.0, 2.0)) == pytest.approx(1.0 / np.abs(np.sinh(t) * np.sinh(2.0 * t)))


@pytest.mark.parametrize("r", [0, 1, 2])
def test_noise_free_signatures_are_recovered(r):
    samples = point_density_samples(r, (0.7, 1.3), T_GRID, amplitude=2.0)
    model = classify_signature(samples)
    assert model.r == r
    assert not model.ambiguous
    assert (model.alpha1, model.alpha2) == pytest.approx((0.7, 1.3), rel=1e-2)
    assert model.amplitude == pytest.approx(2.0, rel=5e-2)
    assert model.runner_up != r


def test_kinds_follow_the_frequency_order():
    # the hyperbolic frequency is the larger one here
    samples = point_density_samples(1, (1.3, 0.7), T_GRID)
    model = classify_signature(samples)
    assert model.r == 1
    assert model.kinds == (ELLIPTIC, HYPERBOLIC)
    assert (model.alpha1, model.alpha2) == pytest.approx((0.7, 1.3), rel=1e-2)


def test_mild_noise_keeps_the_signature():
    samples = point_density_samples(0, (1.0, 1.4), T_GRID, noise=0.01, seed=5)
    model = classify_signature(samples)
    assert model.r == 0
    assert (model.alpha1, model.alpha2) == pytest.approx((1.0, 1.4), rel=5e-2)


@pytest.mark.parametrize("r", [0, 1, 2])
def test_signature_ignores_the_amplitude(r):
    base = classify_signature(point_density_samples(r, (0.7, 1.3), T_GRID))
    scaled = classify_signature(point_density_samples(r, (0.7, 1.3), T_GRID, amplitude=7.0))
    assert scaled.r == base.r == r
    assert (scaled.alpha1, scaled.alpha2) == pytest.approx((base.alpha1, base.alpha2), rel=1e-3)
    assert scaled.amplitude == pytest.approx(7.0 * base.amplitude, rel=1e-3)


@pytest.mark.parametrize("r", [0, 1, 2])
def test_stretching_time_divides_the_frequencies(r):
    stretched = classify_signature(point_density_samples(r, (0.7 / 1.5, 1.3 / 1.5), 1.5 * T_GRID))
    assert stretched.r == r
    assert (stretched.alpha1, stretched.alpha2) == pytest.approx((0.7 / 1.5, 1.3 / 1.5), rel=1e-2)


def test_large_residual_is_ambiguous():
    samples = point_density_samples(2, (0.7, 1.3), T_GRID)
    assert classify_signature(samples, max_log_residual=-1.0).ambiguous


def test_classify_signature_input_checks():
    with pytest.raises(FitError):
        classify_signature(point_density_samples(0, (1.0, 1.4), T_GRID[:7]))
    with pytest.raises(FitError):
        classify_signature([(t, -1.0) for t in T_GRID])
    with pytest.raises(FitError):
        classify_signature([(t, 1.0) for t in T_GRID], T=10.0)


@pytest.mark.parametrize("kind", ["elliptic-circle", "hyperbolic-circle"])
def test_circle_kind_is_recovered(kind):
    samples = circle_density_samples(kind, 0.9, T_GRID, amplitude=3.0)
    model = classify_circle(samples)
    assert model.kind == kind
    assert model.omega == pytest.approx(0.9, rel=1e-4)
    assert model.amplitude == pytest.approx(3.0, rel=1e-3)
    assert not model.ambiguous


def test_density_csv_round_trip(tmp_path):
    samples = point_density_samples(0, (1.0, 1.4), T_GRID)
    path = tmp_path / "density.csv"
    write_density_csv(samples, path)
    assert read_density_csv(path) == samples


def test_read_density_csv_errors(tmp_path):
    path = tmp_path / "density.csv"
    path.write_text("time,value\n0.1,1.0\n", encoding="utf-8")
    with pytest.raises(FitError):
        read_density_csv(path)
    path.write_text("t0,D\n0.1,abc\n", encoding="utf-8")
    with pytest.raises(FitError):
        read_density_csv(path)


@pytest.mark.slow
def test_randomized_point_cases():
    cases = random_point_cases(200, seed=2024)
    correct = sum(classify_signature(samples).r == r for r, _, samples in cases)
    assert correct / len(cases) >= 0.95


def bump_averaged_samples(r, omegas, t0_grid, delta):
    def integrand(t, t0):
        return float(bump((t - t0) / delta)) * float(point_density(t, r, omegas))

    samples = []
    for t0 in t0_grid:
        numerator, _ = integrate.quad(integrand, t0 - delta, t0 + delta, args=(t0,), epsabs=0.0, epsrel=1e-12)
        samples.append((float(t0), numerator / (delta * BUMP_INTEGRAL), delta))
    return samples


def test_bump_half_widths_are_averaged_over():
    samples = bump_averaged_samples(0, (0.5, 0.75), np.linspace(0.5, 2.5, 12), 0.15)
    model = classify_signature(samples)
    assert model.r == 0
    assert (model.alpha1, model.alpha2) == pytest.approx((0.5, 0.75), rel=1e-3)
    assert model.residual < 1e-4


def test_bump_half_width_must_stay_below_t0():
    samples = [(t, 1.0, 0.3) for t in T_GRID]
    with pytest.raises(FitError):
        classify_signature(samples)


def test_equal_frequencies_are_resolved():
    samples = point_density_samples(0, (0.8, 0.8), T_GRID)
    model = classify_signature(samples)
    assert model.r == 0
    assert (model.alpha1, model.alpha2) == pytest.approx((0.8, 0.8), rel=1e-2)
    assert model.resolved
    assert split_residual(samples, model) > 1e-4


def test_short_range_cannot_split_equal_frequencies():
    samples = point_density_samples(0, (0.8, 0.8), np.linspace(0.05, 0.3, 12))
    model = DensityModel(0, 0.8, 0.8, (ELLIPTIC, ELLIPTIC), 1.0, 0.0, 1.0, False, 2)
    assert model.resolved
    assert split_residual(samples, model) < 1e-5
    with pytest.raises(FitError):
        split_residual(samples, model._replace(r=1))


def test_density_csv_keeps_half_widths(tmp_path):
    samples = [(t, 1.0 + t, 0.05) for t in T_GRID]
    path = tmp_path / "density.csv"
    write_density_csv(samples, path)
    assert read_density_csv(path) == samples
