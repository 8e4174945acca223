import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import sparse

from specgenus.errors import DegenerateTriangleError, OperatorError
from specgenus.operator import (
    DiscretePencil,
    DiscreteSchrodinger,
    assemble_laplace,
    assemble_schrodinger,
    cotangent_pencil,
    write_triplets,
)
from specgenus.surface import clifford_torus_grid, make_height, round_sphere


@pytest.fixture
def sphere_pencil():
    return assemble_laplace(round_sphere(resolution=2))


def test_stiffness_is_symmetric_with_constants_in_kernel(sphere_pencil):
    stiffness = sphere_pencil.stiffness
    assert sphere_pencil.symmetry_error() < 1e-12
    assert_allclose(stiffness @ np.ones(sphere_pencil.N), 0.0, atol=1e-10)
    assert np.linalg.eigvalsh(stiffness.toarray()).min() > -1e-10


def test_lumped_mass_sums_to_area(sphere_pencil):
    # inscribed polyhedron, slightly below 4 pi
    assert 0.95 * 4.0 * math.pi < sphere_pencil.area < 4.0 * math.pi
    assert np.all(sphere_pencil.mass > 0.0)


def test_flat_torus_in_r4_matches_the_grid_laplacian():
    n = 8
    vertices, faces = clifford_torus_grid(n)
    stiffness, mass, _ = cotangent_pencil(vertices, faces)
    pencil = DiscretePencil(stiffness, mass)
    chord = math.sin(math.pi / n) / math.pi
    assert pencil.area == pytest.approx((n * chord) ** 2)
    assert_allclose(mass, chord**2)
    eigenvalues = np.linalg.eigvalsh(pencil.normalized_stiffness.toarray())
    expected = sorted(
        4.0 * (math.sin(math.pi * k / n) ** 2 + math.sin(math.pi * l / n) ** 2) / chord**2
        for k in range(n)
        for l in range(n)
    )
    assert_allclose(eigenvalues, expected, atol=1e-8)


def test_sphere_laplacian_has_the_spherical_harmonic_spectrum():
    pencil = assemble_laplace(round_sphere(resolution=3))
    values = np.linalg.eigvalsh(pencil.normalized_stiffness.toarray())[:16]
    assert values[0] == pytest.approx(0.0, abs=1e-8)
    assert_allclose(values[1:4], 2.0, rtol=0.03)
    assert_allclose(values[4:9], 6.0, rtol=0.03)
    assert_allclose(values[9:16], 12.0, rtol=0.05)


def test_zero_area_triangle_is_rejected():
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    faces = np.array([[0, 1, 2], [0, 1, 3]])
    with pytest.raises(DegenerateTriangleError):
        cotangent_pencil(vertices, faces)


def test_pencil_rejects_mismatched_parts():
    with pytest.raises(OperatorError):
        DiscretePencil(sparse.identity(3), np.ones(4))
    with pytest.raises(OperatorError):
        DiscretePencil(sparse.identity(3), np.array([1.0, 0.0, 1.0]))


def test_conformal_factor_scales_only_the_mass():
    surface = round_sphere(resolution=1)
    plain = assemble_laplace(surface)
    scaled = assemble_laplace(surface.with_conformal_factor(lambda points: np.full(len(points), 2.0)))
    assert_allclose(scaled.mass, 2.0 * plain.mass)
    assert abs(scaled.stiffness - plain.stiffness).max() == 0.0


def test_schrodinger_validation(sphere_pencil):
    with pytest.raises(OperatorError):
        DiscreteSchrodinger(sphere_pencil, np.zeros(sphere_pencil.N), 0.0)
    with pytest.raises(OperatorError):
        DiscreteSchrodinger(sphere_pencil, np.zeros(3), 0.1)
    with pytest.raises(OperatorError):
        assemble_schrodinger(sphere_pencil, lambda points: points[:, 2], 0.1)


def test_standard_form_shares_the_generalized_spectrum():
    surface = round_sphere(resolution=1)
    height = make_height(surface, [0.0, 0.0, 1.0])
    op = assemble_schrodinger(assemble_laplace(surface), height, 0.3, surface.vertices)
    dense = op.dense()
    assert_allclose(dense, dense.T, atol=1e-12)
    values, vectors = np.linalg.eigh(dense)
    for index in (0, 5, len(values) - 1):
        assert op.residual(values[index], vectors[:, index]) < 1e-10


def test_potential_shifts_the_spectrum(sphere_pencil):
    base = DiscreteSchrodinger(sphere_pencil, np.zeros(sphere_pencil.N), 0.2)
    lifted = DiscreteSchrodinger(sphere_pencil, np.full(sphere_pencil.N, 1.5), 0.2)
    assert_allclose(np.linalg.eigvalsh(lifted.dense()), np.linalg.eigvalsh(base.dense()) + 1.5, atol=1e-10)
    assert lifted.potential_range == (1.5, 1.5)


def test_with_h_rescales_the_kinetic_part(sphere_pencil):
    op = DiscreteSchrodinger(sphere_pencil, np.zeros(sphere_pencil.N), 0.1)
    doubled = op.with_h(0.2)
    assert_allclose(np.linalg.eigvalsh(doubled.dense()), 4.0 * np.linalg.eigvalsh(op.dense()), atol=1e-9)


def test_shifted_matrix(sphere_pencil):
    op = DiscreteSchrodinger(sphere_pencil, np.zeros(sphere_pencil.N), 0.1)
    shifted = op.shifted(0.5).toarray()
    assert_allclose(shifted, op.dense() - 0.5 * np.eye(op.N))


def test_write_triplets(tmp_path):
    path = tmp_path / "matrix.txt"
    write_triplets(sparse.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]])), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "% 2 2 4"
    assert lines[1:] == ["1 1 2.0", "1 2 -1.0", "2 1 -1.0", "2 2 2.0"]
