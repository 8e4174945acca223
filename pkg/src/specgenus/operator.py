"""Discrete Laplace-Beltrami pencils and semiclassical Schrodinger operators.

The stiffness uses cotangent weights and the mass is lumped (barycentric),
so the generalized problem H u = lambda M u becomes the standard symmetric
problem A = h^2 M^-1/2 S M^-1/2 + diag(V) exactly.
"""

from __future__ import annotations

import logging
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import DegenerateTriangleError, OperatorError

logger = logging.getLogger(__name__)

OBTUSE_WARNING_FRACTION = 0.05


def cotangent_pencil(vertices, faces):
    """Cotangent stiffness and lumped mass for a triangle mesh in any ambient dimension."""
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    n = len(vertices)

    rows, cols, weights = [], [], []
    double_areas = None
    obtuse = np.zeros(len(faces), dtype=bool)
    for corner in range(3):
        i = faces[:, corner]
        j = faces[:, (corner + 1) % 3]
        k = faces[:, (corner + 2) % 3]
        first = vertices[j] - vertices[i]
        second = vertices[k] - vertices[i]
        dot = np.einsum("ij,ij->i", first, second)
        # |a x b| without a cross product so that R^4 embeddings work too
        squared = np.einsum("ij,ij->i", first, first) * np.einsum("ij,ij->i", second, second)
        cross = np.sqrt(np.maximum(squared - dot**2, 0.0))
        if double_areas is None:
            double_areas = cross
        obtuse |= dot < 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            cotangent = dot / cross
        rows.append(j)
        cols.append(k)
        weights.append(0.5 * cotangent)

    if np.any(double_areas <= 0.0) or not np.all(np.isfinite(np.concatenate(weights))):
        index = int(np.flatnonzero(double_areas <= 0.0)[0]) if np.any(double_areas <= 0.0) else -1
        raise DegenerateTriangleError(f"triangle {index} has zero area", triangle=index)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    weights = np.concatenate(weights)
    stiffness = sparse.coo_matrix(
        (
            np.concatenate([-weights, -weights, weights, weights]),
            (np.concatenate([rows, cols, rows, cols]), np.concatenate([cols, rows, rows, cols])),
        ),
        shape=(n, n),
    ).tocsr()

    mass = np.zeros(n)
    for corner in range(3):
        np.add.at(mass, faces[:, corner], double_areas / 6.0)
    return stiffness, mass, float(obtuse.mean())


class DiscretePencil:
    """Stiffness S (discrete Laplace-Beltrami, positive semidefinite) with lumped mass m."""

    def __init__(self, stiffness, mass, obtuse_fraction=0.0):
        self.stiffness = sparse.csr_matrix(stiffness)
        self.mass = np.asarray(mass, dtype=float)
        self.obtuse_fraction = obtuse_fraction
        if self.stiffness.shape != (len(self.mass), len(self.mass)):
            raise OperatorError("stiffness and mass dimensions differ")
        if np.any(self.mass <= 0.0):
            raise OperatorError("lumped mass must be positive")

    def __repr__(self):
        return f"DiscretePencil(N={self.N}, area={self.area:.6g})"

    @property
    def N(self):
        return len(self.mass)

    @property
    def area(self):
        return float(self.mass.sum())

    @cached_property
    def inverse_sqrt_mass(self):
        return sparse.diags(1.0 / np.sqrt(self.mass))

    @cached_property
    def normalized_stiffness(self):
        """M^-1/2 S M^-1/2, symmetric with the same spectrum as the pencil (S, M)."""
        scaled = self.inverse_sqrt_mass @ self.stiffness @ self.inverse_sqrt_mass
        return sparse.csr_matrix(0.5 * (scaled + scaled.T))

    def symmetry_error(self):
        difference = abs(self.stiffness - self.stiffness.T).max()
        return float(difference / max(abs(self.stiffness).max(), np.finfo(float).tiny))


def assemble_laplace(surface):
    stiffness, mass, obtuse_fraction = cotangent_pencil(surface.vertices, surface.faces)
    if mass.sum() <= 0.0:
        raise OperatorError("surface has non-positive total area")
    if surface.conformal_factor is not None:
        # the cotangent stiffness is conformally invariant in two dimensions
        mass = mass * surface.conformal_values
    if obtuse_fraction > OBTUSE_WARNING_FRACTION:
        logger.warning(
            "%.1f%% of the triangles of %s are obtuse; cotangent weights may be negative",
            100.0 * obtuse_fraction,
            surface.name,
        )
    pencil = DiscretePencil(stiffness, mass, obtuse_fraction)
    logger.debug("Assembled %r for %r", pencil, surface)
    return pencil


class DiscreteSchrodinger:
    """h^2 S + diag(m V), handled through its standard symmetric form."""

    def __init__(self, pencil, potential, h):
        if not h > 0.0:
            raise OperatorError(f"h must be positive, got {h}")
        potential = np.asarray(potential, dtype=float)
        if potential.shape != (pencil.N,):
            raise OperatorError(f"potential has shape {potential.shape}, expected ({pencil.N},)")
        self.pencil = pencil
        self.potential = potential
        self.h = float(h)

    def __repr__(self):
        return f"DiscreteSchrodinger(N={self.N}, h={self.h!r})"

    @property
    def N(self):
        return self.pencil.N

    @property
    def potential_range(self):
        return float(self.potential.min()), float(self.potential.max())

    @cached_property
    def matrix(self):
        """H(h) = h^2 S + diag(m V), the left-hand side of the generalized problem."""
        return sparse.csr_matrix(self.h**2 * self.pencil.stiffness + sparse.diags(self.pencil.mass * self.potential))

    @cached_property
    def standard(self):
        return sparse.csr_matrix(self.h**2 * self.pencil.normalized_stiffness + sparse.diags(self.potential))

    def shifted(self, energy):
        return sparse.csc_matrix(self.standard - energy * sparse.identity(self.N, format="csr"))

    def dense(self):
        return self.standard.toarray()

    def with_potential(self, potential):
        return DiscreteSchrodinger(self.pencil, potential, self.h)

    def with_h(self, h):
        return DiscreteSchrodinger(self.pencil, self.potential, h)

    def residual(self, eigenvalue, vector):
        """Relative residual of H u = lambda M u for a standard-form eigenvector."""
        u = self.pencil.inverse_sqrt_mass @ vector
        residual = self.matrix @ u - eigenvalue * (self.pencil.mass * u)
        return float(np.linalg.norm(residual) / max(np.linalg.norm(self.pencil.mass * u), np.finfo(float).tiny))


def assemble_schrodinger(pencil, height, h, vertices=None):
    """Sample the height function at the vertices and attach it to the pencil.

    ``height`` is either a HeightFunction, which then needs ``vertices``, or a
    vector of potential values.
    """
    if callable(height):
        if vertices is None:
            raise OperatorError("vertex positions are required to sample a height function")
        potential = height(vertices)
    else:
        potential = np.asarray(height, dtype=float)
    return DiscreteSchrodinger(pencil, potential, h)


def write_triplets(matrix, path):
    """Dump a sparse matrix as 1-based ``row col value`` lines."""
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for row, col, value in zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()):
            fp.write(f"{row + 1} {col + 1} {value!r}\n")
