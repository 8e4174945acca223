"""Closed orientable surfaces embedded in R^3 and their height functions.

A surface always carries a validated triangle mesh. Built-in families also
carry a parametric atlas, which the Morse oracle prefers over the mesh.
"""

from __future__ import annotations

import logging
import math
from functools import cached_property

import numpy as np
from scipy import optimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import (
    DegenerateTriangleError,
    HeightFunctionError,
    MeshParseError,
    NonManifoldError,
    OpenSurfaceError,
    OrientationError,
    RotationError,
    SurfaceParameterError,
)

logger = logging.getLogger(__name__)

FAMILIES = ("round_sphere", "dented_sphere", "torus", "holed_slab")
DEDUP_TOLERANCE = 1e-9
AREA_TOLERANCE = 1e-12
ORTHOGONALITY_TOLERANCE = 1e-10
MIN_ICOSPHERE_LEVEL = 1
MAX_ICOSPHERE_LEVEL = 7
MIN_TORUS_RESOLUTION = 8
SPHERE_CHART_MARGIN = 0.15

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

ICOSAHEDRON_VERTICES = np.array(
    [
        [-1.0, _GOLDEN, 0.0],
        [1.0, _GOLDEN, 0.0],
        [-1.0, -_GOLDEN, 0.0],
        [1.0, -_GOLDEN, 0.0],
        [0.0, -1.0, _GOLDEN],
        [0.0, 1.0, _GOLDEN],
        [0.0, -1.0, -_GOLDEN],
        [0.0, 1.0, -_GOLDEN],
        [_GOLDEN, 0.0, -1.0],
        [_GOLDEN, 0.0, 1.0],
        [-_GOLDEN, 0.0, -1.0],
        [-_GOLDEN, 0.0, 1.0],
    ]
)

ICOSAHEDRON_FACES = np.array(
    [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [5, 4, 9],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ]
)

# Maps the z axis onto the x axis; exact entries keep the x-axis torus symmetric.
QUARTER_TURN_Y = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])


class Chart:
    """Smooth map from a rectangle of (u, v) into R^3."""

    def __init__(self, name, func, u_range, v_range, periodic=(False, False), jacobian=None):
        self.name = name
        self._func = func
        self._jacobian = jacobian
        self.u_range = (float(u_range[0]), float(u_range[1]))
        self.v_range = (float(v_range[0]), float(v_range[1]))
        self.periodic = tuple(bool(flag) for flag in periodic)

    def __repr__(self):
        return f"Chart({self.name!r}, u={self.u_range}, v={self.v_range}, periodic={self.periodic})"

    def __call__(self, u, v):
        return self._func(np.asarray(u, dtype=float), np.asarray(v, dtype=float))

    def jacobian(self, u, v, step=1e-6):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self._jacobian is not None:
            return self._jacobian(u, v)
        d_u = (self(u + step, v) - self(u - step, v)) / (2.0 * step)
        d_v = (self(u, v + step) - self(u, v - step)) / (2.0 * step)
        return np.stack([d_u, d_v], axis=-1)

    def first_fundamental_form(self, u, v):
        J = self.jacobian(u, v)
        return np.einsum("...ki,...kj->...ij", J, J)

    @property
    def bounds(self):
        return (self.u_range, self.v_range)

    def contains(self, u, v):
        inside = np.ones(np.broadcast(u, v).shape, dtype=bool)
        for coordinate, (lower, upper), periodic in zip((u, v), self.bounds, self.periodic):
            if not periodic:
                inside &= (coordinate >= lower) & (coordinate <= upper)
        return inside

    def wrap(self, u, v):
        wrapped = []
        for coordinate, (lower, upper), periodic in zip((u, v), self.bounds, self.periodic):
            if periodic:
                coordinate = lower + np.mod(coordinate - lower, upper - lower)
            wrapped.append(coordinate)
        return tuple(wrapped)

    def transformed(self, rotation):
        func = self._func
        jacobian = self._jacobian

        def rotated(u, v):
            return func(u, v) @ rotation.T

        rotated_jacobian = None
        if jacobian is not None:

            def rotated_jacobian(u, v):
                return np.einsum("ij,...jk->...ik", rotation, jacobian(u, v))

        return Chart(self.name, rotated, self.u_range, self.v_range, self.periodic, rotated_jacobian)


class EmbeddedSurface:
    def __init__(self, vertices, faces, charts=None, name="mesh", conformal_factor=None, params=None):
        self.vertices = np.array(vertices, dtype=float)
        self.faces = np.array(faces, dtype=np.int64)
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self.charts = tuple(charts or ())
        self.name = name
        self.conformal_factor = conformal_factor
        self.params = dict(params or {})

    def __repr__(self):
        return (
            f"EmbeddedSurface({self.name!r}, vertices={self.n_vertices}, "
            f"faces={len(self.faces)}, representation={self.representation!r})"
        )

    @classmethod
    def from_mesh(cls, vertices, faces, name="mesh"):
        vertices, faces = validate_mesh(vertices, faces)
        return cls(vertices, faces, name=name)

    @property
    def representation(self):
        return "parametric" if self.charts else "mesh"

    @property
    def n_vertices(self):
        return len(self.vertices)

    @cached_property
    def edges(self):
        directed = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        return np.unique(np.sort(directed, axis=1), axis=0)

    @cached_property
    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    @cached_property
    def face_normals(self):
        corners = self.vertices[self.faces]
        return np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])

    @cached_property
    def triangle_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals, axis=1)

    @cached_property
    def vertex_normals(self):
        normals = np.zeros_like(self.vertices)
        for corner in range(3):
            np.add.at(normals, self.faces[:, corner], self.face_normals)
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        return normals / np.where(lengths > 0.0, lengths, 1.0)

    @cached_property
    def rings(self):
        return ordered_rings(self.faces, self.n_vertices)

    def conformal_at(self, points):
        points = np.asarray(points, dtype=float)
        if self.conformal_factor is None:
            return np.ones(points.shape[:-1])
        values = np.asarray(self.conformal_factor(points), dtype=float)
        if np.any(values <= 0.0):
            raise SurfaceParameterError("conformal factor must be positive on the surface")
        return values

    @cached_property
    def conformal_values(self):
        return self.conformal_at(self.vertices)

    def with_conformal_factor(self, factor):
        surface = EmbeddedSurface(self.vertices, self.faces, self.charts, self.name, factor, self.params)
        surface.conformal_at(surface.vertices)
        return surface

    def extent(self, direction):
        """Minimum and maximum of <direction, x> over the surface."""
        direction = np.asarray(direction, dtype=float)
        projections = self.vertices @ direction
        lower, upper = float(projections.min()), float(projections.max())
        for chart in self.charts:
            chart_lower, chart_upper = _chart_extent(chart, direction)
            lower = min(lower, chart_lower)
            upper = max(upper, chart_upper)
        return lower, upper


def _chart_extent(chart, direction, samples=128):
    (u0, u1), (v0, v1) = chart.bounds
    grid_u, grid_v = np.meshgrid(np.linspace(u0, u1, samples), np.linspace(v0, v1, samples), indexing="ij")
    values = chart(grid_u, grid_v) @ direction
    results = []
    for sign in (1.0, -1.0):
        best = np.unravel_index(np.argmin(sign * values), values.shape)
        start = np.array([grid_u[best], grid_v[best]])

        def objective(point, sign=sign):
            return sign * float(chart(point[0], point[1]) @ direction)

        refined = optimize.minimize(objective, start, method="L-BFGS-B", bounds=chart.bounds)
        results.append(sign * min(refined.fun, objective(start)))
    return results[0], results[1]


class HeightFunction:
    """Potential V(x) = <direction, x> + offset."""

    def __init__(self, direction, offset, value_range=None):
        direction = np.asarray(direction, dtype=float)
        if direction.shape != (3,):
            raise HeightFunctionError("direction must be a 3-vector")
        norm = float(np.linalg.norm(direction))
        if not np.isfinite(norm) or norm < 1e-14:
            raise HeightFunctionError("direction must be a nonzero vector")
        self.direction = direction / norm
        self.offset = float(offset)
        self.value_range = value_range

    def __repr__(self):
        return f"HeightFunction(direction={self.direction.tolist()}, offset={self.offset!r})"

    def __call__(self, points):
        return np.asarray(points, dtype=float) @ self.direction + self.offset


def make_height(surface, direction, margin=0.1):
    if margin <= 0.0:
        raise HeightFunctionError(f"margin must be positive, got {margin}")
    height = HeightFunction(direction, 0.0)
    lower, upper = surface.extent(height.direction)
    offset = -lower + margin
    return HeightFunction(height.direction, offset, value_range=(lower + offset, upper + offset))


def check_rotation(rotation):
    rotation = np.asarray(rotation, dtype=float)
    if rotation.shape != (3, 3):
        raise RotationError("rotation must be a 3x3 matrix")
    deviation = np.abs(rotation.T @ rotation - np.eye(3)).max()
    if deviation > ORTHOGONALITY_TOLERANCE:
        raise RotationError(f"matrix is not orthogonal (deviation {deviation:.3g})")
    if np.linalg.det(rotation) < 0.0:
        raise RotationError("matrix is a reflection (det = -1)")
    return rotation


def rotate(surface, rotation):
    rotation = check_rotation(rotation)
    factor = surface.conformal_factor
    rotated_factor = None
    if factor is not None:

        def rotated_factor(points):
            return factor(np.asarray(points) @ rotation)

    return EmbeddedSurface(
        surface.vertices @ rotation.T,
        surface.faces,
        [chart.transformed(rotation) for chart in surface.charts],
        surface.name,
        rotated_factor,
        surface.params,
    )


def rotation_about_y(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def induced_metric(surface, chart=None, uv=None, triangle=None):
    """First fundamental form of a chart point, or edge Gram matrix of a triangle."""
    if triangle is not None:
        corners = surface.vertices[surface.faces[triangle]]
        first, second = corners[1] - corners[0], corners[2] - corners[0]
        gram = np.array([[first @ first, first @ second], [first @ second, second @ second]])
        area = 0.5 * math.sqrt(max(np.linalg.det(gram), 0.0))
        if area <= AREA_TOLERANCE * surface.bbox_diagonal**2:
            raise DegenerateTriangleError(f"triangle {triangle} has zero area", triangle=int(triangle))
        return gram * float(surface.conformal_at(corners).mean())
    if chart is None or uv is None:
        raise SurfaceParameterError("either a triangle or a chart point is required")
    if isinstance(chart, int):
        chart = surface.charts[chart]
    u, v = uv
    return chart.first_fundamental_form(u, v) * surface.conformal_at(chart(u, v))


def euler_characteristic_mesh(surface):
    return surface.n_vertices - len(surface.edges) + len(surface.faces)


def merge_duplicate_vertices(vertices, faces, tolerance=DEDUP_TOLERANCE):
    diagonal = float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0)))
    pairs = cKDTree(vertices).query_pairs(tolerance * diagonal, output_type="ndarray")
    if len(pairs) == 0:
        return vertices, faces
    n = len(vertices)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    _, first = np.unique(labels, return_index=True)
    logger.info("Merged %d duplicate vertices", n - len(first))
    return vertices[first], labels[faces]


def validate_mesh(vertices, faces, dedup=True):
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces)
    if vertices.ndim != 2 or vertices.shape[1] != 3 or len(vertices) < 4:
        raise MeshParseError("expected at least 4 vertices with 3 coordinates each")
    if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) < 4:
        raise MeshParseError("expected at least 4 triangular faces")
    if not np.all(np.isfinite(vertices)):
        raise MeshParseError("vertex coordinates must be finite")
    faces = faces.astype(np.int64)
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise MeshParseError("face index out of range")
    if dedup:
        vertices, faces = merge_duplicate_vertices(vertices, faces)

    used = np.unique(faces)
    if len(used) < len(vertices):
        logger.warning("Dropping %d vertices not referenced by any face", len(vertices) - len(used))
        remap = np.full(len(vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        vertices, faces = vertices[used], remap[faces]

    repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 2] == faces[:, 0])
    if repeated.any():
        index = int(np.flatnonzero(repeated)[0])
        raise DegenerateTriangleError(f"triangle {index} repeats a vertex", triangle=index)
    corners = vertices[faces]
    areas = 0.5 * np.linalg.norm(np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]), axis=1)
    diagonal = float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0)))
    degenerate = areas <= AREA_TOLERANCE * diagonal**2
    if degenerate.any():
        index = int(np.flatnonzero(degenerate)[0])
        raise DegenerateTriangleError(f"triangle {index} has zero area", triangle=index)

    _check_edges(faces)
    ordered_rings(faces, len(vertices))
    return vertices, faces


def _check_edges(faces):
    directed = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    edges, counts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
    if np.any(counts == 1):
        boundary = edges[counts == 1]
        raise OpenSurfaceError(
            f"open surface: {len(boundary)} boundary edges, first {tuple(boundary[0].tolist())}",
            boundary_edges=int(len(boundary)),
        )
    if np.any(counts > 2):
        shared = edges[counts > 2]
        raise NonManifoldError(
            f"{len(shared)} edges are shared by more than two triangles, first {tuple(shared[0].tolist())}",
            non_manifold_edges=int(len(shared)),
        )
    directed_edges, directed_counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(directed_counts > 1):
        clash = directed_edges[directed_counts > 1][0]
        raise OrientationError(
            f"inconsistent orientation: edge {tuple(clash.tolist())} is traversed twice in the same direction"
        )


def ordered_rings(faces, n_vertices):
    """Neighbours of every vertex in counter-clockwise order around the outward normal."""
    faces = np.asarray(faces, dtype=np.int64)
    centers = faces.ravel()
    sources = np.roll(faces, -1, axis=1).ravel()
    targets = np.roll(faces, -2, axis=1).ravel()
    order = np.argsort(centers, kind="stable")
    centers, sources, targets = centers[order], sources[order], targets[order]
    bounds = np.searchsorted(centers, np.arange(n_vertices + 1))

    rings = []
    for vertex in range(n_vertices):
        lower, upper = bounds[vertex], bounds[vertex + 1]
        successor = dict(zip(sources[lower:upper].tolist(), targets[lower:upper].tolist()))
        if not successor:
            rings.append(np.empty(0, dtype=np.int64))
            continue
        start = int(sources[lower])
        ring = [start]
        current = successor.get(start)
        while current is not None and current != start and len(ring) <= upper - lower:
            ring.append(current)
            current = successor.get(current)
        if current is None:
            raise OpenSurfaceError(f"open surface: link of vertex {vertex} is not closed", vertex=vertex)
        if len(ring) != upper - lower:
            raise NonManifoldError(f"link of vertex {vertex} is not a single cycle", vertex=vertex)
        rings.append(np.array(ring, dtype=np.int64))
    return rings


def _orient_outward(vertices, faces):
    corners = vertices[faces]
    volume = np.einsum("ij,ij->i", corners[:, 0], np.cross(corners[:, 1], corners[:, 2])).sum()
    if volume < 0.0:
        return faces[:, [0, 2, 1]]
    return faces


def icosphere(level):
    vertices = ICOSAHEDRON_VERTICES / np.linalg.norm(ICOSAHEDRON_VERTICES, axis=1, keepdims=True)
    faces = ICOSAHEDRON_FACES.copy()
    for _ in range(level):
        vertices, faces = _subdivide(vertices, faces)
    return vertices, faces


def _subdivide(vertices, faces):
    edges = np.sort(faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    midpoints = vertices[unique[:, 0]] + vertices[unique[:, 1]]
    midpoints /= np.linalg.norm(midpoints, axis=1, keepdims=True)
    middle = inverse.reshape(-1, 3) + len(vertices)
    a, b, c = faces.T
    ab, bc, ca = middle.T
    refined = np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ]
    )
    return np.vstack([vertices, midpoints]), refined


def periodic_grid_faces(n_u, n_v):
    i, j = np.meshgrid(np.arange(n_u), np.arange(n_v), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a = i * n_v + j
    b = ((i + 1) % n_u) * n_v + j
    c = ((i + 1) % n_u) * n_v + (j + 1) % n_v
    d = i * n_v + (j + 1) % n_v
    return np.concatenate([np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)])


def clifford_torus_grid(n):
    """Flat torus with unit circumferences embedded in R^4, for calibration."""
    angles = 2.0 * np.pi * np.arange(n) / n
    u, v = np.meshgrid(angles, angles, indexing="ij")
    u, v = u.ravel(), v.ravel()
    vertices = np.stack([np.cos(u), np.sin(u), np.cos(v), np.sin(v)], axis=1) / (2.0 * np.pi)
    return vertices, periodic_grid_faces(n, n)


def _unit_directions(theta, phi, pole, first, second):
    theta = np.asarray(theta)[..., None]
    phi = np.asarray(phi)[..., None]
    return np.cos(theta) * pole + np.sin(theta) * (np.cos(phi) * first + np.sin(phi) * second)


def _sphere_atlas(radius, radial=None):
    axes = np.eye(3)
    frames = (("pole-x", axes[0], axes[1], axes[2]), ("pole-y", axes[1], axes[2], axes[0]))
    charts = []
    for name, pole, first, second in frames:
        if radial is None:

            def func(theta, phi, pole=pole, first=first, second=second):
                return radius * _unit_directions(theta, phi, pole, first, second)

            def jacobian(theta, phi, pole=pole, first=first, second=second):
                t = np.asarray(theta)[..., None]
                p = np.asarray(phi)[..., None]
                around = np.cos(p) * first + np.sin(p) * second
                d_theta = radius * (-np.sin(t) * pole + np.cos(t) * around)
                d_phi = radius * np.sin(t) * (-np.sin(p) * first + np.cos(p) * second)
                return np.stack([d_theta, d_phi], axis=-1)

        else:
            jacobian = None

            def func(theta, phi, pole=pole, first=first, second=second):
                directions = _unit_directions(theta, phi, pole, first, second)
                return radial(directions)[..., None] * directions

        charts.append(
            Chart(
                name,
                func,
                (SPHERE_CHART_MARGIN, math.pi - SPHERE_CHART_MARGIN),
                (0.0, 2.0 * math.pi),
                periodic=(False, True),
                jacobian=jacobian,
            )
        )
    return charts


def _dent_profile(radius, depth, width, tilt):
    center = np.array([math.sin(tilt), 0.0, math.cos(tilt)])

    def radial(directions):
        directions = np.asarray(directions, dtype=float)
        cosine = directions @ center
        sine = np.linalg.norm(np.cross(directions, center), axis=-1)
        angle = np.arctan2(sine, cosine)
        return radius * (1.0 - depth * np.exp(-(angle**2) / width**2))

    return radial


def _torus_chart(major, minor):
    def func(u, v):
        ring = major + minor * np.cos(v)
        return np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v) + 0.0 * u], axis=-1)

    def jacobian(u, v):
        u, v = np.broadcast_arrays(u, v)
        ring = major + minor * np.cos(v)
        d_u = np.stack([-ring * np.sin(u), ring * np.cos(u), np.zeros_like(u)], axis=-1)
        d_v = np.stack([-minor * np.sin(v) * np.cos(u), -minor * np.sin(v) * np.sin(u), minor * np.cos(v)], axis=-1)
        return np.stack([d_u, d_v], axis=-1)

    return Chart("torus", func, (0.0, 2.0 * math.pi), (0.0, 2.0 * math.pi), periodic=(True, True), jacobian=jacobian)


def _check_level(resolution, default):
    level = default if resolution is None else int(resolution)
    if level < MIN_ICOSPHERE_LEVEL:
        raise SurfaceParameterError(f"resolution {level} is below the minimum {MIN_ICOSPHERE_LEVEL}")
    if level > MAX_ICOSPHERE_LEVEL:
        raise SurfaceParameterError(f"resolution {level} is above the maximum {MAX_ICOSPHERE_LEVEL}")
    return level


def _require_positive(**values):
    for name, value in values.items():
        if not value > 0.0:
            raise SurfaceParameterError(f"{name} must be positive, got {value}", parameter=name)


def round_sphere(radius=1.0, resolution=None):
    _require_positive(radius=radius)
    level = _check_level(resolution, 4)
    vertices, faces = icosphere(level)
    return EmbeddedSurface(
        radius * vertices,
        _orient_outward(vertices, faces),
        _sphere_atlas(radius),
        "round_sphere",
        params={"radius": radius, "resolution": level},
    )


def dented_sphere(radius=1.0, depth=0.4, width=0.5, tilt=0.3, resolution=None):
    _require_positive(radius=radius, depth=depth, width=width)
    if depth >= 1.0:
        raise SurfaceParameterError(f"depth must be below 1, got {depth}", parameter="depth")
    level = _check_level(resolution, 4)
    radial = _dent_profile(radius, depth, width, tilt)
    directions, faces = icosphere(level)
    return EmbeddedSurface(
        radial(directions)[:, None] * directions,
        _orient_outward(directions, faces),
        _sphere_atlas(radius, radial),
        "dented_sphere",
        params={"radius": radius, "depth": depth, "width": width, "tilt": tilt, "resolution": level},
    )


def torus(R=2.0, r=0.5, axis="x", resolution=None):
    _require_positive(R=R, r=r)
    if r >= R:
        raise SurfaceParameterError(f"minor radius {r} must be smaller than major radius {R}", parameter="r")
    if axis not in ("x", "z"):
        raise SurfaceParameterError(f"axis must be 'x' or 'z', got {axis!r}", parameter="axis")
    minor_count = MIN_TORUS_RESOLUTION * 2 if resolution is None else int(resolution)
    if minor_count < MIN_TORUS_RESOLUTION:
        raise SurfaceParameterError(f"resolution {minor_count} is below the minimum {MIN_TORUS_RESOLUTION}")
    # multiples of 4 put the extrema of both axes on grid vertices
    n_v = 4 * math.ceil(minor_count / 4)
    n_u = 4 * math.ceil(minor_count * R / r / 4)
    chart = _torus_chart(R, r)
    u = 2.0 * np.pi * np.arange(n_u) / n_u
    v = 2.0 * np.pi * np.arange(n_v) / n_v
    grid_u, grid_v = np.meshgrid(u, v, indexing="ij")
    vertices = chart(grid_u.ravel(), grid_v.ravel())
    faces = _orient_outward(vertices, periodic_grid_faces(n_u, n_v))
    params = {"R": R, "r": r, "axis": axis, "resolution": n_v}
    surface = EmbeddedSurface(vertices, faces, [chart], "torus", params=params)
    if axis == "x":
        surface = rotate(surface, QUARTER_TURN_Y)
    return surface


_CUBE_FACES = (
    ((-1, 0, 0), ((0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0))),
    ((1, 0, 0), ((1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1))),
    ((0, -1, 0), ((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1))),
    ((0, 1, 0), ((0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0))),
    ((0, 0, -1), ((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0))),
    ((0, 0, 1), ((0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1))),
)


def holed_slab(holes=2, resolution=None):
    """Boundary of a voxel slab with ``holes`` through-holes: a polyhedral genus-``holes`` surface."""
    holes = int(holes)
    if holes < 0:
        raise SurfaceParameterError(f"holes must be non-negative, got {holes}", parameter="holes")
    subdivisions = 1 if resolution is None else int(resolution)
    if subdivisions < 1:
        raise SurfaceParameterError(f"resolution {subdivisions} is below the minimum 1")

    cells = {(i, j, 0) for i in range(2 * holes + 1) for j in range(3)}
    cells -= {(2 * k + 1, 1, 0) for k in range(holes)}
    index = {}
    faces = []

    def vertex(key):
        if key not in index:
            index[key] = len(index)
        return index[key]

    for cell in sorted(cells):
        for normal, quad in _CUBE_FACES:
            if tuple(c + n for c, n in zip(cell, normal)) in cells:
                continue
            corners = [np.add(cell, corner) * subdivisions for corner in quad]
            step_a = (corners[1] - corners[0]) // subdivisions
            step_b = (corners[3] - corners[0]) // subdivisions
            for a in range(subdivisions):
                for b in range(subdivisions):
                    base = corners[0] + a * step_a + b * step_b
                    quad_keys = [
                        tuple(base.tolist()),
                        tuple((base + step_a).tolist()),
                        tuple((base + step_a + step_b).tolist()),
                        tuple((base + step_b).tolist()),
                    ]
                    ids = [vertex(key) for key in quad_keys]
                    faces.append((ids[0], ids[1], ids[2]))
                    faces.append((ids[0], ids[2], ids[3]))

    vertices = np.array(sorted(index, key=index.get), dtype=float) / subdivisions
    return EmbeddedSurface(
        vertices,
        _orient_outward(vertices, np.array(faces, dtype=np.int64)),
        name="holed_slab",
        params={"holes": holes, "resolution": subdivisions},
    )


_BUILDERS = {
    "round_sphere": round_sphere,
    "dented_sphere": dented_sphere,
    "torus": torus,
    "holed_slab": holed_slab,
}


def make_builtin(family, resolution=None, **params):
    try:
        builder = _BUILDERS[family]
    except KeyError:
        raise SurfaceParameterError(
            f"unknown family {family!r}, expected one of {', '.join(FAMILIES)}", parameter="family"
        ) from None
    try:
        surface = builder(resolution=resolution, **params)
    except TypeError as error:
        raise SurfaceParameterError(f"invalid parameters for {family}: {error}") from error
    validate_mesh(surface.vertices, surface.faces, dedup=False)
    logger.debug("Built %r", surface)
    return surface
