"""Classical oracle: critical points of the height function and the Morse counts.

Surfaces with a parametric atlas are searched by multistart Newton on each
chart.  Bare meshes are classified vertex by vertex from the sign pattern of
the height around the link, with ties broken by vertex number so that the
Euler characteristic comes out exactly.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import namedtuple

import numpy as np
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .common import trace
from .errors import InternalInconsistencyError, NotMorseError
from .surface import euler_characteristic_mesh

logger = logging.getLogger(__name__)

NEWTON_SEEDS = 64
NEWTON_STEPS = 60
GRADIENT_TOLERANCE = 1e-9
DEDUP_TOLERANCE = 1e-6
DEGENERACY_TOLERANCE = 1e-6
FLAT_TOLERANCE = 1e-9
CLUSTER_LINK = 4.0
MIN_SET_SIZE = 3
LEVEL_TOLERANCE = 1e-9
SEPARATION_TOLERANCE = 1e-4
PERTURBATION_ANGLE = 0.05
HESSIAN_STEP = 1e-5

ELLIPTIC = "elliptic"
HYPERBOLIC = "hyperbolic"


class Convexity(str, enum.Enum):
    CONSISTENT_WITH_CONVEX = "ConsistentWithConvex"
    NON_CONVEX_DETECTED = "NonConvexDetected"
    NOT_APPLICABLE = "NotApplicable"


CriticalPoint = namedtuple(
    "CriticalPoint",
    [
        "position",
        "value",
        "index",
        "signature",
        "frequencies",
        "location",
        "isolation",
        "degenerate",
        "multiplicity",
    ],
    defaults=(math.inf, False, 1),
)
CriticalSet = namedtuple("CriticalSet", ["kind", "value", "positions", "transverse_index", "euler"])
CriticalLocus = namedtuple("CriticalLocus", ["points", "sets", "route"])
LinearizedFlow = namedtuple("LinearizedFlow", ["inverse_metric", "hessian", "eigenvalues", "frequencies", "degenerate"])
Genericity = namedtuple("Genericity", ["generic", "reasons", "rotation"])


class MorseReport(
    namedtuple(
        "MorseReport",
        [
            "points",
            "sets",
            "counts",
            "chi",
            "genus",
            "is_morse",
            "is_perfect",
            "convexity",
            "diameter_bound",
            "route",
        ],
    )
):
    @property
    def critical_values(self):
        return sorted(point.value for point in self.points)

    def as_dict(self):
        return {
            "route": self.route,
            "counts": list(self.counts),
            "chi": self.chi,
            "genus": self.genus,
            "is_morse": self.is_morse,
            "is_perfect": self.is_perfect,
            "convexity": self.convexity.value,
            "diameter_bound": self.diameter_bound,
            "critical_points": [
                {
                    "value": point.value,
                    "index": point.index,
                    "signature": list(point.signature) if point.signature else None,
                    "multiplicity": point.multiplicity,
                    "degenerate": point.degenerate,
                    "position": list(point.position),
                    "location": point.location,
                    "frequencies": [{"alpha": alpha, "kind": kind} for alpha, kind in point.frequencies],
                }
                for point in sorted(self.points, key=lambda point: point.value)
            ],
            "critical_sets": [
                {
                    "kind": critical_set.kind,
                    "value": critical_set.value,
                    "size": len(critical_set.positions),
                    "transverse_index": critical_set.transverse_index,
                    "euler": critical_set.euler,
                }
                for critical_set in sorted(self.sets, key=lambda critical_set: critical_set.value)
            ],
        }


def linearized_frequencies(inverse_metric, hessian):
    """Frequencies sqrt|lambda(2 A H)|, elliptic where lambda > 0, ordered by size."""
    inverse_metric = np.asarray(inverse_metric, dtype=float)
    hessian = np.asarray(hessian, dtype=float)
    # 2 L^T H L is symmetric and similar to 2 A H for A = L L^T
    factor = linalg.cholesky(inverse_metric, lower=True)
    eigenvalues = linalg.eigvalsh(2.0 * factor.T @ hessian @ factor)
    magnitudes = np.abs(eigenvalues)
    degenerate = bool(magnitudes.min() < DEGENERACY_TOLERANCE * max(magnitudes.max(), np.finfo(float).tiny))
    frequencies = sorted(
        (float(math.sqrt(magnitude)), ELLIPTIC if value > 0.0 else HYPERBOLIC)
        for value, magnitude in zip(eigenvalues, magnitudes)
    )
    return LinearizedFlow(inverse_metric, hessian, eigenvalues, tuple(frequencies), degenerate)


def _gradient(chart, direction, u, v):
    return np.einsum("...ki,k->...i", chart.jacobian(u, v), direction)


def chart_hessian(chart, direction, u, v, step=HESSIAN_STEP):
    """Coordinate Hessian of <direction, chart(u, v)> by central differences of the gradient."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d_u = (_gradient(chart, direction, u + step, v) - _gradient(chart, direction, u - step, v)) / (2.0 * step)
    d_v = (_gradient(chart, direction, u, v + step) - _gradient(chart, direction, u, v - step)) / (2.0 * step)
    hessian = np.stack([d_u, d_v], axis=-1)
    return 0.5 * (hessian + np.swapaxes(hessian, -1, -2))


def _seed_grid(chart, count):
    axes = []
    for (lower, upper), periodic in zip(chart.bounds, chart.periodic):
        axes.append(np.linspace(lower, upper, count, endpoint=not periodic))
    grid_u, grid_v = np.meshgrid(*axes, indexing="ij")
    return grid_u.ravel(), grid_v.ravel()


def _newton(chart, direction, u, v, tolerance):
    (u_low, u_high), (v_low, v_high) = chart.bounds
    max_step = 0.25 * min(u_high - u_low, v_high - v_low)
    for _ in range(NEWTON_STEPS):
        gradient = _gradient(chart, direction, u, v)
        hessian = chart_hessian(chart, direction, u, v)
        step = -np.einsum("...ij,...j->...i", np.linalg.pinv(hessian, rcond=DEGENERACY_TOLERANCE), gradient)
        lengths = np.linalg.norm(step, axis=-1, keepdims=True)
        step *= np.minimum(1.0, max_step / np.maximum(lengths, np.finfo(float).tiny))
        u, v = chart.wrap(u + step[:, 0], v + step[:, 1])
        if not chart.periodic[0]:
            u = np.clip(u, u_low, u_high)
        if not chart.periodic[1]:
            v = np.clip(v, v_low, v_high)
    gradient = np.linalg.norm(_gradient(chart, direction, u, v), axis=-1)
    converged = (gradient <= tolerance) & chart.contains(u, v)
    return u[converged], v[converged]


def _components(count, pairs):
    pairs = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(count, count))
    return connected_components(graph, directed=False)[1]


def _classify_root(surface, height, chart, u, v):
    position = chart(u, v)
    hessian = chart_hessian(chart, height.direction, u, v)
    metric = chart.first_fundamental_form(u, v) * float(surface.conformal_at(position))
    shape = linalg.eigh(hessian, metric, eigvals_only=True)
    scale = np.abs(shape).max()
    flat = scale < FLAT_TOLERANCE / surface.bbox_diagonal
    degenerate = flat or np.abs(shape).min() < DEGENERACY_TOLERANCE * scale
    flow = None
    if not degenerate:
        flow = linearized_frequencies(linalg.inv(metric), hessian)
    return position, shape, flow, bool(degenerate), bool(flat)


def _parametric_locus(surface, height, seeds):
    scale = surface.bbox_diagonal
    roots = []
    for chart in surface.charts:
        u, v = _seed_grid(chart, seeds)
        u, v = _newton(chart, height.direction, u, v, GRADIENT_TOLERANCE * scale)
        trace(logger, "Chart %s: %d of %d seeds converged", chart.name, len(u), seeds * seeds)
        roots.extend((chart, float(a), float(b)) for a, b in zip(u, v))
    if not roots:
        raise InternalInconsistencyError("Newton iteration found no critical point on any chart")

    positions = np.array([chart(u, v) for chart, u, v in roots])
    labels = _components(len(roots), cKDTree(positions).query_pairs(DEDUP_TOLERANCE * scale))
    unique = [roots[int(np.flatnonzero(labels == label)[0])] for label in range(labels.max() + 1)]

    classified = [(_classify_root(surface, height, *root), root) for root in unique]
    points, degenerate_roots = [], []
    for (position, shape, flow, degenerate, flat), (chart, u, v) in classified:
        location = {"chart": chart.name, "uv": [u, v]}
        if degenerate:
            degenerate_roots.append((position, shape, flat, location))
            continue
        index = int(np.count_nonzero(shape < 0.0))
        hyperbolic = sum(1 for _, kind in flow.frequencies if kind == HYPERBOLIC)
        if hyperbolic != index:
            raise InternalInconsistencyError(
                f"critical point at {position.tolist()} has index {index} but {hyperbolic} hyperbolic frequencies"
            )
        points.append(
            CriticalPoint(
                tuple(position.tolist()),
                float(height(position)),
                index,
                (2 - index, index),
                flow.frequencies,
                location,
            )
        )

    sets = []
    if degenerate_roots:
        positions = np.array([root[0] for root in degenerate_roots])
        link = CLUSTER_LINK / seeds * scale
        labels = _components(len(positions), cKDTree(positions).query_pairs(link))
        for label in range(labels.max() + 1):
            members = [degenerate_roots[i] for i in np.flatnonzero(labels == label)]
            cluster = np.array([member[0] for member in members])
            value = float(np.mean(height(cluster)))
            if len(members) < MIN_SET_SIZE:
                for position, shape, _, location in members:
                    points.append(
                        CriticalPoint(
                            tuple(position.tolist()), float(height(position)), None, None, (), location, math.inf, True
                        )
                    )
                continue
            if all(member[2] for member in members):
                sets.append(CriticalSet("flat", value, cluster, None, None))
                continue
            dominant = np.mean([member[1][np.argmax(np.abs(member[1]))] for member in members])
            sets.append(CriticalSet("circle", value, cluster, 0 if dominant > 0.0 else 1, 0))
    return points, sets


def _link_sign_changes(rank, vertex, ring):
    higher = rank[ring] > rank[vertex]
    return int(np.count_nonzero(higher != np.roll(higher, -1))), bool(higher.all())


def mesh_hessian(surface, height, vertex):
    """Least-squares quadratic fit of the height over the 2-ring, in a tangent frame."""
    rings = surface.rings
    neighborhood = set(rings[vertex].tolist())
    for neighbor in list(neighborhood):
        neighborhood.update(rings[neighbor].tolist())
    neighborhood.discard(vertex)
    neighborhood = np.array(sorted(neighborhood))

    normal = surface.vertex_normals[vertex]
    first = np.array([1.0, 0.0, 0.0])
    if abs(float(first @ normal)) > 0.9:
        first = np.array([0.0, 1.0, 0.0])
    first = first - (first @ normal) * normal
    first /= np.linalg.norm(first)
    second = np.cross(normal, first)

    offsets = surface.vertices[neighborhood] - surface.vertices[vertex]
    x, y = offsets @ first, offsets @ second
    rise = height(surface.vertices[neighborhood]) - height(surface.vertices[vertex])
    design = np.column_stack([x, y, 0.5 * x * x, x * y, 0.5 * y * y])
    coefficients, *_ = np.linalg.lstsq(design, rise, rcond=None)
    _, _, a, b, c = coefficients
    return np.array([[a, b], [b, c]])


def _mesh_locus(surface, height):
    values = height(surface.vertices)
    n = surface.n_vertices
    rank = np.empty(n, dtype=np.int64)
    rank[np.lexsort((np.arange(n), values))] = np.arange(n)
    value_range = float(values.max() - values.min())

    changes = np.zeros(n, dtype=np.int64)
    critical = {}
    for vertex, ring in enumerate(surface.rings):
        count, all_higher = _link_sign_changes(rank, vertex, ring)
        changes[vertex] = count
        if count == 0:
            critical[vertex] = (0 if all_higher else 2, 1)
        elif count >= 4:
            critical[vertex] = (1, count // 2 - 1)

    edges = surface.edges
    level_tolerance = LEVEL_TOLERANCE * max(value_range, np.finfo(float).tiny)
    level = np.abs(values[edges[:, 0]] - values[edges[:, 1]]) <= level_tolerance
    labels = _components(n, edges[level])
    sets, in_sets = [], set()
    for label in np.unique(labels[sorted(critical)]) if critical else ():
        members = np.flatnonzero(labels == label)
        if len(members) < MIN_SET_SIZE:
            continue
        member_set = set(members.tolist())
        outside = sorted(
            {neighbor for vertex in members for neighbor in surface.rings[vertex].tolist()} - member_set
        )
        level_value = float(values[members].mean())
        above = int(np.count_nonzero(values[outside] > level_value))
        # a level run on a slope has neighbours on both sides and is not critical
        if 0 < above < len(outside):
            continue
        flat = any(all(corner in member_set for corner in face) for face in surface.faces.tolist())
        euler = int(sum(1 - changes[vertex] // 2 for vertex in members))
        transverse = None if flat else (0 if above else 1)
        sets.append(
            CriticalSet("flat" if flat else "circle", level_value, surface.vertices[members], transverse, euler)
        )
        in_sets.update(member_set)

    points = []
    for vertex, (index, multiplicity) in sorted(critical.items()):
        if vertex in in_sets:
            continue
        hessian = mesh_hessian(surface, height, vertex)
        conformal = float(surface.conformal_values[vertex])
        eigenvalues = np.linalg.eigvalsh(hessian)
        frequencies = ()
        if multiplicity == 1 and np.abs(eigenvalues).min() > DEGENERACY_TOLERANCE * np.abs(eigenvalues).max():
            flow = linearized_frequencies(np.eye(2) / conformal, hessian)
            frequencies = flow.frequencies
            fitted_index = int(np.count_nonzero(eigenvalues < 0.0))
            if fitted_index != index:
                logger.warning("Vertex %d: link says index %d, quadratic fit says %d", vertex, index, fitted_index)
        points.append(
            CriticalPoint(
                tuple(surface.vertices[vertex].tolist()),
                float(values[vertex]),
                index,
                (2 - index, index),
                frequencies,
                {"vertex": int(vertex)},
                math.inf,
                False,
                multiplicity,
            )
        )
    return points, sets


def _with_isolation(points):
    if len(points) < 2:
        return points
    positions = np.array([point.position for point in points])
    distances, _ = cKDTree(positions).query(positions, k=2)
    return [point._replace(isolation=float(distance)) for point, distance in zip(points, distances[:, 1])]


def find_critical_points(surface, height, seeds=NEWTON_SEEDS, route=None):
    """Critical points and degenerate critical sets of the height on the surface."""
    route = route or surface.representation
    if route == "parametric" and surface.charts:
        points, sets = _parametric_locus(surface, height, seeds)
    else:
        route = "mesh"
        points, sets = _mesh_locus(surface, height)
    points = _with_isolation(points)
    logger.debug("%s route: %d critical points, %d degenerate sets", route, len(points), len(sets))
    return CriticalLocus(points, sets, route)


def hessian_signature(surface, height, point):
    """(n - r, r) from the Hessian at a critical point found by ``find_critical_points``."""
    if "chart" in point.location:
        chart = next(chart for chart in surface.charts if chart.name == point.location["chart"])
        u, v = point.location["uv"]
        hessian = chart_hessian(chart, height.direction, u, v)
        metric = chart.first_fundamental_form(u, v)
        eigenvalues = linalg.eigh(hessian, metric, eigvals_only=True)
    else:
        eigenvalues = np.linalg.eigvalsh(mesh_hessian(surface, height, point.location["vertex"]))
    scale = np.abs(eigenvalues).max()
    if np.abs(eigenvalues).min() < DEGENERACY_TOLERANCE * scale:
        raise NotMorseError(f"Hessian at {list(point.position)} is degenerate", eigenvalues=eigenvalues.tolist())
    negative = int(np.count_nonzero(eigenvalues < 0.0))
    return (2 - negative, negative)


def assemble_report(points, sets=(), value_range=None, route="parametric"):
    """Morse counts, Euler characteristic, genus and convexity verdict."""
    counts = [0, 0, 0]
    is_morse = not sets
    for point in points:
        if point.degenerate or point.index is None:
            is_morse = False
            continue
        counts[point.index] += point.multiplicity

    chi = None
    if not any(point.degenerate for point in points) and all(critical_set.euler is not None for critical_set in sets):
        chi = counts[0] - counts[1] + counts[2] + sum(critical_set.euler for critical_set in sets)

    genus = None
    if is_morse:
        if chi % 2:
            raise InternalInconsistencyError(f"odd Euler characteristic {chi} from counts {counts}")
        genus = (2 - chi) // 2
        if genus < 0:
            raise InternalInconsistencyError(f"Euler characteristic {chi} exceeds 2")

    total = sum(counts)
    is_perfect = is_morse and tuple(counts) == (1, 0, 1)
    if genus == 0 and total == 2:
        convexity = Convexity.CONSISTENT_WITH_CONVEX
    elif genus == 0 and total > 2:
        convexity = Convexity.NON_CONVEX_DETECTED
    else:
        convexity = Convexity.NOT_APPLICABLE

    if value_range is None:
        values = [point.value for point in points] + [critical_set.value for critical_set in sets]
        value_range = (min(values), max(values)) if values else (0.0, 0.0)
    diameter_bound = float(value_range[1] - value_range[0])
    return MorseReport(
        list(points), list(sets), tuple(counts), chi, genus, is_morse, is_perfect, convexity, diameter_bound, route
    )


def genericity_check(report, seed=None):
    """Whether the height is a generic Morse function, with a small random rotation to retry otherwise."""
    reasons = []
    if any(point.degenerate for point in report.points):
        reasons.append("degenerate critical point")
    if report.sets:
        reasons.append("degenerate critical set")
    values = sorted(point.value for point in report.points) + [critical_set.value for critical_set in report.sets]
    values.sort()
    separation = SEPARATION_TOLERANCE * max(report.diameter_bound, np.finfo(float).tiny)
    if any(later - earlier <= separation for earlier, later in zip(values, values[1:])):
        reasons.append("shared critical value")
    if not reasons:
        return Genericity(True, [], None)
    rng = np.random.default_rng(seed)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    rotation = Rotation.from_rotvec(PERTURBATION_ANGLE * axis).as_matrix()
    return Genericity(False, reasons, rotation)


def oracle(surface, height, seeds=NEWTON_SEEDS, route=None):
    """Full classical report for the height on the surface."""
    locus = find_critical_points(surface, height, seeds, route)
    report = assemble_report(locus.points, locus.sets, height.value_range, locus.route)
    mesh_chi = euler_characteristic_mesh(surface)
    if report.chi is not None and report.chi != mesh_chi:
        logger.warning("Oracle Euler characteristic %d differs from the mesh value %d", report.chi, mesh_chi)
    logger.info(
        "Oracle (%s): counts=%s chi=%s genus=%s", report.route, report.counts, report.chi, report.genus
    )
    return report
