# Convex polygon primitives and collision margins
from typing import Iterable, Sequence

import numpy as np

from idnp.models.scenario import ObstacleRect
from idnp.types.exceptions import ContractViolationError, InvalidGeometryError

__all__ = (
    "ConvexPolygon",
    "CollisionSpec",
    "signed_distance",
    "signed_distance_with_direction",
    "collision_values",
    "collision_values_with_directions",
    "link_polygon",
    "rectangle",
)

MIN_VERTEX_SPACING = 1e-12
MIN_LINK_LENGTH = 1e-9


class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertices (meters)."""

    __slots__ = ("vertices", "_normals")

    def __init__(self, vertices: Sequence[Sequence[float]] | np.ndarray) -> None:
        pts = np.array(vertices, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidGeometryError(f"expected an (n, 2) vertex array, got shape {pts.shape}")
        if pts.shape[0] < 3:
            raise InvalidGeometryError(f"a polygon needs at least 3 vertices, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise InvalidGeometryError("polygon vertices must be finite")

        edges = np.roll(pts, -1, axis=0) - pts
        if np.any(np.linalg.norm(edges, axis=1) <= MIN_VERTEX_SPACING):
            raise InvalidGeometryError("polygon has duplicate consecutive vertices")

        following = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * following[:, 1] - edges[:, 1] * following[:, 0]
        if np.any(cross <= 0):
            raise InvalidGeometryError("polygon is not strictly convex and counter-clockwise")

        self.vertices = pts
        self.vertices.flags.writeable = False

        # outward unit normals of a CCW polygon
        normals = np.stack((edges[:, 1], -edges[:, 0]), axis=1)
        self._normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)

    @property
    def normals(self) -> np.ndarray:
        return self._normals

    @property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def translated(self, offset: Sequence[float] | np.ndarray) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.asarray(offset, dtype=float))

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def __repr__(self) -> str:
        return f"ConvexPolygon({self.vertices.tolist()})"


class CollisionSpec:
    """Obstacle set plus the safety margin epsilon."""

    __slots__ = ("obstacles", "safety_margin")

    def __init__(self, obstacles: Iterable[ConvexPolygon], safety_margin: float) -> None:
        if safety_margin < 0:
            raise ContractViolationError(f"safety margin must be >= 0, got {safety_margin}")
        self.obstacles: tuple[ConvexPolygon, ...] = tuple(obstacles)
        self.safety_margin = float(safety_margin)

    @classmethod
    def from_rects(cls, rects: Iterable[ObstacleRect], safety_margin: float) -> "CollisionSpec":
        return cls(
            [rectangle(r.xmin, r.ymin, r.xmax, r.ymax) for r in rects],
            safety_margin,
        )

    @property
    def count(self) -> int:
        return len(self.obstacles)


def rectangle(xmin: float, ymin: float, xmax: float, ymax: float) -> ConvexPolygon:
    return ConvexPolygon([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)])


def _segment_distances(points: np.ndarray, starts: np.ndarray, ends: np.ndarray):
    """Distances from every point to every segment, with the closest segment points."""
    d = ends - starts
    rel = points[:, None, :] - starts[None, :, :]
    t = np.einsum("pek,ek->pe", rel, d) / np.einsum("ek,ek->e", d, d)[None, :]
    t = np.clip(t, 0.0, 1.0)
    closest = starts[None, :, :] + t[..., None] * d[None, :, :]
    dist = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return dist, closest


def _separation(a: ConvexPolygon, b: ConvexPolygon) -> tuple[float, np.ndarray]:
    """Exact distance between disjoint polygons and the unit direction from b towards a."""
    best = np.inf
    direction = np.zeros(2)

    # vertices of a against edges of b
    dist, closest = _segment_distances(a.vertices, *b.edges)
    p, e = np.unravel_index(np.argmin(dist), dist.shape)
    if dist[p, e] < best:
        best = float(dist[p, e])
        direction = a.vertices[p] - closest[p, e]

    # vertices of b against edges of a
    dist, closest = _segment_distances(b.vertices, *a.edges)
    p, e = np.unravel_index(np.argmin(dist), dist.shape)
    if dist[p, e] < best:
        best = float(dist[p, e])
        direction = closest[p, e] - b.vertices[p]

    norm = np.linalg.norm(direction)
    if norm > 0:
        direction = direction / norm
    return best, direction


def signed_distance_with_direction(
    a: ConvexPolygon, b: ConvexPolygon
) -> tuple[float, np.ndarray]:
    """Signed distance plus the direction in which translating `a` increases it.

    Separated polygons use the exact vertex/edge distance. Overlapping polygons
    use the minimum translation over the face normals of both polygons.

    Args:
        a: First polygon.
        b: Second polygon.

    Returns:
        (signed distance, unit escape direction for a).
    """
    axes = np.vstack((a.normals, b.normals))
    proj_a = a.vertices @ axes.T
    proj_b = b.vertices @ axes.T
    a_min, a_max = proj_a.min(axis=0), proj_a.max(axis=0)
    b_min, b_max = proj_b.min(axis=0), proj_b.max(axis=0)

    # move a along -n by push_neg, or along +n by push_pos
    push_neg = a_max - b_min
    push_pos = b_max - a_min
    overlap = np.minimum(push_neg, push_pos)

    if np.any(overlap <= 0.0):
        return _separation(a, b)

    k = int(np.argmin(overlap))
    escape = -axes[k] if push_neg[k] <= push_pos[k] else axes[k]
    return -float(overlap[k]), escape


def signed_distance(a: ConvexPolygon, b: ConvexPolygon) -> float:
    return signed_distance_with_direction(a, b)[0]


def collision_values(bodies: Sequence[ConvexPolygon], spec: CollisionSpec) -> np.ndarray:
    """Margins epsilon - sd(body_i, obstacle_k), flattened body-major."""
    if not bodies:
        raise ContractViolationError("collision_values needs at least one body")
    values = np.empty(len(bodies) * spec.count)
    for i, body in enumerate(bodies):
        for k, obstacle in enumerate(spec.obstacles):
            values[i * spec.count + k] = spec.safety_margin - signed_distance(body, obstacle)
    return values


def collision_values_with_directions(
    bodies: Sequence[ConvexPolygon], spec: CollisionSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Margins together with the escape direction of each body, one row per pair."""
    if not bodies:
        raise ContractViolationError("collision_values needs at least one body")
    values = np.empty(len(bodies) * spec.count)
    directions = np.zeros((len(bodies) * spec.count, 2))
    for i, body in enumerate(bodies):
        for k, obstacle in enumerate(spec.obstacles):
            sd, escape = signed_distance_with_direction(body, obstacle)
            values[i * spec.count + k] = spec.safety_margin - sd
            directions[i * spec.count + k] = escape
    return values, directions


def link_polygon(
    p0: Sequence[float] | np.ndarray, p1: Sequence[float] | np.ndarray, radius: float
) -> ConvexPolygon:
    """Rectangle of width 2*radius around the segment p0-p1."""
    start = np.asarray(p0, dtype=float)
    end = np.asarray(p1, dtype=float)
    axis = end - start
    length = float(np.linalg.norm(axis))
    if length <= MIN_LINK_LENGTH:
        raise InvalidGeometryError(f"link segment is too short ({length:.3g} m)")
    if radius <= 0:
        raise InvalidGeometryError(f"link radius must be positive, got {radius}")

    side = np.array([-axis[1], axis[0]]) / length * radius
    return ConvexPolygon([start - side, end - side, end + side, start + side])
