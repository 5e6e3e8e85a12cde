# Per-timestep adaptive state grids over W with cell location and splitting
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
from loguru import logger

from idnp.constant import MIN_EDGE_FRACTION
from idnp.models.config import ControlGrid
from idnp.types.exceptions import ContractViolationError, RefinementLimitError

__all__ = (
    "Cell",
    "AdaptiveGrid",
    "RefinementResult",
    "build_uniform",
    "build_control_grid",
    "locate_cell",
    "cell_vertices",
    "split_cell",
    "bracket_index",
    "refine",
)

Point = tuple[float, ...]


def _corner_bits(dim: int) -> np.ndarray:
    """Binary counting order over axes, bit k selects the upper side of axis k."""
    count = 1 << dim
    return ((np.arange(count)[:, None] >> np.arange(dim)[None, :]) & 1).astype(bool)


class Cell:
    """Axis-aligned box of one grid, either a leaf or split into 2^n children."""

    __slots__ = ("index", "lower", "upper", "depth", "children", "corner_ids")

    def __init__(
        self, index: int, lower: np.ndarray, upper: np.ndarray, depth: int, corner_ids: np.ndarray
    ) -> None:
        self.index = index
        self.lower = lower
        self.upper = upper
        self.depth = depth
        self.children: Optional[list["Cell"]] = None
        self.corner_ids = corner_ids

    @property
    def leaf(self) -> bool:
        return self.children is None

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, w: np.ndarray) -> bool:
        return bool(np.all(w >= self.lower) and np.all(w <= self.upper))

    def __repr__(self) -> str:
        return f"Cell({self.lower.tolist()}, {self.upper.tolist()}, depth={self.depth})"


class AdaptiveGrid:
    """Hierarchical grid G_w^j of one DP time index.

    Vertices are stored once, keyed by their exact coordinates. Values, marks
    and creation iterations are parallel arrays indexed by vertex id.
    """

    def __init__(
        self, time_index: int, lower: np.ndarray, upper: np.ndarray, divisions: Sequence[int]
    ) -> None:
        self.time_index = time_index
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.dim = self.lower.size
        self.divisions = tuple(int(d) for d in divisions)
        self.axes = [
            np.linspace(self.lower[k], self.upper[k], self.divisions[k] + 1)
            for k in range(self.dim)
        ]
        self.bits = _corner_bits(self.dim)
        self.current_iteration = 0

        self._coords: list[Point] = []
        self._ids: dict[Point, int] = {}
        self.values = np.zeros(0)
        self.marks = np.zeros(0)
        self.created = np.zeros(0, dtype=int)

        self.cells: list[Cell] = []
        self._arrays: Optional[tuple[np.ndarray, ...]] = None
        self._coord_array: Optional[np.ndarray] = None

        for point in itertools.product(*self.axes):
            self._add_vertex(tuple(float(c) for c in point), 0.0)

        self.root_ids = np.empty(self.divisions, dtype=int)
        for multi in itertools.product(*(range(d) for d in self.divisions)):
            lo = np.array([self.axes[k][multi[k]] for k in range(self.dim)])
            hi = np.array([self.axes[k][multi[k] + 1] for k in range(self.dim)])
            self.root_ids[multi] = self._add_cell(lo, hi, 0).index

    # -- bookkeeping -------------------------------------------------------

    def _add_vertex(self, point: Point, value: float) -> int:
        vid = len(self._coords)
        self._coords.append(point)
        self._ids[point] = vid
        self.values = np.append(self.values, value)
        self.marks = np.append(self.marks, 0.0)
        self.created = np.append(self.created, self.current_iteration)
        self._coord_array = None
        return vid

    def _add_cell(self, lower: np.ndarray, upper: np.ndarray, depth: int) -> Cell:
        corners = np.where(self.bits, upper[None, :], lower[None, :])
        corner_ids = np.array([self._ids[tuple(float(c) for c in p)] for p in corners])
        cell = Cell(len(self.cells), lower, upper, depth, corner_ids)
        self.cells.append(cell)
        self._arrays = None
        return cell

    def _cell_arrays(self) -> tuple[np.ndarray, ...]:
        if self._arrays is None:
            n_children = 1 << self.dim
            lower = np.array([c.lower for c in self.cells])
            upper = np.array([c.upper for c in self.cells])
            children = np.full((len(self.cells), n_children), -1, dtype=int)
            for c in self.cells:
                if c.children is not None:
                    children[c.index] = [child.index for child in c.children]
            corners = np.array([c.corner_ids for c in self.cells])
            self._arrays = (lower, upper, children, corners)
        return self._arrays

    # -- queries -----------------------------------------------------------

    @property
    def vertex_count(self) -> int:
        return len(self._coords)

    @property
    def coords(self) -> np.ndarray:
        if self._coord_array is None:
            self._coord_array = np.array(self._coords, dtype=float).reshape(-1, self.dim)
        return self._coord_array

    @property
    def vertices(self) -> list[Point]:
        """Vertex coordinates in id order."""
        return list(self._coords)

    @property
    def vertex_set(self) -> set[Point]:
        return set(self._coords)

    def vertex_id(self, point: Sequence[float]) -> int:
        key = tuple(float(c) for c in point)
        if key not in self._ids:
            raise ContractViolationError(
                f"{key} is not a vertex of grid {self.time_index}"
            )
        return self._ids[key]

    def has_vertex(self, point: Sequence[float]) -> bool:
        return tuple(float(c) for c in point) in self._ids

    def leaves(self) -> Iterator[Cell]:
        return (c for c in self.cells if c.leaf)

    @property
    def leaf_count(self) -> int:
        return sum(1 for _ in self.leaves())

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.lower, self.upper)

    def locate_ids(self, points: np.ndarray) -> np.ndarray:
        """Leaf cell ids for an (P, n) array of points, clamped into the bounds."""
        pts = self.clamp(np.atleast_2d(np.asarray(points, dtype=float)))
        lower, upper, children, _ = self._cell_arrays()

        multi = tuple(
            np.clip(
                np.searchsorted(self.axes[k], pts[:, k], side="right") - 1,
                0,
                self.divisions[k] - 1,
            )
            for k in range(self.dim)
        )
        ids = self.root_ids[multi]

        weights = 1 << np.arange(self.dim)
        inner = children[ids, 0] >= 0
        while np.any(inner):
            sel = np.nonzero(inner)[0]
            cur = ids[sel]
            mid = 0.5 * (lower[cur] + upper[cur])
            child = ((pts[sel] >= mid).astype(int) * weights).sum(axis=1)
            ids[sel] = children[cur, child]
            inner = children[ids, 0] >= 0
        return ids

    def interpolation(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Corner vertex ids and multilinear weights, shapes (P, 2^n)."""
        pts = self.clamp(np.atleast_2d(np.asarray(points, dtype=float)))
        ids = self.locate_ids(pts)
        lower, upper, _, corners = self._cell_arrays()
        lo, hi = lower[ids], upper[ids]
        t = np.clip((pts - lo) / (hi - lo), 0.0, 1.0)
        factors = np.where(self.bits[None, :, :], t[:, None, :], 1.0 - t[:, None, :])
        return corners[ids], np.prod(factors, axis=2)

    def interpolate(self, table: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Interpolate a per-vertex table at arbitrary points."""
        corner_ids, weights = self.interpolation(points)
        return np.sum(table[corner_ids] * weights, axis=1)

    # -- mutation ----------------------------------------------------------

    def split(self, cell: Cell) -> list[Point]:
        if not cell.leaf:
            raise ContractViolationError(f"{cell} is not a leaf of grid {self.time_index}")

        half = 0.5 * (cell.upper - cell.lower)
        if np.any(half < MIN_EDGE_FRACTION * (self.upper - self.lower)):
            raise RefinementLimitError(cell.lower, cell.upper)

        mid = cell.lower + half
        parent_values = self.values[cell.corner_ids]
        created: list[Point] = []
        for choice in itertools.product(*[(0, 1, 2)] * self.dim):
            picks = np.array(choice)
            if np.all(picks != 1):
                continue
            point = np.where(picks == 0, cell.lower, np.where(picks == 1, mid, cell.upper))
            key = tuple(float(c) for c in point)
            if key in self._ids:
                continue
            t = np.where(picks == 0, 0.0, np.where(picks == 1, 0.5, 1.0))
            weights = np.prod(np.where(self.bits, t[None, :], 1.0 - t[None, :]), axis=1)
            self._add_vertex(key, float(weights @ parent_values))
            created.append(key)

        cell.children = []
        for bits in self.bits:
            lo = np.where(bits, mid, cell.lower)
            hi = np.where(bits, cell.upper, mid)
            cell.children.append(self._add_cell(lo, hi, cell.depth + 1))
        self._arrays = None
        return created


def build_uniform(
    bounds: tuple[Sequence[float], Sequence[float]], divisions: Sequence[int], time_index: int = 0
) -> AdaptiveGrid:
    lower = np.asarray(bounds[0], dtype=float).reshape(-1)
    upper = np.asarray(bounds[1], dtype=float).reshape(-1)
    if lower.shape != upper.shape:
        raise ContractViolationError("grid bounds differ in dimension")
    if np.any(lower >= upper):
        raise ContractViolationError(f"grid bounds are empty: {lower} to {upper}")
    if len(divisions) != lower.size:
        raise ContractViolationError(
            f"expected {lower.size} division counts, got {len(divisions)}"
        )
    if any(int(d) < 1 for d in divisions):
        raise ContractViolationError(f"divisions must be >= 1, got {list(divisions)}")
    return AdaptiveGrid(time_index, lower, upper, divisions)


def build_control_grid(
    lowdim_control_bounds: tuple[np.ndarray, np.ndarray],
    time_bounds: tuple[float, float],
    num_steps: int,
    points_per_axis: Sequence[int],
    step_points: int,
) -> ControlGrid:
    """Tensor control grid over V plus step sizes in [T_min/M, T_max/M].

    A zero T_min would allow a zero step, so the smallest step is then the
    upper bound divided by the number of step points.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in lowdim_control_bounds)
    if len(points_per_axis) != lo.size:
        raise ContractViolationError(
            f"expected {lo.size} control point counts, got {len(points_per_axis)}"
        )
    axes = [
        np.linspace(lo[k], hi[k], n) if n > 1 else np.array([0.5 * (lo[k] + hi[k])])
        for k, n in enumerate(points_per_axis)
    ]
    points = [list(p) for p in itertools.product(*axes)]

    t_min, t_max = time_bounds
    h_hi = t_max / num_steps
    h_lo = t_min / num_steps if t_min > 0 else h_hi / step_points
    steps = np.linspace(h_lo, h_hi, step_points) if step_points > 1 else np.array([h_hi])
    return ControlGrid(points=points, step_sizes=steps.tolist())


def locate_cell(grid: AdaptiveGrid, w: Sequence[float]) -> Cell:
    return grid.cells[int(grid.locate_ids(np.asarray(w, dtype=float))[0])]


def cell_vertices(c: Cell) -> list[Point]:
    """Corners in binary counting order over the axes."""
    if not c.leaf:
        raise ContractViolationError(f"{c} is not a leaf")
    bits = _corner_bits(c.lower.size)
    corners = np.where(bits, c.upper[None, :], c.lower[None, :])
    return [tuple(float(v) for v in p) for p in corners]


def split_cell(grid: AdaptiveGrid, c: Cell) -> list[Point]:
    return grid.split(c)


def bracket_index(times: Sequence[float], tau: float) -> int:
    """The unique j with tau_{j-1} < tau <= tau_j, zero for tau = 0."""
    j = int(np.searchsorted(np.asarray(times, dtype=float), tau, side="left"))
    return min(j, len(times) - 1)


@dataclass
class RefinementResult:
    new_vertices: list[list[Point]]
    split_cells: list[list[Cell]]
    limit_hits: list[RefinementLimitError] = field(default_factory=list)

    @property
    def added(self) -> list[int]:
        return [len(v) for v in self.new_vertices]

    @property
    def total_added(self) -> int:
        return sum(self.added)


def refine(
    grids: Sequence[AdaptiveGrid],
    flagged: Sequence[tuple[float, Sequence[float]]],
    times: Sequence[float],
) -> RefinementResult:
    """Split every cell holding a flagged point on the two grids around its time stamp.

    Args:
        grids: Grids 0..M.
        flagged: (tau_k, w_k) pairs.
        times: Waypoint time stamps tau_0..tau_M the flags refer to.

    Returns:
        RefinementResult with the new vertices and split cells per grid.
    """
    if len(times) != len(grids):
        raise ContractViolationError(f"expected {len(grids)} time stamps, got {len(times)}")

    targets: list[dict[int, Cell]] = [dict() for _ in grids]
    for tau, w in flagged:
        if tau < -1e-12 or tau > times[-1] + 1e-9:
            raise ContractViolationError(f"flagged time {tau} outside [0, {times[-1]}]")
        j = bracket_index(times, tau)
        for g in (j - 1, j):
            if g < 0:
                continue
            cell = locate_cell(grids[g], w)
            targets[g].setdefault(cell.index, cell)

    result = RefinementResult(
        new_vertices=[[] for _ in grids], split_cells=[[] for _ in grids]
    )
    for g, cells in enumerate(targets):
        for cell in cells.values():
            try:
                result.new_vertices[g].extend(grids[g].split(cell))
                result.split_cells[g].append(cell)
            except RefinementLimitError as e:
                logger.warning(f"❌ Grid {g}: {e.message}")
                result.limit_hits.append(e)

    logger.debug(
        f"🔄 Refined {sum(len(c) for c in result.split_cells)} cells, "
        f"{result.total_added} new vertices"
    )
    return result
