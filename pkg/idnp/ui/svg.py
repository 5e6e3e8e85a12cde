# Grid snapshots in the low-dimensional plane
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from loguru import logger  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Circle, Polygon, Rectangle  # noqa: E402

from idnp.constant import (  # noqa: E402
    SVG_CELL_COLOR,
    SVG_GOAL_COLOR,
    SVG_OBSTACLE_COLOR,
    get_iteration_color,
)
from idnp.models.records import IterationRecord  # noqa: E402
from idnp.services.geometry import CollisionSpec  # noqa: E402
from idnp.services.grid import AdaptiveGrid  # noqa: E402
from idnp.services.problem import ProblemModel  # noqa: E402
from idnp.types.exceptions import ContractViolationError  # noqa: E402


@dataclass
class SnapshotCounts:
    cells: int
    vertices: int


def render_snapshot(
    path: Path | str,
    grids: Sequence[AdaptiveGrid],
    model: ProblemModel,
    spec: CollisionSpec,
    record: IterationRecord,
) -> SnapshotCounts:
    """Draw every leaf cell and vertex of the grids with obstacles, goal and waypoints.

    Each grid gets its own SVG groups ("cells-<j>", "vertices-<j>"), vertices
    are colored by the iteration that created them.

    Args:
        path: Output file, written as SVG.
        grids: Grids 0..M, all two-dimensional.
        model: Problem model, for W and the goal ball.
        spec: Obstacles.
        record: Iteration whose waypoints are drawn.

    Returns:
        SnapshotCounts: Number of cells and vertices drawn.
    """
    if any(g.dim != 2 for g in grids):
        raise ContractViolationError("snapshots need a two-dimensional low-dimensional space")

    fig, ax = plt.subplots(figsize=(6, 6))
    counts = SnapshotCounts(cells=0, vertices=0)

    for g in grids:
        leaves = list(g.leaves())
        cells = PatchCollection(
            [Rectangle(tuple(c.lower), *(c.upper - c.lower)) for c in leaves],
            facecolor="none",
            edgecolor=SVG_CELL_COLOR,
            linewidth=0.3,
        )
        cells.set_gid(f"cells-{g.time_index}")
        ax.add_collection(cells)

        coords = g.coords
        colors = [get_iteration_color(int(it)) for it in g.created]
        dots = ax.scatter(coords[:, 0], coords[:, 1], s=2, c=colors, linewidths=0)
        dots.set_gid(f"vertices-{g.time_index}")

        counts.cells += len(leaves)
        counts.vertices += g.vertex_count

    for obstacle in spec.obstacles:
        ax.add_patch(Polygon(obstacle.vertices, closed=True, color=SVG_OBSTACLE_COLOR))
    goal = Circle(tuple(model.goal_center), model.goal_radius, color=SVG_GOAL_COLOR, alpha=0.4)
    ax.add_patch(goal)

    if record.waypoints:
        points = np.asarray(record.waypoints)
        ax.plot(
            points[:, 0],
            points[:, 1],
            "o-",
            markersize=3,
            color=get_iteration_color(record.iteration),
            label=f"iteration {record.iteration}",
        )
        ax.legend(loc="upper left")

    lo, hi = model.lowdim_state_bounds
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_title(f"Iteration {record.iteration}")

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.debug(f"Saved snapshot {path}: {counts.cells} cells, {counts.vertices} vertices")
    return counts
