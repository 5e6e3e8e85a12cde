# Approximate dynamic programming on the per-timestep adaptive grids
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from idnp.models.config import DpConfig
from idnp.models.scenario import ObjectiveVariant
from idnp.services.grid import AdaptiveGrid
from idnp.services.penalty import PenaltyField, evaluate_mayer, stage_penalty_table
from idnp.services.problem import ProblemModel
from idnp.types.exceptions import ContractViolationError

__all__ = (
    "WaypointSequence",
    "SweepResult",
    "interp",
    "backward_sweep",
    "extract_waypoints",
    "infeasibility_check",
    "nearest_vertex",
)

# tolerance on Omega(x0) lying in W
BOUNDS_SLACK = 1e-9


@dataclass
class WaypointSequence:
    """Timestamped waypoints {tau_j, w_j} with the controls and steps that produced them."""

    times: np.ndarray
    points: np.ndarray
    controls: np.ndarray
    steps: np.ndarray
    value: float

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.steps = np.asarray(self.steps, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float).reshape(self.steps.size, -1)
        m = self.steps.size
        if self.times.shape != (m + 1,) or self.points.shape[0] != m + 1:
            raise ContractViolationError(
                f"sequence with {m} steps needs {m + 1} times and points, "
                f"got {self.times.shape[0]} and {self.points.shape[0]}"
            )
        if np.any(self.steps <= 0) or not np.allclose(np.diff(self.times), self.steps):
            raise ContractViolationError("waypoint times must advance by the positive steps")

    @property
    def num_steps(self) -> int:
        return self.steps.size

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


@dataclass
class SweepResult:
    """Per-grid argmin choices (flattened control-major, step-minor) and stage penalties."""

    policies: list[np.ndarray]
    stage_penalties: list[np.ndarray]


def interp(grid: AdaptiveGrid, w: Sequence[float]) -> list[tuple[tuple[float, ...], float]]:
    """Corners of the leaf cell holding w with their multilinear weights."""
    corner_ids, weights = grid.interpolation(np.asarray(w, dtype=float))
    vertices = grid.vertices
    return [(vertices[int(i)], float(g)) for i, g in zip(corner_ids[0], weights[0])]


def nearest_vertex(grid: AdaptiveGrid, w: Sequence[float]) -> tuple[float, ...]:
    """The corner of the cell holding w with the largest interpolation weight."""
    corner_ids, weights = grid.interpolation(np.asarray(w, dtype=float))
    return grid.vertices[int(corner_ids[0, np.argmax(weights[0])])]


def _stage_costs(
    model: ProblemModel,
    points: np.ndarray,
    stage_penalty: np.ndarray,
    next_grid: AdaptiveGrid,
    penalty: PenaltyField,
    cfg: DpConfig,
) -> np.ndarray:
    """Cost of every (point, control, step) triple, shape (P, K, S)."""
    controls = cfg.control_grid.controls
    steps = cfg.control_grid.steps
    n_pts, n_ctrl, n_steps = points.shape[0], controls.shape[0], steps.size

    rates = model.lowdim_dynamics(points[:, None, :], controls[None, :, :])
    succ = points[:, None, None, :] + steps[None, None, :, None] * rates[:, :, None, :]
    succ = succ.reshape(-1, model.n_w)

    outside = np.zeros(succ.shape[0], dtype=bool)
    if not cfg.clamp_out_of_bounds:
        outside = np.any((succ < next_grid.lower) | (succ > next_grid.upper), axis=1)
    future = next_grid.interpolate(next_grid.values, succ)
    future[outside] = np.inf
    future = future.reshape(n_pts, n_ctrl, n_steps)

    if cfg.objective_variant == ObjectiveVariant.STEP_WEIGHTED:
        stage = penalty.rho * stage_penalty[:, None, None] * steps[None, None, :]
    else:
        stage = np.broadcast_to(penalty.rho * stage_penalty[:, None, None], future.shape)
    return stage + future


def backward_sweep(
    grids: Sequence[AdaptiveGrid], model: ProblemModel, penalty: PenaltyField, cfg: DpConfig
) -> SweepResult:
    """Fill the value tables of grids M..0 by backward recursion.

    Grid M gets the Mayer term. Every vertex of grid l then minimizes the
    stage penalty at the vertex plus the interpolated value of grid l+1 at
    the Euler successor over all (control, step) pairs. Ties go to the
    smallest control index, then the smallest step index.

    Args:
        grids: Grids 0..M.
        model: Problem model providing the low-dimensional dynamics.
        penalty: Penalty field.
        cfg: DP configuration.

    Returns:
        SweepResult: Policies and stage penalty tables per grid.
    """
    if len(cfg.control_grid.points) == 0 or len(cfg.control_grid.step_sizes) == 0:
        raise ContractViolationError("backward_sweep needs a nonempty control grid")
    if len(grids) != cfg.num_steps + 1:
        raise ContractViolationError(f"expected {cfg.num_steps + 1} grids, got {len(grids)}")

    last = grids[-1]
    last.values = np.asarray(evaluate_mayer(model, last.coords), dtype=float).reshape(-1)

    policies: list[np.ndarray] = [np.zeros(0, dtype=int)] * len(grids)
    penalties: list[np.ndarray] = [np.zeros(0)] * len(grids)
    penalties[-1] = stage_penalty_table(penalty, last)

    for ell in range(cfg.num_steps - 1, -1, -1):
        grid = grids[ell]
        penalties[ell] = stage_penalty_table(penalty, grid)
        costs = _stage_costs(model, grid.coords, penalties[ell], grids[ell + 1], penalty, cfg)
        flat = costs.reshape(grid.vertex_count, -1)
        choice = np.argmin(flat, axis=1)
        grid.values = flat[np.arange(flat.shape[0]), choice]
        policies[ell] = choice

    logger.debug(
        f"Backward sweep over {len(grids)} grids, "
        f"{sum(g.vertex_count for g in grids)} vertices"
    )
    return SweepResult(policies=policies, stage_penalties=penalties)


def extract_waypoints(
    grids: Sequence[AdaptiveGrid],
    model: ProblemModel,
    penalty: PenaltyField,
    cfg: DpConfig,
    x0: np.ndarray,
    sweep: Optional[SweepResult] = None,
) -> WaypointSequence:
    """Forward pass from Omega(x0), re-minimizing each stage at the actual state.

    Off-vertex stage penalties are interpolated from the stage grid.
    """
    controls = cfg.control_grid.controls
    steps = cfg.control_grid.steps
    n_steps = steps.size

    w = np.asarray(model.forward_map(np.asarray(x0, dtype=float)), dtype=float).reshape(-1)
    if np.any(w < grids[0].lower - BOUNDS_SLACK) or np.any(w > grids[0].upper + BOUNDS_SLACK):
        raise ContractViolationError(f"Omega(x0) = {w} lies outside W")
    w = grids[0].clamp(w[None, :])[0]
    times, points, chosen_u, chosen_h = [0.0], [w], [], []
    value = np.inf

    for ell in range(cfg.num_steps):
        grid = grids[ell]
        table = (
            sweep.stage_penalties[ell] if sweep is not None else stage_penalty_table(penalty, grid)
        )
        stage_value = grid.interpolate(table, w[None, :])
        costs = _stage_costs(model, w[None, :], stage_value, grids[ell + 1], penalty, cfg)
        flat = costs.reshape(-1)
        k = int(np.argmin(flat))
        if ell == 0:
            value = float(flat[k])

        v, h = controls[k // n_steps], float(steps[k % n_steps])
        w = grids[ell + 1].clamp(w + h * model.lowdim_dynamics(w, v))
        times.append(times[-1] + h)
        points.append(w)
        chosen_u.append(v)
        chosen_h.append(h)

    return WaypointSequence(
        times=np.asarray(times),
        points=np.asarray(points),
        controls=np.asarray(chosen_u).reshape(cfg.num_steps, -1),
        steps=np.asarray(chosen_h),
        value=value,
    )


def infeasibility_check(seq: WaypointSequence, threshold: float) -> bool:
    """True when the DP value is too large to stand for a usable path."""
    return seq.value >= threshold
