# Penalty landscape P, Mayer term and penalty marks on grid vertices
import itertools
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from loguru import logger
from scipy import sparse

from idnp.constant import (
    MAPPING_COLLISION_TOL,
    MAPPING_RESIDUAL_TOL,
    SOLVER_DEFAULT_TOL,
)
from idnp.models.config import InnerMethod, SolverOptions
from idnp.services.geometry import CollisionSpec
from idnp.services.grid import AdaptiveGrid
from idnp.services.manager import PenaltyManager
from idnp.services.problem import ProblemModel
from idnp.services.solver import NlpProblem, SolverStatus, solve
from idnp.types.exceptions import ContractViolationError, PenaltyEvaluationError

__all__ = (
    "PenaltyField",
    "penalty_value",
    "evaluate_penalty",
    "evaluate_mayer",
    "total_stage_penalty",
    "stage_penalty_table",
    "mark_vertex",
    "distribute_marks",
    "penalty_grid_oracle",
)

SMOOTHING = 1e-6
FEASIBILITY_MAX_ITER = 60
PENALIZED_MAX_ITER = 5

Point = tuple[float, ...]


@dataclass
class PenaltyField:
    """Penalty factor, mark size and the evaluator of P.

    Marks live on the grids (AdaptiveGrid.marks); base values of P are cached
    per run through PenaltyManager.
    """

    rho: float
    mark_value: float
    evaluator: Callable[[np.ndarray], float]
    cache_key: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self) -> None:
        if self.rho <= 0:
            raise ContractViolationError(f"penalty factor must be positive, got {self.rho}")
        if self.mark_value <= 0:
            raise ContractViolationError(f"mark value must be positive, got {self.mark_value}")

    def base_penalty(self, point: Point) -> float:
        return PenaltyManager.get(
            self.cache_key, point, lambda p: self.evaluator(np.asarray(p, dtype=float))
        )

    def base_table(self, grid: AdaptiveGrid) -> np.ndarray:
        return np.array([self.base_penalty(p) for p in grid.vertices], dtype=float)

    def invalidate(self, points: Sequence[Point]) -> int:
        return PenaltyManager.invalidate(self.cache_key, points)

    def release(self) -> None:
        PenaltyManager.reset(self.cache_key)


def penalty_value(
    model: ProblemModel, spec: CollisionSpec, w: np.ndarray, x: np.ndarray
) -> float:
    """Unsmoothed ||Omega(x) - w|| + ||max(0, g(x))|| at one state."""
    value = float(np.linalg.norm(model.forward_map(x) - w))
    g = model.collision_values(x, spec)
    if g.size:
        value += float(np.linalg.norm(np.maximum(g, 0.0)))
    return value


def _zero_objective(x: np.ndarray) -> tuple[float, np.ndarray]:
    return 0.0, np.zeros_like(x)


def _feasibility_problem(
    model: ProblemModel, spec: CollisionSpec, w: np.ndarray, start: np.ndarray
) -> NlpProblem:
    lo, hi = model.state_bounds
    n = model.n_x
    has_collisions = model.num_collision_values(spec) > 0
    return NlpProblem(
        num_vars=n,
        lower=lo,
        upper=hi,
        objective=_zero_objective,
        initial_point=np.clip(start, lo, hi),
        eq_constraints=lambda x: model.forward_map(x) - w,
        eq_jacobian=model.forward_map_jacobian,
        ineq_constraints=(lambda x: model.collision_values(x, spec)) if has_collisions else None,
        ineq_jacobian=(lambda x: model.collision_jacobian(x, spec)) if has_collisions else None,
        objective_curvature=lambda x: sparse.csr_matrix((n, n)),
        name="penalty-feasibility",
    )


def _penalized_problem(
    model: ProblemModel, spec: CollisionSpec, w: np.ndarray, start: np.ndarray
) -> NlpProblem:
    lo, hi = model.state_bounds
    has_collisions = model.num_collision_values(spec) > 0

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        r = model.forward_map(x) - w
        norm_r = np.sqrt(r @ r + SMOOTHING**2)
        value = norm_r - SMOOTHING
        grad = model.forward_map_jacobian(x).T @ r / norm_r
        if has_collisions:
            excess = np.maximum(model.collision_values(x, spec), 0.0)
            norm_g = np.sqrt(excess @ excess + SMOOTHING**2)
            value += norm_g - SMOOTHING
            grad = grad + model.collision_jacobian(x, spec).T @ excess / norm_g
        return float(value), grad

    return NlpProblem(
        num_vars=model.n_x,
        lower=lo,
        upper=hi,
        objective=objective,
        initial_point=np.clip(start, lo, hi),
        name="penalty",
    )


def evaluate_penalty(
    model: ProblemModel,
    spec: CollisionSpec,
    w: Sequence[float] | np.ndarray,
    tol: float = SOLVER_DEFAULT_TOL,
    options: Optional[SolverOptions] = None,
) -> float:
    """Evaluate P(w) = min_x ||Omega(x) - w|| + ||max(0, g(x))||.

    A feasibility problem holding only the mapping and collision constraints
    is solved first; when it succeeds P(w) is zero. Otherwise the penalized
    problem is minimized from its end point. The smallest exact value among
    the candidates is returned.

    Args:
        model: Problem model.
        spec: Obstacles and safety margin.
        w: Low-dimensional state.
        tol: Inner solver tolerance.
        options: Inner solver options.

    Returns:
        float: The nonnegative penalty value.

    Raises:
        PenaltyEvaluationError: The penalized problem hit a numeric failure.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    options = options or SolverOptions()

    seed = model.seed_state(w)
    if _is_feasible_preimage(model, spec, w, seed):
        return 0.0

    feasibility = _feasibility_problem(model, spec, w, seed)
    stage_one = solve(feasibility, tol, FEASIBILITY_MAX_ITER, options)
    if stage_one.status == SolverStatus.OPTIMAL and _is_feasible_preimage(
        model, spec, w, stage_one.x
    ):
        return 0.0
    start = stage_one.x if stage_one.status != SolverStatus.NUMERIC_FAILURE else seed

    lbfgsb = options.model_copy(update={"inner_method": InnerMethod.LBFGSB})
    stage_two = solve(_penalized_problem(model, spec, w, start), tol, PENALIZED_MAX_ITER, lbfgsb)

    candidates = [stage_two.x, start, seed]
    best = min(penalty_value(model, spec, w, x) for x in candidates)
    if stage_two.status == SolverStatus.NUMERIC_FAILURE:
        raise PenaltyEvaluationError(w, best)

    logger.debug(f"P{tuple(np.round(w, 6))} = {best:.6g} ({stage_two.status.value})")
    return best


def _is_feasible_preimage(
    model: ProblemModel, spec: CollisionSpec, w: np.ndarray, x: np.ndarray
) -> bool:
    if np.linalg.norm(model.forward_map(x) - w) > MAPPING_RESIDUAL_TOL:
        return False
    g = model.collision_values(x, spec)
    return g.size == 0 or float(np.max(g)) <= MAPPING_COLLISION_TOL


def evaluate_mayer(model: ProblemModel, w: np.ndarray) -> np.ndarray | float:
    """alpha * max(||w - w_ref|| - r, 0), vectorized over leading axes."""
    dist = np.linalg.norm(np.asarray(w, dtype=float) - model.goal_center, axis=-1)
    value = model.goal_scale * np.maximum(dist - model.goal_radius, 0.0)
    return float(value) if np.ndim(value) == 0 else value


def total_stage_penalty(
    penalty: PenaltyField, grid: AdaptiveGrid, vertex: Sequence[float]
) -> float:
    """Cached P at a vertex plus its accumulated mark."""
    key = tuple(float(c) for c in vertex)
    vid = grid.vertex_id(key)
    return penalty.base_penalty(key) + float(grid.marks[vid])


def stage_penalty_table(penalty: PenaltyField, grid: AdaptiveGrid) -> np.ndarray:
    """total_stage_penalty for every vertex of a grid, in vertex id order."""
    return penalty.base_table(grid) + grid.marks


def mark_vertex(grid: AdaptiveGrid, vertex: Sequence[float], penalty: PenaltyField) -> None:
    vid = grid.vertex_id(vertex)
    grid.marks[vid] += penalty.mark_value


def distribute_marks(grid: AdaptiveGrid, w: Sequence[float], penalty: PenaltyField) -> np.ndarray:
    """Spread one mark over the corners of the cell holding w by interpolation weight.

    Returns:
        np.ndarray: Vertex ids that received a share.
    """
    corner_ids, weights = grid.interpolation(np.asarray(w, dtype=float))
    corner_ids, weights = corner_ids[0], weights[0]
    np.add.at(grid.marks, corner_ids, penalty.mark_value * weights)
    return corner_ids[weights > 0]


def penalty_grid_oracle(
    model: ProblemModel,
    spec: CollisionSpec,
    w: Sequence[float],
    radius: float = 1.5,
    resolution: int = 21,
) -> float:
    """Brute-force P for a translating body: search positions on a lattice around w.

    Only valid when the velocity part of x does not affect Omega or g.
    """
    w = np.asarray(w, dtype=float)
    offsets = np.linspace(-radius, radius, resolution)
    lo, hi = model.lowdim_state_bounds
    best = np.inf
    for delta in itertools.product(offsets, repeat=model.n_w):
        p = np.clip(w + np.asarray(delta), lo, hi)
        best = min(best, penalty_value(model, spec, w, model.seed_state(p)))
    return best
