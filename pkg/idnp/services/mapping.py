# Dimensional coupling: inverse mapping, recursive lifting and collision projection
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy import sparse

from idnp.constant import MAPPING_COLLISION_TOL, MAPPING_RESIDUAL_TOL
from idnp.models.config import MappingConfig, SolverOptions
from idnp.services.dp import WaypointSequence
from idnp.services.geometry import CollisionSpec
from idnp.services.nlp import Trajectory
from idnp.services.problem import ProblemModel
from idnp.services.solver import NlpProblem, SolverStatus, solve
from idnp.types.exceptions import ContractViolationError, InfeasibleWaypointError

__all__ = (
    "LiftedState",
    "FailedLift",
    "LiftResult",
    "inverse_map",
    "lift_sequence",
    "project_collisions",
)


@dataclass
class LiftedState:
    index: int
    tau: float
    x: np.ndarray


@dataclass
class FailedLift:
    index: int
    tau: float
    w: np.ndarray
    reason: str


@dataclass
class LiftResult:
    lifted: list[LiftedState] = field(default_factory=list)
    failed: list[FailedLift] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed

    @property
    def states(self) -> list[np.ndarray]:
        """Lifted states in waypoint order, only meaningful when nothing failed."""
        return [item.x for item in sorted(self.lifted, key=lambda item: item.index)]


def _mapping_problem(
    model: ProblemModel,
    spec: CollisionSpec,
    w: np.ndarray,
    x_prev: np.ndarray,
    start: np.ndarray,
    cfg: MappingConfig,
) -> NlpProblem:
    """min varrho1 ||x - x_prev||^2 + varrho2 sum(sigma) s.t. Omega(x) = w, g(x) <= sigma <= 0."""
    n = model.n_x
    m = model.num_collision_values(spec)
    x_lo, x_hi = model.state_bounds

    def objective(z: np.ndarray) -> tuple[float, np.ndarray]:
        dx = z[:n] - x_prev
        grad = np.concatenate((2.0 * cfg.varrho1 * dx, np.full(m, cfg.varrho2)))
        return float(cfg.varrho1 * (dx @ dx) + cfg.varrho2 * np.sum(z[n:])), grad

    def curvature(z: np.ndarray) -> sparse.dia_matrix:
        return sparse.diags(np.concatenate((np.full(n, 2.0 * cfg.varrho1), np.zeros(m))))

    def mapping_rows(z: np.ndarray) -> np.ndarray:
        return model.forward_map(z[:n]) - w

    def mapping_jacobian(z: np.ndarray) -> np.ndarray:
        return np.hstack((model.forward_map_jacobian(z[:n]), np.zeros((model.n_w, m))))

    def collision_rows(z: np.ndarray) -> np.ndarray:
        return model.collision_values(z[:n], spec) - z[n:]

    def collision_jacobian(z: np.ndarray) -> np.ndarray:
        return np.hstack((model.collision_jacobian(z[:n], spec), -np.eye(m)))

    start = np.clip(start, x_lo, x_hi)
    sigma0 = np.minimum(model.collision_values(start, spec), 0.0) if m else np.zeros(0)
    return NlpProblem(
        num_vars=n + m,
        lower=np.concatenate((x_lo, np.full(m, -np.inf))),
        upper=np.concatenate((x_hi, np.zeros(m))),
        objective=objective,
        initial_point=np.concatenate((start, sigma0)),
        eq_constraints=mapping_rows,
        eq_jacobian=mapping_jacobian,
        ineq_constraints=collision_rows if m else None,
        ineq_jacobian=collision_jacobian if m else None,
        objective_curvature=curvature,
        name="inverse-map",
    )


def _accept(model: ProblemModel, spec: CollisionSpec, w: np.ndarray, x: np.ndarray) -> bool:
    if np.linalg.norm(model.forward_map(x) - w) > MAPPING_RESIDUAL_TOL:
        return False
    g = model.collision_values(x, spec)
    return g.size == 0 or float(np.max(g)) <= MAPPING_COLLISION_TOL


def inverse_map(
    model: ProblemModel,
    spec: CollisionSpec,
    w: Sequence[float] | np.ndarray,
    x_prev: np.ndarray,
    cfg: Optional[MappingConfig] = None,
    options: Optional[SolverOptions] = None,
) -> np.ndarray:
    """Find a collision-free state mapping onto w, close to x_prev.

    The first attempt starts from x_prev. When it fails and
    cfg.retry_from_seed is set, a second attempt starts from the model seed
    state of w.

    Args:
        model: Problem model.
        spec: Obstacles and safety margin.
        w: Target low-dimensional state.
        x_prev: Previously lifted state.
        cfg: Mapping weights and tolerances.
        options: Inner solver options.

    Returns:
        np.ndarray: The lifted state.

    Raises:
        InfeasibleWaypointError: No attempt produced a collision-free preimage.
    """
    cfg = cfg or MappingConfig()
    w = np.asarray(w, dtype=float).reshape(-1)
    x_prev = np.asarray(x_prev, dtype=float).reshape(-1)
    lo, hi = model.state_bounds
    if x_prev.shape != (model.n_x,) or np.any(x_prev < lo - 1e-9) or np.any(x_prev > hi + 1e-9):
        raise ContractViolationError(f"previous state {x_prev} is not a state in X")

    starts = [x_prev]
    if cfg.retry_from_seed:
        starts.append(model.seed_state(w))

    reason = "no collision-free preimage found"
    for attempt, start in enumerate(starts):
        problem = _mapping_problem(model, spec, w, x_prev, start, cfg)
        result = solve(problem, cfg.kkt_tol, cfg.max_iter, options)
        x = result.x[: model.n_x]
        if result.status != SolverStatus.NUMERIC_FAILURE and _accept(model, spec, w, x):
            return x
        reason = f"solver returned {result.status.value} (kkt {result.kkt_residual:.2e})"
        logger.debug(f"Inverse map of {tuple(np.round(w, 6))} attempt {attempt + 1}: {reason}")

    raise InfeasibleWaypointError(w, reason)


def lift_sequence(
    model: ProblemModel,
    spec: CollisionSpec,
    seq: WaypointSequence,
    x0: np.ndarray,
    cfg: Optional[MappingConfig] = None,
    options: Optional[SolverOptions] = None,
) -> LiftResult:
    """Lift waypoints 1..M recursively, each from the last successful lift."""
    x_prev = np.asarray(x0, dtype=float).copy()
    result = LiftResult(lifted=[LiftedState(0, float(seq.times[0]), x_prev)])
    for j in range(1, seq.points.shape[0]):
        tau, w = float(seq.times[j]), seq.points[j]
        try:
            x = inverse_map(model, spec, w, x_prev, cfg, options)
        except InfeasibleWaypointError as e:
            result.failed.append(FailedLift(j, tau, w.copy(), e.reason))
            continue
        result.lifted.append(LiftedState(j, tau, x))
        x_prev = x

    if result.failed:
        logger.info(f"❌ {len(result.failed)} of {seq.num_steps} waypoints could not be lifted")
    return result


def project_collisions(
    model: ProblemModel,
    traj: Trajectory,
    colliding_indices: Sequence[int],
    dp_final_time: float,
) -> list[tuple[float, np.ndarray]]:
    """Map colliding trajectory states back to DP time and W: (tau_M t_k / T, Omega(x_k))."""
    if traj.final_time <= 0:
        raise ContractViolationError(
            f"trajectory final time must be positive, got {traj.final_time}"
        )
    n_nodes = traj.states.shape[0]
    projected = []
    for k in sorted(colliding_indices):
        if not 0 <= k < n_nodes:
            raise ContractViolationError(f"trajectory index {k} outside 0..{n_nodes - 1}")
        tau = dp_final_time * float(traj.times[k]) / traj.final_time
        projected.append((min(tau, dp_final_time), model.forward_map(traj.states[k])))
    return projected
