# Direct transcription of the trajectory problem with embedded waypoints
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy import sparse

from idnp.constant import SOLVER_DEFAULT_MAX_ITER, SOLVER_DEFAULT_TOL
from idnp.models.config import SolverOptions
from idnp.services.dp import WaypointSequence
from idnp.services.geometry import CollisionSpec
from idnp.services.problem import ProblemModel
from idnp.services.solver import NlpProblem, SolverStatus, solve
from idnp.types.exceptions import ContractViolationError

__all__ = (
    "Transcription",
    "Trajectory",
    "normalized_grid",
    "transcribe",
    "transcribe_full",
    "rest_to_rest_guess",
    "solve_transcription",
    "check_collisions",
    "collision_penetration",
)

# nodes closer than this are merged into the waypoint node
GRID_MERGE_TOL = 1e-9


@dataclass
class Transcription:
    """Variable layout z = (x_0..x_N, u_0..u_{N-1}, T) over a normalized time grid."""

    n_x: int
    n_u: int
    grid: np.ndarray
    waypoint_rows: dict[int, int] = field(default_factory=dict)
    fixed_time: Optional[float] = None

    @property
    def num_intervals(self) -> int:
        return self.grid.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.grid)

    @property
    def num_vars(self) -> int:
        return (self.num_intervals + 1) * self.n_x + self.num_intervals * self.n_u + 1

    @property
    def control_offset(self) -> int:
        return (self.num_intervals + 1) * self.n_x

    @property
    def time_index(self) -> int:
        return self.num_vars - 1

    @property
    def control_slice(self) -> slice:
        return slice(self.control_offset, self.time_index)

    def state_col(self, i: np.ndarray | int) -> np.ndarray | int:
        return np.asarray(i) * self.n_x

    def control_col(self, i: np.ndarray | int) -> np.ndarray | int:
        return self.control_offset + np.asarray(i) * self.n_u

    def unpack(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        n = self.num_intervals
        states = z[: self.control_offset].reshape(n + 1, self.n_x)
        controls = z[self.control_slice].reshape(n, self.n_u)
        return states, controls, float(z[self.time_index])

    def pack(self, states: np.ndarray, controls: np.ndarray, final_time: float) -> np.ndarray:
        return np.concatenate((states.ravel(), controls.ravel(), [final_time]))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    final_time: float
    kkt_residual: float
    objective_value: float
    status: SolverStatus
    waypoint_rows: dict[int, int] = field(default_factory=dict)

    @property
    def num_intervals(self) -> int:
        return self.controls.shape[0]


def normalized_grid(
    times: Sequence[float], num_intervals: int
) -> tuple[np.ndarray, dict[int, int]]:
    """Union of the equidistant grid on [0, 1] and the waypoint fractions tau_j / tau_M.

    Equidistant nodes that nearly coincide with a waypoint fraction are
    replaced by it, so every waypoint sits exactly on a node.

    Returns:
        (grid, waypoint index -> node index)
    """
    times = np.asarray(times, dtype=float)
    if times.size < 2 or times[-1] <= 0:
        raise ContractViolationError("a waypoint sequence needs a positive final time")
    if num_intervals < times.size - 1:
        raise ContractViolationError(
            f"N = {num_intervals} is smaller than the number of DP steps {times.size - 1}"
        )

    fractions = times / times[-1]
    fractions[0], fractions[-1] = 0.0, 1.0
    base = np.linspace(0.0, 1.0, num_intervals + 1)
    gap = np.min(np.abs(base[:, None] - fractions[None, :]), axis=1)
    grid = np.unique(np.concatenate((base[gap > GRID_MERGE_TOL], fractions)))
    rows = {j: int(np.searchsorted(grid, f)) for j, f in enumerate(fractions)}
    return grid, rows


def _block_entries(
    row0: np.ndarray, col0: np.ndarray, blocks: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """COO triplets for a stack of dense (r, c) blocks placed at (row0[k], col0[k])."""
    _, r, c = blocks.shape
    rows = np.asarray(row0)[:, None, None] + np.arange(r)[None, :, None]
    cols = np.asarray(col0)[:, None, None] + np.arange(c)[None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    return rows.ravel(), cols.ravel(), blocks.ravel()


def _coo(entries: list[tuple[np.ndarray, np.ndarray, np.ndarray]], shape: tuple[int, int]):
    if not entries:
        return sparse.csr_matrix(shape)
    rows, cols, vals = (np.concatenate(parts) for parts in zip(*entries))
    return sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


class _Dynamics:
    """Trapezoidal defects x_{i+1} - x_i - (T ds_i / 2)(f(x_i, u_i) + f(x_{i+1}, u_i))."""

    def __init__(self, model: ProblemModel, tr: Transcription) -> None:
        self.model = model
        self.tr = tr
        self.ds = tr.deltas

    def values(self, z: np.ndarray) -> np.ndarray:
        x, u, t_f = self.tr.unpack(z)
        rates = self.model.dynamics(x[:-1], u) + self.model.dynamics(x[1:], u)
        return (x[1:] - x[:-1] - 0.5 * t_f * self.ds[:, None] * rates).ravel()

    def jacobian(self, z: np.ndarray) -> sparse.csr_matrix:
        tr, model = self.tr, self.model
        x, u, t_f = tr.unpack(z)
        n, n_x, n_u = tr.num_intervals, tr.n_x, tr.n_u

        a0 = np.empty((n, n_x, n_x))
        a1 = np.empty((n, n_x, n_x))
        b0 = np.empty((n, n_x, n_u))
        b1 = np.empty((n, n_x, n_u))
        for i in range(n):
            a0[i], b0[i] = model.dynamics_jacobian(x[i], u[i])
            a1[i], b1[i] = model.dynamics_jacobian(x[i + 1], u[i])

        half = 0.5 * t_f * self.ds[:, None, None]
        eye = np.eye(n_x)[None, :, :]
        idx = np.arange(n)
        rows = idx * n_x
        rates = model.dynamics(x[:-1], u) + model.dynamics(x[1:], u)
        entries = [
            _block_entries(rows, tr.state_col(idx), -eye - half * a0),
            _block_entries(rows, tr.state_col(idx + 1), eye - half * a1),
            _block_entries(rows, tr.control_col(idx), -half * (b0 + b1)),
            (
                np.arange(n * n_x),
                np.full(n * n_x, tr.time_index),
                (-0.5 * self.ds[:, None] * rates).ravel(),
            ),
        ]
        return _coo(entries, (n * n_x, tr.num_vars))


class _Waypoints:
    """Rows Omega(x_{i(j)}) - w_j for j >= 1."""

    def __init__(self, model: ProblemModel, tr: Transcription, points: np.ndarray) -> None:
        self.model = model
        self.tr = tr
        self.indices = sorted(j for j in tr.waypoint_rows if j >= 1)
        self.nodes = np.array([tr.waypoint_rows[j] for j in self.indices], dtype=int)
        self.targets = points[self.indices] if self.indices else np.zeros((0, model.n_w))

    @property
    def size(self) -> int:
        return self.nodes.size * self.model.n_w

    def values(self, z: np.ndarray) -> np.ndarray:
        if not self.size:
            return np.zeros(0)
        x, _, _ = self.tr.unpack(z)
        return (self.model.forward_map(x[self.nodes]) - self.targets).ravel()

    def jacobian(self, z: np.ndarray) -> sparse.csr_matrix:
        x, _, _ = self.tr.unpack(z)
        n_w = self.model.n_w
        if not self.size:
            return sparse.csr_matrix((0, self.tr.num_vars))
        blocks = np.stack([self.model.forward_map_jacobian(x[i]) for i in self.nodes])
        entries = [
            _block_entries(np.arange(self.nodes.size) * n_w, self.tr.state_col(self.nodes), blocks)
        ]
        return _coo(entries, (self.size, self.tr.num_vars))


def _smoothstep(s: np.ndarray, order: int = 0) -> np.ndarray:
    """3s^2 - 2s^3 and its first two derivatives."""
    if order == 0:
        return s * s * (3.0 - 2.0 * s)
    if order == 1:
        return 6.0 * s * (1.0 - s)
    return 6.0 - 12.0 * s


def rest_to_rest_guess(
    model: ProblemModel,
    target: np.ndarray,
    grid: np.ndarray,
    final_time: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Smoothstep motion from x_0 to `target`, starting and ending at rest.

    Double-integrator models get positions, velocities and midpoint
    accelerations of one cubic profile, so the velocity defects vanish. Models
    without velocity states get the matching piecewise-constant rates. Without
    `final_time` the time is chosen so the profile peaks at 80% of the
    velocity and control bounds.

    Returns:
        (states on grid, controls per interval, final time)
    """
    start = np.asarray(model.initial_state, dtype=float)
    target = np.asarray(target, dtype=float)
    vel = model.velocity_indices
    half = model.n_x - vel.size
    delta = np.abs(target[:half] - start[:half])
    u_lo, u_hi = model.control_bounds
    u_limit = np.maximum(np.minimum(-u_lo, u_hi), 1e-9)[:half]

    if vel.size:
        x_lo, x_hi = model.state_bounds
        v_limit = np.maximum(np.minimum(-x_lo[vel], x_hi[vel]), 1e-9)
        # peak speed 1.5 |d| / T, peak acceleration 6 |d| / T^2
        needed = max(np.max(1.5 * delta / v_limit), np.max(np.sqrt(6.0 * delta / u_limit)))
    else:
        needed = float(np.max(1.5 * delta / u_limit))

    t_lo, t_hi = model.time_bounds
    if final_time is None:
        final_time = 1.25 * needed if needed > 0 else 0.5 * (t_lo + t_hi)
    final_time = float(np.clip(final_time, max(t_lo, 1e-9), t_hi))

    step = target[:half] - start[:half]
    s = np.asarray(grid, dtype=float)
    states = np.tile(target, (s.size, 1))
    states[:, :half] = start[:half] + _smoothstep(s)[:, None] * step
    if vel.size:
        mid = 0.5 * (s[:-1] + s[1:])
        states[:, vel] = _smoothstep(s, 1)[:, None] * step / final_time
        controls = _smoothstep(mid, 2)[:, None] * step / final_time**2
    else:
        rise = np.diff(_smoothstep(s))[:, None] * step
        controls = rise / (final_time * np.diff(s)[:, None])
    return states, controls, final_time


def _effort(tr: Transcription):
    """Objective sum_i T ds_i ||u_i||^2 with its gradient and a PSD curvature model."""
    ds = tr.deltas

    def objective(z: np.ndarray) -> tuple[float, np.ndarray]:
        _, u, t_f = tr.unpack(z)
        squares = np.sum(u * u, axis=1)
        grad = np.zeros_like(z)
        grad[tr.control_slice] = (2.0 * t_f * ds[:, None] * u).ravel()
        grad[tr.time_index] = ds @ squares
        return float(t_f * (ds @ squares)), grad

    def curvature(z: np.ndarray) -> sparse.dia_matrix:
        diag = np.zeros(z.size)
        diag[tr.control_slice] = np.repeat(2.0 * max(z[tr.time_index], 0.0) * ds, tr.n_u)
        return sparse.diags(diag)

    return objective, curvature


def _variable_box(
    model: ProblemModel, tr: Transcription, terminal_velocity: bool
) -> tuple[np.ndarray, np.ndarray]:
    n = tr.num_intervals
    x_lo, x_hi = model.state_bounds
    u_lo, u_hi = model.control_bounds
    t_lo, t_hi = model.time_bounds
    if tr.fixed_time is not None:
        t_lo = t_hi = tr.fixed_time

    states_lo = np.tile(x_lo, (n + 1, 1))
    states_hi = np.tile(x_hi, (n + 1, 1))
    states_lo[0] = states_hi[0] = model.initial_state
    if terminal_velocity:
        vel = model.velocity_indices
        states_lo[-1, vel] = states_hi[-1, vel] = 0.0

    lower = tr.pack(states_lo, np.tile(u_lo, (n, 1)), t_lo)
    upper = tr.pack(states_hi, np.tile(u_hi, (n, 1)), t_hi)
    return lower, upper


def transcribe(
    model: ProblemModel,
    seq: WaypointSequence,
    num_intervals: int,
    lifted: Optional[Sequence[np.ndarray]] = None,
    fixed_time: Optional[float] = None,
    terminal_velocity: bool = True,
) -> tuple[NlpProblem, Transcription]:
    """Transcribe the minimum-effort problem through the waypoints of `seq`.

    Args:
        model: Problem model.
        seq: Waypoint sequence from the DP block.
        num_intervals: Equidistant intervals N before the waypoint nodes are merged in.
        lifted: States x_0..x_M matching the waypoints, used for the initial guess.
        fixed_time: Pin T to this value.
        terminal_velocity: Require zero velocity at t_N.

    Returns:
        (NlpProblem, Transcription)
    """
    grid, rows = normalized_grid(seq.times, num_intervals)
    tr = Transcription(
        n_x=model.n_x, n_u=model.n_u, grid=grid, waypoint_rows=rows, fixed_time=fixed_time
    )
    if fixed_time is not None and not (
        model.time_bounds[0] <= fixed_time <= model.time_bounds[1]
    ):
        raise ContractViolationError(f"fixed final time {fixed_time} outside {model.time_bounds}")

    dynamics = _Dynamics(model, tr)
    waypoints = _Waypoints(model, tr, seq.points)
    objective, curvature = _effort(tr)
    lower, upper = _variable_box(model, tr, terminal_velocity)

    if lifted is None:
        lifted = [model.initial_state] + [model.seed_state(w) for w in seq.points[1:]]
    anchors = np.asarray(lifted, dtype=float)
    if anchors.shape != (seq.points.shape[0], model.n_x):
        raise ContractViolationError(
            f"expected {seq.points.shape[0]} lifted states, got shape {anchors.shape}"
        )
    fractions = grid[[rows[j] for j in range(anchors.shape[0])]]
    states = np.stack(
        [np.interp(grid, fractions, anchors[:, k]) for k in range(model.n_x)], axis=1
    )
    t_guess = fixed_time if fixed_time is not None else seq.final_time
    guess = np.clip(
        tr.pack(states, np.zeros((tr.num_intervals, model.n_u)), t_guess), lower, upper
    )

    problem = NlpProblem(
        num_vars=tr.num_vars,
        lower=lower,
        upper=upper,
        objective=objective,
        initial_point=guess,
        eq_constraints=lambda z: np.concatenate((dynamics.values(z), waypoints.values(z))),
        eq_jacobian=lambda z: sparse.vstack(
            (dynamics.jacobian(z), waypoints.jacobian(z)), format="csr"
        ),
        objective_curvature=curvature,
        name="trajectory",
    )
    logger.debug(
        f"Transcribed {seq.num_steps} waypoints on {tr.num_intervals} intervals, "
        f"{tr.num_vars} variables"
    )
    return problem, tr


def transcribe_full(
    model: ProblemModel,
    spec: CollisionSpec,
    num_intervals: int,
    guess_time: Optional[float] = None,
) -> tuple[NlpProblem, Transcription]:
    """Zero-objective transcription with collision rows at every node and the goal ball at t_N.

    The initial guess is the rest-to-rest profile from x_0 to the seed state
    of the goal center.
    """
    if num_intervals < 1:
        raise ContractViolationError(f"N must be positive, got {num_intervals}")
    tr = Transcription(
        n_x=model.n_x,
        n_u=model.n_u,
        grid=np.linspace(0.0, 1.0, num_intervals + 1),
        waypoint_rows={0: 0},
    )
    dynamics = _Dynamics(model, tr)
    lower, upper = _variable_box(model, tr, terminal_velocity=True)
    n_g = model.num_collision_values(spec)
    n, n_x = tr.num_intervals, tr.n_x

    def inequalities(z: np.ndarray) -> np.ndarray:
        x, _, _ = tr.unpack(z)
        parts = [model.collision_values(x[i], spec) for i in range(1, n + 1)] if n_g else []
        offset = model.forward_map(x[-1]) - model.goal_center
        parts.append(np.array([offset @ offset - model.goal_radius**2]))
        return np.concatenate(parts)

    def inequality_jacobian(z: np.ndarray) -> sparse.csr_matrix:
        x, _, _ = tr.unpack(z)
        entries = []
        if n_g:
            blocks = np.stack([model.collision_jacobian(x[i], spec) for i in range(1, n + 1)])
            entries.append(
                _block_entries(np.arange(n) * n_g, tr.state_col(np.arange(1, n + 1)), blocks)
            )
        offset = model.forward_map(x[-1]) - model.goal_center
        goal_row = 2.0 * offset @ model.forward_map_jacobian(x[-1])
        entries.append(
            (np.full(n_x, n * n_g), tr.state_col(n) + np.arange(n_x), goal_row)
        )
        return _coo(entries, (n * n_g + 1, tr.num_vars))

    states, controls, t_guess = rest_to_rest_guess(
        model, model.seed_state(model.goal_center), tr.grid, guess_time
    )
    guess = np.clip(tr.pack(states, controls, t_guess), lower, upper)

    problem = NlpProblem(
        num_vars=tr.num_vars,
        lower=lower,
        upper=upper,
        objective=lambda z: (0.0, np.zeros_like(z)),
        initial_point=guess,
        eq_constraints=dynamics.values,
        eq_jacobian=dynamics.jacobian,
        ineq_constraints=inequalities,
        ineq_jacobian=inequality_jacobian,
        objective_curvature=lambda z: sparse.csr_matrix((z.size, z.size)),
        name="full-discretization",
    )
    return problem, tr


def solve_transcription(
    problem: NlpProblem,
    tr: Transcription,
    tol: float = SOLVER_DEFAULT_TOL,
    max_iter: int = SOLVER_DEFAULT_MAX_ITER,
    options: Optional[SolverOptions] = None,
) -> Trajectory:
    result = solve(problem, tol, max_iter, options)
    states, controls, final_time = tr.unpack(result.x)
    return Trajectory(
        times=final_time * tr.grid,
        states=states.copy(),
        controls=controls.copy(),
        final_time=final_time,
        kkt_residual=result.kkt_residual,
        objective_value=result.objective,
        status=result.status,
        waypoint_rows=dict(tr.waypoint_rows),
    )


def check_collisions(model: ProblemModel, spec: CollisionSpec, traj: Trajectory) -> list[int]:
    """Indices of states with any collision value strictly above zero."""
    if model.num_collision_values(spec) == 0:
        return []
    return [
        i
        for i, x in enumerate(traj.states)
        if float(np.max(model.collision_values(x, spec))) > 0.0
    ]


def collision_penetration(model: ProblemModel, spec: CollisionSpec, traj: Trajectory) -> float:
    """Sum of the positive collision values over all states."""
    if model.num_collision_values(spec) == 0:
        return 0.0
    return float(
        sum(np.sum(np.maximum(model.collision_values(x, spec), 0.0)) for x in traj.states)
    )
