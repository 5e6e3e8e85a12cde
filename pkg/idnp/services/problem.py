# Planar instantiations of the feasibility problem: dynamics, mappings, bounds and bodies
from typing import Optional, Sequence

import numpy as np

from idnp.constant import ARM_LINK_LENGTHS, DEFAULT_BODY_RADIUS
from idnp.models.scenario import ModelKind, ScenarioFile
from idnp.services.geometry import (
    CollisionSpec,
    ConvexPolygon,
    collision_values,
    collision_values_with_directions,
    link_polygon,
    rectangle,
)
from idnp.types.exceptions import ContractViolationError

__all__ = (
    "ProblemModel",
    "LowDimProblem",
    "PointMass2D",
    "PlanarArm3",
    "build_problem",
    "build_collision_spec",
)

ArrayLike = Sequence[float] | np.ndarray
BoxArrays = tuple[np.ndarray, np.ndarray]

FD_STEP = 1e-7


def _box(lower: ArrayLike, upper: ArrayLike, dim: int, name: str) -> BoxArrays:
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if lo.shape != (dim,) or hi.shape != (dim,):
        raise ContractViolationError(f"{name} must have dimension {dim}, got {lo.shape}/{hi.shape}")
    if np.any(lo > hi):
        raise ContractViolationError(f"{name} is empty: lower {lo} exceeds upper {hi}")
    return lo, hi


def _wrap_angle(theta: np.ndarray) -> np.ndarray:
    return (theta + np.pi) % (2 * np.pi) - np.pi


class ProblemModel:
    """Base description of one planning problem.

    Holds the boxes X, U, W, V, the final time bounds, the initial state and
    the goal data. Subclasses provide f, Omega and the body geometry.
    """

    kind: Optional[ModelKind] = None

    n_x: int
    n_u: int
    n_w: int
    n_v: int

    def __init__(
        self,
        *,
        state_bounds: tuple[ArrayLike, ArrayLike],
        control_bounds: tuple[ArrayLike, ArrayLike],
        lowdim_state_bounds: tuple[ArrayLike, ArrayLike],
        lowdim_control_bounds: tuple[ArrayLike, ArrayLike],
        time_bounds: tuple[float, float],
        initial_state: ArrayLike,
        goal_center: ArrayLike,
        goal_radius: float,
        goal_scale: float,
        body_radius: float = DEFAULT_BODY_RADIUS,
    ) -> None:
        self.state_bounds = _box(*state_bounds, self.n_x, "state bounds X")
        self.control_bounds = _box(*control_bounds, self.n_u, "control bounds U")
        self.lowdim_state_bounds = _box(*lowdim_state_bounds, self.n_w, "low-dim bounds W")
        self.lowdim_control_bounds = _box(*lowdim_control_bounds, self.n_v, "low-dim bounds V")

        t_min, t_max = float(time_bounds[0]), float(time_bounds[1])
        if not (0 <= t_min < t_max):
            raise ContractViolationError(f"time bounds need 0 <= T_min < T_max, got {time_bounds}")
        self.time_bounds = (t_min, t_max)

        if goal_radius <= 0:
            raise ContractViolationError(f"goal radius must be positive, got {goal_radius}")
        if goal_scale <= 0:
            raise ContractViolationError(f"goal scale must be positive, got {goal_scale}")
        if body_radius <= 0:
            raise ContractViolationError(f"body radius must be positive, got {body_radius}")
        self.goal_radius = float(goal_radius)
        self.goal_scale = float(goal_scale)
        self.body_radius = float(body_radius)

        self.goal_center = np.asarray(goal_center, dtype=float).reshape(-1)
        if self.goal_center.shape != (self.n_w,):
            raise ContractViolationError(
                f"goal center must have dimension {self.n_w}, got {self.goal_center.shape}"
            )

        self.initial_state = self._check(np.asarray(initial_state, dtype=float), self.n_x, "x0")
        lo, hi = self.state_bounds
        if np.any(self.initial_state < lo - 1e-12) or np.any(self.initial_state > hi + 1e-12):
            raise ContractViolationError(f"initial state {self.initial_state} lies outside X")

    # -- helpers -----------------------------------------------------------

    @staticmethod
    def _check(a: np.ndarray, dim: int, name: str) -> np.ndarray:
        if a.ndim == 0 or a.shape[-1] != dim:
            raise ContractViolationError(
                f"{name} must have trailing dimension {dim}, got shape {a.shape}"
            )
        return a

    @property
    def velocity_indices(self) -> np.ndarray:
        return np.arange(self.n_x // 2, self.n_x)

    @property
    def lowdim_diameter(self) -> float:
        lo, hi = self.lowdim_state_bounds
        return float(np.linalg.norm(hi - lo))

    def clip_state(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, *self.state_bounds)

    def clip_lowdim(self, w: np.ndarray) -> np.ndarray:
        return np.clip(w, *self.lowdim_state_bounds)

    # -- dynamics ----------------------------------------------------------

    def dynamics(self, x: ArrayLike, u: ArrayLike) -> np.ndarray:
        """Double integrator f(x, u) = (velocity, u), vectorized over leading axes."""
        x = self._check(np.asarray(x, dtype=float), self.n_x, "state")
        u = self._check(np.asarray(u, dtype=float), self.n_u, "control")
        velocity = x[..., self.n_x // 2 :]
        velocity, u = np.broadcast_arrays(velocity, u)
        return np.concatenate((velocity, u), axis=-1)

    def dynamics_jacobian(self, x: ArrayLike, u: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians (df/dx, df/du) at one point."""
        self._check(np.asarray(x, dtype=float), self.n_x, "state")
        self._check(np.asarray(u, dtype=float), self.n_u, "control")
        half = self.n_x // 2
        a = np.zeros((self.n_x, self.n_x))
        a[:half, half:] = np.eye(half)
        b = np.zeros((self.n_x, self.n_u))
        b[half:, :] = np.eye(self.n_u)
        return a, b

    def lowdim_dynamics(self, w: ArrayLike, v: ArrayLike) -> np.ndarray:
        """Single integrator on W."""
        w = self._check(np.asarray(w, dtype=float), self.n_w, "low-dim state")
        v = self._check(np.asarray(v, dtype=float), self.n_v, "low-dim control")
        return np.broadcast_to(v, np.broadcast_shapes(w.shape, v.shape)).copy()

    # -- mappings ----------------------------------------------------------

    def forward_map(self, x: ArrayLike) -> np.ndarray:
        raise NotImplementedError

    def forward_map_jacobian(self, x: ArrayLike) -> np.ndarray:
        raise NotImplementedError

    def seed_state(self, w: ArrayLike) -> np.ndarray:
        """A deterministic state near the preimage of w."""
        raise NotImplementedError

    def final_condition(self, x: ArrayLike) -> np.ndarray:
        x = self._check(np.asarray(x, dtype=float), self.n_x, "state")
        dist = np.linalg.norm(self.forward_map(x) - self.goal_center, axis=-1)
        b0 = self.goal_scale * np.maximum(dist - self.goal_radius, 0.0)
        return np.concatenate((np.asarray(b0)[..., None], x[..., self.velocity_indices]), axis=-1)

    # -- collision ---------------------------------------------------------

    def body_polygons(self, x: ArrayLike) -> list[ConvexPolygon]:
        raise NotImplementedError

    def collision_values(self, x: ArrayLike, spec: CollisionSpec) -> np.ndarray:
        if spec.count == 0:
            return np.zeros(0)
        return collision_values(self.body_polygons(x), spec)

    def collision_jacobian(self, x: ArrayLike, spec: CollisionSpec) -> np.ndarray:
        """Central differences of g over the configuration part of x."""
        x = np.asarray(x, dtype=float)
        if spec.count == 0:
            return np.zeros((0, self.n_x))
        base = self.collision_values(x, spec)
        jac = np.zeros((base.size, self.n_x))
        for k in range(self.n_x // 2):
            step = np.zeros(self.n_x)
            step[k] = FD_STEP
            forward = self.collision_values(x + step, spec)
            backward = self.collision_values(x - step, spec)
            jac[:, k] = (forward - backward) / (2 * FD_STEP)
        return jac

    def num_collision_values(self, spec: CollisionSpec) -> int:
        return len(self.body_polygons(self.initial_state)) * spec.count


class LowDimProblem(ProblemModel):
    """Problem living directly in W: X = W, U = V and Omega is the identity.

    Used to exercise the DP block on arbitrary dimensions.
    """

    def __init__(
        self,
        *,
        lowdim_state_bounds: tuple[ArrayLike, ArrayLike],
        lowdim_control_bounds: tuple[ArrayLike, ArrayLike],
        time_bounds: tuple[float, float],
        initial_state: ArrayLike,
        goal_center: ArrayLike,
        goal_radius: float,
        goal_scale: float,
    ) -> None:
        lo = np.asarray(lowdim_state_bounds[0], dtype=float).reshape(-1)
        vlo = np.asarray(lowdim_control_bounds[0], dtype=float).reshape(-1)
        self.n_x = self.n_w = lo.size
        self.n_u = self.n_v = vlo.size
        super().__init__(
            state_bounds=lowdim_state_bounds,
            control_bounds=lowdim_control_bounds,
            lowdim_state_bounds=lowdim_state_bounds,
            lowdim_control_bounds=lowdim_control_bounds,
            time_bounds=time_bounds,
            initial_state=initial_state,
            goal_center=goal_center,
            goal_radius=goal_radius,
            goal_scale=goal_scale,
        )

    @property
    def velocity_indices(self) -> np.ndarray:
        return np.arange(0)

    def dynamics(self, x: ArrayLike, u: ArrayLike) -> np.ndarray:
        return self.lowdim_dynamics(x, u)

    def dynamics_jacobian(self, x: ArrayLike, u: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((self.n_x, self.n_x)), np.eye(self.n_x, self.n_u)

    def forward_map(self, x: ArrayLike) -> np.ndarray:
        return self._check(np.asarray(x, dtype=float), self.n_x, "state").copy()

    def forward_map_jacobian(self, x: ArrayLike) -> np.ndarray:
        return np.eye(self.n_w)

    def seed_state(self, w: ArrayLike) -> np.ndarray:
        return self.clip_state(np.asarray(w, dtype=float))

    def body_polygons(self, x: ArrayLike) -> list[ConvexPolygon]:
        return []

    def collision_values(self, x: ArrayLike, spec: CollisionSpec) -> np.ndarray:
        return np.zeros(0)

    def num_collision_values(self, spec: CollisionSpec) -> int:
        return 0


class PointMass2D(ProblemModel):
    """Planar point mass with a square body, x = (p, v), u = acceleration."""

    kind = ModelKind.POINT_MASS_2D
    n_x, n_u, n_w, n_v = 4, 2, 2, 2

    DEFAULTS = {
        "state_bounds": ([-1.0, -1.0, -0.5, -0.5], [11.0, 11.0, 0.5, 0.5]),
        "control_bounds": ([-1.2, -1.2], [1.2, 1.2]),
        "lowdim_state_bounds": ([-1.0, -1.0], [11.0, 11.0]),
        "lowdim_control_bounds": ([-0.5, -0.5], [0.5, 0.5]),
        "time_bounds": (0.0, 100.0),
    }

    def forward_map(self, x: ArrayLike) -> np.ndarray:
        x = self._check(np.asarray(x, dtype=float), self.n_x, "state")
        return x[..., :2].copy()

    def forward_map_jacobian(self, x: ArrayLike) -> np.ndarray:
        return np.eye(2, 4)

    def seed_state(self, w: ArrayLike) -> np.ndarray:
        w = self._check(np.asarray(w, dtype=float), self.n_w, "low-dim state")
        return self.clip_state(np.concatenate((w, np.zeros(2))))

    def body_polygons(self, x: ArrayLike) -> list[ConvexPolygon]:
        p = np.asarray(x, dtype=float)[:2]
        r = self.body_radius
        return [rectangle(p[0] - r, p[1] - r, p[0] + r, p[1] + r)]

    def collision_jacobian(self, x: ArrayLike, spec: CollisionSpec) -> np.ndarray:
        if spec.count == 0:
            return np.zeros((0, self.n_x))
        _, directions = collision_values_with_directions(self.body_polygons(x), spec)
        jac = np.zeros((directions.shape[0], self.n_x))
        jac[:, :2] = -directions
        return jac

    def num_collision_values(self, spec: CollisionSpec) -> int:
        return spec.count


class PlanarArm3(ProblemModel):
    """Three-link planar arm anchored at the origin with double-integrator joints."""

    kind = ModelKind.PLANAR_ARM_3
    n_x, n_u, n_w, n_v = 6, 3, 2, 2
    link_lengths = np.asarray(ARM_LINK_LENGTHS)

    DEFAULTS = {
        "state_bounds": (
            [-np.pi] * 3 + [-np.pi / 10] * 3,
            [np.pi] * 3 + [np.pi / 10] * 3,
        ),
        "control_bounds": ([-1.0] * 3, [1.0] * 3),
        "lowdim_state_bounds": ([-3.0, -3.0], [3.0, 3.0]),
        "lowdim_control_bounds": ([-0.5, -0.5], [0.5, 0.5]),
        "time_bounds": (0.0, 100.0),
    }

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())

    def joint_positions(self, x: ArrayLike) -> np.ndarray:
        """Base, elbow, wrist and tool points, shape (..., 4, 2)."""
        x = self._check(np.asarray(x, dtype=float), self.n_x, "state")
        phi = np.cumsum(x[..., :3], axis=-1)
        steps = self.link_lengths[:, None] * np.stack((np.cos(phi), np.sin(phi)), axis=-1)
        origin = np.zeros(steps.shape[:-2] + (1, 2))
        return np.concatenate((origin, np.cumsum(steps, axis=-2)), axis=-2)

    def forward_map(self, x: ArrayLike) -> np.ndarray:
        return self.joint_positions(x)[..., -1, :]

    def forward_map_jacobian(self, x: ArrayLike) -> np.ndarray:
        x = self._check(np.asarray(x, dtype=float), self.n_x, "state")
        phi = np.cumsum(x[:3])
        dx = -self.link_lengths * np.sin(phi)
        dy = self.link_lengths * np.cos(phi)
        jac = np.zeros((2, self.n_x))
        # joint m moves every link k >= m
        jac[0, :3] = np.cumsum(dx[::-1])[::-1]
        jac[1, :3] = np.cumsum(dy[::-1])[::-1]
        return jac

    def body_polygons(self, x: ArrayLike) -> list[ConvexPolygon]:
        joints = self.joint_positions(x)
        return [link_polygon(joints[k], joints[k + 1], self.body_radius) for k in range(3)]

    def num_collision_values(self, spec: CollisionSpec) -> int:
        return 3 * spec.count

    def seed_state(self, w: ArrayLike) -> np.ndarray:
        """Closed-form inverse kinematics with links two and three folded into one.

        Out-of-reach targets give the fully extended arm pointing at w.
        """
        w = self._check(np.asarray(w, dtype=float), self.n_w, "low-dim state")
        l1, l2, l3 = self.link_lengths
        d = float(np.hypot(w[0], w[1]))

        # composite second link length, chosen so that d is inside its annulus
        composite = l2 + l3 if d >= l1 else l2
        cos3 = (composite**2 - l2**2 - l3**2) / (2 * l2 * l3)
        theta3 = float(np.arccos(np.clip(cos3, -1.0, 1.0)))
        offset = np.arctan2(l3 * np.sin(theta3), l2 + l3 * np.cos(theta3))

        cos2 = (d**2 - l1**2 - composite**2) / (2 * l1 * composite)
        bend = float(np.arccos(np.clip(cos2, -1.0, 1.0)))
        theta1 = np.arctan2(w[1], w[0]) - np.arctan2(
            composite * np.sin(bend), l1 + composite * np.cos(bend)
        )
        theta = _wrap_angle(np.array([theta1, bend - offset, theta3]))
        return self.clip_state(np.concatenate((theta, np.zeros(3))))


MODEL_TYPES: dict[ModelKind, type[ProblemModel]] = {
    ModelKind.POINT_MASS_2D: PointMass2D,
    ModelKind.PLANAR_ARM_3: PlanarArm3,
}


def build_problem(scenario: ScenarioFile) -> ProblemModel:
    """Instantiate the scenario's model, scenario bounds overriding the defaults."""
    model_type = MODEL_TYPES[scenario.model]
    defaults = model_type.DEFAULTS
    bounds = scenario.bounds

    def pick(override, key):
        if override is None:
            return defaults[key]
        return (override.lower, override.upper)

    return model_type(
        state_bounds=pick(bounds.state, "state_bounds"),
        control_bounds=pick(bounds.control, "control_bounds"),
        lowdim_state_bounds=pick(bounds.lowdim_state, "lowdim_state_bounds"),
        lowdim_control_bounds=pick(bounds.lowdim_control, "lowdim_control_bounds"),
        time_bounds=bounds.time if bounds.time is not None else defaults["time_bounds"],
        initial_state=scenario.initial_state,
        goal_center=scenario.goal.center,
        goal_radius=scenario.goal.radius,
        goal_scale=scenario.goal.scale,
        body_radius=scenario.body_radius,
    )


def build_collision_spec(scenario: ScenarioFile) -> CollisionSpec:
    return CollisionSpec.from_rects(scenario.obstacles, scenario.parameters.safety_margin)
