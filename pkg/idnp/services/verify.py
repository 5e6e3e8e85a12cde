# Independent re-check of returned trajectories
from typing import Optional

import numpy as np
from loguru import logger
from pydantic import Field
from shapely.geometry import LineString, Polygon, box

from idnp.models.base import IdnpModel
from idnp.models.scenario import ModelKind
from idnp.services.dp import WaypointSequence
from idnp.services.geometry import CollisionSpec
from idnp.services.nlp import Trajectory
from idnp.services.problem import ProblemModel
from idnp.types.exceptions import ContractViolationError

# slack for floating point noise in the recomputed quantities
ROUNDING_SLACK = 1e-12
CLEARANCE_SLACK = 1e-9


class VerificationReport(IdnpModel):
    collision_free: bool = Field(description="No body comes closer than the safety margin")
    colliding_nodes: list[int] = Field(default_factory=list)
    max_waypoint_residual: float = Field(default=0.0)
    max_defect: float = Field(default=0.0)
    time_in_bounds: bool = Field(default=True)
    ok: bool = Field(default=False)


def _bodies(model: ProblemModel, x: np.ndarray) -> tuple[list[Polygon], np.ndarray]:
    """Body shapes and tool point, computed from the state alone."""
    r = model.body_radius
    if model.kind == ModelKind.POINT_MASS_2D:
        px, py = float(x[0]), float(x[1])
        return [box(px - r, py - r, px + r, py + r)], np.array([px, py])
    if model.kind == ModelKind.PLANAR_ARM_3:
        angles = np.cumsum(x[:3])
        lengths = np.asarray(model.link_lengths, dtype=float)
        joints = [np.zeros(2)]
        for length, angle in zip(lengths, angles):
            joints.append(joints[-1] + length * np.array([np.cos(angle), np.sin(angle)]))
        links = [
            LineString([tuple(a), tuple(b)]).buffer(r, cap_style="flat")
            for a, b in zip(joints[:-1], joints[1:])
        ]
        return links, joints[-1]
    raise ContractViolationError(f"no verification geometry for {type(model).__name__}")


def _max_defect(model: ProblemModel, traj: Trajectory) -> float:
    half = model.n_x // 2
    x, u = traj.states, traj.controls

    def rates(states: np.ndarray) -> np.ndarray:
        return np.concatenate((states[:, half:], u), axis=1)

    dt = np.diff(traj.times)[:, None]
    defects = x[1:] - x[:-1] - 0.5 * dt * (rates(x[:-1]) + rates(x[1:]))
    return float(np.max(np.abs(defects), initial=0.0))


def verify_trajectory(
    model: ProblemModel,
    spec: CollisionSpec,
    traj: Trajectory,
    waypoints: Optional[WaypointSequence],
    tol: float,
) -> VerificationReport:
    """Check clearance, waypoint rows, dynamics defects and the final time of a trajectory.

    Args:
        model: Problem model, used for its kind, bounds and body dimensions.
        spec: Obstacles and safety margin.
        traj: Trajectory to check.
        waypoints: Waypoints the trajectory must pass, None for no waypoint rows.
        tol: Tolerance on waypoint residuals and defects.

    Returns:
        VerificationReport
    """
    obstacles = [Polygon(o.vertices) for o in spec.obstacles]
    colliding: list[int] = []
    tool_points = []
    for i, x in enumerate(traj.states):
        bodies, tool = _bodies(model, x)
        tool_points.append(tool)
        for body in bodies:
            if any(
                (body.intersects(o) and not body.touches(o))
                or body.distance(o) < spec.safety_margin - CLEARANCE_SLACK
                for o in obstacles
            ):
                colliding.append(i)
                break

    residual = 0.0
    if waypoints is not None:
        for j, node in traj.waypoint_rows.items():
            residual = max(
                residual, float(np.max(np.abs(tool_points[node] - waypoints.points[j])))
            )

    defect = _max_defect(model, traj)
    t_min, t_max = model.time_bounds
    in_bounds = t_min - ROUNDING_SLACK <= traj.final_time <= t_max + ROUNDING_SLACK

    report = VerificationReport(
        collision_free=not colliding,
        colliding_nodes=colliding,
        max_waypoint_residual=residual,
        max_defect=defect,
        time_in_bounds=in_bounds,
    )
    report.ok = (
        report.collision_free
        and residual <= tol + ROUNDING_SLACK
        and defect <= tol + ROUNDING_SLACK
        and in_bounds
    )
    if not report.ok:
        logger.warning(
            f"❌ Verification failed: {len(colliding)} colliding nodes, "
            f"waypoint residual {residual:.2e}, defect {defect:.2e}"
        )
    return report
