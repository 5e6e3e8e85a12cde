import numpy as np
import pytest

from idnp.services.dp import WaypointSequence
from idnp.services.geometry import CollisionSpec, rectangle
from idnp.services.nlp import Trajectory
from idnp.services.solver import SolverStatus
from idnp.services.verify import verify_trajectory


def cruise(final_time: float = 4.0) -> Trajectory:
    """Constant velocity from (1, 1) to (3, 1), sampled at five nodes."""
    times = np.linspace(0.0, final_time, 5)
    speed = 2.0 / final_time
    states = np.zeros((5, 4))
    states[:, 0] = 1.0 + speed * times
    states[:, 1] = 1.0
    states[:, 2] = speed
    return Trajectory(
        times=times,
        states=states,
        controls=np.zeros((4, 2)),
        final_time=final_time,
        kkt_residual=0.0,
        objective_value=0.0,
        status=SolverStatus.OPTIMAL,
        waypoint_rows={0: 0, 1: 4},
    )


@pytest.fixture
def endpoints() -> WaypointSequence:
    return WaypointSequence(
        times=[0.0, 4.0],
        points=[[1.0, 1.0], [3.0, 1.0]],
        controls=[[0.5, 0.0]],
        steps=[4.0],
        value=0.0,
    )


def test_clean_trajectory_passes(point_mass, square_obstacle, endpoints):
    report = verify_trajectory(point_mass, square_obstacle, cruise(), endpoints, 1e-6)
    assert report.ok
    assert report.collision_free
    assert report.max_defect == pytest.approx(0.0, abs=1e-12)
    assert report.max_waypoint_residual == pytest.approx(0.0, abs=1e-12)


def test_colliding_nodes_are_reported(point_mass, endpoints):
    spec = CollisionSpec([rectangle(2.05, 0.0, 2.45, 2.0)], 0.01)
    report = verify_trajectory(point_mass, spec, cruise(), endpoints, 1e-6)
    assert not report.ok
    assert report.colliding_nodes == [2, 3]


def test_margin_counts_as_collision(point_mass, endpoints):
    # the body edge at 3.1 sits 0.005 from the block, inside the 0.01 margin
    spec = CollisionSpec([rectangle(3.105, 0.0, 4.0, 2.0)], 0.01)
    report = verify_trajectory(point_mass, spec, cruise(), endpoints, 1e-6)
    assert report.colliding_nodes == [4]


def test_defects_and_waypoints(point_mass, square_obstacle, endpoints):
    traj = cruise()
    traj.states[2, 0] += 0.1
    report = verify_trajectory(point_mass, square_obstacle, traj, endpoints, 1e-6)
    assert not report.ok
    assert report.max_defect == pytest.approx(0.1)

    traj = cruise()
    traj.states[4, 1] += 0.01
    report = verify_trajectory(point_mass, square_obstacle, traj, endpoints, 1e-6)
    assert report.max_waypoint_residual == pytest.approx(0.01)
    unchecked = verify_trajectory(point_mass, square_obstacle, traj, None, 1e-6)
    assert unchecked.max_waypoint_residual == 0.0


def test_final_time_outside_bounds(point_mass, square_obstacle):
    report = verify_trajectory(point_mass, square_obstacle, cruise(200.0), None, 1e-6)
    assert not report.time_in_bounds
    assert not report.ok


def test_arm_links(arm):
    traj = Trajectory(
        times=np.array([0.0, 1.0]),
        states=np.zeros((2, 6)),
        controls=np.zeros((1, 3)),
        final_time=1.0,
        kkt_residual=0.0,
        objective_value=0.0,
        status=SolverStatus.OPTIMAL,
    )
    clear = CollisionSpec([rectangle(1.0, 0.2, 2.0, 1.0)], 0.01)
    assert verify_trajectory(arm, clear, traj, None, 1e-6).ok

    blocked = CollisionSpec([rectangle(1.0, -0.5, 2.0, 0.5)], 0.01)
    assert verify_trajectory(arm, blocked, traj, None, 1e-6).colliding_nodes == [0, 1]
