import numpy as np
import pytest

from conftest import make_arm, make_point_mass
from idnp.models.scenario import ModelKind
from idnp.services.problem import build_collision_spec, build_problem
from idnp.types.exceptions import ContractViolationError

FD_STEP = 1e-6


def central_difference(fun, x: np.ndarray) -> np.ndarray:
    columns = []
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = FD_STEP
        columns.append((fun(x + step) - fun(x - step)) / (2 * FD_STEP))
    return np.stack(columns, axis=-1)


def assert_jacobian(analytic: np.ndarray, numeric: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(numeric))))
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-5 * scale)


def test_point_mass_dynamics(point_mass, rng):
    x = np.array([1.0, 2.0, 0.3, -0.2])
    u = np.array([0.5, -1.0])
    np.testing.assert_allclose(point_mass.dynamics(x, u), [0.3, -0.2, 0.5, -1.0])

    for _ in range(20):
        x = rng.uniform(-0.5, 0.5, size=4)
        u = rng.uniform(-1.0, 1.0, size=2)
        a, b = point_mass.dynamics_jacobian(x, u)
        assert_jacobian(a, central_difference(lambda y: point_mass.dynamics(y, u), x))
        assert_jacobian(b, central_difference(lambda v: point_mass.dynamics(x, v), u))


def test_dynamics_are_vectorized(point_mass, rng):
    x = rng.uniform(-0.5, 0.5, size=(5, 3, 4))
    u = rng.uniform(-1.0, 1.0, size=(5, 3, 2))
    batch = point_mass.dynamics(x, u)
    assert batch.shape == (5, 3, 4)
    np.testing.assert_allclose(batch[2, 1], point_mass.dynamics(x[2, 1], u[2, 1]))


def test_dynamics_are_affine_in_control(point_mass, arm, rng):
    for model in (point_mass, arm):
        for _ in range(20):
            x = rng.uniform(-0.5, 0.5, size=model.n_x)
            u, v = rng.uniform(-1.0, 1.0, size=(2, model.n_u))
            s = rng.uniform(-2.0, 2.0)
            f0 = model.dynamics(x, np.zeros(model.n_u))
            np.testing.assert_allclose(
                model.dynamics(x, u + s * v) - f0,
                (model.dynamics(x, u) - f0) + s * (model.dynamics(x, v) - f0),
                atol=1e-12,
            )


def test_arm_stays_within_reach(arm, rng):
    x = np.concatenate(
        (rng.uniform(-np.pi, np.pi, size=(1000, 3)), rng.uniform(-1.0, 1.0, size=(1000, 3))),
        axis=1,
    )
    assert np.all(np.linalg.norm(arm.forward_map(x), axis=1) <= 2.5 + 1e-12)


def test_arm_forward_map(arm):
    np.testing.assert_allclose(arm.forward_map(np.zeros(6)), [2.5, 0.0], atol=1e-12)
    folded = np.array([np.pi / 2, -np.pi / 2, 0.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(arm.forward_map(folded), [1.5, 1.0], atol=1e-12)
    assert arm.reach == pytest.approx(2.5)


def test_arm_jacobians_match_finite_differences(arm, rng):
    for _ in range(100):
        x = np.concatenate((rng.uniform(-np.pi, np.pi, size=3), rng.uniform(-0.3, 0.3, size=3)))
        assert_jacobian(arm.forward_map_jacobian(x), central_difference(arm.forward_map, x))


def test_point_mass_collision_jacobian(point_mass, square_obstacle, rng):
    checked = 0
    while checked < 20:
        p = rng.uniform(2.0, 8.0, size=2)
        x = np.concatenate((p, np.zeros(2)))
        # skip states near the non-smooth diagonals of the block
        rel = np.abs(p - 5.0)
        if abs(rel[0] - rel[1]) < 0.05:
            continue
        numeric = central_difference(lambda y: point_mass.collision_values(y, square_obstacle), x)
        assert_jacobian(point_mass.collision_jacobian(x, square_obstacle), numeric)
        checked += 1


def test_arm_seed_state_reaches_target(arm, rng):
    for _ in range(100):
        radius = rng.uniform(0.1, 2.4)
        angle = rng.uniform(-np.pi, np.pi)
        w = radius * np.array([np.cos(angle), np.sin(angle)])
        x = arm.seed_state(w)
        lo, hi = arm.state_bounds
        assert np.all(x >= lo) and np.all(x <= hi)
        np.testing.assert_allclose(arm.forward_map(x), w, atol=1e-9)


def test_arm_bodies_follow_links(arm):
    bodies = arm.body_polygons(np.zeros(6))
    assert len(bodies) == 3
    xs = np.concatenate([b.vertices[:, 0] for b in bodies])
    assert xs.min() == pytest.approx(0.0) and xs.max() == pytest.approx(2.5)


def test_contract_checks():
    with pytest.raises(ContractViolationError):
        make_point_mass(initial_state=[1.0, 1.0, 0.0])
    with pytest.raises(ContractViolationError):
        make_point_mass(initial_state=[50.0, 1.0, 0.0, 0.0])
    with pytest.raises(ContractViolationError):
        make_point_mass(time_bounds=(5.0, 1.0))
    with pytest.raises(ContractViolationError):
        make_point_mass(goal_radius=0.0)
    with pytest.raises(ContractViolationError):
        make_point_mass().forward_map([1.0, 2.0])


def test_build_problem_applies_overrides(narrow_passage):
    model = build_problem(narrow_passage)
    assert model.kind == ModelKind.POINT_MASS_2D
    np.testing.assert_allclose(model.lowdim_state_bounds[0], [0.0, 0.0])
    np.testing.assert_allclose(model.lowdim_state_bounds[1], [10.0, 10.0])
    np.testing.assert_allclose(model.lowdim_control_bounds[1], [0.1, 0.1])
    assert model.time_bounds == (0.0, 100.0)
    np.testing.assert_allclose(model.goal_center, [9.0, 8.0])

    spec = build_collision_spec(narrow_passage)
    assert spec.count == 2
    assert spec.safety_margin == pytest.approx(0.01)
