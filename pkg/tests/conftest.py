from pathlib import Path

import numpy as np
import pytest

from idnp.services.geometry import CollisionSpec, rectangle
from idnp.services.problem import LowDimProblem, PlanarArm3, PointMass2D
from idnp.utils.helper import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def make_point_mass(**overrides) -> PointMass2D:
    params = {
        **PointMass2D.DEFAULTS,
        "initial_state": [1.0, 1.0, 0.0, 0.0],
        "goal_center": [9.0, 8.0],
        "goal_radius": 1.0,
        "goal_scale": 1e3,
        "body_radius": 0.1,
    }
    params.update(overrides)
    return PointMass2D(**params)


def make_arm(**overrides) -> PlanarArm3:
    params = {
        **PlanarArm3.DEFAULTS,
        "initial_state": [0.0] * 6,
        "goal_center": [0.0, 2.0],
        "goal_radius": 0.2,
        "goal_scale": 1e3,
        "body_radius": 0.05,
    }
    params.update(overrides)
    return PlanarArm3(**params)


def make_line(**overrides) -> LowDimProblem:
    """1-D problem on W = [0, 1] with V = [-0.5, 0.5]."""
    params = {
        "lowdim_state_bounds": ([0.0], [1.0]),
        "lowdim_control_bounds": ([-0.5], [0.5]),
        "time_bounds": (0.0, 1.0),
        "initial_state": [0.0],
        "goal_center": [1.0],
        "goal_radius": 1e-12,
        "goal_scale": 1.0,
    }
    params.update(overrides)
    return LowDimProblem(**params)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


@pytest.fixture
def point_mass() -> PointMass2D:
    return make_point_mass()


@pytest.fixture
def arm() -> PlanarArm3:
    return make_arm()


@pytest.fixture
def square_obstacle() -> CollisionSpec:
    """The [4, 6]^2 block with a 1 cm safety margin."""
    return CollisionSpec([rectangle(4.0, 4.0, 6.0, 6.0)], 0.01)


@pytest.fixture
def no_obstacles() -> CollisionSpec:
    return CollisionSpec([], 0.01)


@pytest.fixture
def narrow_passage():
    return load_scenario(SCENARIOS / "narrow_passage.json")


@pytest.fixture
def free_space():
    return load_scenario(SCENARIOS / "free_space.yaml")
