import itertools

import numpy as np
import pytest

from conftest import make_line
from idnp.models.config import ControlGrid, DpConfig
from idnp.models.scenario import ObjectiveVariant
from idnp.services.dp import (
    WaypointSequence,
    backward_sweep,
    extract_waypoints,
    infeasibility_check,
    interp,
    nearest_vertex,
)
from idnp.services.grid import build_uniform, locate_cell
from idnp.services.penalty import PenaltyField
from idnp.types.exceptions import ContractViolationError


def line_grids(num_steps: int, divisions: int = 2):
    return [build_uniform(([0.0], [1.0]), [divisions], j) for j in range(num_steps + 1)]


def values_at(grid, xs) -> np.ndarray:
    return np.array([grid.values[grid.vertex_id((x,))] for x in xs])


def line_config(controls, steps, num_steps: int, **kwargs) -> DpConfig:
    grid = ControlGrid(points=[[v] for v in controls], step_sizes=list(steps))
    return DpConfig(num_steps=num_steps, control_grid=grid, **kwargs)


@pytest.fixture
def zero_penalty():
    field = PenaltyField(rho=1.0, mark_value=10.0, evaluator=lambda w: 0.0)
    yield field
    field.release()


def test_worked_example(zero_penalty):
    model = make_line()
    grids = line_grids(2)
    cfg = line_config([-0.5, 0.0, 0.5], [0.5], 2)

    sweep = backward_sweep(grids, model, zero_penalty, cfg)
    np.testing.assert_allclose(values_at(grids[2], [0.0, 0.5, 1.0]), [1.0, 0.5, 0.0])
    np.testing.assert_allclose(values_at(grids[1], [0.0, 0.5, 1.0]), [0.75, 0.25, 0.0])
    assert values_at(grids[0], [0.0])[0] == pytest.approx(0.5)

    seq = extract_waypoints(grids, model, zero_penalty, cfg, np.array([0.0]), sweep)
    assert seq.value == pytest.approx(0.5)
    np.testing.assert_allclose(seq.points[:, 0], [0.0, 0.25, 0.5])
    np.testing.assert_allclose(seq.times, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(seq.controls[:, 0], [0.5, 0.5])


def enumerate_value(model, table, rho, controls, steps, num_steps, w0, weighted=True) -> float:
    """Minimum over every control and step sequence with clamped successors."""
    best = np.inf
    choices = list(itertools.product(controls, steps))
    for path in itertools.product(choices, repeat=num_steps):
        w, cost = w0, 0.0
        for v, h in path:
            cost += rho * table[round(w * 4)] * (h if weighted else 1.0)
            w = min(max(w + h * v, 0.0), 1.0)
        miss = max(abs(w - model.goal_center[0]) - model.goal_radius, 0.0)
        best = min(best, cost + model.goal_scale * miss)
    return best


@pytest.mark.parametrize("variant", list(ObjectiveVariant))
def test_sweep_matches_enumeration(rng, variant):
    # successors stay on the quarter lattice, so interpolation is exact
    controls, steps, num_steps = [-0.5, 0.0, 0.5], [0.5, 1.0], 3
    for _ in range(25):
        table = rng.uniform(0.0, 2.0, size=5)
        goal = float(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
        start = float(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
        rho = float(rng.uniform(0.5, 3.0))
        model = make_line(goal_center=[goal], initial_state=[start])
        field = PenaltyField(rho=rho, mark_value=1.0, evaluator=lambda w: table[round(w[0] * 4)])
        try:
            grids = line_grids(num_steps, divisions=4)
            cfg = line_config(controls, steps, num_steps, objective_variant=variant)
            sweep = backward_sweep(grids, model, field, cfg)
            seq = extract_waypoints(grids, model, field, cfg, model.initial_state, sweep)
        finally:
            field.release()

        weighted = variant == ObjectiveVariant.STEP_WEIGHTED
        expected = enumerate_value(model, table, rho, controls, steps, num_steps, start, weighted)
        assert values_at(grids[0], [start])[0] == pytest.approx(expected)
        assert seq.value == pytest.approx(expected)


def test_marks_steer_the_path(zero_penalty):
    model = make_line(goal_center=[0.5], initial_state=[0.5])
    grids = line_grids(2)
    cfg = line_config([0.0, -0.5, 0.5], [1.0], 2)

    sweep = backward_sweep(grids, model, zero_penalty, cfg)
    seq = extract_waypoints(grids, model, zero_penalty, cfg, model.initial_state, sweep)
    np.testing.assert_allclose(seq.points[:, 0], [0.5, 0.5, 0.5])

    grids[1].marks[grids[1].vertex_id((0.5,))] += zero_penalty.mark_value
    sweep = backward_sweep(grids, model, zero_penalty, cfg)
    seq = extract_waypoints(grids, model, zero_penalty, cfg, model.initial_state, sweep)
    assert seq.points[1, 0] != pytest.approx(0.5)


def test_ties_go_to_the_first_control(zero_penalty):
    model = make_line(goal_center=[0.5], initial_state=[0.5])
    x0 = model.initial_state

    grids = line_grids(1)
    cfg = line_config([-0.5, 0.5], [1.0], 1)
    sweep = backward_sweep(grids, model, zero_penalty, cfg)
    seq = extract_waypoints(grids, model, zero_penalty, cfg, x0, sweep)
    assert seq.points[1, 0] == pytest.approx(0.0)

    grids = line_grids(1)
    cfg = line_config([0.5, -0.5], [1.0], 1)
    sweep = backward_sweep(grids, model, zero_penalty, cfg)
    seq = extract_waypoints(grids, model, zero_penalty, cfg, x0, sweep)
    assert seq.points[1, 0] == pytest.approx(1.0)


def test_ties_go_to_the_first_step(zero_penalty):
    model = make_line(goal_center=[0.5], initial_state=[0.5])
    grids = line_grids(1)
    cfg = line_config([0.0], [0.5, 1.0], 1)
    backward_sweep(grids, model, zero_penalty, cfg)
    seq = extract_waypoints(grids, model, zero_penalty, cfg, model.initial_state)
    np.testing.assert_allclose(seq.steps, [0.5])


def test_out_of_bounds_successors(zero_penalty):
    model = make_line(goal_center=[1.0], initial_state=[1.0])
    cfg = line_config([0.5, 0.0], [1.0], 1, clamp_out_of_bounds=False)
    grids = line_grids(1)
    sweep = backward_sweep(grids, model, zero_penalty, cfg)
    # 1 + 0.5 leaves W, so the sweep has to stay put
    assert sweep.policies[0][grids[0].vertex_id((1.0,))] == 1
    assert grids[0].values[grids[0].vertex_id((1.0,))] == 0.0


def test_sweep_contracts(zero_penalty):
    model = make_line()
    with pytest.raises(ContractViolationError):
        backward_sweep(line_grids(3), model, zero_penalty, line_config([0.0], [0.5], 2))


def test_interp_and_nearest_vertex():
    grid = build_uniform(([0.0, 0.0], [1.0, 1.0]), [1, 1])
    corners = dict(interp(grid, [0.25, 0.5]))
    assert corners[(0.0, 0.0)] == pytest.approx(0.375)
    assert corners[(1.0, 1.0)] == pytest.approx(0.125)
    assert sum(corners.values()) == pytest.approx(1.0)
    assert nearest_vertex(grid, [0.8, 0.9]) == (1.0, 1.0)


def test_infeasibility_check():
    seq = WaypointSequence(
        times=[0.0, 1.0], points=[[0.0], [0.5]], controls=[[0.5]], steps=[1.0], value=3.0
    )
    assert infeasibility_check(seq, 2.0)
    assert infeasibility_check(seq, 3.0)
    assert not infeasibility_check(seq, 3.5)


def test_sequence_contracts():
    with pytest.raises(ContractViolationError):
        WaypointSequence(
            times=[0.0, 2.0], points=[[0.0], [0.5]], controls=[[0.5]], steps=[1.0], value=0.0
        )
    with pytest.raises(ContractViolationError):
        WaypointSequence(times=[0.0, 1.0], points=[[0.0]], controls=[[0.5]], steps=[1.0], value=0.0)


def test_marks_never_lower_the_value(rng, zero_penalty):
    model = make_line(goal_center=[0.75], initial_state=[0.25])
    cfg = line_config([-0.5, 0.0, 0.5], [0.5, 1.0], 3)
    grids = line_grids(3, divisions=4)
    backward_sweep(grids, model, zero_penalty, cfg)
    before = [g.values.copy() for g in grids]

    for _ in range(10):
        grid = grids[int(rng.integers(0, len(grids)))]
        grid.marks[int(rng.integers(0, grid.vertex_count))] += zero_penalty.mark_value
        backward_sweep(grids, model, zero_penalty, cfg)
        after = [g.values.copy() for g in grids]
        for old, new in zip(before, after):
            assert np.all(new >= old - 1e-12)
        before = after


def test_split_keeps_the_swept_value_function(rng, zero_penalty):
    model = make_line(goal_center=[0.6], initial_state=[0.1])
    cfg = line_config([-0.5, 0.0, 0.5], [0.3, 0.7], 2)
    grids = line_grids(2, divisions=4)
    backward_sweep(grids, model, zero_penalty, cfg)

    grid = grids[1]
    old_count = grid.vertex_count
    old_values = grid.values.copy()
    samples = rng.uniform(0.0, 1.0, size=(50, 1))
    before = grid.interpolate(grid.values, samples)

    for w in ([0.3], [0.6], [0.35]):
        grid.split(locate_cell(grid, w))

    assert grid.vertex_count > old_count
    np.testing.assert_array_equal(grid.values[:old_count], old_values)
    np.testing.assert_allclose(grid.interpolate(grid.values, samples), before, atol=1e-12)


def test_start_outside_w_is_rejected(zero_penalty):
    model = make_line()
    grids = line_grids(2)
    cfg = line_config([-0.5, 0.0, 0.5], [0.5], 2)
    sweep = backward_sweep(grids, model, zero_penalty, cfg)

    with pytest.raises(ContractViolationError):
        extract_waypoints(grids, model, zero_penalty, cfg, np.array([1.5]), sweep)
    with pytest.raises(ContractViolationError):
        extract_waypoints(grids, model, zero_penalty, cfg, np.array([-0.1]), sweep)

    seq = extract_waypoints(grids, model, zero_penalty, cfg, np.array([1.0 + 1e-12]), sweep)
    assert seq.points[0, 0] == 1.0
