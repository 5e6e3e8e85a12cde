import numpy as np
import pytest

from idnp.services.grid import (
    bracket_index,
    build_control_grid,
    build_uniform,
    cell_vertices,
    locate_cell,
    refine,
    split_cell,
)
from idnp.types.exceptions import ContractViolationError, RefinementLimitError


def random_refined_grid(rng: np.random.Generator, depth: int):
    grid = build_uniform(([0.0, -1.0], [2.0, 1.0]), [3, 2])
    for _ in range(depth):
        for w in rng.uniform([0.0, -1.0], [2.0, 1.0], size=(4, 2)):
            split_cell(grid, locate_cell(grid, w))
    return grid


def test_uniform_grid_counts():
    grid = build_uniform(([0.0, 0.0], [10.0, 10.0]), [10, 10])
    assert grid.vertex_count == 121
    assert grid.leaf_count == 100
    assert grid.has_vertex((3.0, 7.0))
    assert not grid.has_vertex((3.5, 7.0))


def test_split_adds_midpoints():
    grid = build_uniform(([0.0, 0.0], [4.0, 4.0]), [4, 4])
    cell = locate_cell(grid, [1.5, 1.5])
    created = split_cell(grid, cell)
    assert sorted(created) == sorted(
        [(1.5, 1.0), (1.0, 1.5), (1.5, 1.5), (2.0, 1.5), (1.5, 2.0)]
    )
    assert grid.vertex_count == 25 + 5
    assert grid.leaf_count == 16 + 3

    # the neighbour shares the (2.0, 1.5) midpoint, so only four are new
    neighbour = locate_cell(grid, [2.5, 1.5])
    assert len(split_cell(grid, neighbour)) == 4


def test_split_keeps_interpolated_values():
    grid = build_uniform(([0.0], [1.0]), [1])
    grid.values = np.array([1.0, 3.0])
    split_cell(grid, locate_cell(grid, [0.4]))
    assert grid.values[grid.vertex_id((0.5,))] == pytest.approx(2.0)


def test_cell_vertices_order():
    grid = build_uniform(([0.0, 0.0], [1.0, 1.0]), [1, 1])
    corners = cell_vertices(locate_cell(grid, [0.5, 0.5]))
    assert corners == [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]


def test_interpolation_weights(rng):
    for depth in range(5):
        grid = random_refined_grid(rng, depth)
        points = rng.uniform([0.0, -1.0], [2.0, 1.0], size=(2000, 2))
        corner_ids, weights = grid.interpolation(points)
        assert np.all(weights >= 0.0)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)

        slope = rng.normal(size=2)
        offset = rng.normal()
        table = grid.coords @ slope + offset
        np.testing.assert_allclose(
            grid.interpolate(table, points), points @ slope + offset, atol=1e-10
        )
        assert corner_ids.shape == (2000, 4)


def test_points_outside_are_clamped():
    grid = build_uniform(([0.0], [1.0]), [2])
    table = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(grid.interpolate(table, np.array([[-3.0], [7.0]])), [0.0, 2.0])


def test_refinement_limit():
    grid = build_uniform(([0.0], [1.0]), [1])
    with pytest.raises(RefinementLimitError):
        for _ in range(40):
            split_cell(grid, locate_cell(grid, [0.3]))


def test_split_rejects_inner_cell():
    grid = build_uniform(([0.0], [1.0]), [1])
    root = grid.cells[0]
    split_cell(grid, root)
    with pytest.raises(ContractViolationError):
        split_cell(grid, root)


@pytest.mark.parametrize(
    "tau, expected",
    [(0.0, 0), (0.5, 1), (1.0, 1), (1.5, 2), (2.0, 2)],
)
def test_bracket_index(tau, expected):
    assert bracket_index([0.0, 1.0, 2.0], tau) == expected


def test_refine_touches_bracketing_grids_only():
    grids = [build_uniform(([0.0, 0.0], [4.0, 4.0]), [4, 4], j) for j in range(4)]
    times = [0.0, 1.0, 2.0, 3.0]
    result = refine(grids, [(1.5, np.array([2.5, 2.5]))], times)

    assert result.added == [0, 5, 5, 0]
    assert [len(c) for c in result.split_cells] == [0, 1, 1, 0]
    for g in (1, 2):
        cell = result.split_cells[g][0]
        np.testing.assert_allclose(cell.lower, [2.0, 2.0])
        np.testing.assert_allclose(cell.upper, [3.0, 3.0])
    assert [g.vertex_count for g in grids] == [25, 30, 30, 25]


def test_refine_splits_a_shared_cell_once():
    grids = [build_uniform(([0.0], [1.0]), [2], j) for j in range(2)]
    result = refine(grids, [(1.0, np.array([0.2])), (1.0, np.array([0.3]))], [0.0, 1.0])
    assert result.added == [1, 1]


def test_refine_checks_times():
    grids = [build_uniform(([0.0], [1.0]), [2], j) for j in range(2)]
    with pytest.raises(ContractViolationError):
        refine(grids, [(5.0, np.array([0.2]))], [0.0, 1.0])
    with pytest.raises(ContractViolationError):
        refine(grids, [], [0.0, 1.0, 2.0])


def test_build_uniform_checks_input():
    with pytest.raises(ContractViolationError):
        build_uniform(([0.0], [0.0]), [2])
    with pytest.raises(ContractViolationError):
        build_uniform(([0.0], [1.0]), [0])
    with pytest.raises(ContractViolationError):
        build_uniform(([0.0, 0.0], [1.0, 1.0]), [2])


def test_control_grid():
    control = build_control_grid(
        (np.array([-0.5]), np.array([0.5])), (0.0, 1.0), 2, [3], 1
    )
    np.testing.assert_allclose(control.controls[:, 0], [-0.5, 0.0, 0.5])
    np.testing.assert_allclose(control.steps, [0.5])

    control = build_control_grid(
        (np.array([-1.0, -1.0]), np.array([1.0, 1.0])), (2.0, 10.0), 2, [2, 2], 3
    )
    assert control.controls.shape == (4, 2)
    np.testing.assert_allclose(control.steps, [1.0, 3.0, 5.0])
