import numpy as np
import pytest
from shapely.geometry import Polygon

from idnp.services.geometry import (
    CollisionSpec,
    ConvexPolygon,
    collision_values,
    link_polygon,
    rectangle,
    signed_distance,
    signed_distance_with_direction,
)
from idnp.types.exceptions import ContractViolationError, InvalidGeometryError


def test_separated_rectangles():
    a = rectangle(0.0, 0.0, 1.0, 1.0)
    b = rectangle(2.0, 0.0, 3.0, 1.0)
    assert signed_distance(a, b) == pytest.approx(1.0)

    corner = rectangle(2.0, 2.0, 3.0, 3.0)
    assert signed_distance(a, corner) == pytest.approx(np.sqrt(2.0))


def test_overlap_is_negative_penetration():
    a = rectangle(0.0, 0.0, 2.0, 2.0)
    b = rectangle(1.5, 0.0, 3.0, 2.0)
    sd, escape = signed_distance_with_direction(a, b)
    assert sd == pytest.approx(-0.5)
    np.testing.assert_allclose(escape, [-1.0, 0.0], atol=1e-12)


def test_touching_is_zero():
    a = rectangle(0.0, 0.0, 1.0, 1.0)
    b = rectangle(1.0, 0.0, 2.0, 1.0)
    assert signed_distance(a, b) == pytest.approx(0.0, abs=1e-12)


def test_symmetric_and_matches_shapely_when_separated(rng):
    for _ in range(200):
        a_lo = rng.uniform(-5, 5, size=2)
        b_lo = rng.uniform(-5, 5, size=2)
        a_size = rng.uniform(0.2, 2.0, size=2)
        b_size = rng.uniform(0.2, 2.0, size=2)
        a = rectangle(*a_lo, *(a_lo + a_size))
        b = rectangle(*b_lo, *(b_lo + b_size))

        assert signed_distance(a, b) == pytest.approx(signed_distance(b, a), abs=1e-12)

        shape_a, shape_b = Polygon(a.vertices), Polygon(b.vertices)
        if not shape_a.intersects(shape_b):
            assert signed_distance(a, b) == pytest.approx(shape_a.distance(shape_b), abs=1e-9)
        else:
            assert signed_distance(a, b) <= 1e-12


def test_rotated_link_against_block():
    link = link_polygon([0.0, 0.0], [2.0, 2.0], 0.1)
    block = rectangle(3.0, 0.0, 4.0, 1.0)
    expected = Polygon(link.vertices).distance(Polygon(block.vertices))
    assert signed_distance(link, block) == pytest.approx(expected, abs=1e-9)


def test_collision_values_use_margin():
    body = rectangle(0.0, 0.0, 1.0, 1.0)
    spec = CollisionSpec([rectangle(1.5, 0.0, 2.5, 1.0), rectangle(0.0, 3.0, 1.0, 4.0)], 0.01)
    np.testing.assert_allclose(collision_values([body], spec), [0.01 - 0.5, 0.01 - 2.0])


def test_collision_values_need_bodies():
    with pytest.raises(ContractViolationError):
        collision_values([], CollisionSpec([rectangle(0, 0, 1, 1)], 0.0))


@pytest.mark.parametrize(
    "vertices",
    [
        [(0, 0), (1, 0)],
        [(0, 0), (0, 1), (1, 1), (1, 0)],
        [(0, 0), (1, 0), (1, 0), (0, 1)],
        [(0, 0), (1, 0), (2, 0), (1, 1)],
    ],
)
def test_invalid_polygons(vertices):
    with pytest.raises(InvalidGeometryError):
        ConvexPolygon(vertices)


def test_invalid_links():
    with pytest.raises(InvalidGeometryError):
        link_polygon([1.0, 1.0], [1.0, 1.0], 0.1)
    with pytest.raises(InvalidGeometryError):
        link_polygon([0.0, 0.0], [1.0, 0.0], 0.0)


def test_negative_margin_rejected():
    with pytest.raises(ContractViolationError):
        CollisionSpec([], -0.1)


def test_overlapping_squares():
    body = rectangle(0.0, 0.0, 2.0, 2.0)
    block = rectangle(1.0, 1.0, 3.0, 3.0)
    assert signed_distance(body, block) == pytest.approx(-1.0)
    np.testing.assert_allclose(collision_values([body], CollisionSpec([block], 0.0)), [1.0])


def shifted(polygon: ConvexPolygon, offset: np.ndarray) -> ConvexPolygon:
    return ConvexPolygon(np.asarray(polygon.vertices) + offset)


def random_rectangle(rng: np.random.Generator) -> ConvexPolygon:
    lo = rng.uniform(-3.0, 3.0, size=2)
    return rectangle(*lo, *(lo + rng.uniform(0.2, 2.0, size=2)))


def test_collision_values_are_translation_invariant(rng):
    for _ in range(100):
        body = link_polygon(rng.uniform(-2, 2, size=2), rng.uniform(-2, 2, size=2) + 2.5, 0.1)
        spec = CollisionSpec([random_rectangle(rng), random_rectangle(rng)], 0.01)
        offset = rng.uniform(-10.0, 10.0, size=2)
        moved = CollisionSpec([shifted(o, offset) for o in spec.obstacles], 0.01)
        np.testing.assert_allclose(
            collision_values([shifted(body, offset)], moved),
            collision_values([body], spec),
            atol=1e-9,
        )


def test_collision_values_are_1_lipschitz_in_body_position(rng):
    for _ in range(100):
        body = random_rectangle(rng)
        spec = CollisionSpec([random_rectangle(rng), random_rectangle(rng)], 0.01)
        offset = rng.uniform(-0.5, 0.5, size=2)
        change = collision_values([shifted(body, offset)], spec) - collision_values([body], spec)
        assert np.all(np.abs(change) <= np.linalg.norm(offset) + 1e-9)
