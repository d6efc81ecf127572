import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.contours import (
    OpenContour,
    count_contours,
    delta_gamma,
    enumerate_contours,
    enumerate_contours_parallel,
    nabla_gamma,
    prefix_tasks,
    random_contour,
    validate_contour,
)
from src.clusters import Bond
from src.errors import BrokenChainError, ContourError, DuplicateEdgeError, SplittingRuleError
from src.lattice import ORIGIN, LatticePoint, WallDirection
from src.verify import naive_contours


def test_validate_returns_step_string():
    g = validate_contour([(1, 0), (1, 1), (2, 1), (2, 2), (1, 2), (1, 1), (0, 1)])
    assert g.steps == "NENWSW"
    assert g.end == (0, 1)
    assert g.length == 6


def test_broken_chain():
    with pytest.raises(BrokenChainError) as e:
        validate_contour([(0, 0)])
    assert e.value.index == 0
    with pytest.raises(BrokenChainError) as e:
        validate_contour([(0, 0), (1, 0), (2, 1)])
    assert e.value.index == 2


def test_closed_path_rejected():
    with pytest.raises(ContourError):
        validate_contour([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])


def test_repeated_bond():
    with pytest.raises(DuplicateEdgeError) as e:
        validate_contour([(0, 0), (1, 0), (0, 0), (0, 1)])
    assert e.value.index == 2


def test_crossing_breaks_splitting_rule():
    with pytest.raises(SplittingRuleError) as e:
        validate_contour([(0, 1), (1, 1), (2, 1), (2, 2), (1, 2), (1, 1), (1, 0)])
    assert e.value.index == 5


def test_single_edge_neighborhoods():
    g = OpenContour(ORIGIN, "E")
    assert delta_gamma(g) == {(0, 0), (0, -1), (-1, -1), (1, 0)}
    assert len(g.neighborhoods.nabla) == 3
    assert sum(g.neighborhoods.nabla.values()) == 3


def test_nabla_counts_shared_bonds():
    nabla = nabla_gamma(OpenContour(ORIGIN, "EE"))
    first, second = Bond.between((0, 0), (1, 0)), Bond.between((1, 0), (2, 0))
    assert nabla[first] == 2 and nabla[second] == 2
    assert nabla[Bond.between((-1, 0), (0, 0))] == 1
    assert sum(nabla.values()) == 6


def test_enumeration_order():
    steps = [g.steps for g in enumerate_contours(ORIGIN, (1, 0), 3)]
    assert steps == ["E", "NES", "SEN"]
    assert count_contours(ORIGIN, (1, 0), 3) == 3


def test_enumeration_rejects_equal_endpoints():
    with pytest.raises(ContourError):
        list(enumerate_contours(ORIGIN, ORIGIN, 4))


def test_enumeration_below_distance_is_empty():
    assert count_contours(ORIGIN, (3, 0), 2) == 0


@pytest.mark.parametrize("b", [(1, 0), (2, 1), (-1, 2), (0, -2)])
def test_enumeration_matches_brute_force(b):
    assert {g.steps for g in enumerate_contours(ORIGIN, b, 6)} == naive_contours(ORIGIN, b, 6)


def test_enumerated_contours_are_valid_and_unique():
    found = list(enumerate_contours(ORIGIN, (2, 1), 7))
    assert len({g.steps for g in found}) == len(found)
    for g in found:
        assert validate_contour(g.vertices) == g


def test_half_plane_constraint():
    wall = WallDirection.from_pair(0, 1)
    everything = list(enumerate_contours(ORIGIN, (3, 0), 7))
    restricted = list(enumerate_contours(ORIGIN, (3, 0), 7, wall))
    assert restricted == [g for g in everything if g.in_half_plane(wall)]
    assert 0 < len(restricted) < len(everything)
    assert count_contours(ORIGIN, (0, -1), 5, wall) == 0


def test_symmetric_counts():
    assert count_contours(ORIGIN, (2, 1), 7) == count_contours(ORIGIN, (1, 2), 7)
    assert count_contours(ORIGIN, (2, 1), 7) == count_contours(ORIGIN, (-2, -1), 7)


def test_prefix_tasks_cover_enumeration():
    tasks = prefix_tasks(ORIGIN, (2, 1), 7, None, 3)
    done = [s for kind, s in tasks if kind == "done"]
    prefixes = [s for kind, s in tasks if kind == "prefix"]
    assert all(len(s) == 3 for s in prefixes)
    rebuilt = []
    for kind, s in tasks:
        if kind == "done":
            rebuilt.append(s)
        else:
            rebuilt.extend(g.steps for g in enumerate_contours(ORIGIN, (2, 1), 7, prefix=s))
    assert rebuilt == [g.steps for g in enumerate_contours(ORIGIN, (2, 1), 7)]
    assert done == []


def test_parallel_enumeration_keeps_order():
    serial = list(enumerate_contours(ORIGIN, (3, 1), 8))
    parallel = enumerate_contours_parallel(ORIGIN, (3, 1), 8, threads=2)
    assert parallel == serial


@given(st.integers(0, 10_000), st.integers(1, 12))
@settings(max_examples=100, deadline=None)
def test_symmetries_preserve_validity(seed, length):
    g = random_contour(np.random.Generator(np.random.Philox(seed)), length)
    assert g.length == length
    for image in (g.reversed_contour(), g.reflect_diagonal(), g.rotate_half_turn(), g.translate((3, -2))):
        assert validate_contour(image.vertices) == image


@given(st.integers(0, 10_000), st.integers(2, 10))
@settings(max_examples=50, deadline=None)
def test_slices_concatenate_back(seed, length):
    g = random_contour(np.random.Generator(np.random.Philox(seed)), length)
    k = length // 2
    assert g.slice(0, k).concat(g.slice(k, length)) == g
    assert g.slice(0, k).end == g.vertices[k]
    with pytest.raises(ContourError):
        g.concat(OpenContour(LatticePoint(100, 100), "E"))
