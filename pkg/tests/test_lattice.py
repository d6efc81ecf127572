import math

import pytest
from hypothesis import given, strategies as st

from src.errors import ConstantsError, EmptyClusterError, InputOutsideHalfPlaneError
from src.lattice import (
    INFINITE,
    AnalysisConstants,
    Cutoffs,
    LatticePoint,
    WallDirection,
    cell_min_dot,
    cell_straddles_wall,
    diam_inf,
    in_cone,
    in_diamond,
    wall_distance,
    wall_point,
)


def test_point_arithmetic():
    p, q = LatticePoint(2, -1), LatticePoint(-3, 4)
    assert p + q == (-1, 3)
    assert p - q == (5, -5)
    assert -p == (-2, 1)
    assert p * 3 == (6, -3)
    assert p.l1 == 3
    assert q.linf == 4
    assert q.level == 1


def test_wall_direction_needs_coprime_pair():
    with pytest.raises(ValueError):
        WallDirection(2, 4)
    assert WallDirection.from_pair(2, 4) == WallDirection(1, 2)
    with pytest.raises(ValueError):
        WallDirection.from_pair(0, 0)


def test_wall_tangent_and_admissibility():
    n = WallDirection.from_pair(1, 2)
    assert n.tangent == (2, -1)
    assert n.dot(n.tangent) == 0
    assert n.admissible
    assert not WallDirection.from_pair(-2, 1).admissible


def test_wall_from_angle():
    n = WallDirection.from_angle(math.pi / 2)
    assert (n.a, n.b) == (0, 1)


def test_wall_distance(wall):
    assert wall_distance((5, 0), wall) == 1
    assert wall_distance((0, 3), wall) == 4
    with pytest.raises(InputOutsideHalfPlaneError):
        wall_distance((0, -1), wall)


def test_cells_straddling_horizontal_wall(wall):
    assert cell_min_dot((0, -1), wall) == -1
    assert cell_straddles_wall((0, -1), wall)
    assert not cell_straddles_wall((0, 0), wall)
    assert not cell_straddles_wall((0, -2), wall)


def test_cone_and_diamond():
    assert in_cone((1, 0), (0, 0))
    assert in_cone((2, -1), (0, 0))
    assert not in_cone((1, -1), (0, 0))
    assert in_diamond((1, 0), (0, 0), (2, 0))
    assert not in_diamond((3, 0), (0, 0), (2, 0))


def test_wall_point_lies_on_wall():
    n = WallDirection.from_pair(1, 2)
    x = wall_point(3, n)
    assert n.dot(x) == 0 and x == (6, -3)


def test_diam_inf():
    assert diam_inf([(0, 0)]) == 1
    assert diam_inf([(0, 0), (1, 1)]) == 2
    assert diam_inf([(0, 0), (2, 0)]) == INFINITE
    with pytest.raises(EmptyClusterError):
        diam_inf([])


@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20))
def test_cone_is_transitive_through_midpoints(x1, y1, x2, y2):
    # p in 0 + Y and q in p + Y imply q in 0 + Y
    p, q = (x1, y1), (x1 + x2, y1 + y2)
    if in_cone(p, (0, 0)) and in_cone(q, p):
        assert in_cone(q, (0, 0))


def test_constants_validation():
    with pytest.raises(ConstantsError):
        AnalysisConstants(beta=0.0, chi=1.0)
    with pytest.raises(ConstantsError):
        AnalysisConstants(beta=1.0, chi=1.0, nu_g=0.1, delta=0.1)
    with pytest.raises(ConstantsError):
        Cutoffs(max_cluster_diam=0)


def test_require_no_pinning():
    AnalysisConstants(beta=4.0, chi=0.75).require_no_pinning()
    with pytest.raises(ConstantsError):
        AnalysisConstants(beta=4.0, chi=0.5).require_no_pinning()


def test_max_len_for(constants):
    assert constants.max_len_for((1, 0)) == 2
    assert constants.max_len_for((3, 2)) == 9
    fixed = AnalysisConstants(beta=4.0, chi=2.0, cutoffs=Cutoffs(max_contour_len=6))
    assert fixed.max_len_for((1, 0)) == 6
    assert fixed.max_len_for((5, 4)) == 9


def test_decay(constants):
    assert constants.decay(1) == pytest.approx(math.exp(-16.0))
    assert constants.with_beta(2.0).decay(0) == pytest.approx(math.exp(-4.0))
