import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from src.effwalk import (
    DOWN_STEP,
    LEFT_STEP,
    Atom,
    LawMode,
    Regime,
    StepLaw,
    alili_doney_check,
    build_step_law,
    constrained_green,
    decompose_walk,
    decomposition_sandwich,
    diamond_window,
    law_eps,
    local_limit_probe,
    sequence_green,
    v_walk_probe,
)
from src.errors import CapTooSmallError, InputOutsideHalfPlaneError, WindowOverflowError
from src.lattice import E1, E2, ORIGIN, HORIZONTAL_WALL, WallDirection
from src.renewal import TiltVector, initial_tilt, tilt_solve


def law_towards(beta, direction):
    tilt = TiltVector.from_h(initial_tilt(direction, beta), beta, residual_norm=0.0, direction=direction)
    return build_step_law("BASIC", tilt).normalised()


def test_basic_law_atoms(basic_law):
    tilt = basic_law.tilt
    assert basic_law.prob(E1) == pytest.approx(math.exp(-tilt.a))
    assert basic_law.prob(E2) == pytest.approx(math.exp(-tilt.b))
    assert basic_law.prob(DOWN_STEP) == pytest.approx(math.exp(-4.0 - tilt.Delta))
    assert basic_law.prob(LEFT_STEP) == pytest.approx(math.exp(-4.0 - tilt.Delta_b))
    assert [s for s, _ in basic_law.merged()] == [E2, E1, LEFT_STEP, DOWN_STEP]
    assert basic_law.max_level == 3
    assert basic_law.normalised().total == pytest.approx(1.0)


def test_basic_law_without_left_step():
    tilt = TiltVector.from_h((3.9, 1.0), 4.0, residual_norm=0.0)
    law = build_step_law("BASIC", tilt, include_left=False)
    assert len(law.atoms) == 3
    assert law.non_basic_second_moment == 0.0
    with pytest.raises(ValueError):
        build_step_law(LawMode.TABLE, tilt)


def test_table_law_is_normalised(zero_table):
    tilt = tilt_solve((1.0, 0.5), zero_table)
    law = build_step_law("TABLE", tilt, zero_table)
    assert law.total == pytest.approx(1.0, abs=1e-10)
    assert abs(law.deficiency) < 1e-10
    assert law.non_basic_second_moment > 0


def test_diamond_window():
    assert diamond_window(ORIGIN, (2, 0)) == [(0, 0), (0, 1), (1, 0), (2, -1), (2, 0)]
    assert diamond_window(ORIGIN, (1, -1)) == []
    assert diamond_window((1, 1), ORIGIN) == []


def test_single_step_green(basic_law):
    green = constrained_green(ORIGIN, (1, 0), None, basic_law)
    assert green.p_plus == pytest.approx(basic_law.prob(E1))
    assert green.p_hat_plus == green.p_plus
    assert constrained_green(ORIGIN, ORIGIN, None, basic_law).p_plus == 1.0


def test_strict_wall_excludes_touching_walks(basic_law):
    green = constrained_green(ORIGIN, (3, 0), HORIZONTAL_WALL, basic_law)
    assert green.p_plus == pytest.approx(basic_law.prob(E1) ** 3)
    assert green.p_hat_plus == 0.0


def test_green_rejects_points_below_wall(basic_law):
    with pytest.raises(InputOutsideHalfPlaneError):
        constrained_green(ORIGIN, (3, -1), HORIZONTAL_WALL, basic_law)


def test_window_cap(basic_law):
    with pytest.raises(WindowOverflowError):
        constrained_green(ORIGIN, (6, 6), None, basic_law, window_cap=10)


def test_step_cap_reports_truncation(basic_law):
    green = constrained_green(ORIGIN, (3, 0), None, basic_law, max_steps=2)
    assert green.p_plus == 0.0
    assert green.truncated_mass == pytest.approx(basic_law.prob(E1) ** 3)


@given(st.integers(-2, 6), st.integers(0, 6))
@settings(max_examples=60, deadline=None)
def test_green_matches_sequence_sum(x, y):
    law = law_towards(4.0, (1.0, 0.5))
    v = (x, y)
    assume(v != (0, 0) and x + y <= 7)
    green = constrained_green(ORIGIN, v, HORIZONTAL_WALL, law)
    assert green.p_plus == pytest.approx(sequence_green(ORIGIN, v, HORIZONTAL_WALL, law), rel=1e-12, abs=1e-300)
    assert green.p_hat_plus == pytest.approx(
        sequence_green(ORIGIN, v, HORIZONTAL_WALL, law, strict=True), rel=1e-12, abs=1e-300
    )
    assert green.p_hat_plus <= green.p_plus <= constrained_green(ORIGIN, v, None, law).p_plus * (1 + 1e-12)


@pytest.mark.parametrize("strict", [False, True])
@pytest.mark.parametrize("v", [(3, 1), (2, 2), (-1, 4), (5, 0)])
def test_alili_doney_identity(basic_law, v, strict):
    result = alili_doney_check(v, HORIZONTAL_WALL, basic_law, len_cap=10, strict=strict)
    assert result.n_sequences > 0
    assert result.rel_err <= 1e-12
    assert result.rel_err_rearrangement <= 1e-12
    assert result.heights_apply == (v[1] > 0)
    if result.heights_apply:
        assert result.rel_err_heights <= 1e-12


@pytest.mark.parametrize("strict", [False, True])
def test_ladder_height_form_fails_on_the_wall(basic_law, strict):
    result = alili_doney_check((4, 0), HORIZONTAL_WALL, basic_law, len_cap=10, strict=strict)
    assert not result.heights_apply
    assert result.rel_err <= 1e-12
    assert result.rel_err_heights > 1e-6


def test_alili_doney_cap_too_small(basic_law):
    with pytest.raises(CapTooSmallError):
        alili_doney_check((5, 0), HORIZONTAL_WALL, basic_law, len_cap=2)
    with pytest.raises(ValueError):
        alili_doney_check(ORIGIN, HORIZONTAL_WALL, basic_law, len_cap=4)


@pytest.mark.parametrize("beta", [3.0, 4.0, 5.0])
@pytest.mark.parametrize("eps", [0.001, 0.05, 0.5])
@pytest.mark.parametrize("regime", ["OPT1", "OPT2"])
def test_decomposition_mixture(beta, eps, regime):
    d = decompose_walk(law_towards(beta, (1.0, eps)), regime=regime)
    assert d.mixture_error <= 1e-14
    assert 0 <= d.params.q <= 1
    assert sum(d.u_law.values()) == pytest.approx(1.0)
    assert all(p >= -1e-15 for p in d.v_law.values())


def test_decomposition_regime_choice():
    small = decompose_walk(law_towards(4.0, (1.0, 0.001)))
    assert small.params.regime is Regime.OPT1
    assert small.params.alpha1 == 1.0 and small.params.p == 0.0
    large = decompose_walk(law_towards(4.0, (1.0, 0.5)))
    assert large.params.regime is Regime.OPT2
    assert law_eps(large.law) == pytest.approx(0.5)
    assert large.as_row()["regime"] == "OPT2"


@pytest.mark.parametrize("beta", [3.0, 4.0, 5.0])
@pytest.mark.parametrize("eps", [0.001, 0.05, 0.5])
@pytest.mark.parametrize("x", [(4, 0), (3, 1), (5, 1)])
def test_decomposition_sandwich(beta, eps, x):
    d = decompose_walk(law_towards(beta, (1.0, eps)))
    s = decomposition_sandwich(d, x)
    assert s.lower > 0
    assert s.lower == pytest.approx(s.last_u, rel=1e-10)
    assert s.lower <= s.green * (1 + 1e-12)
    assert 1 - 1e-12 <= s.ratio <= 2.0


def test_sandwich_below_the_walk_start():
    d = decompose_walk(law_towards(4.0, (1.0, 0.5)))
    s = decomposition_sandwich(d, ORIGIN)
    assert s.lower == 0.0 and s.ratio == math.inf
    down = decomposition_sandwich(d, (5, -1))
    assert down.lower == pytest.approx(down.last_u, rel=1e-10)
    assert down.lower <= down.green


def test_v_law_is_non_degenerate():
    d = decompose_walk(law_towards(4.0, (1.0, 0.5)))
    assert d.v_total == pytest.approx(1.0)
    assert 0.05 < d.delta1 < 0.25
    assert 0.8 < d.ev_e1 < 2.0
    row = d.as_row()
    assert row["delta1"] == d.delta1 and row["ev_e1"] == d.ev_e1


def test_decomposition_needs_tilt():
    law = StepLaw((Atom(E1, 0.5, 1), Atom(E2, 0.5, 1)), LawMode.BASIC)
    with pytest.raises(ValueError):
        decompose_walk(law)


def test_local_limit_probe(basic_law):
    rows = local_limit_probe(basic_law, (1, 1), [1, 2, 3])
    assert list(rows.k) == [1, 2, 3]
    assert list(rows.l1) == [2, 4, 6]
    assert (rows.P > 0).all()
    assert (rows.ratio == rows.P / rows.scale).all()


def test_v_walk_hits_grow_with_radius():
    d = decompose_walk(law_towards(4.0, (1.0, 0.5)))
    rows = v_walk_probe(d, [10, 20], [1, 2, 4], samples=200, seed=3)
    assert len(rows) == 6
    assert rows.monotone_in_r.all()
    assert (rows.hits >= 0).all()


def test_green_along_tilted_wall(basic_law):
    wall = WallDirection.from_pair(1, 2)
    green = constrained_green(ORIGIN, (4, 1), wall, basic_law)
    assert green.p_plus == pytest.approx(sequence_green(ORIGIN, (4, 1), wall, basic_law), rel=1e-12)
