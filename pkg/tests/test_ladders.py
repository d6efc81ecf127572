import numpy as np
import pandas as pd
import pytest
from hypothesis import example, given, strategies as st

from src.effwalk import Atom, LawMode, StepLaw
from src.errors import CITooWideError
from src.ladders import LADDER_CONSTANTS, ladder_bound_check, ladder_stats, naive_ladder_epochs, require_tight_ci
from src.lattice import E1, E2, HORIZONTAL_WALL


def test_ladder_stats():
    record = ladder_stats(levels=[0, 1, 1, -1, 2])
    assert record.nonstrict_ascending == ((1, 1), (2, 1), (4, 2))
    assert record.strict_descending == ((3, -1),)
    assert record.n_plus(4, 1) == 2
    assert record.n_plus(4, 2) == 3
    assert record.n_minus(4, 1) == 1


def test_ladder_stats_from_steps():
    record = ladder_stats(steps=[(1, 0), (0, 1), (4, -1)], wall=HORIZONTAL_WALL)
    assert record.levels == (0, 0, 1, 0)
    assert [t for t, _ in record.nonstrict_ascending] == [1, 2]
    with pytest.raises(ValueError):
        ladder_stats(steps=[(1, 0)])


@given(st.lists(st.integers(-3, 3), min_size=1, max_size=40))
@example([0, 0, 0])
def test_epochs_match_quadratic_scan(increments):
    levels = list(np.concatenate([[0], np.cumsum(increments)]))
    record = ladder_stats(levels=levels)
    up, down = naive_ladder_epochs(levels)
    assert [t for t, _ in record.nonstrict_ascending] == up
    assert [t for t, _ in record.strict_descending] == down


def test_ladder_bound_report(basic_law):
    report = ladder_bound_check(basic_law, HORIZONTAL_WALL, [1.0, 3.0], [10], samples=2000, seed=1)
    assert len(report) == 4
    assert set(report.k) == {1, 2}
    assert (report.eta == 1).all()
    assert ((report.p_hat > 0) & (report.p_hat <= 1)).all()
    assert (report.ci_lo <= report.mean).all() and (report.mean <= report.ci_hi).all()
    assert report[report.k == 1].shape_ratio.notna().all()


def test_ladder_constants_default_and_override(basic_law):
    assert LADDER_CONSTANTS == {1: 1.0, 2: 2.0}
    default = ladder_bound_check(basic_law, HORIZONTAL_WALL, [3.0], [10], samples=500, seed=2)
    loose = ladder_bound_check(basic_law, HORIZONTAL_WALL, [3.0], [10], samples=500, seed=2, constants={1: 2.0})
    np.testing.assert_allclose(loose.bound.values, default.bound.values * np.array([2.0, 1.0]))
    np.testing.assert_array_equal(loose["mean"].values, default["mean"].values)


def test_ladder_bound_is_reproducible(basic_law):
    a = ladder_bound_check(basic_law, HORIZONTAL_WALL, [1.0], [10], samples=500, seed=4)
    b = ladder_bound_check(basic_law, HORIZONTAL_WALL, [1.0], [10], samples=500, seed=4)
    pd.testing.assert_frame_equal(a, b)


def test_descending_needs_a_downward_step():
    law = StepLaw((Atom(E1, 0.5, 1), Atom(E2, 0.5, 1)), LawMode.BASIC)
    with pytest.raises(ValueError):
        ladder_bound_check(law, HORIZONTAL_WALL, [1.0], [10], samples=10, ascending=False)


def test_require_tight_ci():
    require_tight_ci(pd.DataFrame({"flags": ["", "fitted-constant"]}))
    with pytest.raises(CITooWideError):
        require_tight_ci(pd.DataFrame({"flags": ["", "ci-too-wide"]}))
