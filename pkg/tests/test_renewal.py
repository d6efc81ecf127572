import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from src.contours import OpenContour, random_contour
from src.errors import InsufficientRangeError
from src.lattice import ORIGIN, AnalysisConstants, Cutoffs
from src.potentials import PotentialSpec
from src.renewal import (
    BASIC_STEPS,
    AnimalTable,
    TiltVector,
    band_check,
    basic_closed_forms,
    basic_table_weights,
    break_points,
    build_animal_table,
    decompose,
    enumerate_irreducible_animals,
    eps_case,
    in_left_class,
    in_right_class,
    initial_tilt,
    is_letter,
    mass_gap_measure,
    tilt_solve,
    wulff_curvature,
    wulff_shape,
)


def test_break_points():
    assert break_points(OpenContour(ORIGIN, "E")) == []
    assert break_points(OpenContour(ORIGIN, "EE")) == [1]
    assert break_points(OpenContour(ORIGIN, "EESEE")) == []
    assert break_points(OpenContour(ORIGIN, "SEEEN")) == [3, 4]


@pytest.mark.parametrize("name", sorted(BASIC_STEPS))
def test_basic_animals_are_letters(name):
    assert is_letter(OpenContour(ORIGIN, BASIC_STEPS[name]))


def test_classes():
    g = OpenContour(ORIGIN, "SEE")
    assert in_left_class(g)
    assert not in_right_class(g)
    assert not is_letter(g)


def test_decompose_moves_letters_into_middle():
    d = decompose(OpenContour(ORIGIN, "EE"))
    assert d.left is None and d.right is None
    assert [p.steps for p in d.middle] == ["E", "E"]


def test_decompose_keeps_boundary_pieces():
    g = OpenContour(ORIGIN, "SEEEN")
    d = decompose(g)
    assert d.left.steps == "SEE"
    assert [p.steps for p in d.middle] == ["E", "N"]
    assert d.right is None
    assert d.break_indices == (3, 4)
    assert d.concatenate() == g


def test_decompose_without_breaks():
    g = OpenContour(ORIGIN, "SEN")
    d = decompose(g)
    assert d.left == g and d.middle == () and d.right is None


@given(st.integers(0, 10_000), st.integers(1, 14))
@settings(max_examples=100, deadline=None)
def test_decomposition_concatenates_back(seed, length):
    g = random_contour(np.random.Generator(np.random.Philox(seed)), length)
    d = decompose(g)
    assert d.concatenate() == g
    for piece in d.middle:
        assert in_left_class(piece) and in_right_class(piece)


def test_table_shape(zero_table):
    assert list(zero_table.frame.columns) == AnimalTable.COLUMNS
    assert zero_table.frame.length.max() <= 5
    bare = zero_table.bare_rows().set_index("steps")
    for steps in BASIC_STEPS.values():
        assert bare.loc[steps].log_q_bare == -4.0 * len(steps)
    assert (zero_table.frame.log_q >= zero_table.frame.log_q_bare.fillna(-math.inf)).all()


def test_table_is_mirror_symmetric(zero_table):
    f = zero_table.frame
    forward = sorted(zip(f.X, f.Y, f.length))
    mirrored = sorted(zip(f.Y, f.X, f.length))
    assert forward == mirrored


def test_table_matches_animal_enumeration():
    constants = AnalysisConstants(beta=4.0, chi=2.0)
    phi = PotentialSpec.build("ZERO", constants.beta, constants.chi)
    table = build_animal_table(phi, constants, len_cap=3)
    animals = enumerate_irreducible_animals(3, 2, phi, constants, max_clusters=2)
    by_path = {}
    for animal, log_q in animals:
        assert animal.is_irreducible()
        by_path.setdefault(animal.contour.steps, []).append(log_q)
    rows = table.frame.set_index("steps")
    assert set(by_path) == set(rows.index)
    for steps, logs in by_path.items():
        assert logsumexp(logs) == pytest.approx(rows.loc[steps].log_q, abs=1e-8)


def test_parallel_table_build(zero_table):
    constants = AnalysisConstants(beta=4.0, chi=2.0, cutoffs=Cutoffs(len_cap=5))
    phi = PotentialSpec.build("ZERO", constants.beta, constants.chi)
    parallel = build_animal_table(phi, constants, threads=2)
    pd.testing.assert_frame_equal(parallel.frame, zero_table.frame)


def test_tilt_vector():
    t = TiltVector.from_h((3.5, 1.0), 4.0, residual_norm=0.0)
    assert (t.a, t.b) == (0.5, 3.0)
    assert t.Delta == 4 * 0.5 + 4.0 - 3.0
    assert t.Delta_b == 4 * 3.0 + 4.0 - 0.5
    assert t.beta == 4.0
    assert t.in_range(4.0)
    assert not TiltVector.from_h((5.0, 1.0), 4.0, residual_norm=0.0).in_range(4.0)


def test_tilt_vector_from_h_defaults():
    t = TiltVector.from_h((3.5, 1.0), 4.0)
    assert t.residual_norm == 0.0
    assert t.converged and t.flags == ()
    assert t.direction == (1.0, 0.0)


def test_initial_tilt():
    h = initial_tilt((1, 0), 4.0)
    assert h[0] == pytest.approx(4.0 - math.exp(-4.0))
    assert h[1] == 0.0
    assert list(initial_tilt((0, 1), 4.0)) == list(h[::-1])
    with pytest.raises(ValueError):
        initial_tilt((-1, 0), 4.0)


@pytest.mark.parametrize("direction", [(1.0, 0.0), (1.0, 0.5), (1.0, 1.0)])
def test_tilt_solve(zero_table, direction):
    tilt = tilt_solve(direction, zero_table)
    assert tilt.converged
    assert zero_table.log_normalization(tilt.h) == pytest.approx(0.0, abs=1e-10)
    _, mean, _ = zero_table.moments(tilt.h)
    d1, d2 = tilt.direction
    assert d2 * mean[0] - d1 * mean[1] == pytest.approx(0.0, abs=1e-10)
    tabled = basic_table_weights(zero_table, tilt)
    for name, value in basic_closed_forms(tilt, 4.0).items():
        assert tabled[name] == pytest.approx(value, rel=1e-12)


def test_diagonal_tilt_is_symmetric(zero_table):
    tilt = tilt_solve((1.0, 1.0), zero_table)
    assert tilt.h[0] == pytest.approx(tilt.h[1], abs=1e-8)
    assert tilt.a == pytest.approx(tilt.b, abs=1e-8)


def test_mass_gap(zero_table):
    tilt = tilt_solve((1.0, 0.5), zero_table)
    gap = mass_gap_measure(zero_table, tilt.h)
    assert gap.rate > 0
    assert gap.nu_g == pytest.approx(gap.rate / 4.0)
    assert gap.ks[0] == 2


def test_mass_gap_needs_range():
    constants = AnalysisConstants(beta=4.0, chi=2.0)
    phi = PotentialSpec.build("ZERO", constants.beta, constants.chi)
    table = build_animal_table(phi, constants, len_cap=3)
    with pytest.raises(InsufficientRangeError):
        mass_gap_measure(table, (0.0, 0.0))


def test_wulff_curvature(zero_table):
    tilt = tilt_solve((1.0, 0.5), zero_table)
    report = wulff_curvature(tilt, zero_table)
    assert report["hessian_ok"]
    assert report["grad_ok"]
    assert report["curvature"] > 0


def test_wulff_shape(zero_table):
    shape = wulff_shape(zero_table, n_angles=3)
    assert len(shape) == 3
    assert shape.converged.all()
    assert shape.tau.iloc[0] == pytest.approx(shape.h1.iloc[0])
    assert shape.tau.iloc[-1] == pytest.approx(shape.h2.iloc[-1])


def test_eps_case():
    assert eps_case(0.2, 4.0) == "large"
    assert eps_case(0.001, 4.0) == "middle"
    assert eps_case(0.0, 4.0) == "small"


def test_band_check_at_fit_beta(zero_table):
    rows, fitted = band_check({4.0: zero_table}, [0.0, 0.001, 0.2])
    assert list(rows.case) == ["small", "middle", "large"]
    assert rows.a_within.all()
    assert rows.b_within.all()
    assert fitted["c_a"] >= 2.0
    with pytest.raises(InsufficientRangeError):
        band_check({4.0: zero_table}, lambda beta: [0.2], fit_beta=5.0)
