import math

import numpy as np
import pytest

from src.effwalk import diamond_window
from src.lattice import ORIGIN, AnalysisConstants, HORIZONTAL_WALL, wall_distance
from src.repulsion import kernels, rho_recursion_probe, step_depth


@pytest.fixture
def cold():
    return AnalysisConstants(beta=5.0, chi=2.0, delta=0.05)


def test_step_depth():
    assert step_depth(ORIGIN, (1, 0), HORIZONTAL_WALL) == 0
    assert step_depth((0, 3), (1, 3), HORIZONTAL_WALL) == 3


def test_kernels_are_strictly_upper_triangular(basic_law, cold):
    window = [p for p in diamond_window(ORIGIN, (4, 2)) if HORIZONTAL_WALL.dot(p) >= 0]
    T, T_phi = kernels(window, HORIZONTAL_WALL, basic_law, cold)
    assert np.all(np.tril(T) == 0)
    assert np.all(T_phi >= T)
    _, plain = kernels(window, HORIZONTAL_WALL, basic_law, cold, reweight=False)
    assert np.array_equal(plain, T)


def test_unweighted_probe_is_pure_depth_factor(basic_law, cold):
    probe = rho_recursion_probe(ORIGIN, (4, 2), HORIZONTAL_WALL, basic_law, cold, reweight=False)
    depth = wall_distance(ORIGIN, HORIZONTAL_WALL) + wall_distance((4, 2), HORIZONTAL_WALL)
    assert probe.rho == pytest.approx(math.exp(-2 * 0.05 * 5.0 * depth))
    assert probe.a_full == 0.0 and probe.b_full == 0.0
    assert probe.consistent


def test_rho_recursion_bound(basic_law, cold):
    probe = rho_recursion_probe(ORIGIN, (4, 2), HORIZONTAL_WALL, basic_law, cold)
    assert probe.b_hat < 1
    assert probe.rho <= probe.bound * (1 + 1e-12)
    row = probe.as_row()
    assert row["consistent"] and row["delta"] == 0.05


def test_strip_restriction_drops_mass(basic_law, cold):
    full = rho_recursion_probe(ORIGIN, (6, 4), HORIZONTAL_WALL, basic_law, cold)
    strip = rho_recursion_probe(ORIGIN, (6, 4), HORIZONTAL_WALL, basic_law, cold, strip_width=1)
    assert strip.a_hat <= full.a_hat
    assert strip.truncation >= 0
    assert strip.rho == full.rho


def test_unreachable_target(basic_law, cold):
    with pytest.raises(ValueError):
        rho_recursion_probe(ORIGIN, (-3, 1), HORIZONTAL_WALL, basic_law, cold)
