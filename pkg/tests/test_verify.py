import pytest

from src.contours import enumerate_contours
from src.verify import CHECKS, LEVELS, check, naive_contours, verify_suite

FAST = [
    "enumeration-oracle", "weight-rewrite", "pinned-equals-restricted", "wall-sandwich", "potential-audit",
    "ladder-epochs", "green-oracle", "alili-doney", "decomposition-mixture", "cache-corruption",
    "tilt-closed-forms",
]


def test_fast_checks_registered():
    fast = [name for name, (level, _) in CHECKS.items() if level == "fast"]
    assert fast == FAST
    assert all(level in LEVELS for level, _ in CHECKS.values())
    with pytest.raises(AssertionError):
        check("overnight")


def test_naive_contours_match_enumeration():
    naive = naive_contours((0, 0), (1, 1), 4)
    assert naive == {g.steps for g in enumerate_contours((0, 0), (1, 1), 4)}
    assert {"EN", "NE"} <= naive


@pytest.mark.parametrize("name", ["green-oracle", "alili-doney", "decomposition-mixture"])
def test_walk_checks_pass(name):
    level, func = CHECKS[name]
    passed, detail = func(level)
    assert passed, detail


def test_unknown_level():
    with pytest.raises(ValueError):
        verify_suite("weekly")


@pytest.mark.slow
def test_fast_suite_passes():
    report = verify_suite("fast")
    assert list(report.check) == FAST
    assert report.passed.all(), report[~report.passed].to_dict("records")
    assert (report.seconds >= 0).all()
