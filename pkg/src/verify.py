#!/usr/bin/env python3
"""Oracle equivalence checks and invariant audits.

Usage:
    verify.py [--level LEVEL] [--out FILE] [-v]

Options:
    --level LEVEL   fast or full [default: fast]
    --out FILE      Write the report as CSV.
    -v              Debug logging.
"""
import itertools
import logging
import math
import tempfile
import time
from pathlib import Path
from typing import Callable, Dict, Tuple

import numpy as np
import pandas as pd

try:
    from src.cache_db import EnumerationCache
    from src.configutil import load_config
    from src.contours import STEPS, enumerate_contours, random_contour, validate_contour
    from src.effwalk import alili_doney_check, build_step_law, constrained_green, decompose_walk, sequence_green
    from src.ensembles import Variant, sandwich_check, two_point, weight_rewrite_check
    from src.errors import ContourError
    from src.experiments import collect, evaluate_grid
    from src.ladders import ladder_stats, naive_ladder_epochs
    from src.lattice import HORIZONTAL_WALL, ORIGIN, AnalysisConstants, LatticePoint, WallDirection
    from src.potentials import PotentialSpec, audit_potential, random_sign_modification
    from src.renewal import TiltVector, basic_closed_forms, basic_table_weights, build_animal_table, initial_tilt, tilt_solve
except ImportError:
    from cache_db import EnumerationCache
    from configutil import load_config
    from contours import STEPS, enumerate_contours, random_contour, validate_contour
    from effwalk import alili_doney_check, build_step_law, constrained_green, decompose_walk, sequence_green
    from ensembles import Variant, sandwich_check, two_point, weight_rewrite_check
    from errors import ContourError
    from experiments import collect, evaluate_grid
    from ladders import ladder_stats, naive_ladder_epochs
    from lattice import HORIZONTAL_WALL, ORIGIN, AnalysisConstants, LatticePoint, WallDirection
    from potentials import PotentialSpec, audit_potential, random_sign_modification
    from renewal import TiltVector, basic_closed_forms, basic_table_weights, build_animal_table, initial_tilt, tilt_solve


logger = logging.getLogger(__name__)

LEVELS = ("fast", "full")
CHECKS: Dict[str, Tuple[str, Callable]] = {}


def check(level: str = "fast"):
    """Register a check; it receives the suite level and returns (passed, detail)."""
    assert level in LEVELS, f"Need a level in {LEVELS}"

    def decorator(func):
        CHECKS[func.__name__.replace("_", "-")] = (level, func)
        return func
    return decorator


def naive_contours(a, b, max_len: int):
    """Step strings a -> b found by validating every nearest-neighbour walk."""
    a, b = LatticePoint(*a), LatticePoint(*b)
    d = (b - a).l1
    found = set()
    for length in range(d, max_len + 1, 2):
        for steps in itertools.product(STEPS, repeat=length):
            end = a
            vertices = [a]
            for s in steps:
                end = end + STEPS[s]
                vertices.append(end)
            if end != b:
                continue
            try:
                validate_contour(vertices)
            except ContourError:
                continue
            found.add("".join(steps))
    return found


def basic_law(beta: float = 4.0, direction=(1.0, 0.5)):
    tilt = TiltVector.from_h(initial_tilt(direction, beta), beta, direction=direction)
    return build_step_law("BASIC", tilt)


def _constants(beta=4.0, chi=2.0) -> AnalysisConstants:
    return AnalysisConstants(beta=beta, chi=chi)


@check("fast")
def enumeration_oracle(level):
    radius, max_len = (2, 6) if level == "fast" else (4, 8)
    mismatches = []
    n_pairs = 0
    for x in range(-radius, radius + 1):
        for y in range(-radius, radius + 1):
            b = LatticePoint(x, y)
            if b == ORIGIN or b.l1 > radius:
                continue
            n_pairs += 1
            fast = {g.steps for g in enumerate_contours(ORIGIN, b, max_len)}
            if fast != naive_contours(ORIGIN, b, max_len):
                mismatches.append(tuple(b))
    return not mismatches, f"{n_pairs} endpoints, max_len={max_len}, mismatches {mismatches}"


@check("fast")
def weight_rewrite(level):
    n = 30 if level == "fast" else 200
    constants = _constants()
    phi = PotentialSpec.build("RANDOM_SIGN", constants.beta, constants.chi, seed=7)
    rng = np.random.Generator(np.random.Philox(11))
    reports = [weight_rewrite_check(random_contour(rng, int(rng.integers(1, 9))), phi, constants) for _ in range(n)]
    bad = [r["contour"] for r in reports if not r["ok"]]
    worst = max(r["difference"] / max(r["bound"], 1e-300) for r in reports)
    return not bad, f"{n} contours, worst difference/bound {worst:.3g}, failures {bad[:5]}"


@check("fast")
def pinned_equals_restricted(level):
    radius = 3 if level == "fast" else 8
    constants = _constants()
    phi = PotentialSpec.build("RANDOM_SIGN", constants.beta, constants.chi, seed=3)
    worst = 0.0
    for x in range(-radius, radius + 1):
        for y in range(0, radius + 1):
            p = LatticePoint(x, y)
            if p == ORIGIN or p.l1 > radius:
                continue
            pinned = two_point(p, Variant.PINNED, phi, constants, HORIZONTAL_WALL, phi)
            restricted = two_point(p, Variant.RESTRICTED_HALFPLANE, phi, constants, HORIZONTAL_WALL)
            if math.isfinite(pinned.value_log) or math.isfinite(restricted.value_log):
                worst = max(worst, abs(pinned.value_log - restricted.value_log))
    return worst <= constants.tolerances.log_weight_tol, f"max |log difference| {worst:.3e} for |x|_1 <= {radius}"


@check("fast")
def wall_sandwich(level):
    constants = _constants()
    wall = WallDirection.from_pair(1, 2) if level == "full" else HORIZONTAL_WALL
    phi = PotentialSpec.build("RANDOM_SIGN", constants.beta, constants.chi, seed=5)
    phi_tilde = random_sign_modification(phi, wall, seed=9)
    target = wall.tangent * 2
    contours = list(enumerate_contours(ORIGIN, target, target.l1 + 2, wall))
    bad = [g.steps for g in contours if not sandwich_check(g, phi, phi_tilde, wall, constants).ok]
    return not bad, f"{len(contours)} contours along {wall}, violations {bad[:5]}"


@check("fast")
def potential_audit(level):
    constants = _constants()
    phi = PotentialSpec.build("RANDOM_SIGN", constants.beta, constants.chi, seed=1)
    report = audit_potential(phi, samples=200 if level == "fast" else 2000, seed=2)
    ok = report.decay_ok & report.positive_ok & report.delta_implies_nabla
    return bool(ok.all()), f"{int((~ok).sum())} of {len(report)} samples violate the audit"


@check("fast")
def ladder_epochs(level):
    rng = np.random.Generator(np.random.Philox(4))
    n = 200 if level == "fast" else 2000
    for _ in range(n):
        levels = np.concatenate([[0], np.cumsum(rng.integers(-2, 3, size=int(rng.integers(1, 30))))])
        record = ladder_stats(levels=levels)
        up, down = naive_ladder_epochs(list(levels))
        if [t for t, _ in record.nonstrict_ascending] != up or [t for t, _ in record.strict_descending] != down:
            return False, f"epochs differ on {list(levels)}"
    return True, f"{n} random level sequences"


@check("fast")
def green_oracle(level):
    law = basic_law()
    radius = 4 if level == "fast" else 6
    worst = 0.0
    for x in range(-1, radius + 1):
        for y in range(0, radius + 1):
            v = LatticePoint(x, y)
            if v == ORIGIN or v.l1 > radius:
                continue
            green = constrained_green(ORIGIN, v, HORIZONTAL_WALL, law)
            for strict, value in ((False, green.p_plus), (True, green.p_hat_plus)):
                oracle = sequence_green(ORIGIN, v, HORIZONTAL_WALL, law, strict=strict)
                worst = max(worst, abs(value - oracle) / max(oracle, 1e-300))
    return worst <= 1e-12, f"max relative difference {worst:.3e}"


@check("fast")
def alili_doney(level):
    betas = (4.0,) if level == "fast" else (3.0, 4.0)
    radius = 5 if level == "fast" else 8
    worst, worst_rev, worst_heights = 0.0, 0.0, 0.0
    for beta in betas:
        law = basic_law(beta)
        for x in range(-radius, radius + 1):
            for y in range(0, radius + 1):
                v = LatticePoint(x, y)
                if v == ORIGIN or v.l1 > radius:
                    continue
                for strict in (False, True):
                    result = alili_doney_check(v, HORIZONTAL_WALL, law, len_cap=10, strict=strict)
                    worst = max(worst, result.rel_err)
                    worst_rev = max(worst_rev, result.rel_err_rearrangement)
                    if result.heights_apply:
                        worst_heights = max(worst_heights, result.rel_err_heights)
    ok = max(worst, worst_rev, worst_heights) <= 1e-12
    return ok, f"cyclic {worst:.3e}, rearrangement {worst_rev:.3e}, ladder heights off the wall {worst_heights:.3e}"


@check("fast")
def decomposition_mixture(level):
    worst = 0.0
    for beta, eps in itertools.product((3.0, 4.0, 5.0), (0.001, 0.05, 0.5)):
        for regime in ("OPT1", "OPT2"):
            worst = max(worst, decompose_walk(basic_law(beta, (1.0, eps)).normalised(), regime=regime).mixture_error)
    return worst <= 1e-14, f"max atom-wise error {worst:.3e}"


@check("fast")
def cache_corruption(level):
    with tempfile.TemporaryDirectory() as root:
        cache = EnumerationCache(root)
        b = LatticePoint(2, 1)
        first = [g.steps for g in cache.contours(ORIGIN, b, 5)]
        key = cache.entries().key.iloc[0]
        path = cache.payload_path(key)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF
        path.write_bytes(bytes(data))
        second = [g.steps for g in cache.contours(ORIGIN, b, 5)]
        third = [g.steps for g in cache.contours(ORIGIN, b, 5)]
        direct = [g.steps for g in enumerate_contours(ORIGIN, b, 5)]
    ok = first == second == third == direct
    return ok, f"{len(direct)} contours; recomputed after corruption: {second == direct}"


@check("fast")
def tilt_closed_forms(level):
    constants = _constants()
    phi = PotentialSpec.build("ZERO", constants.beta, constants.chi)
    table = build_animal_table(phi, constants)
    worst = 0.0
    for direction in ((1.0, 0.0), (1.0, 0.5), (1.0, 1.0)):
        tilt = tilt_solve(direction, table)
        tabled = basic_table_weights(table, tilt)
        for name, value in basic_closed_forms(tilt, constants.beta).items():
            worst = max(worst, abs(tabled.get(name, math.inf) - value) / value)
    return worst <= 1e-12, f"max relative gap {worst:.3e}"


def _experiment_checks(config: dict):
    cfg = load_config(config)
    _, _, checks = collect(cfg, evaluate_grid(cfg))
    failed = [c.name for c in checks if not c.passed]
    return not failed, "; ".join(f"{c.name}: {c.detail}" for c in checks)


@check("full")
def ratio_random_sign(level):
    return _experiment_checks({
        "name": "verify-ratio", "experiment": "ratio",
        "constants": {"beta": 4.0, "chi": 2.0},
        "potential": {"kind": "RANDOM_SIGN", "modification": "RANDOM_SIGN"},
        "sweep": {"L": list(range(4, 11))},
    })


@check("full")
def pinning_counterexample(level):
    return _experiment_checks({
        "name": "verify-pinning", "experiment": "pinning-demo",
        "constants": {"beta": 3.0, "chi": 0.5},
        "sweep": {"M": [0.0, 10.0, 20.0], "L": list(range(4, 11))},
    })


@check("full")
def tilt_bands(level):
    return _experiment_checks({
        "name": "verify-bands", "experiment": "effwalk-bands",
        "sweep": {"beta": [3.0, 4.0, 5.0]},
    })


@check("full")
def decomposition_bands(level):
    return _experiment_checks({
        "name": "verify-decomp", "experiment": "effwalk-decomp",
        "sweep": {"beta": [3.0, 4.0, 5.0], "eps": [0.01, 0.05, 0.2]},
    })


@check("full")
def local_limit(level):
    return _experiment_checks({
        "name": "verify-local-limit", "experiment": "effwalk-local-limit",
        "sweep": {"beta": [4.0, 5.0], "directions": [[1, 0], [1, 1], [2, 1]]},
    })


@check("full")
def ladder_bound(level):
    return _experiment_checks({
        "name": "verify-ladder", "experiment": "effwalk-ladder",
        "sweep": {"beta": [4.0], "z": [1.0, 3.0, 10.0], "m": [10, 100, 1000]},
        "samples": 100_000,
    })


@check("full")
def rho_recursion(level):
    return _experiment_checks({
        "name": "verify-rho", "experiment": "effwalk-rho",
        "constants": {"beta": 5.0, "chi": 2.0},
        "sweep": {"points": [[6, 4], [10, 5], [12, 8]]},
    })


def verify_suite(level: str = "fast") -> pd.DataFrame:
    """Run every check up to `level`; one row per check with its duration."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    wanted = LEVELS[: LEVELS.index(level) + 1]
    rows = []
    for name, (check_level, func) in CHECKS.items():
        if check_level not in wanted:
            continue
        start = time.perf_counter()
        try:
            passed, detail = func(level)
        except Exception as e:
            logger.exception(f"Check {name} raised")
            passed, detail = False, f"{type(e).__name__}: {e}"
        seconds = time.perf_counter() - start
        (logger.info if passed else logger.warning)(f"[{'PASS' if passed else 'FAIL'}] {name} ({seconds:.1f}s) {detail}")
        rows.append({"check": name, "level": check_level, "passed": bool(passed), "seconds": seconds, "detail": detail})
    return pd.DataFrame(rows, columns=["check", "level", "passed", "seconds", "detail"])


def display(report: pd.DataFrame):
    for r in report.itertuples():
        print(f"> {r.check:<26} | {'pass' if r.passed else 'FAIL'} | {r.seconds:6.1f}s | {r.detail}")
    print(f"{int(report.passed.sum())}/{len(report)} checks passed")


if __name__ == "__main__":
    from docopt import docopt

    args = docopt(__doc__)
    logging.basicConfig(
        level=logging.DEBUG if args["-v"] else logging.INFO,
        format="%(levelname)s : %(asctime)s : %(message)s",
    )
    report = verify_suite(args["--level"])
    display(report)
    if args["--out"]:
        report.to_csv(Path(args["--out"]), index=False)
    raise SystemExit(0 if report.passed.all() else 1)
