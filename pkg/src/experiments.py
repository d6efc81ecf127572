#!/usr/bin/env python3
"""Experiment registry and the grid runner behind the CLI and the sweep flow.

Every experiment registers three pieces with @experiment:

grid(cfg)                      -> list of grid points (flat dicts)
evaluate(cfg, point, cache)    -> list of result rows for one point
summarize(cfg, rows)           -> (fits DataFrame or None, list of Check)

`run` evaluates the grid (optionally on a process pool), keeps rows in grid
order and writes `<out>/<name>.csv`, `<out>/<name>.fits.csv` and
`<out>/<name>.manifest.json`.
"""
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from hashlib import md5
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd
from omegaconf import OmegaConf

try:
    from src.cache_db import EnumerationCache
    from src.configutil import config_hash, load_config, to_constants, wall_of
    from src.effwalk import (
        alili_doney_check, build_step_law, constrained_green, decompose_walk, decomposition_sandwich, local_limit_probe,
        sequence_green, v_walk_probe,
    )
    from src.ensembles import (
        WeightMode, pinning_potentials, ratio_point, summarize_pinning, summarize_ratio,
        surface_tension_point, two_point, wall_for_direction,
    )
    from src.errors import ConfigValidationError, EnumerationBudgetExceeded, InsufficientRangeError
    from src.ladders import ladder_bound_check
    from src.potentials import load_potentials
    from src.renewal import (
        TiltVector, band_check, basic_closed_forms, basic_table_weights, build_animal_table, mass_gap_measure,
        tilt_solve, wulff_curvature, wulff_shape,
    )
    from src.repulsion import rho_recursion_probe
except ImportError:
    from cache_db import EnumerationCache
    from configutil import config_hash, load_config, to_constants, wall_of
    from effwalk import (
        alili_doney_check, build_step_law, constrained_green, decompose_walk, decomposition_sandwich, local_limit_probe,
        sequence_green, v_walk_probe,
    )
    from ensembles import (
        WeightMode, pinning_potentials, ratio_point, summarize_pinning, summarize_ratio,
        surface_tension_point, two_point, wall_for_direction,
    )
    from errors import ConfigValidationError, EnumerationBudgetExceeded, InsufficientRangeError
    from ladders import ladder_bound_check
    from potentials import load_potentials
    from renewal import (
        TiltVector, band_check, basic_closed_forms, basic_table_weights, build_animal_table, mass_gap_measure,
        tilt_solve, wulff_curvature, wulff_shape,
    )
    from repulsion import rho_recursion_probe


logger = logging.getLogger(__name__)

CODE_VERSION = "0.1.0"


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str = ""


class Experiment(NamedTuple):
    name: str
    evaluate: Callable
    grid: Callable
    summarize: Optional[Callable]


EXPERIMENTS: Dict[str, Experiment] = {}


def experiment(name: str, grid: Callable, summarize: Optional[Callable] = None):
    """Register an evaluate function under `name`."""
    def decorator(func):
        EXPERIMENTS[name] = Experiment(name, func, grid, summarize)
        return func
    return decorator


@dataclass
class RunManifest:
    name: str
    experiment: str
    config_hash: str
    code_version: str
    started: str
    finished: str
    n_rows: int
    payloads: Dict[str, str] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    checks: List[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def failures(self) -> List[dict]:
        return [c for c in self.checks if not c["passed"]]

    def write(self, path: Path):
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))


# --- grid helpers ---------------------------------------------------------


def _option(cfg, key, default=None):
    value = cfg.options.get(key, default)
    if value is None:
        return default
    if OmegaConf.is_config(value):
        return OmegaConf.to_container(value)
    return value


def _betas(cfg) -> List[float]:
    return [float(b) for b in cfg.sweep.beta] or [float(cfg.constants.beta)]


def _pairs(values, default) -> List[List]:
    values = [list(v) for v in values] if len(values) else default
    for v in values:
        if len(v) != 2:
            raise ConfigValidationError(f"expected pairs, got {v}", "sweep")
    return values


def _mode(cfg, default=WeightMode.POSITIVIZED) -> WeightMode:
    try:
        return WeightMode(str(_option(cfg, "mode", default.value)).upper())
    except ValueError as e:
        raise ConfigValidationError(str(e), "options.mode") from e


def _potentials(cfg, constants, wall=None):
    return load_potentials(cfg.potential, constants.beta, constants.chi, wall or wall_of(cfg))


@lru_cache(maxsize=32)
def _animal_table(phi, constants, len_cap: int, cluster_cap: int):
    return build_animal_table(phi, constants, len_cap, cluster_cap)


def table_for(cfg, beta: float):
    constants = to_constants(cfg, beta)
    phi, _ = _potentials(cfg, constants)
    len_cap = int(_option(cfg, "len_cap", constants.cutoffs.len_cap))
    return _animal_table(phi, constants, len_cap, constants.cutoffs.max_cluster_diam)


def law_for(cfg, beta: float, direction=None):
    """(law, tilt, table) of the effective walk tilted towards `direction`."""
    table = table_for(cfg, beta)
    direction = direction or _option(cfg, "direction", [1.0, 0.5])
    tilt = tilt_solve(direction, table)
    law = build_step_law(
        str(_option(cfg, "law", "BASIC")).upper(), tilt, table, include_left=bool(_option(cfg, "include_left", True))
    )
    return law, tilt, table


def _all(frame: pd.DataFrame, column: str) -> bool:
    return bool(len(frame)) and column in frame and bool(frame[column].astype(bool).all())


# --- ensembles ------------------------------------------------------------


def _twopoint_grid(cfg):
    points = _pairs(cfg.sweep.points, [[1, 0], [2, 1], [3, 0]])
    variants = [str(v).upper() for v in _option(cfg, "variants", ["FREE"])]
    return [
        {"beta": beta, "x": int(p[0]), "y": int(p[1]), "variant": variant}
        for beta in _betas(cfg) for p in points for variant in variants
    ]


def _twopoint_summary(cfg, rows):
    checks = []
    if cfg.potential.modification is None and {"PINNED", "RESTRICTED_HALFPLANE"} <= set(rows.variant):
        keys = ["beta", "x", "y"]
        pinned = rows[rows.variant == "PINNED"].set_index(keys).value_log
        restricted = rows[rows.variant == "RESTRICTED_HALFPLANE"].set_index(keys).value_log
        both = pinned.index.intersection(restricted.index)
        gap = float((pinned[both] - restricted[both]).abs().max()) if len(both) else 0.0
        tol = float(cfg.constants.tolerances.log_weight_tol)
        checks.append(Check("pinned-equals-restricted", gap <= tol, f"max |difference| {gap:.3e}"))
    return None, checks


@experiment("twopoint", grid=_twopoint_grid, summarize=_twopoint_summary)
def twopoint(cfg, point, cache):
    constants = to_constants(cfg, point["beta"])
    wall = wall_of(cfg)
    phi, phi_tilde = _potentials(cfg, constants, wall)
    result = two_point((point["x"], point["y"]), point["variant"], phi, constants, wall, phi_tilde, _mode(cfg), cache)
    return [result.as_row()]


def _ratio_grid(cfg):
    L_values = [int(L) for L in cfg.sweep.L] or list(range(4, 11))
    return [{"beta": beta, "L": L} for beta in _betas(cfg) for L in L_values]


def _ratio_summary(cfg, rows):
    fits = summarize_ratio(
        rows, wall_of(cfg), to_constants(cfg),
        sigmas=float(_option(cfg, "band_sigmas", 2.0)), with_capacity=bool(_option(cfg, "band_capacity", False)),
    )
    checks = [
        Check("slope-within-band", _all(fits, "consistent"), fits[["beta", "slope", "band"]].to_json(orient="records")),
        Check("band-excludes-pinning-scale", _all(fits, "conclusive"), fits[["beta", "band", "signal"]].to_json(orient="records")),
    ]
    if cfg.potential.modification is None:
        worst = float(rows.ratio_log.abs().max())
        checks.append(Check("ratio-vanishes", worst <= float(cfg.constants.tolerances.log_weight_tol), f"max |ratio_log| {worst:.3e}"))
    return fits, checks


@experiment("ratio", grid=_ratio_grid, summarize=_ratio_summary)
def ratio(cfg, point, cache):
    constants = to_constants(cfg, point["beta"])
    constants.require_no_pinning()
    wall = wall_of(cfg)
    phi, phi_tilde = _potentials(cfg, constants, wall)
    return [ratio_point(point["L"], phi, phi_tilde, wall, constants, _mode(cfg), cache)]


def _pinning_grid(cfg):
    M_values = [float(M) for M in cfg.sweep.M] or [0.0, 10.0, 20.0]
    L_values = [int(L) for L in cfg.sweep.L] or list(range(4, 11))
    return [{"beta": beta, "M": M, "L": L} for beta in _betas(cfg) for M in M_values for L in L_values]


def _pinning_summary(cfg, rows):
    fits = summarize_pinning(rows)
    checks = [
        Check(f"pinning-slope-M{M:g}-beta{beta:g}", bool(ok), f"slope {slope:.4g} threshold {threshold:.4g}")
        for beta, M, slope, threshold, ok in fits[["beta", "M", "slope", "threshold", "passed"]].itertuples(index=False)
    ]
    return fits, checks


@experiment("pinning-demo", grid=_pinning_grid, summarize=_pinning_summary)
def pinning_demo(cfg, point, cache):
    constants = to_constants(cfg, point["beta"])
    wall = wall_of(cfg)
    decay_constant = _option(cfg, "decay_constant")
    phi, phi_tilde = pinning_potentials(point["M"], constants, wall, decay_constant)
    row = ratio_point(point["L"], phi, phi_tilde, wall, constants, WeightMode.CLUSTER, cache)
    row["M"] = point["M"]
    return [row]


def _surface_grid(cfg):
    directions = _pairs(cfg.sweep.directions, [[1, 0], [1, 1]])
    N_values = [int(N) for N in cfg.sweep.N] or [1, 2, 3]
    return [
        {"beta": beta, "px": int(d[0]), "py": int(d[1]), "N": N}
        for beta in _betas(cfg) for d in directions for N in N_values
    ]


@experiment("surface-tension", grid=_surface_grid)
def surface_tension(cfg, point, cache):
    constants = to_constants(cfg, point["beta"])
    direction = (point["px"], point["py"])
    phi, phi_tilde = _potentials(cfg, constants, wall_for_direction(direction))
    return [surface_tension_point(direction, point["N"], phi, phi_tilde, constants, _mode(cfg), cache)]


# --- renewal --------------------------------------------------------------


def _direction_grid(default):
    def grid(cfg):
        directions = _pairs(cfg.sweep.directions, default)
        return [{"beta": beta, "d1": float(d[0]), "d2": float(d[1])} for beta in _betas(cfg) for d in directions]
    return grid


def _tilt_summary(cfg, rows):
    return None, [
        Check("normalization-residual", _all(rows, "residual_ok"), f"max residual {rows.residual.max():.3e}"),
        Check("collinearity", _all(rows, "collinear_ok"), f"max cross {rows.cross.max():.3e}"),
        Check("basic-closed-forms", _all(rows, "basic_ok"), f"max relative gap {rows.basic_gap.max():.3e}"),
    ]


@experiment("tilt", grid=_direction_grid([[1, 0], [1, 0.5], [1, 1]]), summarize=_tilt_summary)
def tilt(cfg, point, cache):
    beta = point["beta"]
    table = table_for(cfg, beta)
    t = tilt_solve((point["d1"], point["d2"]), table)
    _, mean, _ = table.moments(t.h)
    d = np.array(t.direction)
    cross = abs(mean[0] * d[1] - mean[1] * d[0]) / (np.hypot(*mean) * np.hypot(*d))
    closed = basic_closed_forms(t, beta)
    tabled = basic_table_weights(table, t)
    gaps = [abs(tabled[k] - v) / v for k, v in closed.items() if k in tabled]
    row = {
        "h1": t.h[0], "h2": t.h[1], "a": t.a, "b": t.b, "Delta": t.Delta, "Delta_b": t.Delta_b,
        "residual": t.residual_norm, "tail": t.tail, "cross": float(cross),
        "converged": t.converged, "iterations": t.iterations, "in_range": t.in_range(beta),
        **{f"{k}_closed": v for k, v in closed.items()},
        **{f"{k}_table": v for k, v in tabled.items()},
        "basic_gap": max(gaps) if gaps else math.nan,
        "flags": ";".join(t.flags),
    }
    row["residual_ok"] = t.residual_norm <= 1e-10 + t.tail
    row["collinear_ok"] = row["cross"] <= 1e-8
    row["basic_ok"] = len(gaps) == len(closed) and row["basic_gap"] <= float(cfg.constants.tolerances.identity_tol)
    return [row]


def _beta_grid(cfg):
    return [{"beta": beta} for beta in _betas(cfg)]


def _massgap_summary(cfg, rows):
    finite = rows[np.isfinite(rows.rate)].sort_values("beta")
    increasing = bool(np.all(np.diff(finite.rate.to_numpy()) >= 0))
    return None, [Check("gap-grows-with-beta", increasing, finite[["beta", "rate"]].to_json(orient="records"))]


@experiment("massgap", grid=_beta_grid, summarize=_massgap_summary)
def massgap(cfg, point, cache):
    table = table_for(cfg, point["beta"])
    t = tilt_solve(_option(cfg, "direction", [1.0, 0.0]), table)
    try:
        gap = mass_gap_measure(table, t.h)
    except InsufficientRangeError as e:
        logger.warning(f"Mass gap at beta={point['beta']}: {e}")
        return [{"rate": math.nan, "nu_g": math.nan, "flags": "insufficient-range"}]
    return [{
        "rate": gap.rate, "nu_g": gap.nu_g, "slope": gap.slope, "intercept": gap.intercept,
        "stderr": gap.stderr, "ks": " ".join(map(str, gap.ks)), "flags": ";".join(gap.flags),
    }]


def _wulff_summary(cfg, rows):
    return None, [
        Check("tilt-converged", _all(rows, "converged"), f"{int((~rows.converged.astype(bool)).sum())} angles did not converge"),
        Check("hessian-lower-bound", _all(rows, "hessian_ok")),
        Check("gradient-norm", _all(rows, "grad_ok")),
    ]


@experiment("wulff", grid=_beta_grid, summarize=_wulff_summary)
def wulff(cfg, point, cache):
    beta = point["beta"]
    table = table_for(cfg, beta)
    shape = wulff_shape(table, n_angles=int(_option(cfg, "n_angles", 17)))
    rows = []
    for row in shape.to_dict("records"):
        curvature = wulff_curvature(TiltVector.from_h((row["h1"], row["h2"]), beta, residual_norm=row["residual"]), table)
        curvature.pop("h1", None)
        curvature.pop("h2", None)
        rows.append({**row, **curvature})
    return rows


# --- effective walk -------------------------------------------------------


def _point_grid(default):
    def grid(cfg):
        points = _pairs(cfg.sweep.points, default)
        return [{"beta": beta, "vx": int(p[0]), "vy": int(p[1])} for beta in _betas(cfg) for p in points]
    return grid


def _dp_summary(cfg, rows):
    checks = [Check("strict-below-nonstrict", bool((rows.p_hat_plus <= rows.p_plus * (1 + 1e-12)).all()))]
    checked = rows.dropna(subset=["oracle_rel_err"])
    if len(checked):
        worst = float(checked.oracle_rel_err.max())
        checks.append(Check("sequence-oracle", worst <= float(cfg.constants.tolerances.identity_tol), f"max rel err {worst:.3e}"))
    return None, checks


@experiment("effwalk-dp", grid=_point_grid([[2, 1], [3, 2], [5, 0]]), summarize=_dp_summary)
def effwalk_dp(cfg, point, cache):
    law, _, _ = law_for(cfg, point["beta"])
    wall = wall_of(cfg)
    u, v = tuple(_option(cfg, "u", [0, 0])), (point["vx"], point["vy"])
    green = constrained_green(u, v, wall, law, window_cap=_option(cfg, "window_cap"))
    row = {
        "ux": u[0], "uy": u[1], "p_plus": green.p_plus, "p_hat_plus": green.p_hat_plus,
        "truncated_mass": green.truncated_mass, "n_window": green.n_window,
        "oracle_p_plus": math.nan, "oracle_rel_err": math.nan,
    }
    if abs(v[0] - u[0]) + abs(v[1] - u[1]) <= int(_option(cfg, "oracle_l1", 6)):
        oracle = sequence_green(u, v, wall, law)
        row["oracle_p_plus"] = oracle
        row["oracle_rel_err"] = abs(oracle - green.p_plus) / max(abs(green.p_plus), 1e-300)
    return [row]


def _alili_doney_grid(cfg):
    strict_values = [bool(s) for s in _option(cfg, "strict", [False, True])]
    return [
        {**point, "strict": strict}
        for point in _point_grid([[1, 1], [2, 1], [3, 2], [4, 0]])(cfg) for strict in strict_values
    ]


def _alili_doney_summary(cfg, rows):
    tol = float(cfg.constants.tolerances.identity_tol)
    heights = rows[rows.heights_apply.astype(bool)]
    return None, [
        Check("cyclic-identity", bool((rows.rel_err <= tol).all()), f"max rel err {rows.rel_err.max():.3e}"),
        Check("rearrangement", bool((rows.rel_err_rearrangement <= tol).all()), f"max rel err {rows.rel_err_rearrangement.max():.3e}"),
        Check("ladder-height-form", bool((heights.rel_err_heights <= tol).all()),
              f"{len(heights)} rows off the wall, max rel err {heights.rel_err_heights.max():.3e}"),
    ]


@experiment("effwalk-alili-doney", grid=_alili_doney_grid, summarize=_alili_doney_summary)
def effwalk_alili_doney(cfg, point, cache):
    law, _, _ = law_for(cfg, point["beta"])
    result = alili_doney_check(
        (point["vx"], point["vy"]), wall_of(cfg), law, int(_option(cfg, "len_cap", 10)),
        start=tuple(_option(cfg, "u", [0, 0])), strict=point["strict"],
        tol=float(cfg.constants.tolerances.identity_tol),
    )
    return [{
        "lhs": result.lhs, "rhs": result.rhs, "rhs_heights": result.rhs_heights,
        "rearrangement": result.rearrangement, "n_sequences": result.n_sequences,
        "rel_err": result.rel_err, "rel_err_heights": result.rel_err_heights,
        "rel_err_rearrangement": result.rel_err_rearrangement, "heights_apply": result.heights_apply,
    }]


def _ladder_grid(cfg):
    return [{"beta": beta, "ascending": asc} for beta in _betas(cfg) for asc in (True, False)]


def _ladder_summary(cfg, rows):
    wide = int(rows["flags"].str.contains("ci-too-wide").sum())
    return None, [
        Check("ladder-bound", _all(rows, "passed"), f"{int((~rows.passed.astype(bool)).sum())} rows above the bound"),
        Check("ladder-ci", wide == 0, f"{wide} rows with inconclusive confidence intervals"),
    ]


@experiment("effwalk-ladder", grid=_ladder_grid, summarize=_ladder_summary)
def effwalk_ladder(cfg, point, cache):
    law, _, _ = law_for(cfg, point["beta"])
    report = ladder_bound_check(
        law, wall_of(cfg),
        z_values=[float(z) for z in cfg.sweep.z] or [1.0, 3.0, 10.0],
        m_values=[int(m) for m in cfg.sweep.m] or [10, 100, 1000],
        samples=int(cfg.samples), seed=int(cfg.seed), ascending=point["ascending"],
        constants={1: float(_option(cfg, "c1", 1.0)), 2: float(_option(cfg, "c2", 2.0))},
    )
    return report.to_dict("records")


def _eps_grid(cfg):
    eps_values = [float(e) for e in cfg.sweep.eps] or [0.01, 0.05, 0.2]
    return [{"beta": beta, "eps": eps} for beta in _betas(cfg) for eps in eps_values]


def _decomp_summary(cfg, rows):
    band = float(_option(cfg, "q_band", 3.0))
    c2 = float(_option(cfg, "sandwich_c2", 2.0))
    delta1 = float(_option(cfg, "delta1", 0.01))
    delta2 = float(_option(cfg, "delta2", 0.01))
    return None, [
        Check("mixture-reconstruction", bool((rows.mixture_error <= 1e-14).all()), f"max {rows.mixture_error.max():.3e}"),
        Check("q-ratio-band", bool(((rows.q_ratio >= 1 / band) & (rows.q_ratio <= band)).all()),
              f"range [{rows.q_ratio.min():.3g}, {rows.q_ratio.max():.3g}]"),
        Check("sandwich", bool(((rows.sandwich_ratio_min >= 1 - 1e-12) & (rows.sandwich_ratio_max <= c2)).all()),
              f"P^h / lower in [{rows.sandwich_ratio_min.min():.6g}, {rows.sandwich_ratio_max.max():.6g}], c2={c2}"),
        Check("v-nondegenerate",
              bool(((rows.delta1 >= delta1) & (rows.ev_e1 >= delta2) & (rows.ev_e1 <= 1 / delta2)).all()),
              f"min delta1 {rows.delta1.min():.3g}, E V.e1 in [{rows.ev_e1.min():.3g}, {rows.ev_e1.max():.3g}]"),
    ]


@experiment("effwalk-decomp", grid=_eps_grid, summarize=_decomp_summary)
def effwalk_decomp(cfg, point, cache):
    beta = point["beta"]
    law, _, _ = law_for(cfg, beta, (1.0, point["eps"]))
    decomposition = decompose_walk(law, c0=float(_option(cfg, "c0", 4.0)), regime=_option(cfg, "regime"))
    row = decomposition.as_row()
    row["eps"] = point["eps"]
    row["non_basic_second_moment"] = law.non_basic_second_moment
    row["non_basic_scaled"] = law.non_basic_second_moment / math.exp(-2 * beta)
    row["deficiency"] = law.deficiency
    ratios = [
        decomposition_sandwich(decomposition, tuple(x)).ratio
        for x in _option(cfg, "sandwich_points", [[4, 0], [3, 1], [5, 1]])
    ]
    row["sandwich_ratio_min"], row["sandwich_ratio_max"] = min(ratios), max(ratios)
    return [row]


def _rho_summary(cfg, rows):
    if float(cfg.constants.chi) <= 0.5:
        return None, []
    return None, [
        Check("b-contracting", bool((rows.b_hat < 1).all()), f"max b_hat {rows.b_hat.max():.3e}"),
        Check("rho-recursion-bound", _all(rows, "consistent")),
    ]


@experiment("effwalk-rho", grid=_point_grid([[4, 2], [6, 4], [10, 5]]), summarize=_rho_summary)
def effwalk_rho(cfg, point, cache):
    constants = to_constants(cfg, point["beta"])
    law, _, _ = law_for(cfg, point["beta"])
    strip = _option(cfg, "strip_width")
    probe = rho_recursion_probe(
        tuple(_option(cfg, "u", [0, 0])), (point["vx"], point["vy"]), wall_of(cfg), law, constants,
        delta=_option(cfg, "delta"), strip_width=None if strip is None else int(strip),
    )
    return [probe.as_row()]


def _local_limit_grid(cfg):
    return _direction_grid([[1, 0], [1, 1], [2, 1]])(cfg)


def _local_limit_summary(cfg, rows):
    fits = (
        rows.groupby(["beta", "px", "py"], sort=True)
        .ratio.agg(["min", "max"]).reset_index()
    )
    fits["width"] = fits["max"] / fits["min"]
    checks = [Check("within-band", _all(rows, "within"), f"ratio range [{rows.ratio.min():.3g}, {rows.ratio.max():.3g}]")]
    slack = float(_option(cfg, "widening_tol", 0.1))
    betas = sorted(fits.beta.unique())
    if len(betas) >= 2:
        lo = fits[fits.beta == betas[0]].set_index(["px", "py"]).width
        hi = fits[fits.beta == betas[-1]].set_index(["px", "py"]).width
        widened = [k for k in lo.index if k in hi.index and hi[k] > lo[k] * (1 + slack)]
        checks.append(Check("band-does-not-widen", not widened, f"widened along {widened}"))
    return fits, checks


@experiment("effwalk-local-limit", grid=_local_limit_grid, summarize=_local_limit_summary)
def effwalk_local_limit(cfg, point, cache):
    p, q = int(point["d1"]), int(point["d2"])
    law, _, _ = law_for(cfg, point["beta"], (p, q))
    max_l1 = int(_option(cfg, "max_l1", 30))
    k_values = [int(k) for k in cfg.sweep.k] or list(range(1, max_l1 // (p + q) + 1))
    report = local_limit_probe(law, (p, q), k_values, band=float(_option(cfg, "band", 5.0)))
    return report.to_dict("records")


def default_eps_grid(beta: float) -> List[float]:
    return [0.0, math.exp(-2 * beta), math.exp(-beta), 0.05, 0.2]


def _bands_grid(cfg):
    return [{"fit_beta": float(_option(cfg, "fit_beta", 4.0))}]


def _bands_summary(cfg, rows):
    return None, [
        Check("a-band", _all(rows, "a_within"), f"{int((~rows.a_within.astype(bool)).sum())} rows outside"),
        Check("b-window", _all(rows, "b_within"), f"{int((~rows.b_within.astype(bool)).sum())} rows outside"),
    ]


@experiment("effwalk-bands", grid=_bands_grid, summarize=_bands_summary)
def effwalk_bands(cfg, point, cache):
    betas = [float(b) for b in cfg.sweep.beta] or [3.0, 4.0, 5.0]
    tables = {beta: table_for(cfg, beta) for beta in betas}
    eps_values = [float(e) for e in cfg.sweep.eps] or default_eps_grid
    report, fitted = band_check(tables, eps_values, point["fit_beta"], float(_option(cfg, "margin", 2.0)))
    for key, value in fitted.items():
        report[key] = value
    return report.to_dict("records")


def _vwalk_summary(cfg, rows):
    return None, [Check("hits-monotone-in-r", _all(rows, "monotone_in_r"))]


@experiment("effwalk-vwalk", grid=_beta_grid, summarize=_vwalk_summary)
def effwalk_vwalk(cfg, point, cache):
    law, _, _ = law_for(cfg, point["beta"])
    decomposition = decompose_walk(law, c0=float(_option(cfg, "c0", 4.0)))
    report = v_walk_probe(
        decomposition,
        n_values=[int(n) for n in cfg.sweep.N] or [10, 20, 40],
        r_values=[float(r) for r in cfg.sweep.z] or [1.0, 2.0, 4.0],
        samples=int(cfg.samples), seed=int(cfg.seed),
    )
    return report.to_dict("records")


# --- runner ---------------------------------------------------------------


def get_experiment(name: str) -> Experiment:
    if name not in EXPERIMENTS:
        raise ConfigValidationError(f"unknown experiment {name}; known {sorted(EXPERIMENTS)}", "experiment")
    return EXPERIMENTS[name]


def grid_for(cfg) -> List[dict]:
    return get_experiment(cfg.experiment).grid(cfg)


def evaluate_point(job) -> List[dict]:
    """Rows for one grid point; job = (config container, point, cache_dir or None)."""
    container, point, cache_dir = job
    cfg = load_config(container)
    cache = EnumerationCache(cache_dir) if cache_dir else None
    try:
        rows = get_experiment(cfg.experiment).evaluate(cfg, point, cache)
    except EnumerationBudgetExceeded as e:
        logger.warning(f"Budget exhausted at {point}: {e}")
        rows = [{"partial_log": e.partial_log, "bound_log": e.bound_log, "count": e.count, "flags": "budget-exceeded"}]
    return [{**point, **row} for row in rows]


def evaluate_grid(cfg, cache_dir=None, threads: int = 1) -> List[List[dict]]:
    """Rows per grid point, in grid order."""
    container = OmegaConf.to_container(cfg, resolve=True)
    jobs = [(container, point, cache_dir) for point in grid_for(cfg)]
    logger.info(f"Experiment {cfg.experiment}: {len(jobs)} grid points on {threads} worker(s)")
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(evaluate_point, jobs))
    return [evaluate_point(job) for job in jobs]


def _md5(path: Path) -> str:
    return md5(path.read_bytes()).hexdigest()


def collect(cfg, results: List[List[dict]]):
    """(rows, fits, checks) of an evaluated grid; rows carry their grid index."""
    exp = get_experiment(cfg.experiment)
    rows = pd.DataFrame([
        {"grid_index": i, **row} for i, point_rows in enumerate(results) for row in point_rows
    ])
    if "flags" in rows:
        rows["flags"] = rows["flags"].fillna("")
    fits, checks = exp.summarize(cfg, rows) if (exp.summarize and len(rows)) else (None, [])
    if "flags" in rows and rows["flags"].str.contains("budget-exceeded").any():
        checks.append(Check("enumeration-budget", False, "some grid points exceeded max_contours"))
    return rows, fits, checks


def finalize(cfg, results: List[List[dict]], out=None, started: Optional[str] = None, plot: bool = False) -> RunManifest:
    """Summarise rows, write the payloads and the manifest."""
    started = started or datetime.now(timezone.utc).isoformat()
    rows, fits, checks = collect(cfg, results)
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    payloads = {}
    csv_path = out / f"{cfg.name}.csv"
    rows.to_csv(csv_path, index=False)
    payloads[csv_path.name] = _md5(csv_path)
    if fits is not None:
        fits_path = out / f"{cfg.name}.fits.csv"
        fits.to_csv(fits_path, index=False)
        payloads[fits_path.name] = _md5(fits_path)
    if plot:
        try:
            from src import lab_plot
        except ImportError:
            import lab_plot
        figure = lab_plot.plot_experiment(cfg.experiment, rows, fits, out / f"{cfg.name}.png")
        if figure is not None:
            payloads[figure.name] = _md5(figure)

    constants = to_constants(cfg)
    manifest = RunManifest(
        name=cfg.name,
        experiment=cfg.experiment,
        config_hash=config_hash(cfg),
        code_version=CODE_VERSION,
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
        n_rows=len(rows),
        payloads=payloads,
        provenance={
            "cutoffs": asdict(constants.cutoffs),
            "tolerances": asdict(constants.tolerances),
            "growth_constant": constants.growth_constant,
            "grid_points": len(results),
        },
        checks=[c._asdict() for c in checks],
    )
    manifest.write(out / f"{cfg.name}.manifest.json")
    for c in checks:
        (logger.info if c.passed else logger.warning)(f"[{'PASS' if c.passed else 'FAIL'}] {c.name} {c.detail}")
    return manifest


def run(cfg, out=None, cache_dir=None, threads: int = 1, plot: bool = False) -> RunManifest:
    """Evaluate the experiment grid of `cfg` and write its payloads.

    Arguments
    ---------
    cfg: DictConfig
        A validated ExperimentConfig (see configutil.load_config)
    out: str or Path
        Output directory [default: cfg.output]
    cache_dir: str or Path
        Enumeration cache root; falls back to cfg.cache_dir, None disables caching
    threads: int
        Worker processes for the grid points
    """
    started = datetime.now(timezone.utc).isoformat()
    cache_dir = cache_dir or cfg.cache_dir
    results = evaluate_grid(cfg, cache_dir, threads)
    return finalize(cfg, results, out, started, plot)
