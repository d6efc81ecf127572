#!/usr/bin/env python3
"""Decorated contour weights and two-point functions.

Three weight conventions are available:

RAW          exp(-beta |gamma|), no decoration
CLUSTER      -beta |gamma| + sum over clusters C meeting Delta of Phi(C, C n Delta)
POSITIVIZED  -beta |gamma| + sum over clusters C meeting nabla of Phi'(C, gamma),
             evaluated as CLUSTER + 3 c(beta) |gamma|

All sums are carried in the log domain.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import linregress

try:
    from src.cache_db import EnumerationCache
    from src.clusters import clusters_touching
    from src.contours import OpenContour, enumerate_contours_parallel
    from src.errors import EnumerationBudgetExceeded
    from src.lattice import ORIGIN, AnalysisConstants, LatticePoint, WallDirection, wall_distance, wall_point
    from src.potentials import builtin_boundary_pin, c_beta, decay_bound, PotentialSpec, site_tail
except ImportError:
    from cache_db import EnumerationCache
    from clusters import clusters_touching
    from contours import OpenContour, enumerate_contours_parallel
    from errors import EnumerationBudgetExceeded
    from lattice import ORIGIN, AnalysisConstants, LatticePoint, WallDirection, wall_distance, wall_point
    from potentials import builtin_boundary_pin, c_beta, decay_bound, PotentialSpec, site_tail


logger = logging.getLogger(__name__)


class WeightMode(str, Enum):
    RAW = "RAW"
    CLUSTER = "CLUSTER"
    POSITIVIZED = "POSITIVIZED"


class Variant(str, Enum):
    FREE = "FREE"
    RESTRICTED_HALFPLANE = "RESTRICTED_HALFPLANE"
    PINNED = "PINNED"


@dataclass(frozen=True)
class ContourWeight:
    log_q: float
    truncation_err: float


@dataclass(frozen=True)
class TwoPointResult:
    endpoint: LatticePoint
    value_log: float
    error_band: Tuple[float, float]
    variant: Variant
    cutoff_used: int
    cutoff_tail_log: float
    n_contours: int = 0
    mode: WeightMode = WeightMode.POSITIVIZED
    flags: Tuple[str, ...] = ()

    def as_row(self) -> dict:
        return {
            "x": self.endpoint.x,
            "y": self.endpoint.y,
            "variant": self.variant.value,
            "mode": self.mode.value,
            "value_log": self.value_log,
            "err_lo": self.error_band[0],
            "err_hi": self.error_band[1],
            "cutoff_used": self.cutoff_used,
            "cutoff_tail_log": self.cutoff_tail_log,
            "n_contours": self.n_contours,
            "flags": ";".join(self.flags),
        }


def cluster_sum(g: OpenContour, phi, max_diam: int) -> float:
    """Sum of Phi(C, C n Delta) over clusters of diameter <= max_diam meeting Delta."""
    cap = phi.effective_cap(max_diam)
    if cap <= 0:
        return 0.0
    delta = g.neighborhoods.delta
    targets = phi.relevant_sites(sorted(delta), cap)
    if not targets:
        return 0.0
    return math.fsum(phi.evaluate(c, c & delta) for c, _ in clusters_touching(targets, cap))


def positivized_sum(g: OpenContour, phi, max_diam: int) -> float:
    """Sum of Phi'(C, gamma) over every cluster meeting nabla, evaluated term by term."""
    nbh = g.neighborhoods
    terms = []
    for cluster, diam in clusters_touching(nbh.index.sites, max_diam):
        hits = nbh.index.hits(cluster)
        terms.append(phi.evaluate(cluster, cluster & nbh.delta) + hits * decay_bound(phi.beta, phi.chi, diam))
    return math.fsum(terms)


def _cluster_error(g: OpenContour, phi, constants: AnalysisConstants) -> float:
    cap = constants.cutoffs.max_cluster_diam
    if phi.support_cap is not None and phi.support_cap <= cap:
        return 0.0
    return len(g.neighborhoods.delta) * site_tail(constants.beta, constants.chi, cap, constants.growth_constant)


def q_weight(g: OpenContour, phi, constants: AnalysisConstants, mode=WeightMode.POSITIVIZED) -> ContourWeight:
    """Log weight of a contour with a bound on the cluster-cap truncation."""
    mode = WeightMode(mode)
    bare = -constants.beta * g.length
    if mode is WeightMode.RAW:
        return ContourWeight(bare, 0.0)
    cap = constants.cutoffs.max_cluster_diam
    phi_sum = cluster_sum(g, phi, cap)
    if mode is WeightMode.CLUSTER:
        return ContourWeight(bare + phi_sum, _cluster_error(g, phi, constants))
    c_value, c_tail = c_beta(constants.beta, constants.chi, cap, constants.growth_constant)
    return ContourWeight(bare + 3 * c_value * g.length + phi_sum, 6 * c_tail * g.length)


def weight_rewrite_check(g: OpenContour, phi, constants: AnalysisConstants) -> dict:
    """Compare the cluster form with the positivized form of the same weight.

    -beta|g| + sum_{C n Delta} Phi  versus  -(beta + 3c)|g| + sum_{C n nabla} Phi'
    """
    cap = constants.cutoffs.max_cluster_diam
    c_value, c_tail = c_beta(constants.beta, constants.chi, cap, constants.growth_constant)
    direct = -constants.beta * g.length + cluster_sum(g, phi, cap)
    rewritten = -(constants.beta + 3 * c_value) * g.length + positivized_sum(g, phi, cap)
    bound = 2 * g.length * c_tail
    diff = abs(direct - rewritten)
    return {
        "contour": g.steps,
        "length": g.length,
        "form_cluster": direct,
        "form_positivized": rewritten,
        "difference": diff,
        "bound": bound,
        "ok": diff <= bound + constants.tolerances.log_weight_tol,
    }


def contours_for(a, b, max_len: int, constraint=None, cache: Optional[EnumerationCache] = None, threads: int = 1):
    if cache is not None:
        return cache.contours(a, b, max_len, constraint, threads=threads)
    return enumerate_contours_parallel(a, b, max_len, constraint, threads=threads)


def _next_length(max_len: int, l1: int) -> int:
    nxt = max_len + 1
    return nxt if (nxt - l1) % 2 == 0 else nxt + 1


def length_tail(per_length: Dict[int, float], max_len: int, l1: int, constants: AnalysisConstants):
    """Log bound on the weight of contours longer than max_len.

    Fits the per-length log sums linearly (lengths step by 2); falls back on
    a measured mass gap when fewer than three lengths were enumerated.
    """
    lengths = sorted(per_length)
    nxt = _next_length(max_len, l1)
    if len(lengths) >= 3:
        fit = linregress(lengths, [per_length[k] for k in lengths])
        if fit.slope >= 0:
            return math.inf, "tail-divergent"
        first = fit.intercept + fit.slope * nxt
        return first - math.log1p(-math.exp(2 * fit.slope)), "tail-fitted"
    if lengths and constants.nu_g is not None:
        rate = 2 * constants.nu_g * constants.beta
        first = per_length[lengths[-1]] - rate * (nxt - lengths[-1])
        return first - math.log1p(-math.exp(-2 * rate)), "tail-mass-gap"
    return -math.inf, "no-tail-estimate"


def two_point(
    x,
    variant,
    phi,
    constants: AnalysisConstants,
    wall: Optional[WallDirection] = None,
    phi_tilde=None,
    mode=WeightMode.POSITIVIZED,
    cache: Optional[EnumerationCache] = None,
    threads: int = 1,
    contours: Optional[Sequence[OpenContour]] = None,
) -> TwoPointResult:
    """G(x) as a log-sum over enumerated contours 0 -> x.

    FREE sums over all contours; RESTRICTED_HALFPLANE over contours in
    H_{+,n} with Phi; PINNED over the same set with the modified potential.
    """
    x = LatticePoint(*x)
    if x == ORIGIN:
        raise ValueError("two-point functions need x != 0")
    variant, mode = Variant(variant), WeightMode(mode)
    if variant is not Variant.FREE and wall is None:
        raise ValueError(f"{variant.value} needs a wall direction")
    potential = phi_tilde if (variant is Variant.PINNED and phi_tilde is not None) else phi
    max_len = constants.max_len_for(x)
    if contours is None:
        constraint = None if variant is Variant.FREE else wall
        contours = contours_for(ORIGIN, x, max_len, constraint, cache, threads)
    flags = []
    budget = constants.cutoffs.max_contours
    logs = np.empty(min(len(contours), budget))
    errs = np.empty_like(logs)
    lengths = np.empty(len(logs), dtype=int)
    for i, g in enumerate(contours[:budget]):
        w = q_weight(g, potential, constants, mode)
        logs[i], errs[i], lengths[i] = w.log_q, w.truncation_err, g.length
    if len(contours) > budget:
        partial = float(logsumexp(logs))
        raise EnumerationBudgetExceeded(
            f"{len(contours)} contours exceed the budget of {budget}", partial_log=partial,
            bound_log=float(logsumexp(logs + errs)), count=budget,
        )
    if len(logs) == 0:
        logger.warning(f"No contours 0 -> {tuple(x)} within max_len={max_len} ({variant.value})")
        return TwoPointResult(x, -math.inf, (-math.inf, -math.inf), variant, max_len, -math.inf, 0, mode, ("empty",))
    per_length = {int(k): float(logsumexp(logs[lengths == k])) for k in np.unique(lengths)}
    tail_log, tail_flag = length_tail(per_length, max_len, x.l1, constants)
    flags.append(tail_flag)
    if tail_flag == "no-tail-estimate" and max_len > x.l1:
        logger.warning(f"No length-tail estimate for x={tuple(x)}: too few lengths and no measured mass gap")
    value = float(logsumexp(logs))
    lo = float(logsumexp(logs - errs))
    hi = float(np.logaddexp(logsumexp(logs + errs), tail_log))
    return TwoPointResult(x, value, (lo, hi), variant, max_len, tail_log, len(logs), mode, tuple(flags))


@dataclass(frozen=True)
class SandwichReport:
    contour: OpenContour
    log_q: float
    log_q_plus: float
    slack: float
    lower_ok: bool
    upper_ok: bool

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def wall_slack(g: OpenContour, wall: WallDirection, constants: AnalysisConstants) -> float:
    """sum over vertices u of exp(-chi beta (d_n(u) + 1))."""
    return math.fsum(constants.decay(wall_distance(u, wall)) for u in g.vertices)


def sandwich_check(g, phi, phi_tilde, wall, constants, mode=WeightMode.POSITIVIZED) -> SandwichReport:
    """q exp(-s) <= q+ <= q exp(s), s the wall slack of the contour."""
    w = q_weight(g, phi, constants, mode)
    w_plus = q_weight(g, phi_tilde, constants, mode)
    s = wall_slack(g, wall, constants)
    tol = w.truncation_err + w_plus.truncation_err + constants.tolerances.log_weight_tol
    report = SandwichReport(
        g, w.log_q, w_plus.log_q, s,
        lower_ok=w.log_q - s <= w_plus.log_q + tol,
        upper_ok=w_plus.log_q <= w.log_q + s + tol,
    )
    if not report.ok:
        logger.warning(f"Sandwich violated by {g}: log q={w.log_q}, log q+={w_plus.log_q}, slack={s}")
    return report


def sandwich_sums(contours, phi, phi_tilde, wall, constants, mode=WeightMode.POSITIVIZED) -> dict:
    """Summed bracket: sum q e^-s <= sum q+ <= sum q e^s."""
    reports = [sandwich_check(g, phi, phi_tilde, wall, constants, mode) for g in contours]
    lower = float(logsumexp([r.log_q - r.slack for r in reports]))
    middle = float(logsumexp([r.log_q_plus for r in reports]))
    upper = float(logsumexp([r.log_q + r.slack for r in reports]))
    tol = constants.tolerances.log_weight_tol
    return {
        "lower": lower,
        "pinned": middle,
        "upper": upper,
        "ok": lower <= middle + tol and middle <= upper + tol,
        "violations": [r.contour.steps for r in reports if not r.ok],
    }


def sandwich_slope_bound(wall: WallDirection, constants: AnalysisConstants) -> float:
    """Largest slope in L the wall slack allows for contours hugging the wall."""
    return wall.tangent.l1 * constants.decay(1)


def ratio_point(L, phi, phi_tilde, wall, constants, mode=WeightMode.POSITIVIZED, cache=None, threads=1) -> dict:
    """log G^{+,n}(x_L) - log G(x_L | P_{+,n}) at x_L = L * tangent."""
    x = wall_point(L, wall)
    contours = contours_for(ORIGIN, x, constants.max_len_for(x), wall, cache, threads)
    pinned = two_point(x, Variant.PINNED, phi, constants, wall, phi_tilde, mode, contours=contours)
    restricted = two_point(x, Variant.RESTRICTED_HALFPLANE, phi, constants, wall, mode=mode, contours=contours)
    return {
        "L": int(L),
        "beta": constants.beta,
        "chi": constants.chi,
        "x": x.x,
        "y": x.y,
        "log_pinned": pinned.value_log,
        "log_restricted": restricted.value_log,
        "ratio_log": pinned.value_log - restricted.value_log,
        "err_lo": pinned.error_band[0] - restricted.error_band[1],
        "err_hi": pinned.error_band[1] - restricted.error_band[0],
        "cutoff_used": pinned.cutoff_used,
        "n_contours": pinned.n_contours,
        "mode": WeightMode(mode).value,
        "flags": ";".join(sorted(set(pinned.flags) | set(restricted.flags))),
    }


def fit_slope(L_values, ratio_logs) -> Tuple[float, float, float]:
    """(slope, intercept, stderr) of ratio_log against L."""
    L_values, ratio_logs = np.asarray(L_values, float), np.asarray(ratio_logs, float)
    if len(L_values) < 2:
        return 0.0, float(ratio_logs[0]) if len(ratio_logs) else 0.0, math.inf
    if np.all(ratio_logs == ratio_logs[0]):
        return 0.0, float(ratio_logs[0]), 0.0
    fit = linregress(L_values, ratio_logs)
    stderr = fit.stderr if len(L_values) > 2 else 0.0
    return float(fit.slope), float(fit.intercept), float(stderr)


def summarize_ratio(
    rows: pd.DataFrame, wall: WallDirection, constants: AnalysisConstants, sigmas: float = 2.0, with_capacity: bool = False,
) -> pd.DataFrame:
    """Per-beta slope of ratio_log with its band against the pinning scale e^-beta.

    The band is `sigmas` standard errors of the slope; `with_capacity` widens
    it by the wall slack per unit L.
    """
    fits = []
    for beta, df in rows.groupby("beta", sort=True):
        df = df.sort_values("L")
        slope, intercept, stderr = fit_slope(df.L, df.ratio_log)
        capacity = sandwich_slope_bound(wall, constants.with_beta(beta))
        band = sigmas * stderr + (capacity if with_capacity else 0.0)
        signal = math.exp(-beta)
        fits.append({
            "beta": beta,
            "slope": slope,
            "intercept": intercept,
            "stderr": stderr,
            "capacity": capacity,
            "band": band,
            "signal": signal,
            "consistent": abs(slope) <= band,
            "conclusive": band < signal,
        })
        if band >= signal:
            logger.warning(f"Ratio slope at beta={beta} is inconclusive: band {band:.3e} >= e^-beta {signal:.3e}")
    return pd.DataFrame(fits)


def nopinning_ratio_experiment(
    L_values, beta_values, phi, phi_tilde, wall, constants, mode=WeightMode.POSITIVIZED, cache=None
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """ratio_log over the (beta, L) grid and the fitted slopes per beta."""
    constants.require_no_pinning()
    rows = []
    for beta in beta_values:
        c = constants.with_beta(beta)
        for L in L_values:
            rows.append(ratio_point(L, phi.with_beta(beta), phi_tilde.with_beta(beta), wall, c, mode, cache))
    rows = pd.DataFrame(rows)
    return rows, summarize_ratio(rows, wall, constants)


def pinning_potentials(M: float, constants: AnalysisConstants, wall: WallDirection, decay_constant=None):
    """ZERO base with a BOUNDARY_PIN(M) modification, declared compatible with chi = 1/2."""
    phi = PotentialSpec.build("ZERO", constants.beta, constants.chi)
    if decay_constant is None:
        decay_constant = max(1.0, M * math.exp(-constants.beta) / constants.decay(1))
    return phi, builtin_boundary_pin(M, constants.beta, constants.chi, wall, base=phi, decay_constant=decay_constant)


def summarize_pinning(rows: pd.DataFrame) -> pd.DataFrame:
    fits = []
    for (beta, M), df in rows.groupby(["beta", "M"], sort=True):
        df = df.sort_values("L")
        slope, intercept, stderr = fit_slope(df.L, df.ratio_log)
        threshold = 0.8 * M * math.exp(-beta)
        if M == 0:
            passed = abs(slope) <= 2 * stderr + 1e-12
        elif M >= 10:
            passed = slope >= threshold
        else:
            passed = True
        fits.append({
            "beta": beta, "M": M, "slope": slope, "intercept": intercept, "stderr": stderr,
            "threshold": threshold, "pin_scale": M * math.exp(-beta), "passed": passed,
        })
    return pd.DataFrame(fits)


def pinning_demo(M_values, L_values, constants, wall, cache=None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Unpositivized weights with a wall singleton reward M e^-beta; slope per M."""
    rows = []
    for M in M_values:
        phi, phi_tilde = pinning_potentials(M, constants, wall)
        for L in L_values:
            row = ratio_point(L, phi, phi_tilde, wall, constants, WeightMode.CLUSTER, cache)
            row["M"] = float(M)
            rows.append(row)
    rows = pd.DataFrame(rows)
    return rows, summarize_pinning(rows)


def wall_for_direction(direction) -> WallDirection:
    """Admissible wall whose line contains the direction (p, q)."""
    p, q = int(direction[0]), int(direction[1])
    n = WallDirection.from_pair(-q, p)
    if not n.admissible:
        n = WallDirection.from_pair(q, -p)
    return n


def surface_tension_point(direction, N, phi, phi_tilde, constants, mode=WeightMode.POSITIVIZED, cache=None) -> dict:
    """tau(N) = -log G(x_N) / (beta |x_N|_2) for the free and the pinned ensembles."""
    x = LatticePoint(int(direction[0]), int(direction[1])) * int(N)
    d = math.hypot(x.x, x.y)
    scale = constants.beta * d
    wall = wall_for_direction(direction)
    free = two_point(x, Variant.FREE, phi, constants, mode=mode, cache=cache)
    pinned = two_point(x, Variant.PINNED, phi, constants, wall, phi_tilde, mode, cache=cache)
    row = {
        "px": int(direction[0]),
        "py": int(direction[1]),
        "N": int(N),
        "beta": constants.beta,
        "tau_free": -free.value_log / scale,
        "tau_free_lo": -free.error_band[1] / scale,
        "tau_free_hi": -free.error_band[0] / scale,
        "tau_pinned": -pinned.value_log / scale,
        "tau_pinned_lo": -pinned.error_band[1] / scale,
        "tau_pinned_hi": -pinned.error_band[0] / scale,
        "wall_a": wall.a,
        "wall_b": wall.b,
    }
    row["difference"] = row["tau_pinned"] - row["tau_free"]
    row["within_bands"] = row["tau_pinned_lo"] <= row["tau_free_hi"] and row["tau_free_lo"] <= row["tau_pinned_hi"]
    return row


def surface_tension_estimate(direction, N_values, phi, constants, phi_tilde=None, mode=WeightMode.POSITIVIZED, cache=None):
    """Finite-size surface tension estimates at each N, pinned beside free."""
    rows = [
        surface_tension_point(direction, N, phi, phi_tilde or phi, constants, mode, cache)
        for N in N_values
    ]
    return pd.DataFrame(rows)
