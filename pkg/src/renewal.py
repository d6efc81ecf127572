#!/usr/bin/env python3
"""Break points, irreducible pieces and the tilted animal law.

A vertex u = g[l] (0 < l < m) is a break point when every earlier vertex lies
in u - Y and every later one in u + Y. Paths without break points whose
vertices lie in D(g[0], g[m]) are the letters of the renewal structure;
decorating them with clusters gives irreducible animals, and the table of
their weights, tilted by h, is the step law of the effective walk.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import linregress

try:
    from src.clusters import clusters_touching
    from src.contours import OpenContour, enumerate_walks
    from src.errors import DivergentTailError, EnumerationBudgetExceeded, InsufficientRangeError, TiltConvergenceError
    from src.lattice import ORIGIN, AnalysisConstants, LatticePoint, cell_corners, cell_in_diamond, in_cone
    from src.potentials import c_beta, positivize
except ImportError:
    from clusters import clusters_touching
    from contours import OpenContour, enumerate_walks
    from errors import DivergentTailError, EnumerationBudgetExceeded, InsufficientRangeError, TiltConvergenceError
    from lattice import ORIGIN, AnalysisConstants, LatticePoint, cell_corners, cell_in_diamond, in_cone
    from potentials import c_beta, positivize


logger = logging.getLogger(__name__)

# Step strings of the four basic animals
BASIC_STEPS = {"G1": "E", "G2": "N", "G3": "EESEE", "G4": "NNWNN"}


def break_points(g: OpenContour) -> List[int]:
    """Interior indices l with g[:l+1] in g[l] - Y and g[l:] in g[l] + Y."""
    vs = g.vertices
    m = len(vs) - 1
    return [
        l for l in range(1, m)
        if all(in_cone(vs[l], vs[i]) for i in range(l)) and all(in_cone(vs[i], vs[l]) for i in range(l + 1, m + 1))
    ]


def in_left_class(g: OpenContour) -> bool:
    """g in P_l: every vertex in g.end - Y."""
    return all(in_cone(g.end, v) for v in g.vertices)


def in_right_class(g: OpenContour) -> bool:
    """g in P_r: every vertex in g.start + Y."""
    return all(in_cone(v, g.start) for v in g.vertices)


def is_letter(g: OpenContour) -> bool:
    return g.length > 0 and in_left_class(g) and in_right_class(g) and not break_points(g)


@dataclass(frozen=True)
class IrreducibleDecomposition:
    """g = left o middle[0] o ... o middle[-1] o right; empty boundary pieces are None."""

    left: Optional[OpenContour]
    middle: Tuple[OpenContour, ...]
    right: Optional[OpenContour]
    break_indices: Tuple[int, ...]

    @property
    def pieces(self) -> List[OpenContour]:
        return [p for p in (self.left, *self.middle, self.right) if p is not None]

    def concatenate(self) -> OpenContour:
        pieces = self.pieces
        out = pieces[0]
        for p in pieces[1:]:
            out = out.concat(p)
        return out


def decompose(g: OpenContour) -> IrreducibleDecomposition:
    """Split g at every break point.

    Boundary pieces that are themselves letters are moved into the middle.
    Without break points the whole path is kept as `left`.
    """
    breaks = break_points(g)
    if not breaks:
        return IrreducibleDecomposition(g, (), None, ())
    cuts = [0, *breaks, g.length]
    pieces = [g.slice(i, j) for i, j in zip(cuts, cuts[1:])]
    left, middle, right = pieces[0], list(pieces[1:-1]), pieces[-1]
    if in_right_class(left):
        middle.insert(0, left)
        left = None
    if in_left_class(right):
        middle.append(right)
        right = None
    return IrreducibleDecomposition(left, tuple(middle), right, tuple(breaks))


def _cell_side(cell, u) -> int:
    """1 if the square lies in u + Y, -1 if in u - Y, 0 if in neither."""
    corners = cell_corners(cell)
    if all(in_cone(c, u) for c in corners):
        return 1
    if all(in_cone(u, c) for c in corners):
        return -1
    return 0


def _block_mask(cluster, vertices, breaks) -> int:
    mask = 0
    for bit, idx in enumerate(breaks):
        u = vertices[idx]
        if any(_cell_side(c, u) == 0 for c in cluster):
            mask |= 1 << bit
    return mask


def animal_break_points(g: OpenContour, clusters) -> List[int]:
    """Break points of the path that every cluster leaves inside (u - Y) u (u + Y)."""
    vs = g.vertices
    return [l for l in break_points(g) if not any(_block_mask(c, vs, [l]) for c in clusters)]


@dataclass(frozen=True)
class IrreducibleAnimal:
    contour: OpenContour
    clusters: FrozenSet[FrozenSet[LatticePoint]] = frozenset()

    @property
    def displacement(self) -> LatticePoint:
        return self.contour.displacement

    @property
    def length(self) -> int:
        return self.contour.length

    def is_irreducible(self) -> bool:
        g = self.contour
        if not (in_left_class(g) and in_right_class(g)):
            return False
        if any(not cell_in_diamond(c, g.start, g.end) for cl in self.clusters for c in cl):
            return False
        return not animal_break_points(g, self.clusters)


def _cone_keep(v, remaining) -> bool:
    return in_cone(v, ORIGIN)


def candidate_paths(len_cap: int):
    """Paths from the origin with every vertex in Y and with the endpoint apex condition."""
    for steps, end in enumerate_walks(ORIGIN, len_cap, _cone_keep):
        g = OpenContour(ORIGIN, steps)
        if in_left_class(g):
            yield g


def _candidate_clusters(g: OpenContour, cluster_cap: int):
    """Clusters meeting nabla_g and lying in the diamond of the path."""
    for cluster, diam in clusters_touching(g.neighborhoods.index.sites, cluster_cap):
        if all(cell_in_diamond(c, g.start, g.end) for c in cluster):
            yield cluster, diam


def enumerate_irreducible_animals(
    len_cap: int, cluster_cap: int, phi, constants: AnalysisConstants, max_clusters: int = 2
) -> List[Tuple[IrreducibleAnimal, float]]:
    """Every irreducible animal with |g| <= len_cap and up to max_clusters clusters.

    Weights are log q = -beta |g| + sum of log(exp(Phi') - 1).
    """
    if len_cap <= 0 or cluster_cap < 0:
        raise ValueError("caps must be positive")
    budget = constants.cutoffs.max_contours
    out = []
    for g in candidate_paths(len_cap):
        breaks = break_points(g)
        candidates = []
        if cluster_cap > 0 and max_clusters > 0:
            for cluster, diam in _candidate_clusters(g, cluster_cap):
                psi = math.expm1(positivize(phi, g, cluster, diam))
                if psi > 0:
                    candidates.append((cluster, math.log(psi), _block_mask(cluster, g.vertices, breaks)))
        full = (1 << len(breaks)) - 1
        for size in range(0, max_clusters + 1):
            for subset in combinations(candidates, size):
                covered = 0
                for _, _, mask in subset:
                    covered |= mask
                if covered != full:
                    continue
                animal = IrreducibleAnimal(g, frozenset(c for c, _, _ in subset))
                out.append((animal, -constants.beta * g.length + math.fsum(lp for _, lp, _ in subset)))
                if len(out) > budget:
                    raise EnumerationBudgetExceeded(
                        f"more than {budget} irreducible animals", partial_log=float(logsumexp([w for _, w in out])),
                        count=len(out),
                    )
    return out


def path_row(g: OpenContour, phi, constants: AnalysisConstants, cluster_cap: int, c_tail: float) -> Optional[dict]:
    """Aggregated weight of every irreducible animal built on the path g.

    Clusters blocking no break point factor out as exp(Phi'); the blocking
    ones must jointly cover every break point, summed by a DP over masks.
    Returns None when no decoration makes the path irreducible.
    """
    vs = g.vertices
    breaks = break_points(g)
    full = (1 << len(breaks)) - 1
    free_terms = []
    dp = np.zeros(full + 1)
    dp[0] = 1.0
    n_clusters = n_blocking = 0
    if cluster_cap > 0:
        for cluster, diam in _candidate_clusters(g, cluster_cap):
            n_clusters += 1
            phi_prime = positivize(phi, g, cluster, diam)
            mask = _block_mask(cluster, vs, breaks)
            if not mask:
                free_terms.append(phi_prime)
                continue
            n_blocking += 1
            psi = math.expm1(phi_prime)
            new = dp.copy()
            for m in np.nonzero(dp)[0]:
                new[m | mask] += dp[m] * psi
            dp = new
    if dp[full] <= 0:
        return None
    d = g.displacement
    bare = -constants.beta * g.length
    return {
        "steps": g.steps,
        "X": d.x,
        "Y": d.y,
        "length": g.length,
        "log_q": bare + math.fsum(free_terms) + math.log(dp[full]),
        "log_q_bare": bare if not breaks else math.nan,
        "n_clusters": n_clusters,
        "n_blocking": n_blocking,
        "truncation_err": 6 * g.length * c_tail,
    }


def _rows_for_prefix(args):
    prefix, phi, constants, len_cap, cluster_cap, c_tail = args
    rows = []
    for steps, end in enumerate_walks(ORIGIN, len_cap, _cone_keep, prefix=prefix):
        g = OpenContour(ORIGIN, steps)
        if in_left_class(g):
            row = path_row(g, phi, constants, cluster_cap, c_tail)
            if row is not None:
                rows.append(row)
    return rows


class AnimalTable:
    """Per-path aggregation of irreducible animal weights.

    Columns: steps, X, Y, length, log_q, log_q_bare, n_clusters, n_blocking,
    truncation_err. Immutable after construction.
    """

    COLUMNS = ["steps", "X", "Y", "length", "log_q", "log_q_bare", "n_clusters", "n_blocking", "truncation_err"]

    def __init__(self, frame: pd.DataFrame, beta: float, chi: float, len_cap: int, cluster_cap: int):
        self.frame = frame.sort_values(["length", "steps"]).reset_index(drop=True)[self.COLUMNS]
        self.beta = beta
        self.chi = chi
        self.len_cap = len_cap
        self.cluster_cap = cluster_cap
        self._X = self.frame[["X", "Y"]].to_numpy(dtype=float)
        self._log_q = self.frame.log_q.to_numpy(dtype=float)

    def __len__(self):
        return len(self.frame)

    def log_tilted(self, h) -> np.ndarray:
        return self._log_q + self._X @ np.asarray(h, dtype=float)

    def tilted(self, h) -> pd.DataFrame:
        df = self.frame.copy()
        df["log_p"] = self.log_tilted(h)
        df["p"] = np.exp(df.log_p)
        return df

    def log_normalization(self, h) -> float:
        return float(logsumexp(self.log_tilted(h)))

    def moments(self, h):
        """(Z, E[X], Cov[X]) under the tilted weights, E and Cov normalised by Z."""
        log_w = self.log_tilted(h)
        log_z = logsumexp(log_w)
        p = np.exp(log_w - log_z)
        mean = p @ self._X
        centred = self._X - mean
        cov = (centred * p[:, None]).T @ centred
        return float(np.exp(log_z)), mean, cov

    def marginal(self, h) -> pd.DataFrame:
        """Displacement law: probability per (X, Y, length)."""
        df = self.tilted(h)
        return df.groupby(["X", "Y", "length"], as_index=False).p.sum()

    def bare_rows(self) -> pd.DataFrame:
        return self.frame[self.frame.log_q_bare.notna()]

    def length_masses(self, h) -> pd.Series:
        df = self.tilted(h)
        return df.groupby("length").p.sum()

    def tail_bound(self, h) -> float:
        """Mass beyond len_cap (geometric extrapolation) plus the cluster-cap error."""
        masses = self.length_masses(h)
        masses = masses[masses > 0]
        df = self.tilted(h)
        cap_err = float((df.p * np.expm1(df.truncation_err)).sum())
        if len(masses) < 2:
            return cap_err
        (k1, m1), (k2, m2) = list(masses.items())[-2:]
        rho = (m2 / m1) ** (1.0 / (k2 - k1))
        if rho >= 1:
            return math.inf
        return m2 * rho / (1 - rho) + cap_err


def build_animal_table(
    phi, constants: AnalysisConstants, len_cap: Optional[int] = None, cluster_cap: Optional[int] = None,
    threads: int = 1, depth: int = 2,
) -> AnimalTable:
    """Enumerate paths in P with |g| <= len_cap and aggregate their decorations."""
    len_cap = len_cap or constants.cutoffs.len_cap
    cluster_cap = constants.cutoffs.max_cluster_diam if cluster_cap is None else cluster_cap
    try:
        c_tail = c_beta(constants.beta, constants.chi, cluster_cap, constants.growth_constant)[1]
    except DivergentTailError as e:
        logger.warning(f"Animal table at beta={constants.beta}: {e}; truncation errors are unbounded")
        c_tail = math.inf
    if threads <= 1:
        rows = _rows_for_prefix(("", phi, constants, len_cap, cluster_cap, c_tail))
    else:
        rows = []
        prefixes = []
        for steps, end in enumerate_walks(ORIGIN, min(depth, len_cap), _cone_keep):
            if len(steps) < depth:
                g = OpenContour(ORIGIN, steps)
                if in_left_class(g):
                    row = path_row(g, phi, constants, cluster_cap, c_tail)
                    if row is not None:
                        rows.append(row)
            else:
                prefixes.append(steps)
        jobs = [(p, phi, constants, len_cap, cluster_cap, c_tail) for p in prefixes]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(_rows_for_prefix, jobs):
                rows.extend(chunk)
    frame = pd.DataFrame(rows, columns=AnimalTable.COLUMNS)
    logger.info(f"Animal table beta={constants.beta} len_cap={len_cap} cluster_cap={cluster_cap}: {len(frame)} paths")
    return AnimalTable(frame, constants.beta, constants.chi, len_cap, cluster_cap)


@dataclass(frozen=True)
class TiltVector:
    h: Tuple[float, float]
    a: float
    b: float
    Delta: float
    Delta_b: float
    residual_norm: float = 0.0
    direction: Tuple[float, float] = (1.0, 0.0)
    converged: bool = True
    iterations: int = 0
    tail: float = 0.0
    flags: Tuple[str, ...] = ()

    @classmethod
    def from_h(cls, h, beta: float, **kwargs) -> "TiltVector":
        a, b = beta - h[0], beta - h[1]
        return cls((float(h[0]), float(h[1])), a, b, 4 * a + beta - b, 4 * b + beta - a, **kwargs)

    @property
    def beta(self) -> float:
        return self.h[0] + self.a

    def in_range(self, beta: float, tol: float = 1e-9) -> bool:
        return -tol <= self.a <= beta + tol and -tol <= self.b <= beta + tol


def _direction(direction) -> Tuple[float, float]:
    d = np.asarray(direction, dtype=float)
    if d[0] < 0 or d[1] < 0 or not d.any():
        raise ValueError(f"direction {tuple(direction)} must lie in the closed first quadrant")
    d = d / np.abs(d).sum()
    return float(d[0]), float(d[1])


def initial_tilt(direction, beta: float) -> np.ndarray:
    """Leading-order guess: a ~ max(eps, e^-beta), e^-b ~ eps."""
    d1, d2 = _direction(direction)
    swap = d2 > d1
    if swap:
        d1, d2 = d2, d1
    eps = d2 / d1
    h1 = beta - max(eps, math.exp(-beta))
    h2 = min(max(beta + math.log(eps), 0.0), beta) if eps > 0 else 0.0
    return np.array([h2, h1] if swap else [h1, h2])


def _residual(table: AnimalTable, h, d1, d2):
    z, mean, cov = table.moments(h)
    f = np.array([math.log(z), d2 * mean[0] - d1 * mean[1]])
    jac = np.array([
        [mean[0], mean[1]],
        [d2 * cov[0, 0] - d1 * cov[1, 0], d2 * cov[0, 1] - d1 * cov[1, 1]],
    ])
    return f, jac


def tilt_solve(direction, table: AnimalTable, tol: float = 1e-12, max_iter: int = 100) -> TiltVector:
    """h on the boundary of K_beta whose tilted mean E[X] is collinear to direction.

    Damped Newton on (log Z, E[X] x direction); the step is halved while the
    residual grows. Non-convergence returns the best iterate with a warning.
    """
    beta = table.beta
    d1, d2 = _direction(direction)
    h = initial_tilt((d1, d2), beta)
    f, jac = _residual(table, h, d1, d2)
    norm = float(np.linalg.norm(f))
    it = 0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            break
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as e:
            raise TiltConvergenceError(f"singular Jacobian at h={tuple(h)} for direction {(d1, d2)}") from e
        t = 1.0
        for _ in range(40):
            trial = h + t * step
            f_t, jac_t = _residual(table, trial, d1, d2)
            norm_t = float(np.linalg.norm(f_t))
            if np.isfinite(norm_t) and norm_t < norm:
                break
            t /= 2
        else:
            break
        h, f, jac, norm = trial, f_t, jac_t, norm_t
    converged = norm <= tol
    flags = []
    if not converged:
        flags.append("no-convergence")
        logger.warning(f"Tilt solve for direction {(d1, d2)} stopped at residual {norm:.3e} after {it} iterations")
    tail = table.tail_bound(h)
    if tail > max(tol, 1e-10):
        flags.append("tail-dominates")
    tilt = TiltVector.from_h(
        h, beta, residual_norm=norm, direction=(d1, d2), converged=converged, iterations=it, tail=tail,
        flags=tuple(flags),
    )
    if not tilt.in_range(beta):
        logger.debug(f"Tilt a={tilt.a:.3e} b={tilt.b:.3e} outside [0, beta] for direction {(d1, d2)}")
    return tilt


def basic_closed_forms(tilt: TiltVector, beta: float) -> Dict[str, float]:
    """Tilted weights of the four bare basic animals."""
    return {
        "G1": math.exp(-tilt.a),
        "G2": math.exp(-tilt.b),
        "G3": math.exp(-beta - tilt.Delta),
        "G4": math.exp(-beta - tilt.Delta_b),
    }


def basic_table_weights(table: AnimalTable, tilt: TiltVector) -> Dict[str, float]:
    """The same four weights read from the bare rows of the table."""
    bare = table.bare_rows().set_index("steps")
    out = {}
    for name, steps in BASIC_STEPS.items():
        if steps in bare.index:
            row = bare.loc[steps]
            out[name] = math.exp(row.log_q_bare + tilt.h[0] * row.X + tilt.h[1] * row.Y)
    return out


@dataclass(frozen=True)
class MassGap:
    rate: float
    nu_g: float
    slope: float
    intercept: float
    stderr: float
    ks: Tuple[int, ...] = ()
    flags: Tuple[str, ...] = ()


def mass_gap_measure(table: AnimalTable, h) -> MassGap:
    """Fit log P(|Gamma| >= k) against k under the tilted law."""
    masses = table.length_masses(h).sort_index()
    total = masses.sum()
    tails = {int(k): float(masses[masses.index >= k].sum() / total) for k in masses.index}
    if not any(k >= 2 and t > 0 for k, t in tails.items()):
        return MassGap(math.inf, math.inf, -math.inf, 0.0, 0.0, (), ("degenerate",))
    ks = [k for k in sorted(tails) if k >= 2 and tails[k] > 0]
    if len(ks) < 3:
        raise InsufficientRangeError(f"only {len(ks)} usable tail lengths {ks}; need 3")
    fit = linregress(ks, [math.log(tails[k]) for k in ks])
    rate = -fit.slope
    return MassGap(rate, rate / table.beta, fit.slope, fit.intercept, fit.stderr, tuple(ks))


def wulff_curvature(tilt: TiltVector, table: AnimalTable) -> dict:
    """Curvature of the boundary of K_beta at h: m_perp . Cov m_perp / |E X|."""
    z, mean, cov = table.moments(tilt.h)
    speed = float(np.hypot(*mean))
    flags = []
    if speed == 0:
        return {"curvature": math.nan, "flags": "singular-gradient"}
    m_perp = np.array([-mean[1], mean[0]]) / speed
    hess = float(m_perp @ cov @ m_perp)
    pa, pb = math.exp(-tilt.a), math.exp(-tilt.b)
    lower = pa * pb / (pa + pb) * (m_perp[0] - m_perp[1]) ** 2
    if hess <= 0:
        flags.append("singular-hessian")
    l1 = float(np.abs(mean).sum())
    return {
        "h1": tilt.h[0],
        "h2": tilt.h[1],
        "mean_x": float(mean[0]),
        "mean_y": float(mean[1]),
        "grad_l1": l1,
        "hessian_perp": hess,
        "curvature": hess / speed,
        "hessian_lower": lower,
        "hessian_ok": hess >= lower * (1 - 1e-9),
        "grad_ok": l1 >= 1 - 1e-9,
        "b_scale": math.exp(-tilt.b),
        "flags": ";".join(flags),
    }


def eps_case(eps: float, beta: float) -> str:
    if eps >= 2 * math.exp(-beta):
        return "large"
    if eps >= math.exp(-2 * beta):
        return "middle"
    return "small"


def _b_statistic(case: str, eps: float, beta: float, b: float) -> float:
    """Deviation of beta - b from its leading order in each eps window."""
    if case == "large":
        return abs((beta - b) - (beta + math.log(eps)))
    if case == "middle":
        return (beta - b) / (eps * math.exp(beta))
    return abs(beta - b) * math.exp(beta)


def _spread(case: str, stat: float) -> float:
    if case != "middle":
        return abs(stat)
    return max(stat, 1 / stat) if stat > 0 else math.inf


def band_check(tables: Dict[float, AnimalTable], eps_values, fit_beta: float = 4.0, margin: float = 2.0):
    """a / max(eps, e^-beta) and beta - b against bands fitted at fit_beta only.

    eps_values is a sequence, or a callable beta -> sequence for grids that
    scale with beta.

    Returns (rows, constants); constants are never refitted at other beta.
    """
    rows = []
    for beta in sorted(tables):
        grid = eps_values(beta) if callable(eps_values) else eps_values
        for eps in grid:
            tilt = tilt_solve((1.0, eps), tables[beta])
            case = eps_case(eps, beta)
            rows.append({
                "beta": beta,
                "eps": eps,
                "case": case,
                "a": tilt.a,
                "b": tilt.b,
                "a_ratio": tilt.a / max(eps, math.exp(-beta)),
                "b_stat": _b_statistic(case, eps, beta, tilt.b),
                "residual": tilt.residual_norm,
                "flags": ";".join(tilt.flags),
            })
    df = pd.DataFrame(rows)
    fit = df[df.beta == fit_beta]
    if fit.empty:
        raise InsufficientRangeError(f"no table at fit_beta={fit_beta}")
    c_a = margin * float(np.max(np.maximum(fit.a_ratio, 1 / fit.a_ratio)))
    c_b = {case: margin * max(_spread(case, s) for s in part.b_stat) for case, part in fit.groupby("case")}
    df["a_within"] = (df.a_ratio >= 1 / c_a) & (df.a_ratio <= c_a)

    def b_within(row):
        c = c_b.get(row.case)
        if c is None:
            return False
        return _spread(row.case, row.b_stat) <= c

    df["b_within"] = df.apply(b_within, axis=1)
    missing = sorted(set(df.case) - set(c_b))
    if missing:
        logger.warning(f"No fit-beta rows for eps windows {missing}; those rows fail the band check")
    return df, {"c_a": c_a, **{f"c_b_{k}": v for k, v in c_b.items()}}


def wulff_shape(table: AnimalTable, n_angles: int = 17, angles: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """tau(theta) = h . (cos theta, sin theta) over theta in [0, pi/2]."""
    if angles is None:
        angles = np.linspace(0.0, math.pi / 2, n_angles)
    rows = []
    for theta in angles:
        x = (math.cos(theta), math.sin(theta))
        tilt = tilt_solve((max(x[0], 0.0), max(x[1], 0.0)), table)
        rows.append({
            "theta": float(theta),
            "x1": x[0],
            "x2": x[1],
            "h1": tilt.h[0],
            "h2": tilt.h[1],
            "tau": tilt.h[0] * x[0] + tilt.h[1] * x[1],
            "a": tilt.a,
            "b": tilt.b,
            "residual": tilt.residual_norm,
            "converged": tilt.converged,
        })
    return pd.DataFrame(rows)
