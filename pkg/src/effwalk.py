#!/usr/bin/env python3
"""The effective random walk driven by tilted irreducible animals.

R_l = u + X_1 + ... + X_l with i.i.d. steps X_i in Y. Every step raises the
level x + y by at least one, so Green functions between two points are finite
sums computed exactly by a level-ordered dynamic programme over D(u, v).
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binom, nbinom

try:
    from src.errors import CapTooSmallError, InputOutsideHalfPlaneError, WindowOverflowError
    from src.lattice import E1, E2, ORIGIN, LatticePoint, WallDirection, in_cone, in_diamond
    from src.renewal import AnimalTable, TiltVector
except ImportError:
    from errors import CapTooSmallError, InputOutsideHalfPlaneError, WindowOverflowError
    from lattice import E1, E2, ORIGIN, LatticePoint, WallDirection, in_cone, in_diamond
    from renewal import AnimalTable, TiltVector


logger = logging.getLogger(__name__)

DOWN_STEP = LatticePoint(4, -1)
LEFT_STEP = LatticePoint(-1, 4)
# Steps whose second moment is not counted as non-basic
BASIC_SUPPORT = frozenset({E1, E2, DOWN_STEP})


class LawMode(str, Enum):
    BASIC = "BASIC"
    TABLE = "TABLE"


class Atom(NamedTuple):
    step: LatticePoint
    prob: float
    length: int


@dataclass(frozen=True)
class StepLaw:
    atoms: Tuple[Atom, ...]
    mode: LawMode
    tilt: Optional[TiltVector] = None
    deficiency: float = 0.0

    @property
    def total(self) -> float:
        return math.fsum(a.prob for a in self.atoms)

    def merged(self) -> List[Tuple[LatticePoint, float]]:
        """Probability per distinct step, in a fixed order."""
        out: Dict[LatticePoint, float] = {}
        for atom in self.atoms:
            out[atom.step] = out.get(atom.step, 0.0) + atom.prob
        return sorted(out.items(), key=lambda sp: (sp[0].level, sp[0].x))

    def prob(self, step) -> float:
        step = LatticePoint(*step)
        return math.fsum(a.prob for a in self.atoms if a.step == step)

    @property
    def non_basic_second_moment(self) -> float:
        return math.fsum(a.prob * (a.step.x ** 2 + a.step.y ** 2) for a in self.atoms if a.step not in BASIC_SUPPORT)

    @property
    def max_level(self) -> int:
        return max(a.step.level for a in self.atoms)

    def normalised(self) -> "StepLaw":
        t = self.total
        return StepLaw(tuple(Atom(a.step, a.prob / t, a.length) for a in self.atoms), self.mode, self.tilt, 0.0)


def build_step_law(mode, tilt: TiltVector, table: Optional[AnimalTable] = None, include_left: bool = True) -> StepLaw:
    """BASIC: the closed-form basic atoms; TABLE: the displacement marginal of the tilted table."""
    mode = LawMode(mode)
    beta = tilt.beta
    if mode is LawMode.BASIC:
        atoms = [
            Atom(E1, math.exp(-tilt.a), 1),
            Atom(E2, math.exp(-tilt.b), 1),
            Atom(DOWN_STEP, math.exp(-beta - tilt.Delta), 5),
        ]
        if include_left:
            atoms.append(Atom(LEFT_STEP, math.exp(-beta - tilt.Delta_b), 5))
        return StepLaw(tuple(atoms), mode, tilt, 0.0)
    if table is None:
        raise ValueError("a TABLE law needs an animal table")
    marginal = table.marginal(tilt.h)
    atoms = tuple(
        Atom(LatticePoint(int(r.X), int(r.Y)), float(r.p), int(r.length)) for r in marginal.itertuples()
    )
    law = StepLaw(atoms, mode, tilt)
    return StepLaw(atoms, mode, tilt, 1.0 - law.total)


def diamond_window(u, v) -> List[LatticePoint]:
    """Lattice points of D(u, v), level by level."""
    u, v = LatticePoint(*u), LatticePoint(*v)
    gap = v.level - u.level
    if gap < 0 or not in_cone(v, u):
        return []
    pts = []
    for k in range(gap + 1):
        for dx in range(-k, 2 * k + 1):
            p = LatticePoint(u.x + dx, u.y + k - dx)
            if in_diamond(p, u, v):
                pts.append(p)
    return pts


@dataclass(frozen=True)
class GreenResult:
    p_plus: float
    p_hat_plus: float
    truncated_mass: float = 0.0
    n_window: int = 0


def _allowed(wall, q, strict: bool) -> bool:
    if wall is None:
        return True
    s = wall.dot(q)
    return s > 0 if strict else s >= 0


def _green_dp(window, index, u, v, wall, steps, strict, max_steps=None) -> float:
    """Sum over walks u -> v with every intermediate position allowed by the wall."""
    if u == v:
        return 1.0
    iu, iv = index[u], index[v]
    if max_steps is None:
        f = np.zeros(len(window))
        f[iu] = 1.0
        for i, p in enumerate(window):
            if f[i] == 0.0 or i == iv:
                continue
            for y, prob in steps:
                q = p + y
                j = index.get(q)
                if j is None or (j != iv and not _allowed(wall, q, strict)):
                    continue
                f[j] += f[i] * prob
        return float(f[iv])
    f = np.zeros((max_steps + 1, len(window)))
    f[0, iu] = 1.0
    for k in range(max_steps):
        for i in np.nonzero(f[k])[0]:
            if i == iv:
                continue
            p = window[i]
            for y, prob in steps:
                q = p + y
                j = index.get(q)
                if j is None or (j != iv and not _allowed(wall, q, strict)):
                    continue
                f[k + 1, j] += f[k, i] * prob
    return float(f[:, iv].sum())


def constrained_green(
    u, v, wall: Optional[WallDirection], law: StepLaw, max_steps: Optional[int] = None,
    window_cap: Optional[int] = None,
) -> GreenResult:
    """P_+(u, v) (intermediate n.R >= 0) and the strict P^_+(u, v) (n.R > 0).

    wall=None gives the unconstrained Green function in both fields.
    """
    u, v = LatticePoint(*u), LatticePoint(*v)
    if wall is not None:
        for p in (u, v):
            if wall.dot(p) < 0:
                raise InputOutsideHalfPlaneError(f"{tuple(p)} lies below the wall {wall}")
    window = diamond_window(u, v)
    if not window:
        return GreenResult(0.0, 0.0, 0.0, 0)
    if window_cap is not None and len(window) > window_cap:
        raise WindowOverflowError(f"D({tuple(u)}, {tuple(v)}) has {len(window)} points > cap {window_cap}")
    index = {p: i for i, p in enumerate(window)}
    steps = law.merged()
    gap = v.level - u.level
    layered = max_steps if (max_steps is not None and max_steps < gap) else None
    p_plus = _green_dp(window, index, u, v, wall, steps, False, layered)
    p_hat = _green_dp(window, index, u, v, wall, steps, True, layered)
    truncated = 0.0
    if layered is not None:
        truncated = _green_dp(window, index, u, v, wall, steps, False) - p_plus
    return GreenResult(p_plus, p_hat, truncated, len(window))


def bridge_sequences(u, v, law: StepLaw, len_cap: int) -> Iterator[Tuple[Tuple[int, ...], float]]:
    """Every step sequence u -> v with 1..len_cap steps, as (atom indices, probability)."""
    u, v = LatticePoint(*u), LatticePoint(*v)
    steps = law.merged()

    def dfs(p, seq, w):
        if p == v and seq:
            yield tuple(seq), w
            return
        if len(seq) == len_cap:
            return
        for i, (y, prob) in enumerate(steps):
            q = p + y
            if in_cone(v, q):
                seq.append(i)
                yield from dfs(q, seq, w * prob)
                seq.pop()

    yield from dfs(u, [], 1.0)


def sequence_green(u, v, wall, law: StepLaw, strict: bool = False, len_cap: Optional[int] = None) -> float:
    """Green function by brute force over step sequences."""
    u, v = LatticePoint(*u), LatticePoint(*v)
    if u == v:
        return 1.0
    steps = law.merged()
    len_cap = len_cap or (v.level - u.level)
    total = []
    for seq, w in bridge_sequences(u, v, law, len_cap):
        p, ok = u, True
        for i in seq[:-1]:
            p = p + steps[i][0]
            if not _allowed(wall, p, strict):
                ok = False
                break
        if ok:
            total.append(w)
    return math.fsum(total)


def _wall_event(s0: int, increments: Sequence[int], strict: bool) -> bool:
    """Every intermediate level s0 + S_k (0 < k < m) is >= 0 (> 0 when strict)."""
    s = s0
    for inc in increments[:-1]:
        s += inc
        if s < 0 or (strict and s == 0):
            return False
    return True


def _ascending_heights(increments: Sequence[int], target: int, strict: bool) -> int:
    """Ascending ladder heights H with 0 <= H <= target (strict: H > running max, H > 0)."""
    s = top = count = 0
    for inc in increments:
        s += inc
        if s > top or (not strict and s == top):
            top = s
            if (0 < s if strict else 0 <= s) and s <= target:
                count += 1
    return count


@dataclass(frozen=True)
class AliliDoneyResult:
    lhs: float
    rhs: float
    rhs_heights: float
    rearrangement: float
    n_sequences: int
    strict: bool
    heights_apply: bool = False

    @property
    def rel_err(self) -> float:
        return abs(self.lhs - self.rhs) / max(abs(self.lhs), 1e-300)

    @property
    def rel_err_heights(self) -> float:
        return abs(self.lhs - self.rhs_heights) / max(abs(self.lhs), 1e-300)

    @property
    def rel_err_rearrangement(self) -> float:
        return abs(self.lhs - self.rearrangement) / max(abs(self.lhs), 1e-300)


def alili_doney_check(
    v, wall: WallDirection, law: StepLaw, len_cap: int, start=ORIGIN, strict: bool = False, tol: float = 1e-12
) -> AliliDoneyResult:
    """P_+(u, v) against its cyclic-rotation form and its path-reversal form.

    rhs = sum over m-step bridges of p(seq) * #{rotations in the wall event} / m,
    rearrangement = sum of p(seq) over bridges whose last level dominates.
    The literal ladder-height count is reported as rhs_heights. It matches
    lhs only when start lies on the wall and v strictly above it
    (heights_apply); with v on the wall it does not hold in either variant.
    """
    u, v = LatticePoint(*start), LatticePoint(*v)
    if u == v:
        raise ValueError("the identity needs v != start")
    green = constrained_green(u, v, wall, law)
    lhs = green.p_hat_plus if strict else green.p_plus
    steps = law.merged()
    incs_of = [wall.dot(y) for y, _ in steps]
    s0, target = wall.dot(u), wall.dot(v) - wall.dot(u)
    rot_terms, height_terms, rev_terms, covered = [], [], [], []
    count = 0
    for seq, w in bridge_sequences(u, v, law, len_cap):
        count += 1
        incs = [incs_of[i] for i in seq]
        m = len(incs)
        rotations = sum(_wall_event(s0, incs[j:] + incs[:j], strict) for j in range(m))
        rot_terms.append(w * rotations / m)
        height_terms.append(w * _ascending_heights(incs, target, strict) / m)
        partial = np.cumsum(incs)
        if strict:
            dominated = all(partial[k] < partial[-1] + s0 for k in range(m - 1))
        else:
            dominated = all(partial[k] <= partial[-1] + s0 for k in range(m - 1))
        rev_terms.append(w if dominated else 0.0)
        covered.append(w if _wall_event(s0, incs, strict) else 0.0)
    missing = lhs - math.fsum(covered)
    if missing > tol * max(lhs, 1.0):
        raise CapTooSmallError(f"len_cap={len_cap} misses mass {missing:.3e} of P_+({tuple(u)}, {tuple(v)})")
    return AliliDoneyResult(
        lhs, math.fsum(rot_terms), math.fsum(height_terms), math.fsum(rev_terms), count, strict,
        heights_apply=s0 == 0 and target > 0,
    )


class Regime(str, Enum):
    OPT1 = "OPT1"
    OPT2 = "OPT2"


@dataclass(frozen=True)
class DecompositionParams:
    q: float
    p: float
    alpha1: float
    alpha2: float
    regime: Regime
    eps: float = 0.0


@dataclass(frozen=True)
class WalkDecomposition:
    """X = xi U + (1 - xi) V with xi ~ Bernoulli(q) and U in {e1, e2}."""

    params: DecompositionParams
    law: StepLaw
    u_law: Dict[LatticePoint, float]
    v_law: Dict[LatticePoint, float]
    flags: Tuple[str, ...] = ()

    def mixture(self) -> Dict[LatticePoint, float]:
        q = self.params.q
        steps = set(self.u_law) | set(self.v_law)
        return {y: q * self.u_law.get(y, 0.0) + (1 - q) * self.v_law.get(y, 0.0) for y in steps}

    @property
    def mixture_error(self) -> float:
        mix = self.mixture()
        merged = dict(self.law.merged())
        return max(abs(mix.get(y, 0.0) - merged.get(y, 0.0)) for y in set(mix) | set(merged))

    @property
    def down_scale(self) -> float:
        t = self.law.tilt
        return math.exp(-t.beta - t.Delta)

    @property
    def q_ratio(self) -> float:
        """(1 - q) / e^{-beta - Delta}; bounded above and below uniformly in beta."""
        return (1 - self.params.q) / self.down_scale

    @property
    def v_total(self) -> float:
        return math.fsum(self.v_law.values())

    @property
    def delta1(self) -> float:
        """min{P(V = e2), P(V = 4e1 - e2)} of the V law normalised to one."""
        return min(self.v_law.get(E2, 0.0), self.v_law.get(DOWN_STEP, 0.0)) / self.v_total

    @property
    def ev_e1(self) -> float:
        return math.fsum(y.x * pr for y, pr in self.v_law.items()) / self.v_total

    def as_row(self) -> dict:
        p = self.params
        return {
            "regime": p.regime.value,
            "eps": p.eps,
            "q": p.q,
            "p": p.p,
            "alpha1": p.alpha1,
            "alpha2": p.alpha2,
            "mixture_error": self.mixture_error,
            "q_ratio": self.q_ratio,
            "delta1": self.delta1,
            "ev_e1": self.ev_e1,
            "flags": ";".join(self.flags),
        }


def law_eps(law: StepLaw) -> float:
    d1, d2 = law.tilt.direction
    return min(d1, d2) / max(d1, d2)


def decompose_walk(law: StepLaw, c0: float = 4.0, regime: Optional[str] = None) -> WalkDecomposition:
    """Split off a Bernoulli(q) share of the unit steps.

    OPT1 (eps <= c0 e^-beta) moves all of P(e1) into U; OPT2 leaves
    e^{-beta-Delta} / eta of P(e1) and e^{-beta-Delta} of P(e2) in V.
    """
    tilt = law.tilt
    if tilt is None:
        raise ValueError("decomposition needs a law with its tilt")
    beta = tilt.beta
    eps = law_eps(law)
    threshold = c0 * math.exp(-beta)
    flags = []
    if threshold / 2 <= eps <= 2 * threshold:
        flags.append("regime-boundary")
        logger.warning(f"eps={eps:.3e} is within a factor 2 of c0 e^-beta={threshold:.3e}; both regimes apply")
    regime = Regime(regime) if regime else (Regime.OPT1 if eps <= threshold else Regime.OPT2)
    p1, p2 = law.prob(E1), law.prob(E2)
    down = math.exp(-beta - tilt.Delta)
    if regime is Regime.OPT1:
        alpha1, alpha2 = 1.0, 0.0
    else:
        spread = math.fsum(abs(y.x) * pr + abs(y.y) * pr for y, pr in law.merged() if y not in (E1, E2))
        eta = down / spread
        alpha1 = min(max(1 - down / (eta * p1), 0.0), 1.0)
        alpha2 = min(max(1 - down / p2, 0.0), 1.0)
    q = alpha1 * p1 + alpha2 * p2
    p = alpha2 * p2 / q if q > 0 else 0.0
    u_law = {E1: 1 - p, E2: p}
    v_law = {}
    for y, pr in law.merged():
        rest = pr - q * u_law.get(y, 0.0)
        if y == E1:
            rest = (1 - alpha1) * p1
        elif y == E2:
            rest = (1 - alpha2) * p2
        v_law[y] = rest / (1 - q)
    return WalkDecomposition(DecompositionParams(q, p, alpha1, alpha2, regime, eps), law, u_law, v_law, tuple(flags))


@dataclass(frozen=True)
class SandwichResult:
    x: LatticePoint
    lower: float
    green: float
    last_u: float

    @property
    def ratio(self) -> float:
        return self.green / self.lower if self.lower > 0 else math.inf


def decomposition_sandwich(decomposition: WalkDecomposition, x) -> SandwichResult:
    """sum_{l>=1, m} P(N_l = m) sum_y P(R^U_l = y) P(R^V_m = x - y) against P^h(0, x).

    N_l ~ NegBin(l, q) counts V steps before the l-th U step. The sum is the
    mass of walks 0 -> x whose last step is a U step, so it equals
    q sum_u U(u) P^h(0, x - u) and never exceeds P^h(0, x).
    """
    x = LatticePoint(*x)
    q, p = decomposition.params.q, decomposition.params.p
    law = decomposition.law
    top = x.level
    green = constrained_green(ORIGIN, x, None, law).p_plus
    v_steps = [(y, pr) for y, pr in decomposition.v_law.items() if pr > 0]
    layers = [{ORIGIN: 1.0}]
    for _ in range(top - 1):
        layer: Dict[LatticePoint, float] = {}
        for z, w in layers[-1].items():
            for y, pr in v_steps:
                s = z + y
                if s.level < top:
                    layer[s] = layer.get(s, 0.0) + w * pr
        layers.append(layer)
    terms = []
    if q > 0:
        for ell in range(1, top + 1):
            for m in range(0, top - ell + 1):
                conv = math.fsum(
                    binom.pmf(k, ell, p) * layers[m].get(LatticePoint(x.x - (ell - k), x.y - k), 0.0)
                    for k in range(ell + 1)
                )
                if conv:
                    terms.append(nbinom.pmf(m, ell, q) * conv)
    lower = math.fsum(terms)
    last_u = q * math.fsum(
        pr * constrained_green(ORIGIN, LatticePoint(x.x - u.x, x.y - u.y), None, law).p_plus
        for u, pr in decomposition.u_law.items() if pr > 0
    )
    return SandwichResult(x, lower, green, last_u)


def local_limit_probe(law: StepLaw, direction, k_values: Sequence[int], band: float = 5.0) -> pd.DataFrame:
    """P^h(0, k * direction) by the unconstrained DP against 1 / (sqrt(e^-b |x|_1) v 1)."""
    p, q = int(direction[0]), int(direction[1])
    b = law.tilt.b
    rows = []
    for k in k_values:
        x = LatticePoint(p * k, q * k)
        value = constrained_green(ORIGIN, x, None, law).p_plus
        scale = 1.0 / max(math.sqrt(math.exp(-b) * x.l1), 1.0)
        ratio = value / scale
        rows.append({
            "px": p, "py": q, "k": int(k), "x": x.x, "y": x.y, "l1": x.l1,
            "P": value, "scale": scale, "ratio": ratio,
            "within": 1 / band <= ratio <= band,
        })
    return pd.DataFrame(rows)


def _sample_steps(rng: np.random.Generator, law_items, size) -> np.ndarray:
    steps = np.array([[y.x, y.y] for y, _ in law_items], dtype=np.int64)
    probs = np.array([pr for _, pr in law_items])
    idx = rng.choice(len(steps), size=size, p=probs / probs.sum())
    return steps[idx]


def v_walk_probe(
    decomposition: WalkDecomposition, n_values, r_values, samples: int = 2000, seed: int = 0,
    box_c: float = 1.0, window_c: float = 1.0,
) -> pd.DataFrame:
    """Mean number of k with |k - n| <= c r and R_k in the box n EV + [-C r, C r] x [-r, r]."""
    items = [(y, pr) for y, pr in decomposition.v_law.items() if pr > 0]
    total = math.fsum(pr for _, pr in items)
    mean = np.array([math.fsum(y.x * pr for y, pr in items), math.fsum(y.y * pr for y, pr in items)]) / total
    horizon = int(max(n_values) + window_c * max(r_values)) + 1
    rng = np.random.Generator(np.random.Philox(seed))
    steps = _sample_steps(rng, items, (samples, horizon))
    pos = np.concatenate([np.zeros((samples, 1, 2), dtype=np.int64), np.cumsum(steps, axis=1)], axis=1)
    rows = []
    for n in n_values:
        centre = n * mean
        for r in r_values:
            lo, hi = max(0, int(math.floor(n - window_c * r))), min(horizon, int(math.ceil(n + window_c * r)))
            seg = pos[:, lo : hi + 1, :]
            inside = (np.abs(seg[..., 0] - centre[0]) <= box_c * r) & (np.abs(seg[..., 1] - centre[1]) <= r)
            hits = inside.sum(axis=1)
            scale = r * r / max(n, 1)
            rows.append({
                "n": int(n), "r": float(r), "hits": float(hits.mean()),
                "hits_se": float(hits.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.nan,
                "scale": scale, "ratio": float(hits.mean()) / scale,
            })
    df = pd.DataFrame(rows)
    df["monotone_in_r"] = df.groupby("n").hits.transform(lambda s: bool(np.all(np.diff(s.to_numpy()) >= 0)))
    return df
