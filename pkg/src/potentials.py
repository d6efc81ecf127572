#!/usr/bin/env python3
"""Cluster potentials, their half-plane modifications and positivization.

A potential evaluates Phi(C, C n Delta_gamma): it only ever sees the cluster
and its intersection with the contour neighbourhood. Base potentials are
registered by kind with the @potential decorator; the registry is what the
config layer looks kinds up in.
"""
import importlib
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from hashlib import md5
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

try:
    from src.clusters import Bond, clusters_touching, sites_touching_bond
    from src.contours import OpenContour, random_contour
    from src.errors import DecayViolationError, DivergentTailError
    from src.lattice import (
        LatticePoint,
        WallDirection,
        cell_in_half_plane,
        cell_min_dot,
        cell_straddles_wall,
        diam_inf,
    )
except ImportError:
    from clusters import Bond, clusters_touching, sites_touching_bond
    from contours import OpenContour, random_contour
    from errors import DecayViolationError, DivergentTailError
    from lattice import LatticePoint, WallDirection, cell_in_half_plane, cell_min_dot, cell_straddles_wall, diam_inf


logger = logging.getLogger(__name__)

POTENTIALS: Dict[str, Callable] = {}
MODIFICATIONS = ("BOUNDARY_PIN", "RANDOM_SIGN")


def potential(func):
    """Adds an evaluator to the table of available potential kinds.

    The kind is the upper-cased function name; evaluators receive the
    canonicalised cluster, the canonicalised intersection and the PotentialSpec.
    """
    POTENTIALS[func.__name__.upper()] = func
    return func


def decay_bound(beta: float, chi: float, diam) -> float:
    return math.exp(-chi * beta * (diam + 1))


def _signed_hash(*parts) -> int:
    digest = md5("|".join(map(str, parts)).encode()).digest()
    return 1 if digest[0] & 1 else -1


@potential
def zero(cluster, intersection, spec) -> float:
    return 0.0


@potential
def random_sign(cluster, intersection, spec) -> float:
    """sigma(C, C n Delta) * exp(-chi*beta*(diam + 1)), sigma from a seeded hash."""
    sigma = _signed_hash(spec.param("seed", 0), sorted(cluster), sorted(intersection))
    amplitude = spec.param("amplitude", 1.0)
    return sigma * amplitude * decay_bound(spec.beta, spec.chi, diam_inf(cluster))


@lru_cache(maxsize=None)
def _load_user(target: str):
    module_name, _, func_name = target.partition(":")
    if not func_name:
        raise ValueError(f"user potential '{target}' must look like 'package.module:function'")
    return getattr(importlib.import_module(module_name), func_name)


@potential
def user(cluster, intersection, spec) -> float:
    func = _load_user(spec.param("target"))
    return float(func(cluster, intersection, spec.beta, spec.chi))


@dataclass(frozen=True)
class PotentialSpec:
    """A translation covariant cluster potential.

    support_cap bounds the diameter of clusters with a non-zero value:
    0 means identically zero, None means unbounded.
    """

    kind: str
    beta: float
    chi: float
    params: Tuple[Tuple[str, Any], ...] = ()
    support_cap: Optional[int] = None

    def __post_init__(self):
        if self.kind not in POTENTIALS:
            raise ValueError(f"Unknown potential kind {self.kind}; known: {sorted(POTENTIALS)}")

    @classmethod
    def build(cls, kind: str, beta: float, chi: float, **params) -> "PotentialSpec":
        kind = kind.upper()
        support = 0 if kind == "ZERO" else params.pop("support_cap", None)
        return cls(kind, float(beta), float(chi), tuple(sorted(params.items())), support)

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    def evaluate(self, cluster, intersection) -> float:
        if not intersection or self.support_cap == 0:
            return 0.0
        anchor = min(cluster)
        canonical = frozenset(c - anchor for c in cluster)
        canonical_hit = frozenset(c - anchor for c in intersection)
        return POTENTIALS[self.kind](canonical, canonical_hit, self)

    def relevant_sites(self, sites, max_diam: int):
        """Target sites whose clusters can carry a non-zero value."""
        return () if self.support_cap == 0 else sites

    def effective_cap(self, max_diam: int) -> int:
        if self.support_cap is None:
            return max_diam
        return min(max_diam, self.support_cap)

    def with_beta(self, beta: float) -> "PotentialSpec":
        return PotentialSpec(self.kind, float(beta), self.chi, self.params, self.support_cap)


@dataclass(frozen=True)
class ModifiedPotentialSpec:
    """Phi~: equals the base potential on clusters inside H_{+,n}.

    Clusters leaving the half-plane get the override: BOUNDARY_PIN adds
    M*exp(-beta) to singletons straddling the wall; RANDOM_SIGN replaces the
    value by an independently seeded worst-case sign.
    """

    base: PotentialSpec
    override: str
    wall: WallDirection
    params: Tuple[Tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.override not in MODIFICATIONS:
            raise ValueError(f"Unknown modification {self.override}; known: {MODIFICATIONS}")

    @property
    def beta(self):
        return self.base.beta

    @property
    def chi(self):
        return self.base.chi

    @property
    def kind(self):
        return f"{self.base.kind}+{self.override}"

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    @property
    def support_cap(self):
        if self.override == "BOUNDARY_PIN":
            base = self.base.support_cap
            return None if base is None else max(base, 1)
        return None

    def effective_cap(self, max_diam: int) -> int:
        if self.support_cap is None:
            return max_diam
        return min(max_diam, self.support_cap)

    def relevant_sites(self, sites, max_diam: int):
        """Drop sites so deep inside H_{+,n} that no cluster through them leaves it.

        Only valid when the base potential vanishes identically.
        """
        if self.base.support_cap != 0:
            return sites
        reach = (max_diam - 1) * self.wall.l1
        return [s for s in sites if cell_min_dot(s, self.wall) < reach]

    def inside(self, cluster) -> bool:
        return all(cell_in_half_plane(c, self.wall) for c in cluster)

    def evaluate(self, cluster, intersection) -> float:
        if not intersection:
            return 0.0
        base = self.base.evaluate(cluster, intersection)
        if self.inside(cluster):
            return base
        if self.override == "BOUNDARY_PIN":
            if len(cluster) == 1 and cell_straddles_wall(next(iter(cluster)), self.wall):
                return base + self.param("M", 0.0) * math.exp(-self.beta)
            return base
        # RANDOM_SIGN: sign depends on the shape, the hit pattern and the depth below the wall
        anchor = min(cluster)
        sigma = _signed_hash(
            self.param("seed", 1),
            sorted(c - anchor for c in cluster),
            sorted(c - anchor for c in intersection),
            cell_min_dot(anchor, self.wall),
        )
        return sigma * self.param("amplitude", 1.0) * decay_bound(self.beta, self.chi, diam_inf(cluster))

    def with_beta(self, beta: float) -> "ModifiedPotentialSpec":
        return ModifiedPotentialSpec(self.base.with_beta(beta), self.override, self.wall, self.params)


def builtin_boundary_pin(
    M: float, beta: float, chi: float, wall: WallDirection, base: Optional[PotentialSpec] = None,
    decay_constant: float = 1.0,
) -> ModifiedPotentialSpec:
    """Pinning modification Phi~({x}) - Phi({x}) = M exp(-beta) on wall singletons.

    Raises DecayViolationError when M exp(-beta) exceeds
    decay_constant * exp(-2 chi beta), the singleton decay bound.
    """
    if M < 0:
        raise ValueError("pinning strength M must be non-negative")
    if M * math.exp(-beta) > decay_constant * decay_bound(beta, chi, 1) * (1 + 1e-12):
        raise DecayViolationError(
            f"M e^-beta = {M * math.exp(-beta):.3e} exceeds {decay_constant} e^(-2 chi beta) at chi={chi}"
        )
    base = base or PotentialSpec.build("ZERO", beta, chi)
    return ModifiedPotentialSpec(base, "BOUNDARY_PIN", wall, (("M", float(M)),))


def random_sign_modification(
    base: PotentialSpec, wall: WallDirection, seed: int = 1, amplitude: float = 1.0
) -> ModifiedPotentialSpec:
    return ModifiedPotentialSpec(base, "RANDOM_SIGN", wall, (("amplitude", float(amplitude)), ("seed", int(seed))))


@lru_cache(maxsize=None)
def c_beta(beta: float, chi: float, diam_cap: int, growth_constant: float = 5.0) -> Tuple[float, float]:
    """Sum of exp(-chi beta (diam + 1)) over clusters meeting a fixed bond.

    Returns (value up to diam_cap, tail estimate beyond it). The estimate
    takes 6 * lambda^d clusters of diameter d meeting the bond; connected sets
    of diameter d are more numerous than that, so it is a heuristic size for
    the neglected mass and not a bound.
    """
    r = growth_constant * math.exp(-chi * beta)
    if r >= 1:
        raise DivergentTailError(f"lambda e^(-chi beta) = {r:.3f} >= 1; cluster sums diverge")
    touching = clusters_touching(sites_touching_bond(Bond(LatticePoint(0, 0), 0)), diam_cap)
    value = math.fsum(decay_bound(beta, chi, d) for _, d in touching)
    tail_estimate = 6 * math.exp(-chi * beta) * r ** (diam_cap + 1) / (1 - r)
    return value, tail_estimate


def site_tail(beta: float, chi: float, diam_cap: int, growth_constant: float = 5.0) -> float:
    """Estimated potential mass of clusters of diameter > diam_cap through a fixed site, as in c_beta."""
    r = growth_constant * math.exp(-chi * beta)
    if r >= 1:
        raise DivergentTailError(f"lambda e^(-chi beta) = {r:.3f} >= 1; cluster sums diverge")
    return math.exp(-chi * beta) * r ** (diam_cap + 1) / (1 - r)


def positivize(phi, g: OpenContour, cluster, diam=None) -> float:
    """Phi'(C, gamma) = Phi(C, Delta n C) + |C n nabla| exp(-chi beta (diam + 1))."""
    nbh = g.neighborhoods
    intersection = frozenset(cluster) & nbh.delta
    hits = nbh.index.hits(cluster)
    if diam is None:
        diam = diam_inf(cluster)
    return phi.evaluate(frozenset(cluster), intersection) + hits * decay_bound(phi.beta, phi.chi, diam)


def psi_weight(phi_prime: float, meets_nabla: bool) -> float:
    """Psi = (exp(Phi') - 1) when C meets nabla, else 0."""
    return math.expm1(phi_prime) if meets_nabla else 0.0


def audit_potential(phi, samples: int = 1000, seed: int = 0, max_diam: int = 2, max_len: int = 6) -> pd.DataFrame:
    """Randomised audit of the decay bound and of Phi' >= 0 on clusters meeting nabla.

    Returns one row per sampled (cluster, contour) pair.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    rows = []
    for i in range(samples):
        g = random_contour(rng, int(rng.integers(1, max_len + 1)))
        nbh = g.neighborhoods
        sites = sorted(set(nbh.index.sites) | nbh.delta)
        target = sites[rng.integers(len(sites))]
        candidates = clusters_touching([target], max_diam)
        cluster, diam = candidates[rng.integers(len(candidates))]
        intersection = cluster & nbh.delta
        value = phi.evaluate(cluster, intersection)
        phi_prime = positivize(phi, g, cluster, diam)
        rows.append({
            "sample": i,
            "contour": g.steps,
            "diam": diam,
            "meets_delta": bool(intersection),
            "meets_nabla": nbh.index.meets(cluster),
            "phi": value,
            "phi_prime": phi_prime,
            "decay_ok": abs(value) <= decay_bound(phi.beta, phi.chi, diam) * (1 + 1e-12),
            "positive_ok": phi_prime >= -1e-300 or not nbh.index.meets(cluster),
            "prime_decay_ok": abs(phi_prime) <= (1 + nbh.index.hits(cluster)) * decay_bound(phi.beta, phi.chi, diam) * (1 + 1e-12),
        })
    df = pd.DataFrame(rows)
    df["delta_implies_nabla"] = ~df.meets_delta | df.meets_nabla
    bad = df[~(df.decay_ok & df.positive_ok & df.delta_implies_nabla)]
    if len(bad):
        logger.warning(f"Potential audit: {len(bad)} of {samples} samples violate the bounds for {phi.kind}")
    return df


def load_potentials(pcfg, beta: float, chi: float, wall: Optional[WallDirection]):
    """(Phi, Phi~) from the `potential` block of an experiment config."""
    kind = str(pcfg["kind"]).upper()
    extra = {}
    if kind == "RANDOM_SIGN":
        extra = {"seed": int(pcfg.get("seed", 0)), "amplitude": float(pcfg.get("amplitude", 1.0))}
    elif kind == "USER":
        assert pcfg.get("user"), "Need a 'package.module:function' target for a USER potential."
        extra = {"target": str(pcfg["user"])}
    phi = PotentialSpec.build(kind, beta, chi, **extra)
    modification = pcfg.get("modification")
    if not modification or wall is None:
        return phi, phi
    modification = str(modification).upper()
    if modification == "BOUNDARY_PIN":
        return phi, builtin_boundary_pin(
            float(pcfg.get("M", 0.0)), beta, chi, wall, base=phi, decay_constant=float(pcfg.get("decay_constant", 1.0))
        )
    return phi, random_sign_modification(
        phi, wall, seed=int(pcfg.get("modification_seed", 1)), amplitude=float(pcfg.get("amplitude", 1.0))
    )
