#!/usr/bin/env python3
"""Bonds and connected clusters of sites.

A cluster is a finite 8-connected set of sites (closed unit squares that
touch at least at a corner). Shapes are generated once per diameter cap and
translated onto target sites on demand.
"""
import logging
from collections import Counter
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Tuple

try:
    from src.lattice import LatticePoint, diam_inf, is_connected
except ImportError:
    from lattice import LatticePoint, diam_inf, is_connected


logger = logging.getLogger(__name__)

# Shapes are built from bitmasks over a cap x cap box
MAX_CLUSTER_DIAM = 4

Cluster = FrozenSet[LatticePoint]


class Bond(NamedTuple):
    """Unit bond from `base` to base + e_axis (axis 0 is horizontal)."""

    base: LatticePoint
    axis: int

    @classmethod
    def between(cls, p, q) -> "Bond":
        p, q = LatticePoint(*p), LatticePoint(*q)
        lo, hi = min(p, q), max(p, q)
        d = hi - lo
        if d == (1, 0):
            return cls(lo, 0)
        if d == (0, 1):
            return cls(lo, 1)
        raise ValueError(f"{tuple(p)} and {tuple(q)} are not lattice neighbours")

    @property
    def direction(self) -> LatticePoint:
        return LatticePoint(1, 0) if self.axis == 0 else LatticePoint(0, 1)

    @property
    def endpoints(self):
        return self.base, self.base + self.direction

    def shift(self, k: int) -> "Bond":
        """Translate by k units along the bond's own direction."""
        return Bond(self.base + self.direction * k, self.axis)

    def translate(self, t) -> "Bond":
        return Bond(self.base + t, self.axis)


def sites_touching_bond(bond: Bond) -> Tuple[LatticePoint, ...]:
    """The six sites whose closed squares meet the closed bond segment."""
    x, y = bond.base
    if bond.axis == 0:
        return tuple(LatticePoint(x + i, y + j) for i in (-1, 0, 1) for j in (-1, 0))
    return tuple(LatticePoint(x + i, y + j) for i in (-1, 0) for j in (-1, 0, 1))


def _normalised(cells) -> Cluster:
    mx = min(c[0] for c in cells)
    my = min(c[1] for c in cells)
    return frozenset(LatticePoint(c[0] - mx, c[1] - my) for c in cells)


@lru_cache(maxsize=None)
def cluster_shapes(max_diam: int) -> Tuple[Tuple[Cluster, int], ...]:
    """Every connected shape of diameter <= max_diam, anchored at min x = min y = 0."""
    if max_diam < 1:
        return ()
    if max_diam > MAX_CLUSTER_DIAM:
        raise ValueError(f"cluster cap {max_diam} exceeds {MAX_CLUSTER_DIAM}")
    box = [LatticePoint(i, j) for j in range(max_diam) for i in range(max_diam)]
    shapes = []
    for mask in range(1, 1 << len(box)):
        cells = [box[k] for k in range(len(box)) if mask >> k & 1]
        if min(c.x for c in cells) or min(c.y for c in cells):
            continue
        if not is_connected(cells):
            continue
        shape = frozenset(cells)
        shapes.append((shape, diam_inf(shape)))
    shapes.sort(key=lambda sd: (sd[1], len(sd[0]), sorted(sd[0])))
    logger.debug(f"{len(shapes)} cluster shapes with diameter <= {max_diam}")
    return tuple(shapes)


def clusters_touching(targets: Iterable, max_diam: int) -> List[Tuple[Cluster, int]]:
    """All clusters of diameter <= max_diam containing at least one target site.

    Order is deterministic: shape order, then target order, then the
    position of the anchoring cell inside the shape.
    """
    targets = sorted({LatticePoint(*t) for t in targets})
    seen = set()
    found = []
    for shape, diam in cluster_shapes(max_diam):
        cells = sorted(shape)
        for t in targets:
            for c in cells:
                offset = t - c
                placed = frozenset(s + offset for s in shape)
                if placed in seen:
                    continue
                seen.add(placed)
                found.append((placed, diam))
    return found


class NablaIndex:
    """Site lookup for the bond multiset of a contour neighbourhood."""

    def __init__(self, nabla: Counter):
        self.nabla = nabla
        self._by_site: Dict[LatticePoint, List[Bond]] = {}
        for bond in nabla:
            for s in sites_touching_bond(bond):
                self._by_site.setdefault(s, []).append(bond)

    @property
    def sites(self):
        return self._by_site.keys()

    def hits(self, cluster) -> int:
        """|C n nabla|: multiplicities of the distinct bonds the cluster touches."""
        bonds = set()
        for s in cluster:
            bonds.update(self._by_site.get(s, ()))
        return sum(self.nabla[b] for b in bonds)

    def meets(self, cluster) -> bool:
        return any(s in self._by_site for s in cluster)
