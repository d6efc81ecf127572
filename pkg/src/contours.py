#!/usr/bin/env python3
"""Open contours with the south-west splitting rule.

Contours are stored as a start vertex plus a step string over the alphabet
"ENWS" (that order is the enumeration order). At a vertex visited twice as an
interior point, each pass must keep both of its edges on one side of the
slope +1 line through the vertex: the pair of directions leaving the vertex
is {E, S} (south-east side) or {N, W} (north-west side).
"""
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

try:
    from src.clusters import Bond, NablaIndex
    from src.errors import BrokenChainError, ContourError, DuplicateEdgeError, SplittingRuleError
    from src.lattice import LatticePoint, WallDirection
except ImportError:
    from clusters import Bond, NablaIndex
    from errors import BrokenChainError, ContourError, DuplicateEdgeError, SplittingRuleError
    from lattice import LatticePoint, WallDirection


logger = logging.getLogger(__name__)

STEP_ORDER = "ENWS"
STEPS = {
    "E": LatticePoint(1, 0),
    "N": LatticePoint(0, 1),
    "W": LatticePoint(-1, 0),
    "S": LatticePoint(0, -1),
}
OPPOSITE = {"E": "W", "W": "E", "N": "S", "S": "N"}
STEP_OF = {v: k for k, v in STEPS.items()}
SW_PASSES = (frozenset("ES"), frozenset("NW"))
REFLECT_DIAGONAL = {"E": "N", "N": "E", "W": "S", "S": "W"}


def _bond(vertex, step) -> Bond:
    if step == "E":
        return Bond(LatticePoint(*vertex), 0)
    if step == "N":
        return Bond(LatticePoint(*vertex), 1)
    if step == "W":
        return Bond(LatticePoint(vertex[0] - 1, vertex[1]), 0)
    return Bond(LatticePoint(vertex[0], vertex[1] - 1), 1)


def _pass_ok(first, second) -> bool:
    return first in SW_PASSES and second in SW_PASSES


@dataclass(frozen=True)
class ContourNeighborhoods:
    delta: frozenset
    nabla: Counter

    @cached_property
    def index(self) -> NablaIndex:
        return NablaIndex(self.nabla)


@dataclass(frozen=True)
class OpenContour:
    """Valid open contour; build one through validate_contour or the enumerators."""

    start: LatticePoint
    steps: str

    @cached_property
    def vertices(self) -> Tuple[LatticePoint, ...]:
        out = [LatticePoint(*self.start)]
        for s in self.steps:
            out.append(out[-1] + STEPS[s])
        return tuple(out)

    @cached_property
    def edges(self) -> Tuple[Bond, ...]:
        return tuple(_bond(v, s) for v, s in zip(self.vertices, self.steps))

    @property
    def length(self) -> int:
        return len(self.steps)

    def __len__(self):
        return len(self.steps)

    @property
    def end(self) -> LatticePoint:
        return self.vertices[-1]

    @property
    def displacement(self) -> LatticePoint:
        return self.end - self.start

    @cached_property
    def neighborhoods(self) -> ContourNeighborhoods:
        return ContourNeighborhoods(delta_gamma(self), nabla_gamma(self))

    def translate(self, t) -> "OpenContour":
        return OpenContour(self.start + t, self.steps)

    def reversed_contour(self) -> "OpenContour":
        return OpenContour(self.end, "".join(OPPOSITE[s] for s in reversed(self.steps)))

    def slice(self, i: int, j: int) -> "OpenContour":
        return OpenContour(self.vertices[i], self.steps[i:j])

    def concat(self, other: "OpenContour") -> "OpenContour":
        if other.start != self.end:
            raise ContourError("contours do not share an endpoint")
        return OpenContour(self.start, self.steps + other.steps)

    def reflect_diagonal(self) -> "OpenContour":
        """Mirror in the line y = x."""
        return OpenContour(LatticePoint(self.start.y, self.start.x), "".join(REFLECT_DIAGONAL[s] for s in self.steps))

    def rotate_half_turn(self) -> "OpenContour":
        return OpenContour(-self.start, "".join(OPPOSITE[s] for s in self.steps))

    def in_half_plane(self, n: WallDirection) -> bool:
        return all(n.dot(v) >= 0 for v in self.vertices)

    def __repr__(self):
        return f"OpenContour({tuple(self.start)}, '{self.steps}')"


def validate_contour(vertices: Sequence) -> OpenContour:
    """Check the three contour conditions and return the contour.

    Raises BrokenChainError, DuplicateEdgeError or SplittingRuleError with the
    index of the offending vertex.
    """
    vertices = [LatticePoint(*v) for v in vertices]
    if len(vertices) < 2:
        raise BrokenChainError("a contour needs at least two vertices", index=0)
    if vertices[0] == vertices[-1]:
        raise ContourError("endpoints of an open contour must differ", index=len(vertices) - 1)
    steps = []
    used = set()
    passes = {}
    for i in range(1, len(vertices)):
        d = vertices[i] - vertices[i - 1]
        if d not in STEP_OF:
            raise BrokenChainError(f"vertices {i - 1} and {i} are not neighbours", index=i)
        step = STEP_OF[d]
        bond = _bond(vertices[i - 1], step)
        if bond in used:
            raise DuplicateEdgeError(f"edge {i} repeats a bond", index=i)
        used.add(bond)
        if steps:
            here = frozenset((OPPOSITE[steps[-1]], step))
            v = vertices[i - 1]
            if v in passes and not _pass_ok(passes[v], here):
                raise SplittingRuleError(f"vertex {i - 1} breaks the south-west rule", index=i - 1)
            passes.setdefault(v, here)
        steps.append(step)
    return OpenContour(vertices[0], "".join(steps))


def delta_gamma(g: OpenContour, corners_only: bool = False) -> frozenset:
    """Sites adjacent across an edge, plus SW and NE diagonal sites of vertices.

    With corners_only the diagonal sites are taken at turning vertices and
    endpoints only.
    """
    sites = set()
    for bond in g.edges:
        x, y = bond.base
        if bond.axis == 0:
            sites.add(LatticePoint(x, y))
            sites.add(LatticePoint(x, y - 1))
        else:
            sites.add(LatticePoint(x, y))
            sites.add(LatticePoint(x - 1, y))
    verts = g.vertices
    for i, v in enumerate(verts):
        if corners_only and 0 < i < len(verts) - 1 and g.steps[i - 1] == g.steps[i]:
            continue
        sites.add(v)
        sites.add(LatticePoint(v.x - 1, v.y - 1))
    return frozenset(sites)


def nabla_gamma(g: OpenContour) -> Counter:
    """Multiset {b, b + e, b - e} over contour bonds b = (x, x + e)."""
    nabla = Counter()
    for bond in g.edges:
        nabla[bond] += 1
        nabla[bond.shift(1)] += 1
        nabla[bond.shift(-1)] += 1
    return nabla


KeepFn = Callable[[LatticePoint, int], bool]


def enumerate_walks(start, max_len: int, keep: KeepFn, prefix: str = "") -> Iterator[Tuple[str, LatticePoint]]:
    """Depth-first search over valid contour prefixes from `start`.

    Yields (steps, end) for every valid step string of length 1..max_len that
    extends `prefix`, in lexicographic order of STEP_ORDER. `keep(vertex,
    remaining)` prunes a vertex given the number of steps still allowed after
    reaching it.
    """
    start = LatticePoint(*start)
    used = set()
    passes = {}
    steps: List[str] = []

    def advance(vertex, step, remaining):
        """Try to take `step`; returns (next vertex, undo info) or None."""
        nxt = vertex + STEPS[step]
        bond = _bond(vertex, step)
        if bond in used or not keep(nxt, remaining):
            return None
        added = False
        if steps:
            here = frozenset((OPPOSITE[steps[-1]], step))
            prev = passes.get(vertex)
            if prev is not None:
                if not _pass_ok(prev, here):
                    return None
            else:
                passes[vertex] = here
                added = True
        used.add(bond)
        steps.append(step)
        return nxt, bond, added

    def retreat(vertex, bond, added):
        steps.pop()
        used.discard(bond)
        if added:
            del passes[vertex]

    def grow(vertex, budget):
        if steps and vertex != start:
            yield "".join(steps), vertex
        if budget == 0:
            return
        for step in STEP_ORDER:
            moved = advance(vertex, step, budget - 1)
            if moved is None:
                continue
            nxt, bond, added = moved
            yield from grow(nxt, budget - 1)
            retreat(vertex, bond, added)

    vertex = start
    for i, step in enumerate(prefix):
        if i >= max_len:
            return
        moved = advance(vertex, step, max_len - i - 1)
        if moved is None:
            return
        vertex = moved[0]
    yield from grow(vertex, max_len - len(prefix))


def _contour_keep(b: LatticePoint, constraint: Optional[WallDirection]) -> KeepFn:
    def keep(v, remaining):
        if abs(b.x - v.x) + abs(b.y - v.y) > remaining:
            return False
        return constraint is None or constraint.dot(v) >= 0

    return keep


def enumerate_contours(
    a, b, max_len: int, constraint: Optional[WallDirection] = None, prefix: str = ""
) -> Iterator[OpenContour]:
    """Every valid contour a -> b with at most max_len steps, each exactly once.

    With a constraint every vertex satisfies n.v >= 0. Order is lexicographic
    in the step string.
    """
    a, b = LatticePoint(*a), LatticePoint(*b)
    if a == b:
        raise ContourError("enumeration needs distinct endpoints")
    if max_len < (b - a).l1:
        logger.warning(f"max_len={max_len} is below |b - a|_1={(b - a).l1}; nothing to enumerate")
        return
    if constraint is not None and (constraint.dot(a) < 0 or constraint.dot(b) < 0):
        return
    keep = _contour_keep(b, constraint)
    for steps, end in enumerate_walks(a, max_len, keep, prefix):
        if end == b:
            yield OpenContour(a, steps)


def prefix_tasks(a, b, max_len: int, constraint: Optional[WallDirection], depth: int) -> List[Tuple[str, str]]:
    """Split an enumeration into ("done", steps) and ("prefix", steps) tasks.

    Concatenating the results of the tasks in list order reproduces the
    sequential enumeration order.
    """
    a, b = LatticePoint(*a), LatticePoint(*b)
    keep = _contour_keep(b, constraint)
    tasks = []
    for steps, end in enumerate_walks(a, min(depth, max_len), keep):
        if len(steps) == depth:
            tasks.append(("prefix", steps))
        elif end == b:
            tasks.append(("done", steps))
    return tasks


def _run_prefix(args):
    a, b, max_len, constraint, prefix = args
    return [c.steps for c in enumerate_contours(a, b, max_len, constraint, prefix=prefix)]


def enumerate_contours_parallel(
    a, b, max_len: int, constraint: Optional[WallDirection] = None, threads: int = 1, depth: int = 3
) -> List[OpenContour]:
    """enumerate_contours with disjoint prefixes farmed out to a process pool."""
    a = LatticePoint(*a)
    if threads <= 1:
        return list(enumerate_contours(a, b, max_len, constraint))
    if constraint is not None and (constraint.dot(a) < 0 or constraint.dot(b) < 0):
        return []
    tasks = prefix_tasks(a, b, max_len, constraint, depth)
    jobs = [(a, LatticePoint(*b), max_len, constraint, steps) for kind, steps in tasks if kind == "prefix"]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        results = iter(pool.map(_run_prefix, jobs))
    out = []
    for kind, steps in tasks:
        if kind == "done":
            out.append(OpenContour(a, steps))
        else:
            out.extend(OpenContour(a, s) for s in next(results))
    return out


def random_contour(rng: np.random.Generator, length: int, start=(0, 0), attempts: int = 100) -> OpenContour:
    """A random valid contour grown step by step; restarts on dead ends."""
    start = LatticePoint(*start)
    for _ in range(attempts):
        vertices = [start]
        for _ in range(length):
            options = []
            for step in STEP_ORDER:
                candidate = vertices + [vertices[-1] + STEPS[step]]
                try:
                    validate_contour(candidate)
                except ContourError:
                    continue
                options.append(candidate)
            if not options:
                break
            vertices = options[rng.integers(len(options))]
        if len(vertices) == length + 1:
            return validate_contour(vertices)
    raise ContourError(f"could not grow a contour of length {length}")


def count_contours(a, b, max_len: int, constraint: Optional[WallDirection] = None) -> int:
    return sum(1 for _ in enumerate_contours(a, b, max_len, constraint))
