#!/usr/bin/env python3
"""Integer lattice geometry.

Points live on Z²; the dual lattice is identified with Z² by a half-unit
shift, so contour vertices, sites and walk positions share one type. A site s
stands for the closed unit square [s.x, s.x + 1] x [s.y, s.y + 1].

Everything here is exact integer arithmetic. The only floating point values
are the derived unit normal and angle of a wall.
"""
import math
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional

try:
    from src.errors import ConstantsError, EmptyClusterError, InputOutsideHalfPlaneError
except ImportError:
    from errors import ConstantsError, EmptyClusterError, InputOutsideHalfPlaneError


INFINITE = math.inf
# Denominator cap for rational approximations of irrational wall slopes
MAX_WALL_DENOMINATOR = 10**6


class LatticePoint(NamedTuple):
    x: int
    y: int

    def __add__(self, other):
        return LatticePoint(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return LatticePoint(self.x - other[0], self.y - other[1])

    def __neg__(self):
        return LatticePoint(-self.x, -self.y)

    def __mul__(self, k):
        return LatticePoint(self.x * k, self.y * k)

    __rmul__ = __mul__

    def dot(self, other) -> int:
        return self.x * other[0] + self.y * other[1]

    @property
    def l1(self) -> int:
        return abs(self.x) + abs(self.y)

    @property
    def linf(self) -> int:
        return max(abs(self.x), abs(self.y))

    @property
    def level(self) -> int:
        """Position along the (1, 1) diagonal; strictly increases along cone steps."""
        return self.x + self.y


ORIGIN = LatticePoint(0, 0)
E1 = LatticePoint(1, 0)
E2 = LatticePoint(0, 1)


@dataclass(frozen=True)
class WallDirection:
    """Wall normal stored as a coprime integer pair (a, b).

    H_{+,n} = {u : a*u.x + b*u.y >= 0}. Sign tests never touch the
    normalisation factor, so they are exact for every rational slope.
    """

    a: int
    b: int
    approximate: bool = False

    def __post_init__(self):
        if self.a == 0 and self.b == 0:
            raise ValueError("Wall normal must be non-zero")
        if math.gcd(self.a, self.b) != 1:
            raise ValueError(f"Wall normal ({self.a}, {self.b}) is not coprime; use from_pair")

    @classmethod
    def from_pair(cls, a: int, b: int) -> "WallDirection":
        g = math.gcd(int(a), int(b))
        if g == 0:
            raise ValueError("Wall normal must be non-zero")
        return cls(int(a) // g, int(b) // g)

    @classmethod
    def from_angle(cls, theta: float) -> "WallDirection":
        """Nearest rational normal with denominator <= MAX_WALL_DENOMINATOR."""
        c, s = math.cos(theta), math.sin(theta)
        if abs(c) < 1e-15:
            return cls(0, 1 if s > 0 else -1)
        slope = Fraction(s / c).limit_denominator(MAX_WALL_DENOMINATOR)
        sign = 1 if c > 0 else -1
        a, b = sign * slope.denominator, sign * slope.numerator
        g = math.gcd(a, b)
        a, b = a // g, b // g
        exact = math.isclose(math.atan2(b, a), math.atan2(s, c), rel_tol=0.0, abs_tol=1e-15)
        return cls(a, b, approximate=not exact)

    @property
    def norm(self) -> float:
        return math.hypot(self.a, self.b)

    @property
    def l1(self) -> int:
        return abs(self.a) + abs(self.b)

    @property
    def unit(self):
        return (self.a / self.norm, self.b / self.norm)

    @property
    def arg(self) -> float:
        return math.atan2(self.b, self.a)

    @property
    def admissible(self) -> bool:
        """arg(n) in [-pi/4, 3pi/4], i.e. n.(1, 1) >= 0."""
        return self.a + self.b >= 0

    @property
    def tangent(self) -> LatticePoint:
        return LatticePoint(self.b, -self.a)

    def dot(self, p) -> int:
        return self.a * p[0] + self.b * p[1]

    def contains(self, p) -> bool:
        return self.dot(p) >= 0

    def __repr__(self):
        flag = " ~" if self.approximate else ""
        return f"WallDirection({self.a}, {self.b}{flag})"


HORIZONTAL_WALL = WallDirection(0, 1)


def in_cone(p, apex) -> bool:
    """True iff p - apex lies in the closed forward cone Y.

    Y is the set of arguments in [-kappa, pi/2 + kappa] with
    kappa = arctan(1/2): 2*dy + dx >= 0 and 2*dx + dy >= 0.
    """
    dx, dy = p[0] - apex[0], p[1] - apex[1]
    return 2 * dy + dx >= 0 and 2 * dx + dy >= 0


def in_diamond(p, x, y) -> bool:
    """p in D(x, y) = (x + Y) n (y - Y)."""
    return in_cone(p, x) and in_cone(y, p)


def wall_distance(u, n: WallDirection) -> int:
    """d_n(u): sup-norm distance from u to the lattice points strictly below the wall."""
    s = n.dot(u)
    if s < 0:
        raise InputOutsideHalfPlaneError(f"{tuple(u)} lies below the wall {n}")
    return s // n.l1 + 1


def cell_min_dot(s, n: WallDirection) -> int:
    """Smallest value of n.(corner) over the corners of the unit square of site s."""
    return n.dot(s) + min(0, n.a) + min(0, n.b)


def cell_max_dot(s, n: WallDirection) -> int:
    return n.dot(s) + max(0, n.a) + max(0, n.b)


def cell_in_half_plane(s, n: WallDirection) -> bool:
    return cell_min_dot(s, n) >= 0


def cell_straddles_wall(s, n: WallDirection) -> bool:
    """The square of s has corners on both sides of the wall line."""
    return cell_min_dot(s, n) < 0 <= cell_max_dot(s, n)


def cell_corners(s):
    return (
        LatticePoint(s[0], s[1]),
        LatticePoint(s[0] + 1, s[1]),
        LatticePoint(s[0], s[1] + 1),
        LatticePoint(s[0] + 1, s[1] + 1),
    )


def cell_in_diamond(s, x, y) -> bool:
    """Closed unit square of s inside D(x, y); the diamond is convex so corners suffice."""
    return all(in_diamond(c, x, y) for c in cell_corners(s))


def wall_point(L: int, n: WallDirection) -> LatticePoint:
    """x_L = L * tangent, a lattice point on the wall line."""
    return n.tangent * int(L)


def _neighbours8(p):
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx or dy:
                yield LatticePoint(p[0] + dx, p[1] + dy)


def is_connected(sites: Iterable) -> bool:
    """Connectivity of a union of closed unit squares (8-neighbour graph)."""
    sites = {LatticePoint(*s) for s in sites}
    if not sites:
        return False
    first = next(iter(sites))
    seen = {first}
    queue = deque([first])
    while queue:
        p = queue.popleft()
        for q in _neighbours8(p):
            if q in sites and q not in seen:
                seen.add(q)
                queue.append(q)
    return len(seen) == len(sites)


def diam_inf(sites: Iterable):
    """Sup-norm diameter of the union of the squares of `sites`.

    Returns INFINITE for a disconnected set.
    """
    sites = list(sites)
    if not sites:
        raise EmptyClusterError("diam_inf of an empty set")
    if not is_connected(sites):
        return INFINITE
    xs = [s[0] for s in sites]
    ys = [s[1] for s in sites]
    return max(max(xs) - min(xs), max(ys) - min(ys)) + 1


@dataclass(frozen=True)
class Cutoffs:
    max_contour_len: Optional[int] = None
    length_ratio: float = 2.0
    max_excess: int = 4
    max_cluster_diam: int = 2
    enumeration_window: int = 20
    max_contours: int = 2_000_000
    len_cap: int = 5

    def __post_init__(self):
        for name in ("length_ratio", "max_excess", "max_cluster_diam", "enumeration_window", "max_contours", "len_cap"):
            if getattr(self, name) <= 0:
                raise ConstantsError(f"cutoff {name} must be strictly positive")
        if self.max_contour_len is not None and self.max_contour_len <= 0:
            raise ConstantsError("cutoff max_contour_len must be strictly positive")


@dataclass(frozen=True)
class Tolerances:
    log_weight_tol: float = 1e-12
    identity_tol: float = 1e-12


@dataclass(frozen=True)
class AnalysisConstants:
    """Inverse temperature, decay exponent and the numerical knobs of a run."""

    beta: float
    chi: float
    nu_g: Optional[float] = None
    delta: Optional[float] = None
    growth_constant: float = 5.0
    cutoffs: Cutoffs = field(default_factory=Cutoffs)
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.beta <= 0:
            raise ConstantsError("beta must be positive")
        if self.chi <= 0:
            raise ConstantsError("chi must be positive")
        if self.growth_constant <= 0:
            raise ConstantsError("growth_constant must be positive")
        if self.delta is not None:
            if self.delta <= 0:
                raise ConstantsError("delta must be positive")
            if self.nu_g is not None and self.delta > self.nu_g / 4:
                raise ConstantsError(f"delta={self.delta} exceeds nu_g/4={self.nu_g / 4}")

    def require_no_pinning(self):
        """chi > 1/2 is needed for every experiment except the pinning counterexample."""
        if self.chi <= 0.5:
            raise ConstantsError(f"chi={self.chi} <= 1/2 is reserved for pinning runs")

    def with_beta(self, beta: float) -> "AnalysisConstants":
        return replace(self, beta=float(beta))

    def max_len_for(self, x) -> int:
        """Length cutoff for contours 0 -> x."""
        l1 = abs(x[0]) + abs(x[1])
        if self.cutoffs.max_contour_len is not None:
            return max(self.cutoffs.max_contour_len, l1)
        by_ratio = math.ceil(self.cutoffs.length_ratio * l1)
        return max(l1, min(by_ratio, l1 + self.cutoffs.max_excess))

    def decay(self, diam) -> float:
        """exp(-chi*beta*(diam + 1))."""
        return math.exp(-self.chi * self.beta * (diam + 1))
