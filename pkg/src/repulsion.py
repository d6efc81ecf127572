#!/usr/bin/env python3
"""Wall repulsion probe for the effective walk.

Over the window W = D(u, v) n H_{+,n}, ordered by level, the one-step kernel
T is strictly upper triangular, so

    P = (I - T)^-1        walks staying in H_{+,n}
    G = (I - T_phi)^-1    the same walks, each step reweighted by exp(phi)

with phi = |gamma| exp(-chi beta (2 + d)) and d the wall depth of the step's
diamond. With E = exp(delta beta d_n):

    rho = exp(-2 delta beta (d_n(u) + d_n(v))) G(u, v) / P(u, v)
    a   = (P_ Psi P_)(u, v) / P^(u, v)
    b   = (P_ Psi P_ Psi P_)(u, v) / P^(u, v)

where P_ = P / (E E^T), P^ = P * (E E^T) and Psi = (T_phi - T) * (E^3 E^3^T).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular

try:
    from src.effwalk import StepLaw, diamond_window
    from src.lattice import AnalysisConstants, LatticePoint, WallDirection, wall_distance
except ImportError:
    from effwalk import StepLaw, diamond_window
    from lattice import AnalysisConstants, LatticePoint, WallDirection, wall_distance


logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.05


@dataclass(frozen=True)
class RhoProbe:
    rho: float
    a_hat: float
    b_hat: float
    a_full: float
    b_full: float
    truncation: float
    delta: float
    n_window: int
    strip_width: Optional[int] = None
    flags: Tuple[str, ...] = ()

    @property
    def bound(self) -> float:
        return (1 + self.a_hat) / (1 - self.b_hat) if self.b_hat < 1 else math.inf

    @property
    def consistent(self) -> bool:
        return self.rho <= self.bound * (1 + 1e-12)

    def as_row(self) -> dict:
        return {
            "rho": self.rho, "a_hat": self.a_hat, "b_hat": self.b_hat, "bound": self.bound,
            "consistent": self.consistent, "a_full": self.a_full, "b_full": self.b_full,
            "truncation": self.truncation, "delta": self.delta, "n_window": self.n_window,
            "strip_width": self.strip_width, "flags": ";".join(self.flags),
        }


def step_depth(w: LatticePoint, z: LatticePoint, wall: WallDirection) -> int:
    """min over lattice points y of D(w, z) n H_{+,n} of d_n(y), minus one."""
    depths = [wall_distance(y, wall) for y in diamond_window(w, z) if wall.dot(y) >= 0]
    return min(depths) - 1


def kernels(window, wall: WallDirection, law: StepLaw, constants: AnalysisConstants, reweight: bool = True):
    """(T, T_phi) over the window; T_phi carries exp(phi) per atom."""
    index = {p: i for i, p in enumerate(window)}
    n = len(window)
    T = np.zeros((n, n))
    T_phi = np.zeros((n, n))
    cb = constants.chi * constants.beta
    for i, w in enumerate(window):
        for atom in law.atoms:
            z = w + atom.step
            j = index.get(z)
            if j is None:
                continue
            T[i, j] += atom.prob
            if reweight:
                phi = atom.length * math.exp(-cb * (2 + step_depth(w, z, wall)))
                T_phi[i, j] += atom.prob * math.exp(phi)
            else:
                T_phi[i, j] += atom.prob
    return T, T_phi


def _green(T: np.ndarray) -> np.ndarray:
    n = len(T)
    return solve_triangular(np.eye(n) - T, np.eye(n), lower=False)


def rho_recursion_probe(
    u, v, wall: WallDirection, law: StepLaw, constants: AnalysisConstants, delta: Optional[float] = None,
    strip_width: Optional[int] = None, reweight: bool = True,
) -> RhoProbe:
    """rho_delta(u, v) with the a, b estimates restricted to a strip of width R along the wall."""
    u, v = LatticePoint(*u), LatticePoint(*v)
    delta = delta if delta is not None else (constants.delta or DEFAULT_DELTA)
    window = [p for p in diamond_window(u, v) if wall.dot(p) >= 0]
    if u not in window or v not in window:
        raise ValueError(f"{tuple(v)} is not reachable from {tuple(u)} inside H_+")
    iu, iv = window.index(u), window.index(v)
    T, T_phi = kernels(window, wall, law, constants, reweight)
    P = _green(T)
    G = _green(T_phi)
    depth = np.array([wall_distance(p, wall) for p in window], dtype=float)
    E = np.exp(delta * constants.beta * depth)
    EE = np.outer(E, E)
    P_low, P_high = P / EE, P * EE
    Psi = (T_phi - T) * np.outer(E ** 3, E ** 3)
    rho = math.exp(-2 * delta * constants.beta * (depth[iu] + depth[iv])) * G[iu, iv] / P[iu, iv]

    def estimates(mask):
        psi = Psi * np.outer(mask, mask)
        a = P_low[iu] @ psi @ P_low[:, iv] / P_high[iu, iv]
        b = P_low[iu] @ psi @ P_low @ psi @ P_low[:, iv] / P_high[iu, iv]
        return float(a), float(b)

    a_full, b_full = estimates(np.ones(len(window)))
    flags = []
    if strip_width is None:
        a_hat, b_hat = a_full, b_full
    else:
        a_hat, b_hat = estimates((depth <= strip_width).astype(float))
    truncation = (a_full - a_hat) + (b_full - b_hat)
    if truncation > 1e-6 * max(a_full + b_full, 1e-300):
        flags.append("strip-truncation")
        logger.warning(f"Strip R={strip_width} drops {truncation:.3e} of a + b between {tuple(u)} and {tuple(v)}")
    if b_hat >= 1:
        flags.append("b-not-contracting")
    return RhoProbe(float(rho), a_hat, b_hat, a_full, b_full, truncation, delta, len(window), strip_width, tuple(flags))
