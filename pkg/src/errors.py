#!/usr/bin/env python3
"""Exceptions raised across the polymer lab."""


class PolymerLabError(Exception):
    """Base class for every error raised by the lab."""


class InputOutsideHalfPlaneError(PolymerLabError):
    """A point was expected inside the closed half-plane of a wall."""


class EmptyClusterError(PolymerLabError):
    """A cluster operation received an empty set of sites."""


class ContourError(PolymerLabError):
    """A vertex sequence does not describe a valid open contour."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DuplicateEdgeError(ContourError):
    """The same bond is traversed twice."""


class BrokenChainError(ContourError):
    """Consecutive vertices are not lattice neighbours."""


class SplittingRuleError(ContourError):
    """Two passes through a vertex violate the south-west rule."""


class DivergentTailError(PolymerLabError):
    """A geometric cluster tail does not converge."""


class DecayViolationError(PolymerLabError):
    """A potential exceeds its declared exponential decay bound."""


class EnumerationBudgetExceeded(PolymerLabError):
    """Too many objects were enumerated; carries the partial result."""

    def __init__(self, message, partial_log=None, bound_log=None, count=0):
        super().__init__(message)
        self.partial_log = partial_log
        self.bound_log = bound_log
        self.count = count


class TiltConvergenceError(PolymerLabError):
    """The tilt equations could not be solved."""


class InsufficientRangeError(PolymerLabError):
    """Too few usable points for a fit."""


class WindowOverflowError(PolymerLabError):
    """A dynamic programming window grew beyond its cap."""


class CapTooSmallError(PolymerLabError):
    """Mass beyond an enumeration cap exceeds the tolerance."""


class CITooWideError(PolymerLabError):
    """A Monte Carlo confidence interval is too wide to decide anything."""


class ConfigValidationError(PolymerLabError):
    """An experiment configuration is invalid; `path` names the field."""

    def __init__(self, message, path=None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ConstantsError(PolymerLabError):
    """Analysis constants are inconsistent with the requested run."""


class CacheCorruptionError(PolymerLabError):
    """A cached payload failed its header or checksum test."""
