"""
f-divergence catalog for puprior.

Each divergence is described by its generator f(t) and its convex conjugate
f*(z); the penalized variant replaces f by f~(t) = f(t) on [0, 1] and +inf
elsewhere. Conjugates are piecewise closed forms, subgradients are closed
intervals (singletons where the conjugate is differentiable).

    divergence   f(t)            f~*(z)
    KL           -log t          -1 - log(-z) for z <= -1, z otherwise
    Pearson      (t - 1)^2 / 2   -1/2 for z < -1, z^2/2 + z on [-1, 0], z for z > 0
    L1           |t - 1|         max(z, -1)
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from modules.errors import DomainError, InvalidParameterError

# Explicit +inf sentinel for infeasible conjugate values
INFEASIBLE = math.inf


class DivergenceName(str, Enum):
    KL = "kl"
    PEARSON = "pearson"
    L1 = "l1"


@dataclass(frozen=True)
class DivergenceSpec:
    """An f-divergence, optionally penalized outside t in [0, 1]."""

    name: DivergenceName
    penalized: bool = True

    @property
    def domain_upper(self) -> float:
        """Largest z with a finite conjugate (+inf when unbounded)."""
        if self.penalized:
            return INFEASIBLE
        if self.name is DivergenceName.KL:
            return 0.0
        if self.name is DivergenceName.L1:
            return 1.0
        return INFEASIBLE

    @property
    def domain_lower(self) -> float:
        if not self.penalized and self.name is DivergenceName.L1:
            return -1.0
        return -INFEASIBLE

    @property
    def label(self) -> str:
        prefix = "pen-" if self.penalized else ""
        return f"{prefix}{self.name.value}"


def divergence_from_flag(name: str, penalized: bool = True) -> DivergenceSpec:
    """
    Build a DivergenceSpec from a CLI flag string.

    Args:
        name: One of "kl", "pearson", "l1" (case-insensitive; "pe" is accepted for Pearson)
        penalized: Whether to use the penalized conjugate

    Returns:
        DivergenceSpec: Selected divergence

    Raises:
        InvalidParameterError: If the name is unknown
    """
    key = name.strip().lower()
    if key == "pe":
        key = "pearson"
    try:
        return DivergenceSpec(name=DivergenceName(key), penalized=penalized)
    except ValueError:
        raise InvalidParameterError(
            f"Unknown divergence '{name}'. Choose from: kl, pearson, l1"
        )


def generator_value(spec: DivergenceSpec, t: float) -> float:
    """
    Evaluate the generator f(t), or the penalized f~(t) when spec.penalized.

    Args:
        spec: Divergence
        t: Density-ratio value

    Returns:
        float: f(t), possibly +inf
    """
    if spec.penalized and not 0.0 <= t <= 1.0:
        return INFEASIBLE

    if spec.name is DivergenceName.KL:
        if t <= 0.0:
            return INFEASIBLE
        return -math.log(t)
    if spec.name is DivergenceName.PEARSON:
        return 0.5 * (t - 1.0) ** 2
    return abs(t - 1.0)


def conjugate_value(spec: DivergenceSpec, z: float) -> float:
    """
    Evaluate the (penalized) convex conjugate at z.

    Args:
        spec: Divergence
        z: Dual variable

    Returns:
        float: f*(z) or f~*(z); INFEASIBLE (+inf) outside the finite domain
    """
    name = spec.name

    if spec.penalized:
        if name is DivergenceName.KL:
            return -1.0 - math.log(-z) if z <= -1.0 else z
        if name is DivergenceName.PEARSON:
            if z < -1.0:
                return -0.5
            if z <= 0.0:
                return 0.5 * z * z + z
            return z
        return max(z, -1.0)

    if name is DivergenceName.KL:
        return -1.0 - math.log(-z) if z < 0.0 else INFEASIBLE
    if name is DivergenceName.PEARSON:
        return 0.5 * z * z + z
    return z if -1.0 <= z <= 1.0 else INFEASIBLE


def conjugate_subgradient(spec: DivergenceSpec, z: float) -> Tuple[float, float]:
    """
    Subdifferential of the conjugate at z as a closed interval.

    Args:
        spec: Divergence
        z: Point strictly inside the finite domain

    Returns:
        Tuple[float, float]: (lo, hi); lo == hi where the conjugate is differentiable

    Raises:
        DomainError: If z is not strictly inside the finite domain
    """
    if not spec.domain_lower < z < spec.domain_upper:
        raise DomainError(
            f"z = {z} lies outside the open domain ({spec.domain_lower}, {spec.domain_upper}) "
            f"of the {spec.label} conjugate"
        )

    name = spec.name

    if spec.penalized:
        if name is DivergenceName.KL:
            slope = -1.0 / z if z <= -1.0 else 1.0
            return slope, slope
        if name is DivergenceName.PEARSON:
            if z < -1.0:
                return 0.0, 0.0
            if z <= 0.0:
                return z + 1.0, z + 1.0
            return 1.0, 1.0
        if z < -1.0:
            return 0.0, 0.0
        if z == -1.0:
            return 0.0, 1.0
        return 1.0, 1.0

    if name is DivergenceName.KL:
        return -1.0 / z, -1.0 / z
    if name is DivergenceName.PEARSON:
        return z + 1.0, z + 1.0
    return 1.0, 1.0


def conjugate_values(spec: DivergenceSpec, z: np.ndarray) -> np.ndarray:
    """Vectorized conjugate_value; +inf entries mark infeasible points."""
    z = np.asarray(z, dtype=float)
    name = spec.name

    if spec.penalized:
        if name is DivergenceName.KL:
            with np.errstate(invalid="ignore", divide="ignore"):
                log_piece = -1.0 - np.log(np.where(z <= -1.0, -z, 1.0))
            return np.where(z <= -1.0, log_piece, z)
        if name is DivergenceName.PEARSON:
            return np.where(z < -1.0, -0.5, np.where(z <= 0.0, 0.5 * z * z + z, z))
        return np.maximum(z, -1.0)

    if name is DivergenceName.KL:
        with np.errstate(invalid="ignore", divide="ignore"):
            log_piece = -1.0 - np.log(np.where(z < 0.0, -z, 1.0))
        return np.where(z < 0.0, log_piece, INFEASIBLE)
    if name is DivergenceName.PEARSON:
        return 0.5 * z * z + z
    return np.where((z >= -1.0) & (z <= 1.0), z, INFEASIBLE)


def subgradient_bounds(spec: DivergenceSpec, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized conjugate_subgradient.

    Args:
        spec: Divergence
        z: Points strictly inside the finite domain

    Returns:
        Tuple[np.ndarray, np.ndarray]: (lo, hi) arrays

    Raises:
        DomainError: If any point lies outside the open domain
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= spec.domain_lower) or np.any(z >= spec.domain_upper):
        raise DomainError(f"Some points lie outside the open domain of the {spec.label} conjugate")

    name = spec.name

    if spec.penalized:
        if name is DivergenceName.KL:
            with np.errstate(divide="ignore"):
                slope = np.where(z <= -1.0, -1.0 / np.where(z <= -1.0, z, -1.0), 1.0)
            return slope, slope.copy()
        if name is DivergenceName.PEARSON:
            slope = np.where(z < -1.0, 0.0, np.where(z <= 0.0, z + 1.0, 1.0))
            return slope, slope.copy()
        lo = np.where(z <= -1.0, 0.0, 1.0)
        hi = np.where(z < -1.0, 0.0, 1.0)
        return lo, hi

    if name is DivergenceName.KL:
        slope = -1.0 / z
        return slope, slope.copy()
    if name is DivergenceName.PEARSON:
        return z + 1.0, z + 1.0
    ones = np.ones_like(z)
    return ones, ones.copy()


def select_subgradient(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Pick zero when it lies in [lo, hi], otherwise the nearest endpoint."""
    return np.clip(0.0, lo, hi)


def l1_conjugate_with_slope(z: float, c: float) -> float:
    """
    Penalized conjugate of the L1 generator with slope c above t = 1.

    Args:
        z: Dual variable
        c: Slope of f(t) for t > 1 (math.inf gives the fully penalized form)

    Returns:
        float: -1 for z <= -1, z for -1 < z <= c, INFEASIBLE for z > c
    """
    if not c > 0:
        raise InvalidParameterError(f"Slope c must be positive, got {c}")
    if z <= -1.0:
        return -1.0
    if z <= c:
        return z
    return INFEASIBLE


def l1_conjugate_values_with_slope(z: np.ndarray, c: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.where(z <= -1.0, -1.0, np.where(z <= c, z, INFEASIBLE))
