"""
Core data containers and Gaussian basis for puprior.

This module holds the positive/unlabeled dataset container, the pooled
standardizer, Gaussian kernel basis construction and evaluation, and the
β vector that every divergence-based estimator consumes.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

from modules.errors import InvalidParameterError, ShapeError
from schemas.defaults import (
    DEFAULT_MAX_CENTERS,
    DEFAULT_SIGMA_MULTIPLIERS,
    MEDIAN_HEURISTIC_MAX_POINTS
)

LOG = logging.getLogger(__name__)

# Rows evaluated per block when computing basis means on large samples
DEFAULT_CHUNK_SIZE = 4096

# Smallest basis value; keeps far-away evaluations strictly positive
_BASIS_FLOOR = np.finfo(float).tiny


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def validate_dataset_arrays(positives: np.ndarray, unlabeled: np.ndarray) -> Tuple[bool, str]:
    """
    Validate positive and unlabeled sample matrices.

    Args:
        positives: Positive sample matrix (n x d)
        unlabeled: Unlabeled sample matrix (n' x d)

    Returns:
        Tuple[bool, str]: (is_valid, error_message)
    """
    if positives.ndim != 2 or unlabeled.ndim != 2:
        return False, "Sample matrices must be two-dimensional (row = sample, column = feature)"

    if positives.shape[0] < 1:
        return False, "Positive sample is empty"
    if unlabeled.shape[0] < 1:
        return False, "Unlabeled sample is empty"

    if positives.shape[1] < 1:
        return False, "Samples need at least one feature column"
    if positives.shape[1] != unlabeled.shape[1]:
        return False, (
            f"Column count mismatch: positives have {positives.shape[1]}, "
            f"unlabeled have {unlabeled.shape[1]}"
        )

    if not np.all(np.isfinite(positives)):
        return False, "Positive sample contains NaN or infinite values"
    if not np.all(np.isfinite(unlabeled)):
        return False, "Unlabeled sample contains NaN or infinite values"

    return True, ""


@dataclass(frozen=True)
class Dataset:
    """Positive sample X (n x d) and unlabeled sample X' (n' x d)."""

    positives: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        positives = np.array(self.positives, dtype=float)
        unlabeled = np.array(self.unlabeled, dtype=float)
        if positives.ndim == 1:
            positives = positives.reshape(-1, 1)
        if unlabeled.ndim == 1:
            unlabeled = unlabeled.reshape(-1, 1)

        is_valid, message = validate_dataset_arrays(positives, unlabeled)
        if not is_valid:
            if "mismatch" in message or "two-dimensional" in message:
                raise ShapeError(message)
            raise InvalidParameterError(message)

        object.__setattr__(self, "positives", _frozen(positives))
        object.__setattr__(self, "unlabeled", _frozen(unlabeled))

    @property
    def n(self) -> int:
        return self.positives.shape[0]

    @property
    def n_prime(self) -> int:
        return self.unlabeled.shape[0]

    @property
    def d(self) -> int:
        return self.positives.shape[1]

    def pooled(self) -> np.ndarray:
        """Stack positives on top of unlabeled samples."""
        return np.vstack([self.positives, self.unlabeled])


@dataclass(frozen=True)
class Standardizer:
    """Per-column location and scale computed on the pooled sample."""

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(1, -1) if points.size == self.mean.size else points.reshape(-1, 1)
        if points.shape[1] != self.mean.size:
            raise ShapeError(
                f"Points have {points.shape[1]} columns, standardizer expects {self.mean.size}"
            )
        return (points - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}


def identity_standardizer(d: int) -> Standardizer:
    return Standardizer(mean=np.zeros(d), scale=np.ones(d))


def fit_standardizer(data: Dataset) -> Standardizer:
    """
    Fit per-column standardization on the pooled positive + unlabeled sample.

    Zero-variance columns keep a scale of 1 so they pass through centered.

    Args:
        data: Dataset to standardize

    Returns:
        Standardizer: Column means and scales
    """
    pooled = data.pooled()
    mean = pooled.mean(axis=0)
    scale = pooled.std(axis=0)
    constant = scale <= 0.0
    if np.any(constant):
        LOG.debug("Clamping %d zero-variance column(s) to unit scale", int(constant.sum()))
        scale = np.where(constant, 1.0, scale)
    return Standardizer(mean=mean, scale=scale)


def standardize_dataset(data: Dataset, standardizer: Optional[Standardizer] = None) -> Tuple[Dataset, Standardizer]:
    """
    Standardize both samples with one pooled standardizer.

    Args:
        data: Raw dataset
        standardizer: Optional pre-fitted standardizer (fitted on `data` if None)

    Returns:
        Tuple[Dataset, Standardizer]: (standardized dataset, standardizer used)
    """
    if standardizer is None:
        standardizer = fit_standardizer(data)
    standardized = Dataset(
        positives=standardizer.transform(data.positives),
        unlabeled=standardizer.transform(data.unlabeled)
    )
    return standardized, standardizer


@dataclass(frozen=True)
class BasisSpec:
    """Gaussian kernel centers (b x d) and a shared width sigma."""

    centers: np.ndarray
    sigma: float

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float)
        if centers.ndim == 1:
            centers = centers.reshape(-1, 1)
        if centers.shape[0] < 1:
            raise InvalidParameterError("A basis needs at least one center")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise InvalidParameterError(f"Kernel width must be positive, got {self.sigma}")
        object.__setattr__(self, "centers", _frozen(centers))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def b(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """
        Evaluate every basis function at every row of `points`.

        Args:
            points: Matrix (m x d)

        Returns:
            np.ndarray: Design matrix (m x b) with entries in (0, 1]
        """
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.d:
            raise ShapeError(
                f"Points of shape {points.shape} do not match basis dimension {self.d}"
            )
        if points.shape[0] == 0:
            return np.empty((0, self.b))
        squared = cdist(points, self.centers, metric="sqeuclidean")
        return np.maximum(np.exp(-squared / (2.0 * self.sigma ** 2)), _BASIS_FLOOR)


def build_basis(data: Dataset, sigma: float, max_centers: int = DEFAULT_MAX_CENTERS, seed: int = 0) -> BasisSpec:
    """
    Build a Gaussian basis centered at the pooled samples.

    Centers are (x_1..x_n, x'_1..x'_n'). When there are more than
    `max_centers` samples a seeded uniform subsample is kept, in original
    order.

    Args:
        data: Dataset providing the centers
        sigma: Kernel width (> 0)
        max_centers: Cap on the number of centers
        seed: Seed for the subsample

    Returns:
        BasisSpec: Basis with b = min(n + n', max_centers)

    Raises:
        InvalidParameterError: If sigma <= 0 or max_centers < 1
    """
    if not sigma > 0:
        raise InvalidParameterError(f"Kernel width must be positive, got {sigma}")
    if max_centers < 1:
        raise InvalidParameterError(f"max_centers must be >= 1, got {max_centers}")

    pooled = data.pooled()
    if pooled.shape[0] > max_centers:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(pooled.shape[0], size=max_centers, replace=False))
        pooled = pooled[keep]

    return BasisSpec(centers=pooled, sigma=sigma)


def eval_basis(basis: BasisSpec, x: Sequence[float]) -> np.ndarray:
    """
    Evaluate phi(x) = (exp(-||x - c_l||^2 / (2 sigma^2)))_l for one point.

    Args:
        basis: Gaussian basis
        x: Point of dimension d

    Returns:
        np.ndarray: Vector of length b

    Raises:
        ShapeError: If x does not have dimension d
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != basis.d:
        raise ShapeError(f"Point of shape {x.shape} does not match basis dimension {basis.d}")
    return basis.evaluate(x.reshape(1, -1))[0]


@dataclass(frozen=True)
class BasisMoments:
    """Means of phi over positives (a) and over unlabeled samples (v)."""

    positive_mean: np.ndarray
    unlabeled_mean: np.ndarray


@dataclass(frozen=True)
class BetaVector:
    """beta_l = theta * a_l - v_l for one value of theta."""

    values: np.ndarray
    theta: float


def _chunked_mean(basis: BasisSpec, points: np.ndarray, chunk_size: int) -> np.ndarray:
    total = np.zeros(basis.b)
    for start in range(0, points.shape[0], chunk_size):
        total += basis.evaluate(points[start:start + chunk_size]).sum(axis=0)
    return total / points.shape[0]


def basis_moments(data: Dataset, basis: BasisSpec, chunk_size: int = DEFAULT_CHUNK_SIZE) -> BasisMoments:
    """
    Compute the per-basis means over both samples, block by block.

    Args:
        data: Dataset
        basis: Gaussian basis
        chunk_size: Rows evaluated per block

    Returns:
        BasisMoments: (a, v) mean vectors of length b
    """
    if basis.d != data.d:
        raise ShapeError(f"Basis dimension {basis.d} does not match data dimension {data.d}")
    return BasisMoments(
        positive_mean=_frozen(_chunked_mean(basis, data.positives, chunk_size)),
        unlabeled_mean=_frozen(_chunked_mean(basis, data.unlabeled, chunk_size))
    )


def beta_from_moments(theta: float, moments: BasisMoments) -> BetaVector:
    if not 0.0 <= theta <= 1.0:
        raise InvalidParameterError(f"theta must lie in [0, 1], got {theta}")
    values = theta * moments.positive_mean - moments.unlabeled_mean
    return BetaVector(values=_frozen(values), theta=float(theta))


def compute_beta(
    theta: float,
    data: Dataset,
    basis: BasisSpec,
    moments: Optional[BasisMoments] = None
) -> BetaVector:
    """
    Compute beta_l = (theta/n) sum_i phi_l(x_i) - (1/n') sum_j phi_l(x'_j).

    Args:
        theta: Candidate class prior in [0, 1]
        data: Dataset
        basis: Gaussian basis
        moments: Optional precomputed basis means (skips re-evaluation)

    Returns:
        BetaVector: beta values, each in [-1, theta]
    """
    if moments is None:
        moments = basis_moments(data, basis)
    return beta_from_moments(theta, moments)


def median_distance(data: Dataset, max_points: int = MEDIAN_HEURISTIC_MAX_POINTS, seed: int = 0) -> float:
    """
    Median pairwise Euclidean distance of a pooled seeded subsample.

    Args:
        data: Dataset
        max_points: Subsample size cap
        seed: Subsample seed

    Returns:
        float: Median of the positive pairwise distances (1.0 if all points coincide)
    """
    pooled = data.pooled()
    if pooled.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        pooled = pooled[np.sort(rng.choice(pooled.shape[0], size=max_points, replace=False))]

    distances = pdist(pooled) if pooled.shape[0] > 1 else np.empty(0)
    distances = distances[distances > 0]
    if distances.size == 0:
        return 1.0
    return float(np.median(distances))


def sigma_candidates(
    data: Dataset,
    multipliers: Sequence[float] = DEFAULT_SIGMA_MULTIPLIERS,
    seed: int = 0
) -> List[float]:
    """
    Kernel width candidates: multiples of the median pairwise distance.

    Args:
        data: Dataset (standardized)
        multipliers: Positive multipliers of the median distance
        seed: Subsample seed for the median heuristic

    Returns:
        List[float]: Ascending candidate widths
    """
    median = median_distance(data, seed=seed)
    return sorted(float(m) * median for m in multipliers)


def gram_matrix(design: np.ndarray) -> np.ndarray:
    """Empirical second moment (1/m) Phi^T Phi of a design matrix."""
    if design.shape[0] == 0:
        raise InvalidParameterError("Cannot form a Gram matrix from zero rows")
    return design.T @ design / design.shape[0]


def solve_regularized_system(gram: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    """
    Solve (G + lam I) x = rhs for a symmetric positive semi-definite G.

    Args:
        gram: Symmetric PSD matrix (b x b)
        rhs: Right-hand side (length b)
        lam: Ridge term (> 0)

    Returns:
        np.ndarray: Solution vector

    Raises:
        InvalidParameterError: If lam <= 0
    """
    if not lam > 0:
        raise InvalidParameterError(f"Regularization lambda must be positive, got {lam}")
    system = gram + lam * np.eye(gram.shape[0])
    try:
        return cho_solve(cho_factor(system, lower=True, check_finite=False), rhs, check_finite=False)
    except LinAlgError:
        LOG.debug("Cholesky failed at lambda=%g, falling back to lstsq", lam)
        return np.linalg.lstsq(system, rhs, rcond=None)[0]
