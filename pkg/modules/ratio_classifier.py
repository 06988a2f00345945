"""
Least-squares density-ratio estimation and the PU classifier built on it.

The ratio r(x) = p(x|y=1) / p(x) is fitted as alpha.phi(x) by solving
(G + lam I) alpha = h, where G is the mean of phi phi^T over the unlabeled
sample and h the mean of phi over the positives. Scaled by the class prior
the ratio gives the posterior p(y=1|x), which is thresholded at 1/2.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from modules.core import (
    BasisSpec,
    Dataset,
    Standardizer,
    gram_matrix,
    identity_standardizer,
    solve_regularized_system,
    standardize_dataset
)
from modules.errors import InvalidParameterError, ShapeError
from modules.model_selection import RATIO_OBJECTIVE, CVConfig, prepare_workspace, select_hyperparams

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class RatioModel:
    """Fitted ratio coefficients together with the basis and standardization used."""

    alpha: np.ndarray
    basis: BasisSpec
    lam: float
    standardizer: Standardizer
    cv_score: Optional[float] = None


def fit_ratio(
    data: Dataset,
    basis: BasisSpec,
    lam: float,
    standardizer: Optional[Standardizer] = None
) -> RatioModel:
    """
    Fit the ratio with a fixed basis and regularization.

    Args:
        data: Dataset already expressed in the basis' feature space
        basis: Gaussian basis
        lam: Regularization (> 0)
        standardizer: Standardizer that maps raw points into that space
            (identity when None)

    Returns:
        RatioModel: alpha = (G + lam I)^-1 h

    Raises:
        InvalidParameterError: If lam <= 0
    """
    if not lam > 0:
        raise InvalidParameterError(f"Regularization lambda must be positive, got {lam}")
    gram = gram_matrix(basis.evaluate(data.unlabeled))
    target = basis.evaluate(data.positives).mean(axis=0)
    alpha = solve_regularized_system(gram, target, lam)
    return RatioModel(
        alpha=alpha,
        basis=basis,
        lam=float(lam),
        standardizer=standardizer or identity_standardizer(basis.d)
    )


def fit_ratio_cv(data: Dataset, config: Optional[CVConfig] = None, seed: int = 0) -> RatioModel:
    """
    Standardize, pick (sigma, lambda) by held-out ratio loss, then fit.

    Args:
        data: Raw dataset
        config: CVConfig (default CVConfig())
        seed: Seed for folds and the basis subsample

    Returns:
        RatioModel: Model applicable to raw points
    """
    config = config or CVConfig()
    standardized, standardizer = standardize_dataset(data)
    workspace = prepare_workspace(standardized, config, seed)
    choice = select_hyperparams(
        0.0, standardized, config, RATIO_OBJECTIVE, workspace=workspace
    )
    cache = workspace.caches[choice.sigma_index]
    alpha = solve_regularized_system(
        gram_matrix(cache.design_unl), cache.moments.positive_mean, choice.lam
    )
    LOG.info("Ratio model: sigma=%.4g lambda=%.4g held-out loss=%.4g", choice.sigma, choice.lam, choice.cv_score)
    return RatioModel(
        alpha=alpha,
        basis=cache.basis,
        lam=choice.lam,
        standardizer=standardizer,
        cv_score=choice.cv_score
    )


def predict_ratio(model: RatioModel, points: np.ndarray) -> np.ndarray:
    """
    Evaluate max(0, alpha.phi(x)) at raw points.

    Args:
        model: Fitted ratio model
        points: Raw points (m x d); m may be 0

    Returns:
        np.ndarray: Non-negative ratio values (length m)
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, model.basis.d)
    if points.shape[0] == 0:
        return np.empty(0)
    design = model.basis.evaluate(model.standardizer.transform(points))
    return np.maximum(0.0, design @ model.alpha)


def classify(model: RatioModel, prior: float, points: np.ndarray) -> np.ndarray:
    """
    Label points +1 when prior * r(x) >= 1/2, else -1.

    Args:
        model: Fitted ratio model
        prior: Class prior in [0, 1]
        points: Raw points (m x d)

    Returns:
        np.ndarray: Integer labels in {+1, -1}

    Raises:
        InvalidParameterError: If prior is outside [0, 1]
    """
    if not 0.0 <= prior <= 1.0:
        raise InvalidParameterError(f"prior must lie in [0, 1], got {prior}")
    ratio = predict_ratio(model, points)
    return np.where(prior * ratio >= 0.5, 1, -1).astype(int)


def misclassification_rate(predicted: np.ndarray, truth: np.ndarray) -> float:
    """
    Fraction of disagreeing labels.

    Raises:
        ShapeError: If the vectors differ in length or are empty
    """
    predicted = np.asarray(predicted).ravel()
    truth = np.asarray(truth).ravel()
    if predicted.size != truth.size:
        raise ShapeError(f"Label vectors differ in length: {predicted.size} vs {truth.size}")
    if predicted.size == 0:
        raise ShapeError("Cannot score empty label vectors")
    return float(np.mean(predicted != truth))
