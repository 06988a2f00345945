"""
Comparison class-prior estimators.

- EN: a probabilistic classifier of labeled vs unlabeled points, rescaled by
  its mean output on the positives.
- PE: unpenalized Pearson partial matching, solved in closed form per theta.
- SB: slope of the ROC curve of a density-ratio scorer at its right endpoint.

All three reuse the pooled standardization and Gaussian basis of the
divergence estimators.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from modules.core import Dataset, gram_matrix, solve_regularized_system, standardize_dataset
from modules.errors import (
    DegenerateClassifierError,
    InsufficientSamplesError,
    InvalidParameterError,
    WindowError
)
from modules.estimators import Method, PriorEstimate, ThetaGrid, default_theta_grid, select_theta
from modules.model_selection import (
    CLASSIFIER_OBJECTIVE,
    DUAL_OBJECTIVE,
    CVConfig,
    prepare_workspace,
    select_hyperparams
)
from modules.ratio_classifier import fit_ratio_cv, predict_ratio
from schemas.defaults import EN_CLIP, SB_FIT_WINDOW

LOG = logging.getLogger(__name__)

EN_MIN_SAMPLES = 10
MIN_WINDOW_POINTS = 3


def clamp_prior(value: float) -> Tuple[float, bool]:
    """Clamp an estimate into [0, 1] and report whether it moved."""
    clamped = min(1.0, max(0.0, value))
    return clamped, clamped != value


@dataclass(frozen=True)
class RocCurve:
    """
    Empirical ROC from a threshold sweep over scores.

    `fpr` is the fraction of positives scored at or below the threshold and
    `tpr` the fraction of unlabeled points scored at or below it. Both are
    non-decreasing and run from (0, 0) to (1, 1).
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def __len__(self) -> int:
        return self.fpr.size


def build_roc(scores_pos: np.ndarray, scores_unl: np.ndarray, seed: int = 0) -> RocCurve:
    """
    Sweep a threshold through all scores, lowest first.

    Equal scores are ordered by a seeded random key so that a constant scorer
    traces the diagonal instead of jumping straight to (1, 1).

    Args:
        scores_pos: Scores of the positive sample
        scores_unl: Scores of the unlabeled sample
        seed: Tie-break seed

    Returns:
        RocCurve: n + n' + 1 points
    """
    scores_pos = np.asarray(scores_pos, dtype=float).ravel()
    scores_unl = np.asarray(scores_unl, dtype=float).ravel()
    if scores_pos.size == 0 or scores_unl.size == 0:
        raise InsufficientSamplesError("ROC needs at least one positive and one unlabeled score")

    scores = np.concatenate([scores_pos, scores_unl])
    is_pos = np.concatenate([np.ones(scores_pos.size, dtype=bool), np.zeros(scores_unl.size, dtype=bool)])
    tiebreak = np.random.default_rng(seed).random(scores.size)
    order = np.lexsort((tiebreak, scores))

    fpr = np.concatenate([[0.0], np.cumsum(is_pos[order]) / scores_pos.size])
    tpr = np.concatenate([[0.0], np.cumsum(~is_pos[order]) / scores_unl.size])
    thresholds = np.concatenate([[-np.inf], scores[order]])
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def right_endpoint_slope(roc: RocCurve, fit_window: float = SB_FIT_WINDOW) -> Tuple[float, float]:
    """
    Least-squares slope of the last `fit_window` fraction of ROC points.

    The window is doubled once when it holds fewer than 3 points or no
    spread along the first coordinate.

    Args:
        roc: ROC curve
        fit_window: Fraction of points nearest (1, 1), in (0, 1)

    Returns:
        Tuple[float, float]: (slope, window fraction actually used)

    Raises:
        InvalidParameterError: If fit_window is outside (0, 1)
        WindowError: If the widened window is still unusable
    """
    if not 0.0 < fit_window < 1.0:
        raise InvalidParameterError(f"fit_window must lie in (0, 1), got {fit_window}")

    window = fit_window
    for attempt in range(2):
        count = min(len(roc), int(math.ceil(window * len(roc))))
        x = roc.fpr[-count:]
        y = roc.tpr[-count:]
        if count >= MIN_WINDOW_POINTS and np.ptp(x) > 0:
            slope, _ = np.polyfit(x, y, 1)
            return float(slope), window
        if attempt == 0:
            LOG.warning("ROC fit window %.3g holds %d usable point(s); widening", window, count)
            window = min(1.0, 2.0 * window)

    raise WindowError(f"ROC fit window {window:.3g} still holds too few distinct points")


def en_prior(data: Dataset, classifier_config: Optional[CVConfig] = None, seed: int = 0) -> PriorEstimate:
    """
    Elkan-Noto style estimate from a labeled-vs-unlabeled classifier.

    The classifier is kernel ridge regression to 1 (positives) and 0
    (unlabeled) on the shared basis, clipped into [EN_CLIP, 1 - EN_CLIP].

    Args:
        data: Raw dataset (n, n' >= 10)
        classifier_config: CVConfig for (sigma, lambda)
        seed: Seed for folds and the basis subsample

    Returns:
        PriorEstimate: clamp(mean g(x') / mean g(x), 0, 1)

    Raises:
        InsufficientSamplesError: If either sample has fewer than 10 rows
        DegenerateClassifierError: If the mean output on positives sits at the floor
    """
    if data.n < EN_MIN_SAMPLES or data.n_prime < EN_MIN_SAMPLES:
        raise InsufficientSamplesError(f"EN needs at least {EN_MIN_SAMPLES} samples of each kind")
    config = classifier_config or CVConfig()

    standardized, _ = standardize_dataset(data)
    workspace = prepare_workspace(standardized, config, seed)
    choice = select_hyperparams(0.0, standardized, config, CLASSIFIER_OBJECTIVE, workspace=workspace)
    cache = workspace.caches[choice.sigma_index]

    features = np.vstack([cache.design_pos, cache.design_unl])
    targets = np.concatenate([np.ones(data.n), np.zeros(data.n_prime)])
    weights = solve_regularized_system(gram_matrix(features), features.T @ targets / targets.size, choice.lam)
    g = np.clip(features @ weights, EN_CLIP, 1.0 - EN_CLIP)

    label_rate = float(g[:data.n].mean())
    if label_rate <= EN_CLIP:
        raise DegenerateClassifierError(
            f"Classifier output on positives collapsed to the floor ({label_rate:.3g})"
        )

    theta_hat, clamped = clamp_prior(float(g[data.n:].mean()) / label_rate)
    warnings = []
    if clamped:
        warnings.append("EN estimate clamped into [0, 1]")
        LOG.warning("EN estimate clamped to %.3f", theta_hat)

    return PriorEstimate(
        theta_hat=theta_hat,
        curve=[],
        method=Method.EN.value,
        hyperparams=(choice.sigma, choice.lam),
        seed=seed,
        b=cache.basis.b,
        clamped=clamped,
        warnings=warnings,
        extras={"label_rate": label_rate}
    )


def pe_solution(theta: float, positive_mean: np.ndarray, gram_unl: np.ndarray, lam: float) -> Tuple[np.ndarray, float]:
    """
    Closed-form unpenalized Pearson solution at theta.

    Args:
        theta: Candidate class prior
        positive_mean: h, mean of phi over positives
        gram_unl: G, mean of phi phi^T over unlabeled
        lam: Regularization (> 0)

    Returns:
        Tuple[np.ndarray, float]: alpha = theta (G + lam I)^-1 h and the
            criterion value (1/2) theta h.alpha - theta + 1/2
    """
    alpha = theta * solve_regularized_system(gram_unl, positive_mean, lam)
    value = 0.5 * theta * float(positive_mean @ alpha) - theta + 0.5
    return alpha, value


def pe_prior(
    data: Dataset,
    grid: Optional[ThetaGrid] = None,
    model_selection: Optional[CVConfig] = None,
    seed: int = 0
) -> PriorEstimate:
    """
    Direct Pearson partial matching: grid argmin of the closed-form criterion.

    Args:
        data: Raw dataset
        grid: Candidate class priors
        model_selection: CVConfig, (sigma, lambda) picked per theta
        seed: Seed for folds and the basis subsample

    Returns:
        PriorEstimate: theta_hat with the full criterion curve
    """
    grid = grid or default_theta_grid()
    config = model_selection or CVConfig()

    standardized, _ = standardize_dataset(data)
    workspace = prepare_workspace(standardized, config, seed)
    grams = {}

    curve = []
    chosen = []
    for theta in grid:
        choice = select_hyperparams(
            theta, standardized, config, DUAL_OBJECTIVE, method=Method.PE, workspace=workspace
        )
        cache = workspace.caches[choice.sigma_index]
        if choice.sigma_index not in grams:
            grams[choice.sigma_index] = gram_matrix(cache.design_unl)
        _, value = pe_solution(theta, cache.moments.positive_mean, grams[choice.sigma_index], choice.lam)
        curve.append((theta, value))
        chosen.append((choice.sigma, choice.lam))

    theta_hat, index = select_theta(curve)
    return PriorEstimate(
        theta_hat=theta_hat,
        curve=curve,
        method=Method.PE.value,
        hyperparams=chosen[index],
        seed=seed,
        b=workspace.caches[0].basis.b,
        hyperparams_by_theta=chosen
    )


def sb_prior(
    data: Dataset,
    ratio_config: Optional[CVConfig] = None,
    fit_window: float = SB_FIT_WINDOW,
    seed: int = 0
) -> PriorEstimate:
    """
    Right-endpoint slope of the ROC of a density-ratio scorer.

    Args:
        data: Raw dataset
        ratio_config: CVConfig for the ratio model
        fit_window: Fraction of ROC points used for the line fit
        seed: Seed for folds, basis subsample and ROC tie-breaking

    Returns:
        PriorEstimate: clamp(slope, 0, 1)

    Raises:
        WindowError: If the fit window cannot be made usable
    """
    model = fit_ratio_cv(data, ratio_config, seed)
    roc = build_roc(predict_ratio(model, data.positives), predict_ratio(model, data.unlabeled), seed)
    slope, window_used = right_endpoint_slope(roc, fit_window)
    theta_hat, clamped = clamp_prior(slope)

    warnings = []
    if window_used != fit_window:
        warnings.append(f"SB fit window widened to {window_used:.3g}")
    if clamped:
        warnings.append("SB estimate clamped into [0, 1]")
        LOG.warning("SB slope %.3f clamped to %.3f", slope, theta_hat)

    return PriorEstimate(
        theta_hat=theta_hat,
        curve=[],
        method=Method.SB.value,
        hyperparams=(model.basis.sigma, model.lam),
        seed=seed,
        b=model.basis.b,
        clamped=clamped,
        warnings=warnings,
        extras={"slope": slope, "fit_window": window_used, "roc_points": len(roc)}
    )
