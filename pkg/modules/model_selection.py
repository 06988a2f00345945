"""
Cross-validated choice of the kernel width and regularization.

Positives and unlabeled samples are split into folds independently. For
each candidate pair (sigma, lambda) a solution is fitted on the training
part of every fold and scored on the held-out part; the pair with the best
mean held-out score wins. Basis evaluations are computed once per sigma and
reused across folds, lambdas and thetas through a CVWorkspace.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from sklearn.model_selection import KFold

from modules.core import (
    BasisMoments,
    BasisSpec,
    Dataset,
    build_basis,
    gram_matrix,
    sigma_candidates,
    solve_regularized_system
)
from modules.divergences import conjugate_values, l1_conjugate_values_with_slope
from modules.errors import InsufficientSamplesError, InvalidParameterError, SolverConvergenceError
from modules.estimators import (
    Method,
    SolverConfig,
    divergence_for_method,
    maximize_dual,
    solve_l1_qp
)
from schemas.defaults import (
    CV_QP_KKT_TOL,
    CV_QP_MAX_SWEEPS,
    DEFAULT_FOLDS,
    DEFAULT_L1_SLOPE,
    DEFAULT_LAMBDA_GRID,
    DEFAULT_MAX_CENTERS,
    DEFAULT_SIGMA_MULTIPLIERS
)

LOG = logging.getLogger(__name__)

# Held-out objectives: the dual one is maximized, the two losses are minimized
DUAL_OBJECTIVE = "dual_objective"
RATIO_OBJECTIVE = "ratio_objective"
CLASSIFIER_OBJECTIVE = "classifier_objective"
OBJECTIVES = (DUAL_OBJECTIVE, RATIO_OBJECTIVE, CLASSIFIER_OBJECTIVE)


@dataclass(frozen=True)
class CVConfig:
    """Fold count and candidate grids for hyperparameter selection."""

    folds: int = DEFAULT_FOLDS
    sigma_grid: Optional[Tuple[float, ...]] = None
    sigma_multipliers: Tuple[float, ...] = DEFAULT_SIGMA_MULTIPLIERS
    lambda_grid: Tuple[float, ...] = DEFAULT_LAMBDA_GRID
    max_centers: int = DEFAULT_MAX_CENTERS

    def __post_init__(self):
        if self.folds < 2:
            raise InvalidParameterError(f"Cross-validation needs at least 2 folds, got {self.folds}")
        if len(self.lambda_grid) == 0 or any(not lam > 0 for lam in self.lambda_grid):
            raise InvalidParameterError("lambda grid must be non-empty and positive")
        if self.sigma_grid is not None and (
            len(self.sigma_grid) == 0 or any(not s > 0 for s in self.sigma_grid)
        ):
            raise InvalidParameterError("sigma grid must be non-empty and positive")
        if len(self.sigma_multipliers) == 0 or any(not m > 0 for m in self.sigma_multipliers):
            raise InvalidParameterError("sigma multipliers must be non-empty and positive")
        if self.max_centers < 1:
            raise InvalidParameterError(f"max_centers must be >= 1, got {self.max_centers}")

    def resolve_sigmas(self, data: Dataset, seed: int = 0) -> List[float]:
        """Explicit sigma grid if given, otherwise multiples of the median distance."""
        if self.sigma_grid is not None:
            return sorted(float(s) for s in self.sigma_grid)
        return sigma_candidates(data, self.sigma_multipliers, seed=seed)


@dataclass(frozen=True)
class HyperparamChoice:
    """
    Winning (sigma, lambda) pair.

    `informative` is False when no candidate beat the held-out score of the
    zero model alpha = 0, so every pair scored the same and the winner only
    reflects the tie-break.
    """

    sigma: float
    lam: float
    cv_score: float
    sigma_index: int = 0
    informative: bool = True


@dataclass
class FoldSplit:
    """Row indices of one fold for both samples."""

    pos_train: np.ndarray
    pos_val: np.ndarray
    unl_train: np.ndarray
    unl_val: np.ndarray


@dataclass
class SigmaCache:
    """Basis evaluations for one kernel width, shared by every fold and theta."""

    basis: BasisSpec
    design_pos: np.ndarray
    design_unl: np.ndarray
    moments: BasisMoments
    train_moments: List[BasisMoments] = field(default_factory=list)
    val_moments: List[BasisMoments] = field(default_factory=list)
    grams: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    # Last L1 multipliers per (lambda, fold), reused as the next theta's warm start
    qp_warm_starts: Dict[Tuple[float, int], np.ndarray] = field(default_factory=dict)

    def fold_grams(self, fold_index: int, split: FoldSplit) -> Tuple[np.ndarray, np.ndarray]:
        if fold_index not in self.grams:
            self.grams[fold_index] = (
                gram_matrix(self.design_unl[split.unl_train]),
                gram_matrix(self.design_unl[split.unl_val])
            )
        return self.grams[fold_index]


@dataclass
class CVWorkspace:
    data: Dataset
    sigmas: List[float]
    caches: List[SigmaCache]
    splits: List[FoldSplit]


def make_folds(n_rows: int, folds: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Seeded shuffled K-fold split of range(n_rows).

    Raises:
        InsufficientSamplesError: If there are fewer rows than folds
    """
    if n_rows < folds:
        raise InsufficientSamplesError(f"Cannot split {n_rows} samples into {folds} folds")
    splitter = KFold(n_splits=folds, shuffle=True, random_state=seed)
    return list(splitter.split(np.arange(n_rows)))


def prepare_workspace(data: Dataset, config: CVConfig, seed: int = 0) -> CVWorkspace:
    """
    Precompute fold splits and basis evaluations for every candidate sigma.

    Args:
        data: Standardized dataset
        config: Cross-validation configuration
        seed: Seed for folds, basis subsample and median heuristic

    Returns:
        CVWorkspace: Reusable cache for select_hyperparams
    """
    pos_folds = make_folds(data.n, config.folds, seed)
    unl_folds = make_folds(data.n_prime, config.folds, seed)
    splits = [
        FoldSplit(pos_train=pt, pos_val=pv, unl_train=ut, unl_val=uv)
        for (pt, pv), (ut, uv) in zip(pos_folds, unl_folds)
    ]

    sigmas = config.resolve_sigmas(data, seed=seed)
    caches = []
    for sigma in sigmas:
        basis = build_basis(data, sigma, max_centers=config.max_centers, seed=seed)
        design_pos = basis.evaluate(data.positives)
        design_unl = basis.evaluate(data.unlabeled)
        cache = SigmaCache(
            basis=basis,
            design_pos=design_pos,
            design_unl=design_unl,
            moments=BasisMoments(design_pos.mean(axis=0), design_unl.mean(axis=0))
        )
        for split in splits:
            cache.train_moments.append(BasisMoments(
                design_pos[split.pos_train].mean(axis=0), design_unl[split.unl_train].mean(axis=0)
            ))
            cache.val_moments.append(BasisMoments(
                design_pos[split.pos_val].mean(axis=0), design_unl[split.unl_val].mean(axis=0)
            ))
        caches.append(cache)

    LOG.debug("CV workspace: %d sigma(s), %d fold(s), b=%d", len(sigmas), len(splits), caches[0].basis.b)
    return CVWorkspace(data=data, sigmas=sigmas, caches=caches, splits=splits)


def ranking_solver(solver: Optional[SolverConfig] = None) -> SolverConfig:
    """Quadratic program settings for scoring folds: looser tolerance, fewer sweeps."""
    solver = solver or SolverConfig()
    return replace(
        solver,
        kkt_tol=max(solver.kkt_tol, CV_QP_KKT_TOL),
        max_sweeps=min(solver.max_sweeps, CV_QP_MAX_SWEEPS)
    )


def _held_out_dual(method: Method, theta: float, alpha: np.ndarray, val: BasisMoments,
                   design_val: np.ndarray, c: float) -> float:
    """Unregularized dual value theta * mean r(x) - mean f~*(r(x')) on held-out rows."""
    if method is Method.PEN_L1:
        # r >= -1 everywhere when alpha >= 0 and phi > 0, so f~*(r) = r
        return float(alpha @ (theta * val.positive_mean - val.unlabeled_mean)) - theta + 1.0

    r_val = design_val @ alpha - 1.0
    if method is Method.L1:
        conj = l1_conjugate_values_with_slope(r_val, c)
    else:
        conj = conjugate_values(divergence_for_method(method), r_val)
    if not np.all(np.isfinite(conj)):
        return -math.inf
    return theta * (float(val.positive_mean @ alpha) - 1.0) - float(np.mean(conj))


def _fold_score(
    objective: str,
    method: Method,
    theta: float,
    cache: SigmaCache,
    fold_index: int,
    split: FoldSplit,
    lam: float,
    c: float,
    solver: Optional[SolverConfig]
) -> float:
    train = cache.train_moments[fold_index]
    val = cache.val_moments[fold_index]

    if objective == RATIO_OBJECTIVE:
        gram_train, gram_val = cache.fold_grams(fold_index, split)
        alpha = solve_regularized_system(gram_train, train.positive_mean, lam)
        return 0.5 * float(alpha @ gram_val @ alpha) - float(val.positive_mean @ alpha)

    if objective == CLASSIFIER_OBJECTIVE:
        features = np.vstack([cache.design_pos[split.pos_train], cache.design_unl[split.unl_train]])
        targets = np.concatenate([np.ones(split.pos_train.size), np.zeros(split.unl_train.size)])
        weights = solve_regularized_system(
            gram_matrix(features), features.T @ targets / targets.size, lam
        )
        held_out = np.vstack([cache.design_pos[split.pos_val], cache.design_unl[split.unl_val]])
        held_targets = np.concatenate([np.ones(split.pos_val.size), np.zeros(split.unl_val.size)])
        return float(np.mean((held_out @ weights - held_targets) ** 2))

    if method is Method.PE:
        gram_train, gram_val = cache.fold_grams(fold_index, split)
        alpha = theta * solve_regularized_system(gram_train, train.positive_mean, lam)
        return (
            theta * float(val.positive_mean @ alpha)
            - 0.5 * float(alpha @ gram_val @ alpha)
            - theta + 0.5
        )

    beta_train = theta * train.positive_mean - train.unlabeled_mean
    if method is Method.PEN_L1:
        alpha = np.maximum(0.0, beta_train) / lam
    elif method is Method.L1:
        design_train = cache.design_unl[split.unl_train]
        key = (lam, fold_index)
        result = solve_l1_qp(
            beta_train, design_train, lam, c, ranking_solver(solver), cache.qp_warm_starts.get(key)
        )
        cache.qp_warm_starts[key] = result.multipliers
        alpha = result.alpha
    else:
        alpha, _, _ = maximize_dual(
            divergence_for_method(method), theta, train.positive_mean,
            cache.design_unl[split.unl_train], lam, solver
        )
    return _held_out_dual(method, theta, alpha, val, cache.design_unl[split.unl_val], c)


def _zero_model_score(method: Method, theta: float, cache: SigmaCache, workspace: CVWorkspace, c: float) -> float:
    """Mean held-out dual value of alpha = 0, identical for every (sigma, lambda)."""
    if method is Method.PE:
        return 0.5 - theta
    zero = np.zeros(cache.basis.b)
    return float(np.mean([
        _held_out_dual(method, theta, zero, cache.val_moments[k], cache.design_unl[split.unl_val], c)
        for k, split in enumerate(workspace.splits)
    ]))


def select_hyperparams(
    theta: float,
    data: Dataset,
    config: Optional[CVConfig] = None,
    objective: str = DUAL_OBJECTIVE,
    method: Method = Method.PEN_L1,
    c: float = DEFAULT_L1_SLOPE,
    solver: Optional[SolverConfig] = None,
    workspace: Optional[CVWorkspace] = None,
    seed: int = 0
) -> HyperparamChoice:
    """
    Pick (sigma, lambda) by K-fold cross-validation.

    The dual objective is maximized, the ratio and classifier losses are
    minimized. Exact ties go to the larger lambda, then the larger sigma.
    For the dual objective the choice is flagged as not informative when
    the winner does not beat the zero model.

    Args:
        theta: Candidate class prior (ignored by the two loss objectives)
        data: Standardized dataset
        config: Cross-validation configuration
        objective: "dual_objective", "ratio_objective" or "classifier_objective"
        method: Estimator whose dual is scored (dual objective only)
        c: Slope for the finite-c L1 criterion
        solver: Iteration limits and tolerances
        workspace: Optional precomputed workspace (built from `data` if None)
        seed: Seed used when building a workspace

    Returns:
        HyperparamChoice: Winning pair and its mean held-out score

    Raises:
        InvalidParameterError: For an unknown objective
        InsufficientSamplesError: If either sample is smaller than the fold count
    """
    if objective not in OBJECTIVES:
        raise InvalidParameterError(f"Unknown CV objective '{objective}'. Choose from: {', '.join(OBJECTIVES)}")
    config = config or CVConfig()
    workspace = workspace or prepare_workspace(data, config, seed)
    maximize = objective == DUAL_OBJECTIVE

    best_key = None
    best_choice = None
    for sigma_index, (sigma, cache) in enumerate(zip(workspace.sigmas, workspace.caches)):
        for lam in config.lambda_grid:
            scores = []
            for fold_index, split in enumerate(workspace.splits):
                try:
                    scores.append(_fold_score(objective, method, theta, cache, fold_index, split, lam, c, solver))
                except SolverConvergenceError as e:
                    LOG.debug("sigma=%.4g lambda=%.4g fold %d skipped: %s", sigma, lam, fold_index, e)
                    scores.append(-math.inf if maximize else math.inf)

            mean_score = float(np.mean(scores))
            if math.isnan(mean_score):
                mean_score = -math.inf if maximize else math.inf
            directional = mean_score if maximize else -mean_score

            key = (directional, float(lam), float(sigma))
            if best_key is None or key > best_key:
                best_key = key
                best_choice = HyperparamChoice(
                    sigma=float(sigma), lam=float(lam), cv_score=mean_score, sigma_index=sigma_index
                )

    if maximize:
        baseline = _zero_model_score(method, theta, workspace.caches[0], workspace, c)
        if not best_choice.cv_score > baseline:
            best_choice = replace(best_choice, informative=False)
    return best_choice
