"""
Class-prior estimators based on penalized f-divergences.

This module implements the analytic penalized-L1 estimator (c = inf), the
finite-c L1 quadratic program, the generic Fenchel-dual estimator for the
penalized KL and Pearson divergences, and the search for the class prior
over a grid of candidate values theta.

All estimators share the linear model r(x) = sum_l alpha_l phi_l(x) - 1 with
alpha >= 0 and the vector beta(theta) = theta * a - v, where a and v are the
means of the basis functions over the positive and unlabeled samples.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.core import (
    BasisMoments,
    BasisSpec,
    BetaVector,
    Dataset,
    basis_moments,
    beta_from_moments,
    compute_beta
)
from modules.divergences import (
    DivergenceName,
    DivergenceSpec,
    conjugate_values,
    select_subgradient,
    subgradient_bounds
)
from modules.errors import InvalidParameterError, SolverConvergenceError
from schemas.defaults import (
    DEFAULT_L1_SLOPE,
    DEFAULT_THETA_HI,
    DEFAULT_THETA_LO,
    DEFAULT_THETA_POINTS,
    QP_ENTERING_BATCH,
    QP_KKT_TOL,
    QP_MAX_SWEEPS,
    QP_UPDATE_TOL,
    SUBGRADIENT_MAX_ITER,
    SUBGRADIENT_TOL
)

LOG = logging.getLogger(__name__)


class Method(str, Enum):
    """Prior estimation methods, named as on the command line."""

    PEN_L1 = "pen-l1"
    L1 = "l1"
    PEN_KL = "pen-kl"
    PEN_PE = "pen-pe"
    PE = "pe"
    EN = "en"
    SB = "sb"


DIVERGENCE_METHODS = (Method.PEN_L1, Method.L1, Method.PEN_KL, Method.PEN_PE)


def parse_method(name: str) -> Method:
    """
    Parse a method name from the command line.

    Args:
        name: Method string (e.g. "pen-l1")

    Returns:
        Method: Parsed method

    Raises:
        InvalidParameterError: If the name is unknown
    """
    try:
        return Method(name.strip().lower())
    except ValueError:
        choices = ", ".join(m.value for m in Method)
        raise InvalidParameterError(f"Unknown method '{name}'. Choose from: {choices}")


@dataclass(frozen=True)
class ThetaGrid:
    """Finite ascending set of candidate class priors in [0, 1]."""

    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if len(values) == 0:
            raise InvalidParameterError("The theta grid is empty")
        if len(values) < 2:
            raise InvalidParameterError("The theta grid needs at least 2 points")
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise InvalidParameterError("Theta grid values must lie in [0, 1]")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InvalidParameterError("Theta grid values must be strictly ascending")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def default_theta_grid() -> ThetaGrid:
    """0.00, 0.01, ..., 1.00."""
    return ThetaGrid(tuple(np.round(np.linspace(DEFAULT_THETA_LO, DEFAULT_THETA_HI, DEFAULT_THETA_POINTS), 12)))


def parse_theta_grid(text: str) -> ThetaGrid:
    """
    Parse a "lo:hi:step" grid specification (both ends included).

    Args:
        text: Grid specification, e.g. "0:1:0.01"

    Returns:
        ThetaGrid: Parsed grid

    Raises:
        InvalidParameterError: If the text is malformed or the grid is invalid
    """
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidParameterError(f"Theta grid must look like lo:hi:step, got '{text}'")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise InvalidParameterError(f"Theta grid must contain numbers, got '{text}'")
    if step <= 0 or hi < lo:
        raise InvalidParameterError(f"Theta grid needs step > 0 and hi >= lo, got '{text}'")

    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    values = np.round(lo + step * np.arange(count), 12)
    return ThetaGrid(tuple(values))


@dataclass(frozen=True)
class SolverConfig:
    """Iteration limits and tolerances for the iterative solvers."""

    max_iter: int = SUBGRADIENT_MAX_ITER
    tol: float = SUBGRADIENT_TOL
    max_sweeps: int = QP_MAX_SWEEPS
    update_tol: float = QP_UPDATE_TOL
    kkt_tol: float = QP_KKT_TOL


@dataclass(frozen=True)
class DualSolution:
    """Solution of one estimator at one theta."""

    alpha: np.ndarray
    beta: BetaVector
    objective: float
    estimate: float
    lam: float
    c: float
    feasible: bool
    iterations: int = 0
    stationarity_residual: float = 0.0
    complementarity_residual: float = 0.0
    multipliers: Optional[np.ndarray] = None


@dataclass
class PriorEstimate:
    """Selected class prior, the criterion curve and the hyperparameters used."""

    theta_hat: float
    curve: List[Tuple[float, float]]
    method: str
    hyperparams: Tuple[Optional[float], Optional[float]]
    seed: int
    b: Optional[int] = None
    clamped: bool = False
    warnings: List[str] = field(default_factory=list)
    hyperparams_by_theta: List[Tuple[float, float]] = field(default_factory=list)
    extras: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        sigma, lam = self.hyperparams
        return {
            "method": self.method,
            "theta_hat": float(self.theta_hat),
            "curve": [
                {"theta": float(t), "value": (float(v) if np.isfinite(v) else None)}
                for t, v in self.curve
            ],
            "hyperparams": {"sigma": sigma, "lambda": lam},
            "b": self.b,
            "seed": int(self.seed),
            "clamped": bool(self.clamped),
            "warnings": list(self.warnings)
        }


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise InvalidParameterError(f"Regularization lambda must be positive, got {lam}")


def _check_theta(theta: float) -> None:
    if not 0.0 <= theta <= 1.0:
        raise InvalidParameterError(f"theta must lie in [0, 1], got {theta}")


def pen_l1_alpha(beta: BetaVector, lam: float) -> DualSolution:
    """
    Analytic minimizer of (lam/2)||alpha||^2 - alpha.beta over alpha >= 0.

    Args:
        beta: beta vector at some theta
        lam: Regularization (> 0)

    Returns:
        DualSolution: alpha_l = max(0, beta_l) / lam, c = inf

    Raises:
        InvalidParameterError: If lam <= 0
    """
    _check_lambda(lam)
    values = beta.values
    alpha = np.maximum(0.0, values) / lam
    objective = 0.5 * lam * float(alpha @ alpha) - float(alpha @ values)
    estimate = float(np.maximum(0.0, values) @ values) / lam - beta.theta + 1.0
    return DualSolution(
        alpha=alpha,
        beta=beta,
        objective=objective,
        estimate=estimate,
        lam=float(lam),
        c=math.inf,
        feasible=True
    )


def pen_l1_estimate(
    theta: float,
    data: Dataset,
    basis: BasisSpec,
    lam: float,
    moments: Optional[BasisMoments] = None
) -> DualSolution:
    """
    Penalized L1-distance estimate at theta.

    penL(theta) = (1/lam) sum_l max(0, beta_l) beta_l - theta + 1, which
    equals alpha.beta - theta + 1 at the analytic alpha.

    Args:
        theta: Candidate class prior in [0, 1]
        data: Dataset (standardized)
        basis: Gaussian basis
        lam: Regularization (> 0)
        moments: Optional precomputed basis means

    Returns:
        DualSolution: Analytic solution with the estimate
    """
    _check_theta(theta)
    _check_lambda(lam)
    if moments is None:
        moments = basis_moments(data, basis)
    return pen_l1_alpha(beta_from_moments(theta, moments), lam)


@dataclass(frozen=True)
class QPResult:
    alpha: np.ndarray
    multipliers: np.ndarray
    sweeps: int
    stationarity: float
    complementarity: float
    primal_violation: float


def _coordinate_maximizer(w0: np.ndarray, k: np.ndarray, lam: float, bound: float) -> float:
    """
    Exact maximizer over m >= 0 of the dual restricted to one multiplier.

    The derivative is h(m) = (1/lam) sum_l k_l max(0, w0_l - k_l m) - bound,
    convex, piecewise linear and decreasing, with breakpoints w0_l / k_l.
    """
    mask = (k > 0.0) & (w0 > 0.0)
    if not np.any(mask):
        return 0.0
    kk = k[mask]
    ww = w0[mask]
    if float(kk @ ww) / lam - bound <= 0.0:
        return 0.0

    breaks = ww / kk
    order = np.argsort(breaks)
    breaks, kk, ww = breaks[order], kk[order], ww[order]

    # Sums over the components still active on each segment [breaks[i-1], breaks[i]]
    s1 = np.cumsum((kk * ww)[::-1])[::-1]
    s2 = np.cumsum((kk * kk)[::-1])[::-1]
    roots = (s1 - lam * bound) / s2
    lower = np.concatenate(([0.0], breaks[:-1]))

    segment = int(np.argmax(roots <= breaks))
    return float(max(roots[segment], lower[segment]))


def kkt_residuals(
    alpha: np.ndarray,
    multipliers: np.ndarray,
    beta_values: np.ndarray,
    design_unl: np.ndarray,
    lam: float,
    c: float
) -> Tuple[float, float, float]:
    """
    KKT residuals of the finite-c L1 quadratic program.

    Args:
        alpha: Primal solution (length b)
        multipliers: Constraint multipliers (length n')
        beta_values: beta vector
        design_unl: phi evaluated at the unlabeled rows (n' x b)
        lam: Regularization
        c: Slope c (constraint bound 1 + c)

    Returns:
        Tuple[float, float, float]: (stationarity, complementarity, primal_violation)
    """
    bound = 1.0 + c
    gradient = lam * alpha - beta_values + design_unl.T @ multipliers
    stationarity = float(np.max(np.abs(alpha - np.maximum(0.0, alpha - gradient)), initial=0.0))
    slack = bound - design_unl @ alpha
    complementarity = float(np.max(np.abs(multipliers * slack), initial=0.0))
    primal_violation = float(np.max(np.maximum(0.0, -slack), initial=0.0))
    return stationarity, complementarity, primal_violation


def solve_l1_qp(
    beta_values: np.ndarray,
    design_unl: np.ndarray,
    lam: float,
    c: float,
    solver: Optional[SolverConfig] = None,
    initial_multipliers: Optional[np.ndarray] = None
) -> QPResult:
    """
    Solve min (lam/2)||alpha||^2 - alpha.beta  s.t. alpha >= 0, K alpha <= 1 + c.

    Coordinate ascent on the dual multipliers, one exact line maximization
    per coordinate, restricted to a working set. The working set starts with
    the positive initial multipliers (empty without a warm start) and takes
    in the most violated constraints in small batches until the primal point
    satisfies every constraint.

    Args:
        beta_values: beta vector (length b)
        design_unl: K, phi at the unlabeled rows (n' x b)
        lam: Regularization (> 0)
        c: Slope c (> 0, may be inf)
        solver: Iteration limits and tolerances
        initial_multipliers: Warm start, e.g. the multipliers at a neighbouring theta

    Returns:
        QPResult: Primal and dual solution with KKT residuals

    Raises:
        SolverConvergenceError: If the sweep limit is reached
    """
    solver = solver or SolverConfig()
    beta_values = np.asarray(beta_values, dtype=float)
    n_constraints = design_unl.shape[0]

    if math.isinf(c):
        return QPResult(np.maximum(0.0, beta_values) / lam, np.zeros(n_constraints), 0, 0.0, 0.0, 0.0)

    if initial_multipliers is None:
        multipliers = np.zeros(n_constraints)
    else:
        multipliers = np.maximum(0.0, np.asarray(initial_multipliers, dtype=float)).copy()
    bound = 1.0 + c
    in_working = multipliers > 0.0
    sweeps = 0

    while True:
        working = np.flatnonzero(in_working)
        w = beta_values - design_unl.T @ multipliers
        while working.size > 0:
            if sweeps >= solver.max_sweeps:
                alpha = np.maximum(0.0, w) / lam
                residual = kkt_residuals(alpha, multipliers, beta_values, design_unl, lam, c)
                raise SolverConvergenceError(
                    f"L1 quadratic program did not converge in {solver.max_sweeps} sweeps",
                    last_iterate=alpha,
                    residual=max(residual),
                    iterations=sweeps
                )
            sweeps += 1

            max_change = 0.0
            for j in working:
                k = design_unl[j]
                current = multipliers[j]
                w0 = w + k * current if current != 0.0 else w
                updated = _coordinate_maximizer(w0, k, lam, bound)
                if updated != current:
                    w = w0 - k * updated
                    multipliers[j] = updated
                    max_change = max(max_change, abs(updated - current))

            # Recompute w from scratch so incremental updates cannot drift
            w = beta_values - design_unl.T @ multipliers
            slack = bound - design_unl[working] @ (np.maximum(0.0, w) / lam)
            residual = max(
                float(np.max(np.maximum(0.0, -slack))),
                float(np.max(np.abs(multipliers[working] * slack)))
            )
            if residual <= solver.kkt_tol or max_change < solver.update_tol:
                break

        # At most QP_ENTERING_BATCH of the most violated constraints enter per round
        violation = design_unl @ (np.maximum(0.0, w) / lam) - bound
        violation[in_working] = -np.inf
        candidates = np.flatnonzero(violation > solver.kkt_tol)
        if candidates.size == 0:
            break
        order = np.argsort(-violation[candidates], kind="stable")
        in_working[candidates[order[:QP_ENTERING_BATCH]]] = True
        LOG.debug("QP working set grew to %d of %d constraints", int(in_working.sum()), n_constraints)

    alpha = np.maximum(0.0, beta_values - design_unl.T @ multipliers) / lam
    stationarity, complementarity, violation = kkt_residuals(
        alpha, multipliers, beta_values, design_unl, lam, c
    )
    return QPResult(alpha, multipliers, sweeps, stationarity, complementarity, violation)


def _l1_qp_solution(
    beta: BetaVector,
    design_unl: np.ndarray,
    lam: float,
    c: float,
    solver: Optional[SolverConfig],
    initial_multipliers: Optional[np.ndarray] = None
) -> DualSolution:
    solver = solver or SolverConfig()
    result = solve_l1_qp(beta.values, design_unl, lam, c, solver, initial_multipliers)
    alpha = result.alpha
    objective = 0.5 * lam * float(alpha @ alpha) - float(alpha @ beta.values)
    return DualSolution(
        alpha=alpha,
        beta=beta,
        objective=objective,
        estimate=float(alpha @ beta.values) - beta.theta + 1.0,
        lam=float(lam),
        c=float(c),
        feasible=result.primal_violation <= solver.kkt_tol,
        iterations=result.sweeps,
        stationarity_residual=result.stationarity,
        complementarity_residual=result.complementarity,
        multipliers=result.multipliers
    )


def l1_qp_estimate(
    theta: float,
    data: Dataset,
    basis: BasisSpec,
    lam: float,
    c: float = DEFAULT_L1_SLOPE,
    solver: Optional[SolverConfig] = None
) -> DualSolution:
    """
    Finite-c L1 estimate at theta via the constrained quadratic program.

    Args:
        theta: Candidate class prior in [0, 1]
        data: Dataset (standardized)
        basis: Gaussian basis
        lam: Regularization (> 0)
        c: Slope of f(t) above t = 1 (> 0); c = 1 is the ordinary L1 distance
        solver: Iteration limits and tolerances

    Returns:
        DualSolution: QP solution; estimate = alpha.beta - theta + 1

    Raises:
        InvalidParameterError: On out-of-range parameters
        SolverConvergenceError: If the QP does not converge
    """
    _check_theta(theta)
    _check_lambda(lam)
    if not c > 0:
        raise InvalidParameterError(f"Slope c must be positive, got {c}")
    beta = compute_beta(theta, data, basis)
    return _l1_qp_solution(beta, basis.evaluate(data.unlabeled), lam, c, solver)


def dual_value(
    spec: DivergenceSpec,
    theta: float,
    alpha: np.ndarray,
    positive_mean: np.ndarray,
    design_unl: np.ndarray,
    lam: float
) -> float:
    """
    Regularized empirical dual objective at alpha.

    theta * mean_i r(x_i) - mean_j f~*(r(x'_j)) - (lam/2)||alpha||^2 with
    r = alpha.phi - 1.
    """
    r_unl = design_unl @ alpha - 1.0
    conj = conjugate_values(spec, r_unl)
    return theta * (float(positive_mean @ alpha) - 1.0) - float(np.mean(conj)) - 0.5 * lam * float(alpha @ alpha)


def maximize_dual(
    spec: DivergenceSpec,
    theta: float,
    positive_mean: np.ndarray,
    design_unl: np.ndarray,
    lam: float,
    solver: Optional[SolverConfig] = None
) -> Tuple[np.ndarray, float, int]:
    """
    Projected subgradient ascent on the regularized dual over alpha >= 0.

    Step sizes follow 1/(lam * t); the best iterate is returned.

    Args:
        spec: Penalized divergence
        theta: Candidate class prior
        positive_mean: Mean of phi over the positives
        design_unl: phi at the unlabeled rows (n' x b)
        lam: Regularization (> 0)
        solver: Iteration limit and tolerance

    Returns:
        Tuple[np.ndarray, float, int]: (best alpha, best objective, iterations)

    Raises:
        SolverConvergenceError: If the objective is not finite or still improving at the end
    """
    solver = solver or SolverConfig()
    n_unl, b = design_unl.shape
    alpha = np.zeros(b)
    best_alpha = alpha.copy()
    best_value = -math.inf
    patience = max(1, solver.max_iter // 10)
    value_at_checkpoint = -math.inf

    for t in range(1, solver.max_iter + 1):
        r_unl = design_unl @ alpha - 1.0
        value = (
            theta * (float(positive_mean @ alpha) - 1.0)
            - float(np.mean(conjugate_values(spec, r_unl)))
            - 0.5 * lam * float(alpha @ alpha)
        )
        if value > best_value:
            best_value = value
            best_alpha = alpha.copy()
        if t == solver.max_iter - patience + 1:
            value_at_checkpoint = best_value

        lo, hi = subgradient_bounds(spec, r_unl)
        slopes = select_subgradient(lo, hi)
        ascent = theta * positive_mean - design_unl.T @ slopes / n_unl - lam * alpha
        alpha = np.maximum(0.0, alpha + ascent / (lam * t))

    if not np.isfinite(best_value):
        raise SolverConvergenceError(
            f"{spec.label} dual objective is not finite",
            last_iterate=alpha,
            residual=math.inf,
            iterations=solver.max_iter
        )

    improvement = best_value - value_at_checkpoint
    if improvement > solver.tol * (1.0 + abs(best_value)):
        raise SolverConvergenceError(
            f"{spec.label} dual ascent still improving by {improvement:.3g} after {solver.max_iter} iterations",
            last_iterate=best_alpha,
            residual=improvement,
            iterations=solver.max_iter
        )

    return best_alpha, best_value, solver.max_iter


def _dual_solution(
    spec: DivergenceSpec,
    beta: BetaVector,
    positive_mean: np.ndarray,
    design_unl: np.ndarray,
    lam: float,
    solver: Optional[SolverConfig]
) -> DualSolution:
    alpha, value, iterations = maximize_dual(spec, beta.theta, positive_mean, design_unl, lam, solver)
    return DualSolution(
        alpha=alpha,
        beta=beta,
        objective=0.5 * lam * float(alpha @ alpha) - float(alpha @ beta.values),
        estimate=value,
        lam=float(lam),
        c=math.inf,
        feasible=True,
        iterations=iterations
    )


def dual_estimate(
    spec: DivergenceSpec,
    theta: float,
    data: Dataset,
    basis: BasisSpec,
    lam: float,
    solver: Optional[SolverConfig] = None
) -> DualSolution:
    """
    Generic Fenchel-dual estimate of a penalized f-divergence at theta.

    Penalized L1 is routed to the analytic solution.

    Args:
        spec: Penalized KL or penalized Pearson (or penalized L1)
        theta: Candidate class prior in [0, 1]
        data: Dataset (standardized)
        basis: Gaussian basis
        lam: Regularization (> 0)
        solver: Iteration limit and tolerance

    Returns:
        DualSolution: Best iterate; estimate is the attained regularized dual value

    Raises:
        InvalidParameterError: For unpenalized divergences or bad parameters
        SolverConvergenceError: If the ascent does not converge
    """
    _check_theta(theta)
    _check_lambda(lam)
    if not spec.penalized:
        raise InvalidParameterError(f"dual_estimate expects a penalized divergence, got {spec.label}")
    if spec.name is DivergenceName.L1:
        return pen_l1_estimate(theta, data, basis, lam)

    moments = basis_moments(data, basis)
    beta = beta_from_moments(theta, moments)
    return _dual_solution(spec, beta, moments.positive_mean, basis.evaluate(data.unlabeled), lam, solver)


def divergence_for_method(method: Method) -> DivergenceSpec:
    if method is Method.PEN_KL:
        return DivergenceSpec(DivergenceName.KL, penalized=True)
    if method is Method.PEN_PE:
        return DivergenceSpec(DivergenceName.PEARSON, penalized=True)
    return DivergenceSpec(DivergenceName.L1, penalized=True)


def solve_at_theta(
    method: Method,
    theta: float,
    moments: BasisMoments,
    design_unl: np.ndarray,
    lam: float,
    c: float = DEFAULT_L1_SLOPE,
    solver: Optional[SolverConfig] = None,
    initial_multipliers: Optional[np.ndarray] = None
) -> DualSolution:
    """
    Evaluate one divergence criterion from precomputed basis quantities.

    Args:
        method: One of pen-l1, l1, pen-kl, pen-pe
        theta: Candidate class prior
        moments: Basis means over both samples
        design_unl: phi at the unlabeled rows
        lam: Regularization
        c: Slope for the finite-c L1 criterion
        solver: Iteration limits and tolerances
        initial_multipliers: Warm start for the finite-c L1 program

    Returns:
        DualSolution: Solution whose estimate is the criterion value
    """
    beta = beta_from_moments(theta, moments)
    if method is Method.PEN_L1:
        return pen_l1_alpha(beta, lam)
    if method is Method.L1:
        return _l1_qp_solution(beta, design_unl, lam, c, solver, initial_multipliers)
    if method in (Method.PEN_KL, Method.PEN_PE):
        return _dual_solution(divergence_for_method(method), beta, moments.positive_mean, design_unl, lam, solver)
    raise InvalidParameterError(f"{method.value} is not a divergence criterion")


def select_theta(curve: Sequence[Tuple[float, float]]) -> Tuple[float, int]:
    """
    Grid argmin of a criterion curve; the smallest theta wins ties.

    Args:
        curve: (theta, value) pairs in ascending theta order

    Returns:
        Tuple[float, int]: (theta_hat, index into the curve)
    """
    if len(curve) == 0:
        raise InvalidParameterError("Cannot select theta from an empty curve")
    values = np.array([v for _, v in curve], dtype=float)
    values = np.where(np.isnan(values), np.inf, values)
    index = int(np.argmin(values))
    return float(curve[index][0]), index


def criterion_curve(
    method: Method,
    data: Dataset,
    basis: BasisSpec,
    lam: float,
    grid: ThetaGrid,
    c: float = DEFAULT_L1_SLOPE,
    solver: Optional[SolverConfig] = None
) -> List[Tuple[float, float]]:
    """
    Criterion values over the grid with frozen basis and regularization.

    Args:
        method: One of pen-l1, l1, pen-kl, pen-pe
        data: Dataset (already in the basis' feature space)
        basis: Gaussian basis
        lam: Regularization
        grid: Candidate class priors
        c: Slope for the finite-c L1 criterion
        solver: Iteration limits and tolerances

    Returns:
        List[Tuple[float, float]]: (theta, value) pairs in ascending theta
    """
    _check_lambda(lam)
    moments = basis_moments(data, basis)
    design_unl = basis.evaluate(data.unlabeled) if method is not Method.PEN_L1 else None
    curve = []
    multipliers = None
    for theta in grid:
        solution = solve_at_theta(method, theta, moments, design_unl, lam, c, solver, multipliers)
        multipliers = solution.multipliers
        curve.append((theta, solution.estimate))
    return curve


def borrow_informative_choices(choices: Sequence) -> List:
    """
    Replace uninformative per-theta choices by the nearest informative one.

    Below the class prior every candidate fits alpha = 0 and scores the same,
    so the winning pair says nothing about the data. Those thetas take the
    pair of the closest theta whose cross-validation did discriminate; the
    larger theta wins when two are equally close. Without any informative
    theta the choices are returned unchanged.

    Args:
        choices: HyperparamChoice per grid point, in ascending theta

    Returns:
        List: Choices with every uninformative entry replaced
    """
    informative = [i for i, choice in enumerate(choices) if choice.informative]
    if not informative:
        return list(choices)

    borrowed = []
    for i, choice in enumerate(choices):
        if choice.informative:
            borrowed.append(choice)
            continue
        source = min(informative, key=lambda j: (abs(j - i), -j))
        borrowed.append(choices[source])
    return borrowed


def _global_choice(grid: ThetaGrid, select: Callable):
    """
    The first informative per-theta choice in ascending theta.

    Falls back to the grid point nearest 0.5 when no theta discriminates.
    """
    seen = {}
    for theta in grid:
        choice = select(theta)
        if choice.informative:
            LOG.debug("Global CV anchored at theta=%.3f", theta)
            return choice
        seen[theta] = choice
    anchor = min(grid.values, key=lambda t: abs(t - 0.5))
    return seen[anchor]


def estimate_prior(
    method: Method,
    data: Dataset,
    grid: Optional[ThetaGrid] = None,
    model_selection=None,
    seed: int = 0,
    c: float = DEFAULT_L1_SLOPE,
    global_cv: bool = False,
    solver: Optional[SolverConfig] = None,
    progress_callback: Optional[Callable[[int, int, str], None]] = None
) -> PriorEstimate:
    """
    Estimate the class prior by minimizing a divergence criterion over theta.

    Inputs are standardized on the pooled sample; for each theta the kernel
    width and regularization are chosen by cross-validation, the criterion
    is evaluated on the full data and the grid argmin is returned.

    Args:
        method: One of pen-l1, l1, pen-kl, pen-pe
        data: Raw dataset
        grid: Candidate class priors (default 0, 0.01, ..., 1)
        model_selection: CVConfig (default CVConfig())
        seed: Seed for the basis subsample
        c: Slope for the finite-c L1 criterion
        global_cv: Select hyperparameters once instead of per theta
        solver: Iteration limits and tolerances
        progress_callback: Optional callback(current, total, message)

    Returns:
        PriorEstimate: theta_hat, full curve and selected hyperparameters

    Raises:
        InvalidParameterError: On an empty grid or unsupported method
        SolverConvergenceError: If an iterative solver fails on the full data
    """
    from modules.core import standardize_dataset
    from modules.model_selection import CVConfig, prepare_workspace, select_hyperparams

    if method not in DIVERGENCE_METHODS:
        raise InvalidParameterError(f"estimate_prior does not handle method {method.value}")
    grid = grid or default_theta_grid()
    config = model_selection or CVConfig()

    standardized, _ = standardize_dataset(data)
    workspace = prepare_workspace(standardized, config, seed)

    def select(theta):
        return select_hyperparams(
            theta, standardized, config, "dual_objective",
            method=method, c=c, solver=solver, workspace=workspace
        )

    if global_cv:
        choices = [_global_choice(grid, select)] * len(grid)
        LOG.info("Global CV picked sigma=%.4g lambda=%.4g", choices[0].sigma, choices[0].lam)
    else:
        choices = []
        for idx, theta in enumerate(grid, 1):
            if progress_callback:
                progress_callback(idx, len(grid), f"theta = {theta:.3f}")
            choices.append(select(theta))
        choices = borrow_informative_choices(choices)

    curve: List[Tuple[float, float]] = []
    chosen: List[Tuple[float, float]] = []
    b_used: List[int] = []
    warm_starts: Dict[Tuple[int, float], np.ndarray] = {}
    for idx, (theta, choice) in enumerate(zip(grid, choices), 1):
        if global_cv and progress_callback:
            progress_callback(idx, len(grid), f"theta = {theta:.3f}")

        cache = workspace.caches[choice.sigma_index]
        key = (choice.sigma_index, choice.lam)
        solution = solve_at_theta(
            method, theta, cache.moments, cache.design_unl, choice.lam, c, solver, warm_starts.get(key)
        )
        if solution.multipliers is not None:
            warm_starts[key] = solution.multipliers
        curve.append((theta, solution.estimate))
        chosen.append((choice.sigma, choice.lam))
        b_used.append(cache.basis.b)
        LOG.debug("theta=%.3f sigma=%.4g lambda=%.4g value=%.6g", theta, choice.sigma, choice.lam, solution.estimate)

    theta_hat, index = select_theta(curve)
    return PriorEstimate(
        theta_hat=theta_hat,
        curve=curve,
        method=method.value,
        hyperparams=chosen[index],
        seed=seed,
        b=b_used[index],
        hyperparams_by_theta=chosen
    )
