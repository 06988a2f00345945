"""
Experiment orchestration for puprior.

Runs seeded trials of the prior estimators on synthetic and benchmark data,
aggregates them into reports, and checks the statistical behaviour of the
penalized L1 estimator: its convergence rate and its deviation bound.

Trials are independent and may run in parallel (joblib); records are always
sorted by seed before aggregation so the output does not depend on the
worker count.
"""

import logging
import math
import os
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import humanfriendly
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from modules.baselines import clamp_prior, en_prior, pe_prior, sb_prior
from modules.core import (
    basis_moments,
    beta_from_moments,
    build_basis,
    median_distance,
    standardize_dataset
)
from modules.data_io import (
    LabeledTable,
    SyntheticSpec,
    critical_condition,
    generate_synthetic,
    make_pu_split,
    overlap_masses,
    pca_reduce,
    prior_matched_subset
)
from modules.errors import InsufficientSamplesError, InvalidParameterError, PupriorError
from modules.estimators import (
    DIVERGENCE_METHODS,
    Method,
    PriorEstimate,
    SolverConfig,
    ThetaGrid,
    criterion_curve,
    default_theta_grid,
    estimate_prior,
    parse_method,
    pen_l1_alpha,
    select_theta
)
from modules.export_manager import dumps
from modules.model_selection import DUAL_OBJECTIVE, CVConfig, select_hyperparams
from modules.ratio_classifier import classify, fit_ratio_cv, misclassification_rate
from schemas.defaults import (
    DEFAULT_BENCH_POSITIVES,
    DEFAULT_BENCH_UNLABELED,
    DEFAULT_CONVERGE_SIZES,
    DEFAULT_HISTOGRAM_BINS,
    DEFAULT_L1_SLOPE,
    DEFAULT_MAX_CENTERS,
    MIN_DEVIATION_RESAMPLES,
    ORACLE_SAMPLE_SIZE,
    SB_FIT_WINDOW
)

LOG = logging.getLogger(__name__)

THREADS_ENV = "PUPRIOR_THREADS"

# Seed offsets keeping pilot and oracle draws apart from trial draws
PILOT_SEED_OFFSET = 1_000_003
ORACLE_SEED_OFFSET = 2_000_003

MIN_CONVERGE_SIZES = 4
CORRUPTION_SHIFT = 0.3


def worker_count() -> int:
    """Worker count from PUPRIOR_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1").strip() or "1"
    try:
        count = int(raw)
    except ValueError:
        raise InvalidParameterError(f"{THREADS_ENV} must be an integer, got '{raw}'")
    if count < 1:
        raise InvalidParameterError(f"{THREADS_ENV} must be >= 1, got {count}")
    return count


@dataclass(frozen=True)
class MethodSettings:
    """Everything run_method needs besides the data, the method and the seed."""

    grid: ThetaGrid = field(default_factory=default_theta_grid)
    cv: CVConfig = field(default_factory=CVConfig)
    c: float = DEFAULT_L1_SLOPE
    global_cv: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)
    fit_window: float = SB_FIT_WINDOW

    def to_dict(self) -> Dict:
        return {
            "theta_grid": {"lo": self.grid.values[0], "hi": self.grid.values[-1], "points": len(self.grid)},
            "folds": self.cv.folds,
            "sigma_grid": list(self.cv.sigma_grid) if self.cv.sigma_grid is not None else None,
            "sigma_multipliers": list(self.cv.sigma_multipliers),
            "lambda_grid": list(self.cv.lambda_grid),
            "max_centers": self.cv.max_centers,
            "c": self.c,
            "global_cv": self.global_cv,
            "fit_window": self.fit_window
        }


def run_method(
    method: Union[Method, str],
    data,
    settings: Optional[MethodSettings] = None,
    seed: int = 0
) -> PriorEstimate:
    """
    Run any of the seven prior estimators.

    Args:
        method: Method or its CLI name
        data: Raw dataset
        settings: Grids, CV configuration and solver settings
        seed: Seed for folds, basis subsample and tie-breaking

    Returns:
        PriorEstimate: Estimate of the selected method
    """
    method = parse_method(method) if isinstance(method, str) else method
    settings = settings or MethodSettings()

    if method in DIVERGENCE_METHODS:
        return estimate_prior(
            method, data, settings.grid, settings.cv, seed=seed, c=settings.c,
            global_cv=settings.global_cv, solver=settings.solver
        )
    if method is Method.PE:
        return pe_prior(data, settings.grid, settings.cv, seed)
    if method is Method.EN:
        return en_prior(data, settings.cv, seed)
    return sb_prior(data, settings.cv, settings.fit_window, seed)


def run_trials(
    trial_fn: Callable,
    jobs: Sequence,
    n_jobs: int = 1,
    description: str = "trials",
    show_progress: bool = False
) -> List:
    """
    Evaluate trial_fn over jobs, serially or with joblib workers.

    Results come back in the order of `jobs`.
    """
    iterator = tqdm(jobs, desc=description, disable=not show_progress, leave=False)
    if n_jobs <= 1:
        return [trial_fn(job) for job in iterator]
    return Parallel(n_jobs=n_jobs)(delayed(trial_fn)(job) for job in iterator)


def _failed_record(seed: int, error: Exception, **extra) -> Dict:
    record = {
        "seed": int(seed),
        "status": "failed",
        "theta_hat": None,
        "hyperparams": None,
        "wall_ms": None,
        "error": f"{type(error).__name__}: {error}"
    }
    record.update(extra)
    return record


def _hyperparams_dict(estimate: PriorEstimate) -> Dict:
    sigma, lam = estimate.hyperparams
    return {"sigma": sigma, "lambda": lam}


def strip_timing(record: Dict) -> Dict:
    return {k: v for k, v in record.items() if k != "wall_ms"}


def records_match(first: Dict, second: Dict) -> bool:
    """Compare two trial records byte for byte, ignoring wall time."""
    return dumps(strip_timing(first)) == dumps(strip_timing(second))


def summarize_trials(records: Iterable[Dict], true_prior: Optional[float] = None) -> Dict:
    """
    Aggregate trial records.

    Args:
        records: Trial records
        true_prior: Prior for the squared error; each record's own
            "true_prior" is used when None

    Returns:
        dict: trials, successful, mean, std (population), mse
    """
    records = list(records)
    ok = [r for r in records if r.get("status") == "ok" and r.get("theta_hat") is not None]
    estimates = np.array([r["theta_hat"] for r in ok], dtype=float)

    summary = {"trials": len(records), "successful": len(ok), "mean": None, "std": None, "mse": None}
    if len(ok) == 0:
        return summary

    summary["mean"] = float(np.mean(estimates))
    summary["std"] = float(np.std(estimates))

    if true_prior is not None:
        targets = np.full(estimates.size, float(true_prior))
    else:
        targets = np.array([r.get("true_prior", np.nan) for r in ok], dtype=float)
    if np.all(np.isfinite(targets)):
        summary["mse"] = float(np.mean((estimates - targets) ** 2))
    return summary


@dataclass
class ExperimentReport:
    """Per-trial records of one method and their aggregates."""

    method: str
    config: Dict
    records: List[Dict]
    aggregates: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: (r.get("true_prior") or 0.0, r["seed"]))
        if not self.aggregates:
            self.aggregates = summarize_trials(self.records, self.config.get("true_prior"))

    def to_dict(self, omit_timing: bool = False) -> Dict:
        records = self.records
        if omit_timing:
            records = [dict(r, wall_ms=None) for r in records]
        return {
            "method": self.method,
            "config": self.config,
            "records": records,
            "aggregates": self.aggregates
        }


def histogram_table(records_by_method: Dict[str, List[Dict]], bins: int = DEFAULT_HISTOGRAM_BINS) -> pd.DataFrame:
    """
    Histogram of successful estimates per method over [0, 1].

    Args:
        records_by_method: Trial records keyed by method name
        bins: Number of equal-width bins

    Returns:
        pd.DataFrame: Columns bin_lo, bin_hi and one count column per method
    """
    if bins < 1:
        raise InvalidParameterError(f"bins must be >= 1, got {bins}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    table = pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:]})
    for method, records in records_by_method.items():
        values = [r["theta_hat"] for r in records if r.get("status") == "ok" and r.get("theta_hat") is not None]
        counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
        table[method] = counts.astype(int)
    return table


def _timed_estimate(method: Method, data, settings: MethodSettings, seed: int) -> Tuple[PriorEstimate, float]:
    start = time.perf_counter()
    estimate = run_method(method, data, settings, seed)
    return estimate, 1000.0 * (time.perf_counter() - start)


def synth_trial(
    seed: int,
    method: Method,
    gamma: float,
    prior: float,
    n: int,
    n_prime: int,
    settings: MethodSettings,
    exact_counts: bool = False
) -> Dict:
    """One synthetic trial: draw data with `seed`, estimate, record."""
    spec = SyntheticSpec(gamma=gamma, prior=prior, n=n, n_prime=n_prime, seed=seed, exact_counts=exact_counts)
    try:
        data, _ = generate_synthetic(spec)
        estimate, wall_ms = _timed_estimate(method, data, settings, seed)
    except PupriorError as e:
        LOG.warning("%s trial seed=%d failed: %s", method.value, seed, e)
        return _failed_record(seed, e, true_prior=prior)

    return {
        "seed": int(seed),
        "status": "ok",
        "theta_hat": estimate.theta_hat,
        "true_prior": prior,
        "hyperparams": _hyperparams_dict(estimate),
        "warnings": list(estimate.warnings),
        "wall_ms": round(wall_ms, 3),
        "error": None
    }


def run_synth_experiment(
    gamma: float,
    prior: float,
    n: int,
    n_prime: int,
    trials: int,
    methods: Sequence[Method],
    settings: Optional[MethodSettings] = None,
    seed: int = 0,
    exact_counts: bool = False,
    n_jobs: int = 1,
    show_progress: bool = False
) -> Dict[str, ExperimentReport]:
    """
    Histogram experiment on the two-uniform generator.

    Trial i of every method uses seed + i for both the data and the method.

    Returns:
        Dict[str, ExperimentReport]: Report per method name
    """
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    SyntheticSpec(gamma=gamma, prior=prior, n=n, n_prime=n_prime, seed=seed)
    settings = settings or MethodSettings()
    seeds = [seed + i for i in range(trials)]

    non_overlap, overlap = overlap_masses(gamma)
    config = {
        "experiment": "synth",
        "gamma": gamma,
        "true_prior": prior,
        "n": n,
        "n_prime": n_prime,
        "trials": trials,
        "seed": seed,
        "exact_counts": exact_counts,
        "mass_non_overlap": non_overlap,
        "mass_overlap": overlap,
        "l1_overestimates": critical_condition(gamma, settings.c),
        **settings.to_dict()
    }

    reports = {}
    for method in methods:
        start = time.perf_counter()
        trial_fn = partial(
            synth_trial, method=method, gamma=gamma, prior=prior, n=n, n_prime=n_prime,
            settings=settings, exact_counts=exact_counts
        )
        records = run_trials(trial_fn, seeds, n_jobs, f"synth {method.value}", show_progress)
        reports[method.value] = ExperimentReport(method=method.value, config=config, records=records)
        LOG.info(
            "%s: %d/%d trials ok, mean %.4f, took %s",
            method.value, reports[method.value].aggregates["successful"], trials,
            reports[method.value].aggregates["mean"] or float("nan"),
            humanfriendly.format_timespan(time.perf_counter() - start)
        )
    return reports


def corrupted_prior(prior: float, shift: float = CORRUPTION_SHIFT) -> float:
    """Prior moved by `shift` toward the far end of [0, 1]."""
    value, _ = clamp_prior(prior + shift if prior <= 0.5 else prior - shift)
    return value


def bench_trial(
    job: Tuple[float, int],
    table: LabeledTable,
    methods: Sequence[Method],
    n_positive: int,
    n_unlabeled: int,
    settings: MethodSettings
) -> List[Dict]:
    """One benchmark trial: split, fit the ratio once, estimate with every method, classify."""
    prior, seed = job
    try:
        split = make_pu_split(table, n_positive, n_unlabeled, prior, seed)
        model = fit_ratio_cv(split.data, settings.cv, seed)
        test = prior_matched_subset(split.test, prior, seed)
        features, labels = test.features, test.labels
        error_true = misclassification_rate(classify(model, prior, features), labels)
        error_corrupted = misclassification_rate(classify(model, corrupted_prior(prior), features), labels)
    except PupriorError as e:
        LOG.warning("bench trial prior=%.2f seed=%d failed: %s", prior, seed, e)
        return [_failed_record(seed, e, method=m.value, true_prior=prior) for m in methods]

    records = []
    for method in methods:
        try:
            estimate, wall_ms = _timed_estimate(method, split.data, settings, seed)
            error_estimated = misclassification_rate(classify(model, estimate.theta_hat, features), labels)
        except PupriorError as e:
            LOG.warning("%s bench trial prior=%.2f seed=%d failed: %s", method.value, prior, seed, e)
            records.append(_failed_record(seed, e, method=method.value, true_prior=prior))
            continue
        records.append({
            "seed": int(seed),
            "status": "ok",
            "method": method.value,
            "theta_hat": estimate.theta_hat,
            "true_prior": prior,
            "realized_prior": float(np.mean(split.unlabeled_truth == 1)),
            "squared_error": (estimate.theta_hat - prior) ** 2,
            "misclassification": error_estimated,
            "misclassification_true": error_true,
            "misclassification_corrupted": error_corrupted,
            "hyperparams": _hyperparams_dict(estimate),
            "wall_ms": round(wall_ms, 3),
            "error": None
        })
    return records


def bench_summary(records: Iterable[Dict]) -> pd.DataFrame:
    """Mean squared error and error rates per (method, true prior)."""
    ok = pd.DataFrame([r for r in records if r.get("status") == "ok"])
    columns = ["method", "true_prior", "trials", "squared_error", "misclassification",
               "misclassification_true", "misclassification_corrupted"]
    if ok.empty:
        return pd.DataFrame(columns=columns)
    grouped = ok.groupby(["method", "true_prior"], sort=True)
    summary = grouped[columns[3:]].mean()
    summary.insert(0, "trials", grouped.size())
    return summary.reset_index()[columns]


def run_benchmark(
    table: LabeledTable,
    priors: Sequence[float],
    trials: int,
    methods: Sequence[Method],
    settings: Optional[MethodSettings] = None,
    n_positive: int = DEFAULT_BENCH_POSITIVES,
    n_unlabeled: int = DEFAULT_BENCH_UNLABELED,
    pca_dims: Optional[int] = None,
    seed: int = 0,
    n_jobs: int = 1,
    show_progress: bool = False
) -> Tuple[Dict[str, ExperimentReport], pd.DataFrame]:
    """
    Benchmark protocol: prior estimation and classification per true prior.

    Args:
        table: Labeled table (+1 is the positive class)
        priors: True class priors of the unlabeled sample
        trials: Trials per prior (seeds seed..seed+trials-1)
        methods: Estimators to compare
        settings: Method settings
        n_positive: Positive sample size
        n_unlabeled: Unlabeled sample size
        pca_dims: Reduce the features to this many components first
        seed: Base seed
        n_jobs: joblib workers

    Returns:
        Tuple[Dict[str, ExperimentReport], pd.DataFrame]: Reports per method and
            the summary table

    Raises:
        InsufficientSamplesError: If a class has too few rows for the protocol
    """
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    if len(priors) == 0 or any(not 0.0 <= p <= 1.0 for p in priors):
        raise InvalidParameterError("priors must be a non-empty list of values in [0, 1]")
    settings = settings or MethodSettings()

    n_pos_rows = int(np.sum(table.labels == 1))
    n_neg_rows = int(np.sum(table.labels == -1))
    if n_pos_rows == 0 or n_neg_rows == 0:
        raise InsufficientSamplesError("The labeled table needs both classes")
    if n_pos_rows < n_positive + math.ceil(max(priors) * n_unlabeled):
        raise InsufficientSamplesError(f"Only {n_pos_rows} positive rows for the requested sizes")
    if n_neg_rows < math.ceil((1.0 - min(priors)) * n_unlabeled):
        raise InsufficientSamplesError(f"Only {n_neg_rows} negative rows for the requested sizes")

    if pca_dims is not None and pca_dims < table.d:
        table = pca_reduce(table, pca_dims)

    jobs = [(float(prior), seed + i) for prior in priors for i in range(trials)]
    trial_fn = partial(
        bench_trial, table=table, methods=methods, n_positive=n_positive,
        n_unlabeled=n_unlabeled, settings=settings
    )
    start = time.perf_counter()
    nested = run_trials(trial_fn, jobs, n_jobs, "bench", show_progress)
    LOG.info("Benchmark finished in %s", humanfriendly.format_timespan(time.perf_counter() - start))

    config = {
        "experiment": "bench",
        "true_prior": None,
        "priors": [float(p) for p in priors],
        "trials": trials,
        "n_positive": n_positive,
        "n_unlabeled": n_unlabeled,
        "pca_dims": pca_dims,
        "seed": seed,
        **settings.to_dict()
    }
    flat = [record for records in nested for record in records]
    reports = {
        method.value: ExperimentReport(
            method=method.value,
            config=config,
            records=[r for r in flat if r.get("method") == method.value]
        )
        for method in methods
    }
    return reports, bench_summary(flat)


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log n, log error)."""

    sample_sizes: Tuple[int, ...]
    errors: Tuple[float, ...]
    log_log_slope: float
    intercept: float

    def to_dict(self) -> Dict:
        return {
            "sample_sizes": list(self.sample_sizes),
            "errors": list(self.errors),
            "log_log_slope": self.log_log_slope,
            "intercept": self.intercept
        }


def fit_rate(sizes: Sequence[int], errors: Sequence[float]) -> RateFit:
    """
    Fit log(error) = slope * log(n) + intercept by least squares.

    Args:
        sizes: Ascending positive sample sizes
        errors: Positive mean errors, one per size

    Returns:
        RateFit: Fitted slope and intercept

    Raises:
        InvalidParameterError: With fewer than 2 points, non-ascending sizes
            or non-positive errors
    """
    sizes = [int(s) for s in sizes]
    errors = [float(e) for e in errors]
    if len(sizes) != len(errors):
        raise InvalidParameterError("sizes and errors differ in length")
    if len(sizes) < 2:
        raise InvalidParameterError("A rate fit needs at least 2 sample sizes")
    if any(s <= 0 for s in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidParameterError("Sample sizes must be positive and strictly ascending")
    if any(not (e > 0 and math.isfinite(e)) for e in errors):
        raise InvalidParameterError("Errors must be positive and finite")

    slope, intercept = np.polyfit(np.log(sizes), np.log(errors), 1)
    return RateFit(tuple(sizes), tuple(errors), float(slope), float(intercept))


@dataclass
class ConvergenceResult:
    rate: RateFit
    table: pd.DataFrame
    config: Dict
    oracle_value: float

    def to_dict(self) -> Dict:
        return {
            "config": self.config,
            "oracle_value": self.oracle_value,
            "rate": self.rate.to_dict(),
            "per_size": self.table.to_dict(orient="records")
        }


def _frozen_pen_l1(data, standardizer, basis, lam: float, theta: Optional[float], grid: ThetaGrid) -> float:
    """Penalized L1 value at theta, or the grid argmin when theta is None."""
    standardized, _ = standardize_dataset(data, standardizer)
    if theta is not None:
        return pen_l1_alpha(beta_from_moments(theta, basis_moments(standardized, basis)), lam).estimate
    curve = criterion_curve(Method.PEN_L1, standardized, basis, lam, grid)
    return select_theta(curve)[0]


def _converge_trial(job: Tuple[int, int], gamma, prior, standardizer, basis, lam, theta, grid, target) -> float:
    size, seed = job
    data, _ = generate_synthetic(SyntheticSpec(gamma=gamma, prior=prior, n=size, n_prime=size, seed=seed))
    return abs(_frozen_pen_l1(data, standardizer, basis, lam, theta, grid) - target)


def run_convergence(
    gamma: float = 0.25,
    prior: float = 0.3,
    sizes: Sequence[int] = DEFAULT_CONVERGE_SIZES,
    trials: int = 50,
    theta: Optional[float] = 0.5,
    cv: Optional[CVConfig] = None,
    grid: Optional[ThetaGrid] = None,
    seed: int = 0,
    oracle_size: int = ORACLE_SAMPLE_SIZE,
    n_jobs: int = 1,
    show_progress: bool = False
) -> ConvergenceResult:
    """
    Empirical convergence rate of the penalized L1 estimator.

    A pilot sample fixes the standardizer, the basis and (sigma, lambda); an
    oracle sample of size `oracle_size` gives the reference value. With a
    fixed theta the error is |penL(theta) - oracle|; with theta=None it is
    |theta_hat - oracle theta_hat|.

    Args:
        gamma: Overlap of the two uniforms
        prior: True class prior
        sizes: Ascending sample sizes (n = n'), at least 4
        trials: Trials per size
        theta: Fixed theta, or None to search the grid
        cv: CV configuration for the pilot selection
        grid: Theta grid used when searching
        seed: Base seed
        oracle_size: Size of the oracle sample
        n_jobs: joblib workers

    Returns:
        ConvergenceResult: Rate fit, per-size table and configuration
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < MIN_CONVERGE_SIZES:
        raise InvalidParameterError(f"Need at least {MIN_CONVERGE_SIZES} sample sizes, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
        raise InvalidParameterError("Sample sizes must be positive and strictly ascending")
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    if theta is not None and not 0.0 <= theta <= 1.0:
        raise InvalidParameterError(f"theta must lie in [0, 1], got {theta}")
    cv = cv or CVConfig()
    grid = grid or default_theta_grid()

    pilot, _ = generate_synthetic(SyntheticSpec(gamma, prior, sizes[-1], sizes[-1], seed + PILOT_SEED_OFFSET))
    pilot_std, standardizer = standardize_dataset(pilot)
    anchor = theta if theta is not None else 0.5
    choice = select_hyperparams(anchor, pilot_std, cv, DUAL_OBJECTIVE, method=Method.PEN_L1, seed=seed)
    basis = build_basis(pilot_std, choice.sigma, max_centers=cv.max_centers, seed=seed)
    LOG.info("Frozen pilot: sigma=%.4g lambda=%.4g b=%d", choice.sigma, choice.lam, basis.b)

    oracle, _ = generate_synthetic(SyntheticSpec(gamma, prior, oracle_size, oracle_size, seed + ORACLE_SEED_OFFSET))
    target = _frozen_pen_l1(oracle, standardizer, basis, choice.lam, theta, grid)
    LOG.info("Oracle value at n = %d: %.6f", oracle_size, target)

    jobs = [(size, seed + i) for size in sizes for i in range(trials)]
    trial_fn = partial(
        _converge_trial, gamma=gamma, prior=prior, standardizer=standardizer, basis=basis,
        lam=choice.lam, theta=theta, grid=grid, target=target
    )
    errors = np.asarray(run_trials(trial_fn, jobs, n_jobs, "converge", show_progress)).reshape(len(sizes), trials)
    mean_errors = errors.mean(axis=1)

    table = pd.DataFrame({"n": sizes, "mean_error": mean_errors, "trials": trials})
    keep = mean_errors > 0
    if not np.all(keep):
        LOG.warning("Dropping sizes with zero mean error from the fit: %s", [s for s, k in zip(sizes, keep) if not k])
    rate = fit_rate([s for s, k in zip(sizes, keep) if k], mean_errors[keep])

    config = {
        "experiment": "converge",
        "gamma": gamma,
        "true_prior": prior,
        "sizes": sizes,
        "trials": trials,
        "theta": theta,
        "seed": seed,
        "oracle_size": oracle_size,
        "sigma": choice.sigma,
        "lambda": choice.lam,
        "b": basis.b
    }
    return ConvergenceResult(rate=rate, table=table, config=config, oracle_value=target)


def deviation_bound(b: int, lam: float, n: int, n_prime: int, delta: float) -> float:
    """(3b/lam) sqrt(ln(2/delta)/2 * (1/n + 1/n'))."""
    if not 0.0 < delta < 1.0:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    if not lam > 0:
        raise InvalidParameterError(f"Regularization lambda must be positive, got {lam}")
    return (3.0 * b / lam) * math.sqrt(math.log(2.0 / delta) / 2.0 * (1.0 / n + 1.0 / n_prime))


@dataclass
class DeviationReport:
    theta: float
    n: int
    n_prime: int
    resamples: int
    delta: float
    lam: float
    sigma: float
    b: int
    mean_value: float
    empirical_quantile: float
    bound: float
    seed: int

    @property
    def violated(self) -> bool:
        return self.empirical_quantile > self.bound

    def to_dict(self) -> Dict:
        return {
            "theta": self.theta,
            "n": self.n,
            "n_prime": self.n_prime,
            "resamples": self.resamples,
            "delta": self.delta,
            "lambda": self.lam,
            "sigma": self.sigma,
            "b": self.b,
            "seed": self.seed,
            "mean_value": self.mean_value,
            "empirical_quantile": self.empirical_quantile,
            "bound": self.bound,
            "violated": self.violated
        }


def _deviation_trial(seed: int, gamma, prior, n, n_prime, standardizer, basis, lam, theta) -> float:
    data, _ = generate_synthetic(SyntheticSpec(gamma=gamma, prior=prior, n=n, n_prime=n_prime, seed=seed))
    return _frozen_pen_l1(data, standardizer, basis, lam, theta, None)


def run_deviation(
    theta: float = 0.5,
    n: int = 400,
    n_prime: int = 400,
    resamples: int = 200,
    delta: float = 0.05,
    gamma: float = 0.25,
    prior: float = 0.7,
    lam: float = 1.0,
    sigma: Optional[float] = None,
    max_centers: int = DEFAULT_MAX_CENTERS,
    seed: int = 0,
    n_jobs: int = 1,
    show_progress: bool = False
) -> DeviationReport:
    """
    Compare the spread of penL(theta) over resamples with its deviation bound.

    Args:
        theta: Candidate class prior
        n: Positive sample size
        n_prime: Unlabeled sample size
        resamples: Number of regenerated datasets (>= 50)
        delta: Failure probability of the bound
        gamma: Overlap of the generator
        prior: Class prior of the generator
        lam: Regularization
        sigma: Kernel width (median heuristic of the pilot when None)
        max_centers: Basis size cap
        seed: Base seed
        n_jobs: joblib workers

    Returns:
        DeviationReport: Empirical (1 - delta) quantile of |penL - mean| and the bound
    """
    if resamples < MIN_DEVIATION_RESAMPLES:
        raise InvalidParameterError(f"Need at least {MIN_DEVIATION_RESAMPLES} resamples, got {resamples}")
    if not 0.0 <= theta <= 1.0:
        raise InvalidParameterError(f"theta must lie in [0, 1], got {theta}")

    pilot, _ = generate_synthetic(SyntheticSpec(gamma, prior, n, n_prime, seed + PILOT_SEED_OFFSET))
    pilot_std, standardizer = standardize_dataset(pilot)
    sigma = sigma or median_distance(pilot_std, seed=seed)
    basis = build_basis(pilot_std, sigma, max_centers=max_centers, seed=seed)
    bound = deviation_bound(basis.b, lam, n, n_prime, delta)

    trial_fn = partial(
        _deviation_trial, gamma=gamma, prior=prior, n=n, n_prime=n_prime,
        standardizer=standardizer, basis=basis, lam=lam, theta=theta
    )
    values = np.asarray(run_trials(trial_fn, [seed + i for i in range(resamples)], n_jobs, "deviation", show_progress))
    mean_value = float(values.mean())
    quantile = float(np.quantile(np.abs(values - mean_value), 1.0 - delta))

    report = DeviationReport(
        theta=theta, n=n, n_prime=n_prime, resamples=resamples, delta=delta, lam=lam,
        sigma=float(sigma), b=basis.b, mean_value=mean_value, empirical_quantile=quantile,
        bound=bound, seed=seed
    )
    if report.violated:
        LOG.warning("Empirical quantile %.4g exceeds the bound %.4g", quantile, bound)
    return report