"""
puprior - class-prior estimation from positive and unlabeled data.

Command-line entry point: single estimates, synthetic data generation, the
histogram and benchmark experiments, the convergence and deviation checks,
and the density-ratio PU classifier.
"""

import logging
import os
import sys
import time
from functools import wraps
from pathlib import Path
from typing import List, Optional, Tuple

import coloredlogs
import humanfriendly
import numpy as np
import pandas as pd
import typer

from modules.data_io import (
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_labeled_csv,
    load_points,
    pca_reduce,
    save_dataset_csv
)
from modules.errors import (
    EXIT_INPUT_ERROR,
    EXIT_VERIFY_MISMATCH,
    InvalidParameterError,
    PupriorError,
    exit_code_for
)
from modules.estimators import (
    Method,
    SolverConfig,
    default_theta_grid,
    estimate_prior,
    parse_method,
    parse_theta_grid
)
from modules.experiments import (
    MethodSettings,
    bench_trial,
    histogram_table,
    records_match,
    run_benchmark,
    run_convergence,
    run_deviation,
    run_method,
    run_synth_experiment,
    synth_trial,
    worker_count
)
from modules.export_manager import (
    atomic_write_text,
    build_estimate_result,
    curve_frame,
    dumps,
    get_filename,
    write_frame_csv,
    write_json
)
from modules.model_selection import CVConfig
from modules.ratio_classifier import classify, fit_ratio_cv
from schemas.defaults import (
    DEFAULT_BENCH_POSITIVES,
    DEFAULT_BENCH_PRIORS,
    DEFAULT_BENCH_TRIALS,
    DEFAULT_BENCH_UNLABELED,
    DEFAULT_CONVERGE_SIZES,
    DEFAULT_FOLDS,
    DEFAULT_HISTOGRAM_BINS,
    DEFAULT_L1_SLOPE,
    DEFAULT_MAX_CENTERS,
    DEFAULT_PCA_DIMS,
    DEFAULT_TRIALS,
    ORACLE_SAMPLE_SIZE,
    SB_FIT_WINDOW
)

LOG = logging.getLogger("puprior")

LOG_LEVEL_ENV = "PUPRIOR_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Estimate the class prior of unlabeled data from positive and unlabeled samples."
)


# =========================
# SHARED HELPERS
# =========================

def parse_float_list(text: Optional[str], name: str) -> Optional[Tuple[float, ...]]:
    """Parse a comma-separated list of numbers; None passes through."""
    if text is None:
        return None
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise InvalidParameterError(f"--{name} must be a comma-separated list of numbers, got '{text}'")
    if not values:
        raise InvalidParameterError(f"--{name} is empty")
    return values


def parse_methods(text: str) -> List[Method]:
    return [parse_method(part) for part in text.split(",") if part.strip()]


def build_settings(
    theta_grid: Optional[str],
    folds: int,
    sigma_grid: Optional[str],
    lambda_grid: Optional[str],
    max_centers: int,
    c: float = DEFAULT_L1_SLOPE,
    global_cv: bool = False,
    fit_window: float = SB_FIT_WINDOW
) -> MethodSettings:
    """Map the common CLI flags onto MethodSettings."""
    cv_kwargs = {"folds": folds, "max_centers": max_centers}
    sigmas = parse_float_list(sigma_grid, "sigma-grid")
    lambdas = parse_float_list(lambda_grid, "lambda-grid")
    if sigmas is not None:
        cv_kwargs["sigma_grid"] = sigmas
    if lambdas is not None:
        cv_kwargs["lambda_grid"] = lambdas
    return MethodSettings(
        grid=parse_theta_grid(theta_grid) if theta_grid else default_theta_grid(),
        cv=CVConfig(**cv_kwargs),
        c=c,
        global_cv=global_cv,
        solver=SolverConfig(),
        fit_window=fit_window
    )


def show_progress() -> bool:
    return sys.stderr.isatty()


def handle_errors(command):
    """Turn library errors into a logged message and the documented exit code."""
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except PupriorError as e:
            LOG.error("%s", e)
            raise typer.Exit(code=exit_code_for(e))
        except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
            LOG.error("%s", e)
            raise typer.Exit(code=EXIT_INPUT_ERROR)
    return wrapper


def emit_json(payload: dict, out: Optional[Path], kind: Optional[str] = None) -> None:
    if out is None:
        typer.echo(dumps(payload), nl=False)
    else:
        write_json(out, payload, kind)


@app.callback()
def main(
    log_level: str = typer.Option(
        os.environ.get(LOG_LEVEL_ENV, "INFO"), "--log-level",
        help="Logging level (DEBUG, INFO, WARNING, ERROR)"
    )
):
    coloredlogs.install(level=log_level.upper(), fmt=LOG_FORMAT, stream=sys.stderr)


# Options shared by the estimation commands
THETA_GRID = typer.Option(None, "--theta-grid", help="Theta grid as lo:hi:step (default 0:1:0.01)")
FOLDS = typer.Option(DEFAULT_FOLDS, "--folds", help="Cross-validation folds")
SIGMA_GRID = typer.Option(None, "--sigma-grid", help="Comma-separated kernel widths (default: median heuristic)")
LAMBDA_GRID = typer.Option(None, "--lambda-grid", help="Comma-separated regularization values")
MAX_CENTERS = typer.Option(DEFAULT_MAX_CENTERS, "--max-centers", help="Maximum number of basis centers")
SEED = typer.Option(0, "--seed", help="Random seed")
SLOPE = typer.Option(DEFAULT_L1_SLOPE, "--c", help="Slope c of the finite-c L1 criterion")
GLOBAL_CV = typer.Option(False, "--global-cv", help="Select hyperparameters once instead of per theta")
FIT_WINDOW = typer.Option(SB_FIT_WINDOW, "--fit-window", help="SB right-endpoint window fraction")
OMIT_TIMING = typer.Option(False, "--omit-timing", help="Write zero wall times for byte-identical output")


# =========================
# ESTIMATE
# =========================

@app.command()
@handle_errors
def estimate(
    positive: Path = typer.Option(..., "--positive", help="CSV of positive samples"),
    unlabeled: Path = typer.Option(..., "--unlabeled", help="CSV of unlabeled samples"),
    method: str = typer.Option("pen-l1", "--method", help="pen-l1, l1, pen-kl, pen-pe, pe, en or sb"),
    out: Optional[Path] = typer.Option(None, "--out", help="Result JSON path (stdout when omitted)"),
    curve_csv: Optional[Path] = typer.Option(None, "--curve-csv", help="Also write the criterion curve as CSV"),
    theta_grid: Optional[str] = THETA_GRID,
    folds: int = FOLDS,
    sigma_grid: Optional[str] = SIGMA_GRID,
    lambda_grid: Optional[str] = LAMBDA_GRID,
    max_centers: int = MAX_CENTERS,
    seed: int = SEED,
    c: float = SLOPE,
    global_cv: bool = GLOBAL_CV,
    fit_window: float = FIT_WINDOW,
    omit_timing: bool = OMIT_TIMING
):
    """Estimate the class prior from a positive and an unlabeled CSV file."""
    selected = parse_method(method)
    settings = build_settings(theta_grid, folds, sigma_grid, lambda_grid, max_centers, c, global_cv, fit_window)
    data = load_dataset(positive, unlabeled)
    LOG.info("Loaded n=%d positives and n'=%d unlabeled samples (d=%d)", data.n, data.n_prime, data.d)

    start = time.perf_counter()
    result = run_method(selected, data, settings, seed)
    elapsed = time.perf_counter() - start
    LOG.info("%s: theta_hat = %.4f (%s)", selected.value, result.theta_hat, humanfriendly.format_timespan(elapsed))

    payload = build_estimate_result(result, data.n, data.n_prime, 1000.0 * elapsed, omit_timing)
    if curve_csv is not None and result.curve:
        write_frame_csv(curve_csv, curve_frame(result.curve))
    emit_json(payload, out, "estimate")


# =========================
# GENERATE
# =========================

@app.command()
@handle_errors
def gen(
    out: Path = typer.Option(..., "--out", help="Output directory"),
    gamma: float = typer.Option(0.25, "--gamma", help="Overlap of the two uniforms, in [0, 1]"),
    prior: float = typer.Option(0.7, "--prior", help="Class prior of the unlabeled sample"),
    n: int = typer.Option(400, "--n", help="Positive sample size"),
    n_prime: int = typer.Option(400, "--n-prime", help="Unlabeled sample size"),
    seed: int = SEED,
    exact_counts: bool = typer.Option(False, "--exact-counts", help="Exactly round(prior * n') positives")
):
    """Write positives.csv, unlabeled.csv and unlabeled_truth.csv from the two-uniform generator."""
    spec = SyntheticSpec(gamma=gamma, prior=prior, n=n, n_prime=n_prime, seed=seed, exact_counts=exact_counts)
    data, truth = generate_synthetic(spec)
    paths = save_dataset_csv(data, out, truth)
    for role, path in paths.items():
        LOG.info("Wrote %s: %s", role, path)


# =========================
# SYNTHETIC HISTOGRAMS
# =========================

@app.command()
@handle_errors
def synth(
    out: Path = typer.Option(..., "--out", help="Output directory"),
    gamma: float = typer.Option(0.25, "--gamma", help="Overlap of the two uniforms"),
    prior: float = typer.Option(0.7, "--prior", help="True class prior"),
    n: int = typer.Option(400, "--n", help="Positive sample size"),
    n_prime: int = typer.Option(400, "--n-prime", help="Unlabeled sample size"),
    trials: int = typer.Option(DEFAULT_TRIALS, "--trials", help="Trials per method"),
    methods: str = typer.Option("pe,l1,pen-l1", "--methods", help="Comma-separated methods"),
    bins: int = typer.Option(DEFAULT_HISTOGRAM_BINS, "--bins", help="Histogram bins over [0, 1]"),
    exact_counts: bool = typer.Option(False, "--exact-counts", help="Exact unlabeled class counts"),
    verify: bool = typer.Option(False, "--verify", help="Re-run the first trial and compare its record"),
    theta_grid: Optional[str] = THETA_GRID,
    folds: int = FOLDS,
    sigma_grid: Optional[str] = SIGMA_GRID,
    lambda_grid: Optional[str] = LAMBDA_GRID,
    max_centers: int = MAX_CENTERS,
    seed: int = SEED,
    c: float = SLOPE,
    global_cv: bool = GLOBAL_CV,
    fit_window: float = FIT_WINDOW,
    omit_timing: bool = OMIT_TIMING
):
    """Histogram experiment: repeated estimates on the two-uniform generator."""
    selected = parse_methods(methods)
    settings = build_settings(theta_grid, folds, sigma_grid, lambda_grid, max_centers, c, global_cv, fit_window)

    reports = run_synth_experiment(
        gamma, prior, n, n_prime, trials, selected, settings, seed,
        exact_counts=exact_counts, n_jobs=worker_count(), show_progress=show_progress()
    )

    if verify:
        for method in selected:
            rerun = synth_trial(seed, method, gamma, prior, n, n_prime, settings, exact_counts)
            if not records_match(reports[method.value].records[0], rerun):
                LOG.error("Verification failed: %s trial seed=%d is not reproducible", method.value, seed)
                raise typer.Exit(code=EXIT_VERIFY_MISMATCH)
        LOG.info("Verification passed for %d method(s)", len(selected))

    for name, report in reports.items():
        write_json(out / get_filename("synth_report", "json", {"method": name}), report.to_dict(omit_timing), "report")
    histogram = histogram_table({name: report.records for name, report in reports.items()}, bins)
    write_frame_csv(out / get_filename("synth_histogram", "csv"), histogram)


# =========================
# BENCHMARK
# =========================

@app.command()
@handle_errors
def bench(
    data: Path = typer.Option(..., "--data", help="Labeled CSV whose final column is 'y'"),
    positive_class: str = typer.Option(..., "--positive-class", help="Value of 'y' treated as the positive class"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
    pca_dims: int = typer.Option(DEFAULT_PCA_DIMS, "--pca-dims", help="Principal components kept (0 keeps all)"),
    priors: str = typer.Option(",".join(str(p) for p in DEFAULT_BENCH_PRIORS), "--priors", help="Comma-separated true priors"),
    trials: int = typer.Option(DEFAULT_BENCH_TRIALS, "--trials", help="Trials per prior"),
    methods: str = typer.Option("pen-l1,pe,en,sb", "--methods", help="Comma-separated methods"),
    n_positive: int = typer.Option(DEFAULT_BENCH_POSITIVES, "--n-positive", help="Positive sample size"),
    n_unlabeled: int = typer.Option(DEFAULT_BENCH_UNLABELED, "--n-unlabeled", help="Unlabeled sample size"),
    verify: bool = typer.Option(False, "--verify", help="Re-run the first trial and compare its records"),
    theta_grid: Optional[str] = THETA_GRID,
    folds: int = FOLDS,
    sigma_grid: Optional[str] = SIGMA_GRID,
    lambda_grid: Optional[str] = LAMBDA_GRID,
    max_centers: int = MAX_CENTERS,
    seed: int = SEED,
    c: float = SLOPE,
    global_cv: bool = GLOBAL_CV,
    fit_window: float = FIT_WINDOW,
    omit_timing: bool = OMIT_TIMING
):
    """Benchmark protocol: prior estimation and classification error per true prior."""
    selected = parse_methods(methods)
    settings = build_settings(theta_grid, folds, sigma_grid, lambda_grid, max_centers, c, global_cv, fit_window)
    prior_list = parse_float_list(priors, "priors")
    table = load_labeled_csv(data, positive_class)

    reports, summary = run_benchmark(
        table, prior_list, trials, selected, settings, n_positive, n_unlabeled,
        pca_dims=pca_dims or None, seed=seed, n_jobs=worker_count(), show_progress=show_progress()
    )

    if verify:
        reduced = pca_reduce(table, pca_dims) if pca_dims and pca_dims < table.d else table
        rerun = bench_trial((float(prior_list[0]), seed), reduced, selected, n_positive, n_unlabeled, settings)
        for record in rerun:
            stored = next(
                r for r in reports[record["method"]].records
                if r["seed"] == seed and r["true_prior"] == float(prior_list[0])
            )
            if not records_match(stored, record):
                LOG.error("Verification failed: %s trial seed=%d is not reproducible", record["method"], seed)
                raise typer.Exit(code=EXIT_VERIFY_MISMATCH)
        LOG.info("Verification passed")

    for name, report in reports.items():
        write_json(out / get_filename("bench_report", "json", {"method": name}), report.to_dict(omit_timing), "report")
    write_frame_csv(out / get_filename("bench_summary", "csv"), summary)


# =========================
# THEORY CHECKS
# =========================

@app.command()
@handle_errors
def converge(
    out: Optional[Path] = typer.Option(None, "--out", help="Result JSON path (stdout when omitted)"),
    gamma: float = typer.Option(0.25, "--gamma", help="Overlap of the two uniforms"),
    prior: float = typer.Option(0.3, "--prior", help="True class prior"),
    sizes: str = typer.Option(",".join(str(s) for s in DEFAULT_CONVERGE_SIZES), "--sizes", help="Ascending sample sizes"),
    trials: int = typer.Option(50, "--trials", help="Trials per size"),
    theta: str = typer.Option("0.5", "--theta", help="Fixed theta or 'search'"),
    oracle_size: int = typer.Option(ORACLE_SAMPLE_SIZE, "--oracle-size", help="Size of the oracle sample"),
    theta_grid: Optional[str] = THETA_GRID,
    folds: int = FOLDS,
    sigma_grid: Optional[str] = SIGMA_GRID,
    lambda_grid: Optional[str] = LAMBDA_GRID,
    max_centers: int = MAX_CENTERS,
    seed: int = SEED
):
    """Log-log slope of the estimation error against the sample size."""
    settings = build_settings(theta_grid, folds, sigma_grid, lambda_grid, max_centers)
    size_list = [int(s) for s in parse_float_list(sizes, "sizes")]
    if theta.strip().lower() == "search":
        fixed_theta = None
    else:
        fixed_theta = parse_float_list(theta, "theta")[0]

    result = run_convergence(
        gamma, prior, size_list, trials, fixed_theta, settings.cv, settings.grid, seed,
        oracle_size=oracle_size, n_jobs=worker_count(), show_progress=show_progress()
    )
    LOG.info("log-log slope %.3f, intercept %.3f", result.rate.log_log_slope, result.rate.intercept)
    emit_json(result.to_dict(), out)


@app.command()
@handle_errors
def deviation(
    out: Optional[Path] = typer.Option(None, "--out", help="Result JSON path (stdout when omitted)"),
    theta: float = typer.Option(0.5, "--theta", help="Candidate class prior"),
    n: int = typer.Option(400, "--n", help="Positive sample size"),
    n_prime: int = typer.Option(400, "--n-prime", help="Unlabeled sample size"),
    resamples: int = typer.Option(200, "--resamples", help="Regenerated datasets (>= 50)"),
    delta: float = typer.Option(0.05, "--delta", help="Failure probability of the bound"),
    gamma: float = typer.Option(0.25, "--gamma", help="Overlap of the two uniforms"),
    prior: float = typer.Option(0.7, "--prior", help="True class prior"),
    lam: float = typer.Option(1.0, "--lambda", help="Regularization"),
    sigma: Optional[float] = typer.Option(None, "--sigma", help="Kernel width (median heuristic when omitted)"),
    max_centers: int = MAX_CENTERS,
    seed: int = SEED
):
    """Empirical deviation of penL(theta) against its finite-sample bound."""
    report = run_deviation(
        theta, n, n_prime, resamples, delta, gamma, prior, lam, sigma, max_centers, seed,
        n_jobs=worker_count(), show_progress=show_progress()
    )
    LOG.info(
        "quantile %.4g vs bound %.4g%s", report.empirical_quantile, report.bound,
        " (VIOLATED)" if report.violated else ""
    )
    emit_json(report.to_dict(), out)


# =========================
# CLASSIFY
# =========================

@app.command("classify")
@handle_errors
def classify_points(
    positive: Path = typer.Option(..., "--positive", help="CSV of positive samples"),
    unlabeled: Path = typer.Option(..., "--unlabeled", help="CSV of unlabeled samples"),
    points: Path = typer.Option(..., "--points", help="CSV of points to label"),
    out: Path = typer.Option(..., "--out", help="Labels CSV path"),
    prior: str = typer.Option("estimate", "--prior", help="Class prior in [0, 1] or 'estimate'"),
    theta_grid: Optional[str] = THETA_GRID,
    folds: int = FOLDS,
    sigma_grid: Optional[str] = SIGMA_GRID,
    lambda_grid: Optional[str] = LAMBDA_GRID,
    max_centers: int = MAX_CENTERS,
    seed: int = SEED
):
    """Label points +1/-1 with the density-ratio classifier."""
    settings = build_settings(theta_grid, folds, sigma_grid, lambda_grid, max_centers)
    data = load_dataset(positive, unlabeled)
    matrix = load_points(points)

    if prior.strip().lower() == "estimate":
        prior_value = estimate_prior(Method.PEN_L1, data, settings.grid, settings.cv, seed=seed).theta_hat
        LOG.info("Estimated class prior %.4f", prior_value)
    else:
        prior_value = parse_float_list(prior, "prior")[0]
        if not 0.0 <= prior_value <= 1.0:
            raise InvalidParameterError(f"--prior must lie in [0, 1], got {prior_value}")

    if matrix.shape[0] == 0:
        labels = np.empty(0, dtype=int)
    else:
        model = fit_ratio_cv(data, settings.cv, seed)
        labels = classify(model, prior_value, matrix)

    atomic_write_text(out, pd.DataFrame({"y": labels}).to_csv(index=False))
    LOG.info("Wrote %d label(s) to %s", labels.size, out)


if __name__ == "__main__":
    app()
