"""
Data generation and ingestion for puprior.

Handles the two-uniform synthetic generator, CSV loading with row-indexed
errors, PCA reduction of labeled tables, positive/unlabeled/test splits and
a few closed-form quantities of the synthetic generator used as oracles.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.decomposition import PCA

from modules.core import Dataset
from modules.errors import (
    DataParseError,
    InsufficientSamplesError,
    InvalidParameterError,
    ShapeError
)
from modules.export_manager import atomic_write_text

LOG = logging.getLogger(__name__)

LABEL_COLUMN = "y"

# Output file names of the synthetic emitter
POSITIVES_FILE = "positives.csv"
UNLABELED_FILE = "unlabeled.csv"
TRUTH_FILE = "unlabeled_truth.csv"


@dataclass(frozen=True)
class SyntheticSpec:
    """Two-uniform generator: positives on [0, 1], negatives on [1 - gamma, 2 - gamma]."""

    gamma: float
    prior: float
    n: int
    n_prime: int
    seed: int = 0
    exact_counts: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 < self.prior < 1.0:
            raise InvalidParameterError(f"prior must lie in (0, 1), got {self.prior}")
        if self.n < 1 or self.n_prime < 1:
            raise InvalidParameterError("Sample sizes must be positive")


@dataclass(frozen=True)
class LabeledTable:
    """Feature matrix with +1/-1 labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels).astype(int).ravel()
        if features.ndim != 2:
            raise ShapeError("Features must be a two-dimensional matrix")
        if features.shape[0] != labels.size:
            raise ShapeError(f"{features.shape[0]} feature rows but {labels.size} labels")
        if not np.all(np.isin(labels, (1, -1))):
            raise InvalidParameterError("Labels must be +1 or -1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PUSplit:
    data: Dataset
    unlabeled_truth: np.ndarray
    test: LabeledTable


def generate_synthetic(spec: SyntheticSpec) -> Tuple[Dataset, np.ndarray]:
    """
    Draw a positive sample and a labeled-but-hidden unlabeled mixture.

    Each unlabeled point is positive with probability `prior`; with
    `exact_counts` exactly round(prior * n') of them are.

    Args:
        spec: Generator parameters

    Returns:
        Tuple[Dataset, np.ndarray]: (dataset, true +1/-1 labels of the unlabeled rows)
    """
    rng = np.random.default_rng(spec.seed)
    positives = rng.uniform(0.0, 1.0, size=spec.n)

    if spec.exact_counts:
        is_pos = np.zeros(spec.n_prime, dtype=bool)
        is_pos[:int(round(spec.prior * spec.n_prime))] = True
        rng.shuffle(is_pos)
    else:
        is_pos = rng.random(spec.n_prime) < spec.prior

    draws = rng.uniform(0.0, 1.0, size=spec.n_prime)
    unlabeled = np.where(is_pos, draws, draws + 1.0 - spec.gamma)
    truth = np.where(is_pos, 1, -1)
    return Dataset(positives=positives, unlabeled=unlabeled), truth


def overlap_masses(gamma: float) -> Tuple[float, float]:
    """
    Positive-class mass outside and inside the overlap with the negatives.

    The non-overlap region is [0, 1 - gamma] and the overlap [1 - gamma, 1].
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParameterError(f"gamma must lie in [0, 1], got {gamma}")
    return 1.0 - gamma, gamma


def critical_condition(gamma: float, c: float) -> bool:
    """True when the slope-c L1 criterion over-estimates on the two-uniform generator."""
    non_overlap, overlap = overlap_masses(gamma)
    return c * non_overlap - overlap < 0.0


def bayes_error_rate(gamma: float, prior: float) -> float:
    """Misclassification rate of the Bayes classifier for the two uniforms."""
    _, overlap = overlap_masses(gamma)
    return overlap * min(prior, 1.0 - prior)


def population_pen_l1(theta: float, prior: float, gamma: float = 0.0) -> float:
    """
    Population penalized L1 distance between theta p(x|y=1) and p(x).

    Equals 1 - theta whenever theta p(x|y=1) <= p(x) everywhere, which holds
    for theta <= prior, and for every theta when the supports coincide.
    Otherwise the ratio exceeds 1 on the non-overlap region and the value is
    infinite.
    """
    if theta <= prior or gamma >= 1.0:
        return 1.0 - theta
    return math.inf


def _read_frame(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataParseError(f"File not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataParseError(f"{path} is empty")
    except pd.errors.ParserError as e:
        raise DataParseError(f"{path}: inconsistent column count ({e})")
    except UnicodeDecodeError:
        raise DataParseError(f"{path} is not valid UTF-8")


def _numeric_matrix(frame: pd.DataFrame, path: Union[str, Path]) -> np.ndarray:
    """Coerce every column to float, naming the first offending data row (1-based)."""
    if frame.shape[1] == 0:
        raise DataParseError(f"{path} has no columns")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    values = numeric.to_numpy(dtype=float)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if bad_rows.size:
        row = int(bad_rows[0]) + 1
        raise DataParseError(
            f"{path}: row {row} (line {row + 1}) has a missing, non-numeric or infinite value",
            row=row
        )
    return values


def load_csv(path: Union[str, Path], has_label: bool = False) -> Union[np.ndarray, LabeledTable]:
    """
    Load a numeric CSV with a header row.

    Args:
        path: CSV file path
        has_label: Whether the final column is a +1/-1 label named "y"

    Returns:
        np.ndarray or LabeledTable: Matrix (rows x columns), or features plus labels

    Raises:
        DataParseError: On unreadable files, non-numeric cells, NaN or inf
    """
    frame = _read_frame(path)
    if not has_label:
        return _numeric_matrix(frame, path)

    if frame.columns[-1].strip() != LABEL_COLUMN:
        raise DataParseError(f"{path}: final column must be named '{LABEL_COLUMN}'")
    values = _numeric_matrix(frame, path)
    labels = values[:, -1]
    invalid = np.flatnonzero(~np.isin(labels, (1.0, -1.0)))
    if invalid.size:
        row = int(invalid[0]) + 1
        raise DataParseError(f"{path}: row {row} has a label other than +1/-1", row=row)
    return LabeledTable(features=values[:, :-1], labels=labels.astype(int))


def load_points(path: Union[str, Path]) -> np.ndarray:
    """Load a points file; a header-only or empty file gives a 0-row matrix."""
    try:
        frame = _read_frame(path)
    except DataParseError as e:
        if "is empty" in str(e):
            return np.empty((0, 0))
        raise
    if frame.shape[0] == 0:
        return np.empty((0, frame.shape[1]))
    return _numeric_matrix(frame, path)


def load_dataset(positive_path: Union[str, Path], unlabeled_path: Union[str, Path]) -> Dataset:
    """Load the positive and unlabeled CSV files into one Dataset."""
    return Dataset(positives=load_csv(positive_path), unlabeled=load_csv(unlabeled_path))


def load_labeled_csv(path: Union[str, Path], positive_label: str) -> LabeledTable:
    """
    Load a multi-class table and relabel it one-versus-rest.

    Args:
        path: CSV file whose final column "y" holds class values
        positive_label: Class value mapped to +1; every other value maps to -1

    Returns:
        LabeledTable: Features with +1/-1 labels
    """
    frame = _read_frame(path)
    if frame.columns[-1].strip() != LABEL_COLUMN:
        raise DataParseError(f"{path}: final column must be named '{LABEL_COLUMN}'")

    raw = frame.iloc[:, -1].str.strip()
    target = str(positive_label).strip()
    numeric = pd.to_numeric(raw, errors="coerce")
    try:
        target_value = float(target)
    except ValueError:
        target_value = None
    if target_value is not None and not numeric.isna().any():
        is_pos = numeric.to_numpy(dtype=float) == target_value
    else:
        is_pos = (raw == target).to_numpy()

    features = _numeric_matrix(frame.iloc[:, :-1], path)
    LOG.info("Loaded %d rows from %s, %d in class '%s'", len(frame), path, int(is_pos.sum()), target)
    return LabeledTable(features=features, labels=np.where(is_pos, 1, -1))


def pca_reduce(table: LabeledTable, dims: int) -> LabeledTable:
    """
    Project features onto their top principal components.

    Each component is oriented so that its largest-magnitude loading is
    positive.

    Args:
        table: Labeled table
        dims: Number of components, 1 <= dims <= min(rows, d)

    Returns:
        LabeledTable: Projected features with the same labels

    Raises:
        InvalidParameterError: If dims is out of range
    """
    n_rows, d = table.features.shape
    if not 1 <= dims <= min(n_rows, d):
        raise InvalidParameterError(f"dims must lie in [1, {min(n_rows, d)}], got {dims}")

    pca = PCA(n_components=dims, svd_solver="full")
    projected = pca.fit_transform(table.features)
    components = pca.components_
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(dims), pivots])
    signs[signs == 0] = 1.0
    LOG.debug("PCA kept %.1f%% of the variance", 100.0 * pca.explained_variance_ratio_.sum())
    return LabeledTable(features=projected * signs, labels=table.labels)


def make_pu_split(
    table: LabeledTable,
    n_positive: int,
    n_unlabeled: int,
    unlabeled_prior: float,
    seed: int = 0
) -> PUSplit:
    """
    Draw disjoint positive, unlabeled and test sets from a labeled table.

    The number of positives in the unlabeled set is Binomial(n_unlabeled,
    unlabeled_prior); every row not drawn goes to the test set.

    Args:
        table: Labeled table
        n_positive: Size of the positive sample
        n_unlabeled: Size of the unlabeled sample
        unlabeled_prior: Expected positive fraction of the unlabeled sample
        seed: Split seed

    Returns:
        PUSplit: Dataset, hidden unlabeled labels and the test table

    Raises:
        InsufficientSamplesError: If either class runs out of rows
    """
    if not 0.0 <= unlabeled_prior <= 1.0:
        raise InvalidParameterError(f"unlabeled_prior must lie in [0, 1], got {unlabeled_prior}")
    if n_positive < 1 or n_unlabeled < 1:
        raise InvalidParameterError("Sample sizes must be positive")

    rng = np.random.default_rng(seed)
    pos_rows = rng.permutation(np.flatnonzero(table.labels == 1))
    neg_rows = rng.permutation(np.flatnonzero(table.labels == -1))

    n_unl_pos = int(rng.binomial(n_unlabeled, unlabeled_prior))
    n_unl_neg = n_unlabeled - n_unl_pos
    if n_positive + n_unl_pos > pos_rows.size:
        raise InsufficientSamplesError(
            f"Need {n_positive + n_unl_pos} positive rows, table has {pos_rows.size}"
        )
    if n_unl_neg > neg_rows.size:
        raise InsufficientSamplesError(f"Need {n_unl_neg} negative rows, table has {neg_rows.size}")

    positive_rows = pos_rows[:n_positive]
    unlabeled_rows = rng.permutation(np.concatenate([
        pos_rows[n_positive:n_positive + n_unl_pos], neg_rows[:n_unl_neg]
    ]))
    test_rows = np.sort(np.concatenate([pos_rows[n_positive + n_unl_pos:], neg_rows[n_unl_neg:]]))

    return PUSplit(
        data=Dataset(positives=table.features[positive_rows], unlabeled=table.features[unlabeled_rows]),
        unlabeled_truth=table.labels[unlabeled_rows],
        test=LabeledTable(features=table.features[test_rows], labels=table.labels[test_rows])
    )


def prior_matched_subset(table: LabeledTable, prior: float, seed: int = 0) -> LabeledTable:
    """
    Largest random subsample of `table` whose positive fraction is `prior`.

    Used to score a classifier on test rows drawn like the unlabeled sample.

    Raises:
        InsufficientSamplesError: If the subsample would be empty
    """
    if not 0.0 <= prior <= 1.0:
        raise InvalidParameterError(f"prior must lie in [0, 1], got {prior}")
    rng = np.random.default_rng(seed)
    pos_rows = rng.permutation(np.flatnonzero(table.labels == 1))
    neg_rows = rng.permutation(np.flatnonzero(table.labels == -1))

    if prior == 1.0:
        n_pos, n_neg = pos_rows.size, 0
    elif prior == 0.0:
        n_pos, n_neg = 0, neg_rows.size
    else:
        size = int(math.floor(min(pos_rows.size / prior, neg_rows.size / (1.0 - prior))))
        n_pos = min(pos_rows.size, int(round(prior * size)))
        n_neg = min(neg_rows.size, size - n_pos)
    if n_pos + n_neg == 0:
        raise InsufficientSamplesError(f"No test rows left for prior {prior}")

    rows = np.sort(np.concatenate([pos_rows[:n_pos], neg_rows[:n_neg]]))
    return LabeledTable(features=table.features[rows], labels=table.labels[rows])


def _feature_frame(points: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(points, columns=[f"x{i + 1}" for i in range(points.shape[1])])


def save_dataset_csv(
    data: Dataset,
    out_dir: Union[str, Path],
    truth: Optional[np.ndarray] = None
) -> Dict[str, Path]:
    """
    Write positives.csv, unlabeled.csv and (if given) unlabeled_truth.csv.

    Returns:
        Dict[str, Path]: Written paths keyed by role
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "positives": out_dir / POSITIVES_FILE,
        "unlabeled": out_dir / UNLABELED_FILE
    }
    atomic_write_text(paths["positives"], _feature_frame(data.positives).to_csv(index=False))
    atomic_write_text(paths["unlabeled"], _feature_frame(data.unlabeled).to_csv(index=False))
    if truth is not None:
        paths["truth"] = out_dir / TRUTH_FILE
        atomic_write_text(paths["truth"], pd.DataFrame({LABEL_COLUMN: truth}).to_csv(index=False))
    return paths
