"""Shared fixtures: small seeded datasets and fast cross-validation grids."""

import logging

import numpy as np
import pytest

from modules.core import Dataset
from modules.data_io import LabeledTable, SyntheticSpec, generate_synthetic
from modules.estimators import parse_theta_grid
from modules.experiments import MethodSettings
from modules.model_selection import CVConfig


@pytest.fixture(autouse=True)
def restore_logging():
    """The CLI installs handlers on the root logger; undo that after every test."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def fast_cv():
    return CVConfig(folds=3, sigma_multipliers=(0.5, 1.0), lambda_grid=(0.1, 1.0), max_centers=40)


@pytest.fixture
def coarse_grid():
    return parse_theta_grid("0:1:0.1")


@pytest.fixture
def fast_settings(fast_cv, coarse_grid):
    return MethodSettings(grid=coarse_grid, cv=fast_cv)


@pytest.fixture
def overlap_data():
    data, _ = generate_synthetic(SyntheticSpec(gamma=0.25, prior=0.7, n=60, n_prime=60, seed=0))
    return data


@pytest.fixture
def separated_data():
    data, _ = generate_synthetic(SyntheticSpec(gamma=0.0, prior=0.5, n=200, n_prime=200, seed=1))
    return data


@pytest.fixture
def tiny_data():
    rng = np.random.default_rng(7)
    return Dataset(positives=rng.normal(size=(30, 2)), unlabeled=rng.normal(0.5, 1.0, size=(30, 2)))


@pytest.fixture
def gaussian_table():
    """Two 3-d Gaussian classes, 300 rows each, first column shifted."""
    rng = np.random.default_rng(11)
    positives = rng.normal(size=(300, 3)) + np.array([2.0, 0.0, 0.0])
    negatives = rng.normal(size=(300, 3))
    features = np.vstack([positives, negatives])
    labels = np.concatenate([np.ones(300, dtype=int), -np.ones(300, dtype=int)])
    return LabeledTable(features=features, labels=labels)
