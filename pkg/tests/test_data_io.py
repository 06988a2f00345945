"""Tests for the synthetic generator, CSV ingestion, PCA and PU splits."""

import math

import numpy as np
import pytest

from modules.core import Dataset
from modules.data_io import (
    LabeledTable,
    SyntheticSpec,
    bayes_error_rate,
    critical_condition,
    generate_synthetic,
    load_csv,
    load_dataset,
    load_labeled_csv,
    load_points,
    make_pu_split,
    overlap_masses,
    pca_reduce,
    population_pen_l1,
    prior_matched_subset,
    save_dataset_csv
)
from modules.errors import DataParseError, InsufficientSamplesError, InvalidParameterError, ShapeError


class TestSyntheticGenerator:

    def test_supports(self):
        data, truth = generate_synthetic(SyntheticSpec(gamma=0.25, prior=0.6, n=500, n_prime=500, seed=1))
        assert np.all((data.positives >= 0.0) & (data.positives <= 1.0))
        negatives = data.unlabeled[truth == -1]
        assert np.all((negatives >= 0.75) & (negatives <= 1.75))

    def test_no_overlap_when_gamma_is_zero(self):
        data, truth = generate_synthetic(SyntheticSpec(gamma=0.0, prior=0.5, n=10, n_prime=1000, seed=2))
        assert np.all(data.unlabeled[truth == -1] >= 1.0)

    def test_seeded(self):
        spec = SyntheticSpec(gamma=0.5, prior=0.3, n=50, n_prime=60, seed=9)
        first, first_truth = generate_synthetic(spec)
        second, second_truth = generate_synthetic(spec)
        np.testing.assert_array_equal(first.unlabeled, second.unlabeled)
        np.testing.assert_array_equal(first_truth, second_truth)

    def test_realized_prior(self):
        _, truth = generate_synthetic(SyntheticSpec(gamma=0.25, prior=0.7, n=1, n_prime=100_000, seed=0))
        assert np.mean(truth == 1) == pytest.approx(0.7, abs=0.01)

    def test_exact_counts(self):
        _, truth = generate_synthetic(
            SyntheticSpec(gamma=0.25, prior=0.7, n=5, n_prime=333, seed=4, exact_counts=True)
        )
        assert int(np.sum(truth == 1)) == round(0.7 * 333)

    def test_overlap_mass_matches_sampling(self):
        data, _ = generate_synthetic(SyntheticSpec(gamma=0.25, prior=0.5, n=10_000, n_prime=1, seed=3))
        _, overlap = overlap_masses(0.25)
        fraction = float(np.mean(data.positives >= 0.75))
        sd = math.sqrt(overlap * (1 - overlap) / 10_000)
        assert abs(fraction - overlap) <= 3 * sd

    @pytest.mark.parametrize("kwargs", [
        {"gamma": 1.5, "prior": 0.5},
        {"gamma": 0.5, "prior": 0.0},
        {"gamma": 0.5, "prior": 1.0}
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameterError):
            SyntheticSpec(n=10, n_prime=10, **kwargs)


class TestClosedForms:

    def test_masses(self):
        assert overlap_masses(0.25) == (0.75, 0.25)

    def test_critical_condition(self):
        assert critical_condition(0.75, 1.0)
        assert not critical_condition(0.25, 1.0)
        assert critical_condition(0.25, 0.2)

    def test_bayes_error(self):
        assert bayes_error_rate(0.25, 0.7) == pytest.approx(0.075)
        assert bayes_error_rate(0.0, 0.7) == 0.0

    def test_population_pen_l1(self):
        assert population_pen_l1(0.3, 0.7, 0.25) == pytest.approx(0.7)
        assert math.isinf(population_pen_l1(0.8, 0.7, 0.25))
        assert population_pen_l1(0.8, 0.7, 1.0) == pytest.approx(0.2)


class TestCsv:

    def test_plain_matrix(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("x1,x2\n1,2\n3,4.5\n-1e-3,0\n")
        np.testing.assert_allclose(load_csv(path), [[1, 2], [3, 4.5], [-1e-3, 0]])

    def test_non_numeric_cell_names_the_row(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("x1,x2\n1,2\nabc,4\n5,6\n")
        with pytest.raises(DataParseError) as info:
            load_csv(path)
        assert info.value.row == 2

    @pytest.mark.parametrize("body", ["1,nan\n", "1,inf\n", "1,\n", "1\n"])
    def test_missing_or_non_finite(self, tmp_path, body):
        path = tmp_path / "x.csv"
        path.write_text("x1,x2\n" + body)
        with pytest.raises(DataParseError) as info:
            load_csv(path)
        assert info.value.row == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataParseError):
            load_csv(tmp_path / "absent.csv")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("")
        with pytest.raises(DataParseError):
            load_csv(path)

    def test_labeled(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b,y\n1,2,1\n3,4,-1\n")
        table = load_csv(path, has_label=True)
        assert isinstance(table, LabeledTable)
        np.testing.assert_array_equal(table.labels, [1, -1])
        assert table.d == 2

    def test_labeled_rejects_other_values(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,y\n1,1\n2,0\n")
        with pytest.raises(DataParseError) as info:
            load_csv(path, has_label=True)
        assert info.value.row == 2

    def test_label_column_must_be_named(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,label\n1,1\n")
        with pytest.raises(DataParseError):
            load_csv(path, has_label=True)

    def test_points_header_only(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("x1,x2\n")
        assert load_points(path).shape == (0, 2)

    def test_points_empty_file(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("")
        assert load_points(path).shape == (0, 0)

    def test_dataset_column_mismatch(self, tmp_path):
        (tmp_path / "p.csv").write_text("x1\n1\n2\n")
        (tmp_path / "u.csv").write_text("x1,x2\n1,2\n")
        with pytest.raises(ShapeError):
            load_dataset(tmp_path / "p.csv", tmp_path / "u.csv")

    def test_one_versus_rest(self, tmp_path):
        path = tmp_path / "multi.csv"
        path.write_text("a,b,y\n1,2,3\n3,4,1\n5,6,3\n7,8,2\n")
        table = load_labeled_csv(path, "3")
        np.testing.assert_array_equal(table.labels, [1, -1, 1, -1])

    def test_one_versus_rest_with_string_classes(self, tmp_path):
        path = tmp_path / "multi.csv"
        path.write_text("a,y\n1,cat\n2,dog\n3,cat\n")
        np.testing.assert_array_equal(load_labeled_csv(path, "dog").labels, [-1, 1, -1])

    def test_save_and_reload(self, tmp_path):
        data, truth = generate_synthetic(SyntheticSpec(gamma=0.25, prior=0.5, n=20, n_prime=30, seed=0))
        paths = save_dataset_csv(data, tmp_path, truth)
        reloaded = load_dataset(paths["positives"], paths["unlabeled"])
        np.testing.assert_allclose(reloaded.unlabeled, data.unlabeled)
        assert load_csv(paths["truth"]).shape == (30, 1)


class TestPca:

    @pytest.fixture
    def table(self):
        rng = np.random.default_rng(0)
        features = rng.normal(size=(200, 6)) @ rng.normal(size=(6, 6))
        labels = np.where(rng.random(200) < 0.5, 1, -1)
        return LabeledTable(features=features, labels=labels)

    def test_full_rank_keeps_the_variance(self, table):
        reduced = pca_reduce(table, 6)
        assert reduced.features.var(axis=0).sum() == pytest.approx(table.features.var(axis=0).sum(), rel=1e-9)

    def test_top_components_match_the_eigendecomposition(self, table):
        reduced = pca_reduce(table, 4)
        eigenvalues = np.linalg.eigh(np.cov(table.features, rowvar=False))[0][::-1]
        kept = reduced.features.var(axis=0, ddof=1).sum()
        assert kept / eigenvalues.sum() == pytest.approx(eigenvalues[:4].sum() / eigenvalues.sum(), rel=1e-9)

    def test_rank_one_data(self):
        rng = np.random.default_rng(1)
        t = rng.normal(size=(50, 1))
        features = t @ np.array([[1.0, -2.0, 0.5]])
        reduced = pca_reduce(LabeledTable(features=features, labels=np.ones(50)), 1)
        assert reduced.features.var() == pytest.approx(features.var(axis=0).sum(), rel=1e-9)

    def test_sign_convention_is_deterministic(self, table):
        first = pca_reduce(table, 3)
        second = pca_reduce(LabeledTable(features=table.features.copy(), labels=table.labels), 3)
        np.testing.assert_allclose(first.features, second.features)

    def test_labels_are_kept(self, table):
        np.testing.assert_array_equal(pca_reduce(table, 2).labels, table.labels)

    @pytest.mark.parametrize("dims", [0, 7])
    def test_dims_out_of_range(self, table, dims):
        with pytest.raises(InvalidParameterError):
            pca_reduce(table, dims)


class TestPuSplit:

    @pytest.fixture
    def indexed_table(self):
        n_rows = 400
        labels = np.where(np.arange(n_rows) < 200, 1, -1)
        features = np.column_stack([np.arange(n_rows, dtype=float), np.zeros(n_rows)])
        return LabeledTable(features=features, labels=labels)

    def test_disjoint_and_complete(self, indexed_table):
        split = make_pu_split(indexed_table, 50, 100, 0.4, seed=0)
        pos_ids = split.data.positives[:, 0]
        unl_ids = split.data.unlabeled[:, 0]
        test_ids = split.test.features[:, 0]
        assert np.intersect1d(pos_ids, unl_ids).size == 0
        assert np.intersect1d(pos_ids, test_ids).size == 0
        assert np.intersect1d(unl_ids, test_ids).size == 0
        assert pos_ids.size + unl_ids.size + test_ids.size == 400
        assert np.all(pos_ids < 200)

    def test_truth_matches_rows(self, indexed_table):
        split = make_pu_split(indexed_table, 50, 100, 0.4, seed=1)
        expected = np.where(split.data.unlabeled[:, 0] < 200, 1, -1)
        np.testing.assert_array_equal(split.unlabeled_truth, expected)

    def test_all_positive_unlabeled(self, indexed_table):
        split = make_pu_split(indexed_table, 50, 100, 1.0, seed=0)
        assert np.all(split.unlabeled_truth == 1)

    def test_binomial_count(self, indexed_table):
        counts = [int(np.sum(make_pu_split(indexed_table, 20, 100, 0.3, seed=s).unlabeled_truth == 1))
                  for s in range(200)]
        assert np.mean(counts) == pytest.approx(30.0, abs=3 * math.sqrt(100 * 0.3 * 0.7 / 200))

    def test_not_enough_positives(self, indexed_table):
        with pytest.raises(InsufficientSamplesError):
            make_pu_split(indexed_table, 190, 100, 0.5, seed=0)

    def test_dataset_is_a_dataset(self, indexed_table):
        assert isinstance(make_pu_split(indexed_table, 10, 10, 0.5).data, Dataset)


class TestPriorMatchedSubset:

    @pytest.fixture
    def table(self):
        labels = np.array([1] * 60 + [-1] * 100)
        return LabeledTable(features=np.arange(160.0).reshape(-1, 1), labels=labels)

    def test_fraction_matches(self, table):
        subset = prior_matched_subset(table, 0.2, seed=0)
        assert len(subset.labels) == 125
        assert int(np.sum(subset.labels == 1)) == 25

    def test_positive_heavy_prior_is_limited_by_positives(self, table):
        subset = prior_matched_subset(table, 0.75, seed=0)
        assert int(np.sum(subset.labels == 1)) == 60
        assert int(np.sum(subset.labels == -1)) == 20

    def test_rows_come_from_the_table(self, table):
        subset = prior_matched_subset(table, 0.5, seed=3)
        assert np.unique(subset.features).size == subset.features.shape[0]
        np.testing.assert_array_equal(subset.labels, np.where(subset.features[:, 0] < 60, 1, -1))

    def test_extreme_priors(self, table):
        assert np.all(prior_matched_subset(table, 1.0).labels == 1)
        assert np.all(prior_matched_subset(table, 0.0).labels == -1)

    def test_empty(self):
        negatives_only = LabeledTable(features=np.zeros((5, 1)), labels=-np.ones(5))
        with pytest.raises(InsufficientSamplesError):
            prior_matched_subset(negatives_only, 1.0)
