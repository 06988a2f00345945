"""End-to-end tests of the puprior command line."""

import json

import pandas as pd
import pytest
from typer.testing import CliRunner

import puprior_cli
from modules.errors import SolverConvergenceError
from modules.export_manager import load_report

runner = CliRunner()

FAST_FLAGS = [
    "--theta-grid", "0:1:0.1",
    "--folds", "3",
    "--lambda-grid", "0.1,1",
    "--max-centers", "30"
]


def invoke(*args):
    return runner.invoke(puprior_cli.app, ["--log-level", "ERROR", *args])


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.delenv("PUPRIOR_THREADS", raising=False)


@pytest.fixture
def generated(tmp_path):
    out = tmp_path / "data"
    result = invoke("gen", "--out", str(out), "--n", "60", "--n-prime", "60", "--seed", "3")
    assert result.exit_code == 0, result.output
    return out


class TestGen:

    def test_writes_three_files(self, generated):
        positives = pd.read_csv(generated / "positives.csv")
        unlabeled = pd.read_csv(generated / "unlabeled.csv")
        truth = pd.read_csv(generated / "unlabeled_truth.csv")
        assert positives.shape == (60, 1)
        assert unlabeled.shape == (60, 1)
        assert set(truth["y"]) <= {1, -1}

    def test_invalid_prior(self, tmp_path):
        assert invoke("gen", "--out", str(tmp_path), "--prior", "1.5").exit_code == 2


class TestEstimate:

    def test_writes_a_valid_result(self, generated, tmp_path):
        out = tmp_path / "result.json"
        curve = tmp_path / "curve.csv"
        result = invoke(
            "estimate",
            "--positive", str(generated / "positives.csv"),
            "--unlabeled", str(generated / "unlabeled.csv"),
            "--out", str(out), "--curve-csv", str(curve), *FAST_FLAGS
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["method"] == "pen-l1"
        assert 0.0 <= payload["theta_hat"] <= 1.0
        assert (payload["n"], payload["n_prime"]) == (60, 60)
        assert len(payload["curve"]) == 11
        assert list(pd.read_csv(curve).columns) == ["theta", "value"]

    def test_omit_timing(self, generated, tmp_path):
        out = tmp_path / "result.json"
        invoke(
            "estimate", "--positive", str(generated / "positives.csv"),
            "--unlabeled", str(generated / "unlabeled.csv"), "--method", "pe",
            "--out", str(out), "--omit-timing", *FAST_FLAGS
        )
        assert json.loads(out.read_text())["wall_ms"] == 0.0

    def test_missing_file(self, tmp_path):
        result = invoke(
            "estimate", "--positive", str(tmp_path / "absent.csv"),
            "--unlabeled", str(tmp_path / "absent.csv")
        )
        assert result.exit_code == 2

    def test_unknown_method(self, generated):
        result = invoke(
            "estimate", "--positive", str(generated / "positives.csv"),
            "--unlabeled", str(generated / "unlabeled.csv"), "--method", "oracle"
        )
        assert result.exit_code == 2

    def test_solver_failure_exit_code(self, generated, monkeypatch):
        def stalled(*args, **kwargs):
            raise SolverConvergenceError("stalled")

        monkeypatch.setattr(puprior_cli, "run_method", stalled)
        result = invoke(
            "estimate", "--positive", str(generated / "positives.csv"),
            "--unlabeled", str(generated / "unlabeled.csv"), "--method", "pen-kl"
        )
        assert result.exit_code == 3


class TestSynth:

    def run(self, out, *extra):
        return invoke(
            "synth", "--out", str(out), "--n", "40", "--n-prime", "40", "--trials", "2",
            "--methods", "pen-l1", "--bins", "10", *FAST_FLAGS, *extra
        )

    def test_reruns_are_byte_identical(self, tmp_path):
        assert self.run(tmp_path / "a", "--omit-timing").exit_code == 0
        assert self.run(tmp_path / "b", "--omit-timing").exit_code == 0
        for name in ("synth_report_pen-l1.json", "synth_histogram.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_report_and_histogram_agree(self, tmp_path):
        assert self.run(tmp_path).exit_code == 0
        report = load_report(tmp_path / "synth_report_pen-l1.json")
        histogram = pd.read_csv(tmp_path / "synth_histogram.csv")
        assert histogram["pen-l1"].sum() == report["aggregates"]["successful"]

    def test_verify(self, tmp_path):
        assert self.run(tmp_path, "--verify").exit_code == 0


class TestBench:

    def test_small_run(self, gaussian_table, tmp_path):
        frame = pd.DataFrame(gaussian_table.features, columns=["a", "b", "c"])
        frame["y"] = gaussian_table.labels
        frame.to_csv(tmp_path / "table.csv", index=False)

        result = invoke(
            "bench", "--data", str(tmp_path / "table.csv"), "--positive-class", "1",
            "--out", str(tmp_path / "bench"), "--pca-dims", "2", "--priors", "0.5",
            "--trials", "1", "--methods", "pen-l1", "--n-positive", "30", "--n-unlabeled", "60",
            "--verify", *FAST_FLAGS
        )
        assert result.exit_code == 0, result.output
        summary = pd.read_csv(tmp_path / "bench" / "bench_summary.csv")
        assert list(summary["method"]) == ["pen-l1"]
        assert load_report(tmp_path / "bench" / "bench_report_pen-l1.json")["aggregates"]["trials"] == 1


class TestTheoryChecks:

    def test_converge_needs_several_sizes(self):
        assert invoke("converge", "--sizes", "100").exit_code == 2

    def test_converge_with_searched_theta(self, tmp_path):
        out = tmp_path / "converge.json"
        result = invoke(
            "converge", "--sizes", "20,40,80,160", "--trials", "3", "--theta", "search",
            "--oracle-size", "2000", "--out", str(out), "--theta-grid", "0:1:0.02", *FAST_FLAGS[2:]
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["config"]["theta"] is None
        assert len(payload["per_size"]) == 4

    def test_deviation_needs_enough_resamples(self):
        assert invoke("deviation", "--resamples", "10").exit_code == 2

    def test_deviation_report(self, tmp_path):
        out = tmp_path / "deviation.json"
        result = invoke(
            "deviation", "--n", "50", "--n-prime", "50", "--resamples", "50",
            "--max-centers", "20", "--out", str(out)
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["resamples"] == 50
        assert payload["violated"] is False


class TestClassify:

    def test_zero_prior_labels_everything_negative(self, generated, tmp_path):
        out = tmp_path / "labels.csv"
        result = invoke(
            "classify", "--positive", str(generated / "positives.csv"),
            "--unlabeled", str(generated / "unlabeled.csv"),
            "--points", str(generated / "unlabeled.csv"), "--prior", "0", "--out", str(out), *FAST_FLAGS
        )
        assert result.exit_code == 0, result.output
        labels = pd.read_csv(out)["y"]
        assert len(labels) == 60
        assert (labels == -1).all()

    def test_estimated_prior(self, generated, tmp_path):
        out = tmp_path / "labels.csv"
        result = invoke(
            "classify", "--positive", str(generated / "positives.csv"),
            "--unlabeled", str(generated / "unlabeled.csv"),
            "--points", str(generated / "positives.csv"), "--out", str(out), *FAST_FLAGS
        )
        assert result.exit_code == 0, result.output
        assert set(pd.read_csv(out)["y"]) <= {1, -1}

    def test_empty_points(self, generated, tmp_path):
        points = tmp_path / "points.csv"
        points.write_text("x1\n")
        out = tmp_path / "labels.csv"
        result = invoke(
            "classify", "--positive", str(generated / "positives.csv"),
            "--unlabeled", str(generated / "unlabeled.csv"),
            "--points", str(points), "--prior", "0.5", "--out", str(out)
        )
        assert result.exit_code == 0
        assert out.read_text() == "y\n"

    def test_prior_out_of_range(self, generated, tmp_path):
        result = invoke(
            "classify", "--positive", str(generated / "positives.csv"),
            "--unlabeled", str(generated / "unlabeled.csv"),
            "--points", str(generated / "positives.csv"), "--prior", "1.5", "--out", str(tmp_path / "y.csv")
        )
        assert result.exit_code == 2
