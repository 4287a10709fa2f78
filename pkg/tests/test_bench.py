"""Timing-harness report shape and validation."""
import json

import numpy as np
import pytest

from corpusgen import build_corpus, corpus_config

from ctiqa import (
    DegenerateInputError,
    DomainError,
    TimingReport,
    TimingRow,
    load_manifest,
    run_benchmark,
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("benchcorpus")
    return load_manifest(build_corpus(root, n_clean=3, with_masks=True))


class TestRunBenchmark:
    def test_report_shape(self, corpus):
        report = run_benchmark(corpus, corpus_config(),
                               metrics=["MSE", "SNR", "RAPS-FD"],
                               repetitions=5)
        assert [r.metric for r in report.rows] == ["MSE", "SNR", "RAPS-FD"]
        assert report.repetitions == 5 and report.warmup == 1
        for row in report.rows:
            assert row.n_reps == 5
            assert row.n_slices == len(corpus.entries)
            assert np.isfinite(row.mean_s) and row.mean_s >= 0.0
            assert np.isfinite(row.std_s) and row.std_s >= 0.0
        assert "python" in report.environment
        assert "numpy" in report.environment

    def test_validation(self, corpus, tmp_path):
        with pytest.raises(DomainError, match="at least 5"):
            run_benchmark(corpus, corpus_config(), metrics="MSE",
                          repetitions=4)
        with pytest.raises(DomainError, match="warmup"):
            run_benchmark(corpus, corpus_config(), metrics="MSE",
                          repetitions=5, warmup=0)
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps({"images": []}))
        with pytest.raises(DegenerateInputError, match="empty corpus"):
            run_benchmark(load_manifest(empty), corpus_config(),
                          metrics="MSE", repetitions=5)

    def test_unscoreable_metric_raises(self, corpus, tmp_path):
        doc = json.loads((corpus.root / "manifest.json").read_text())
        for item in doc["images"]:
            item.pop("reference")
        noref = corpus.root / "noref_bench.json"
        noref.write_text(json.dumps(doc))
        with pytest.raises(DegenerateInputError, match="cannot score"):
            run_benchmark(load_manifest(noref), corpus_config(),
                          metrics="MSE", repetitions=5)

    def test_unscoreable_entries_shrink_slice_count(self, corpus, tmp_path):
        # half the entries lose their reference: paired timing runs on
        # the surviving half instead of failing
        doc = json.loads((corpus.root / "manifest.json").read_text())
        doc["images"][0].pop("reference")
        partial = corpus.root / "partial_bench.json"
        partial.write_text(json.dumps(doc))
        report = run_benchmark(load_manifest(partial), corpus_config(),
                               metrics=["MSE", "SNR"], repetitions=5)
        by_metric = {r.metric: r for r in report.rows}
        assert by_metric["MSE"].n_slices == len(corpus.entries) - 1
        assert by_metric["SNR"].n_slices == len(corpus.entries)


class TestReportFormats:
    def _report(self):
        rows = (
            TimingRow("MSE", 0.001, 0.0001, 10, 4),
            TimingRow("NIQE", 0.25, 0.02, 10, 4),
        )
        return TimingReport(rows=rows, environment="test env",
                            repetitions=10, warmup=1)

    def test_text_table(self):
        text = self._report().render_text()
        lines = text.splitlines()
        assert lines[0] == "Average computational time per slice (seconds)"
        assert "repetitions: 10 (warmup 1 excluded)" in text
        assert any(line.startswith("MSE") and "+/-" in line
                   for line in lines)
        assert any(line.startswith("NIQE") for line in lines)

    def test_json_round_trip(self):
        doc = json.loads(self._report().to_json())
        assert doc["schema_version"] == 1
        assert doc["repetitions"] == 10
        assert doc["rows"][0] == {
            "metric": "MSE",
            "mean_seconds_per_slice": 0.001,
            "std_seconds_per_slice": 0.0001,
            "n_reps": 10,
            "n_slices": 4,
        }

    def test_csv(self):
        lines = self._report().to_csv().splitlines()
        assert lines[0] == ("metric,mean_seconds_per_slice,"
                            "std_seconds_per_slice,n_reps,n_slices")
        assert lines[1] == "MSE,0.001,0.0001,10,4"
        assert len(lines) == 3
