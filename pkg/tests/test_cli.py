"""End-to-end command-line runs: artifacts, exit codes, determinism."""
import json

import numpy as np
import pytest

from corpusgen import build_corpus, corpus_config

from ctiqa import (
    Domain,
    MetricClass,
    MetricInfo,
    MetricTable,
    __version__,
    image_from_values,
    load_image,
    load_table,
    metric_class_of,
    save_image,
)
from ctiqa.cli import main
from ctiqa.scoring import METRIC_ORDER


@pytest.fixture(scope="module")
def corpus_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("clicorpus")
    build_corpus(root, n_clean=6, patients=2, with_masks=True)
    return root


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "config.json"
    p.write_text(corpus_config().to_json())
    return p


@pytest.fixture(scope="module")
def scored_dir(corpus_root, cfg_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("scored")
    rc = main(["score", "--manifest", str(corpus_root / "manifest.json"),
               "--config", str(cfg_file), "--out-dir", str(out)])
    assert rc == 0
    return out


def _craft_table_json(path, values, names, ids=None, patients=None):
    values = np.asarray(values, dtype=np.float64)
    table = MetricTable(
        image_ids=ids or [f"img{i}" for i in range(values.shape[0])],
        metrics=[MetricInfo(n, metric_class_of(n)) for n in names],
        values=values,
        missing=~np.isfinite(values),
        patient_ids=patients,
    )
    path.write_text(json.dumps({"table": table.to_dict()}))
    return path


class TestTopLevel:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_fatal_errors_exit_1(self, tmp_path, capsys):
        rc = main(["score", "--manifest", str(tmp_path / "nope.json"),
                   "--out-dir", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestPreprocess:
    def test_directory_of_rasters(self, tmp_path, capsys):
        src = tmp_path / "src"
        src.mkdir()
        rng = np.random.default_rng(0)
        for i in range(2):
            vals = rng.uniform(-1000.0, 400.0, size=(48, 48))
            save_image(image_from_values(vals, 48, 48, Domain.HU),
                       src / f"r{i}.iqai")
        csv_vals = rng.uniform(-1000.0, 400.0, size=(20, 24))
        (src / "r2.csv").write_text("\n".join(
            ",".join(repr(float(v)) for v in row) for row in csv_vals))
        (src / "notes.txt").write_text("ignored")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"preprocess": {"resize": [32, 32]}}))
        out = tmp_path / "out"
        rc = main(["preprocess", "--input", str(src), "--out-dir", str(out),
                   "--config", str(cfg)])
        assert rc == 0
        assert "3 rasters" in capsys.readouterr().out
        produced = sorted(p.name for p in out.glob("*.iqai"))
        assert produced == ["r0.iqai", "r1.iqai", "r2.iqai"]
        for p in out.glob("*.iqai"):
            img = load_image(p)
            assert img.domain is Domain.NORMALIZED
            assert img.pixels.shape == (32, 32)
            assert np.all(np.abs(img.pixels) <= 1.0)

    def test_empty_input_exits_1(self, tmp_path, capsys):
        src = tmp_path / "empty"
        src.mkdir()
        rc = main(["preprocess", "--input", str(src),
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 1
        assert "no .iqai or .csv" in capsys.readouterr().err


class TestScore:
    def test_artifacts_and_envelope(self, scored_dir):
        doc = json.loads((scored_dir / "metrics.json").read_text())
        assert doc["schema_version"] == 1
        assert doc["tool_version"] == __version__
        assert len(doc["config_digest"]) == 64
        assert doc["config"]["raps"]["n_bins"] == 32
        table = load_table(scored_dir / "metrics.json")
        assert table.metric_names == list(METRIC_ORDER)
        assert len(table.image_ids) == 6
        assert not table.missing.any()
        assert (scored_dir / "metrics.csv").read_text().startswith("image_id")

    def test_byte_stable_across_runs(self, corpus_root, cfg_file, tmp_path):
        args = ["score", "--manifest", str(corpus_root / "manifest.json"),
                "--config", str(cfg_file), "--metrics", "MSE,KID,NIQE"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out-dir", str(a)]) == 0
        assert main(args + ["--out-dir", str(b)]) == 0
        for name in ("metrics.json", "metrics.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_masked_cells_exit_2(self, corpus_root, cfg_file, tmp_path,
                                 capsys):
        doc = json.loads((corpus_root / "manifest.json").read_text())
        for item in doc["images"]:
            item.pop("reference")
        noref = corpus_root / "noref.json"
        noref.write_text(json.dumps(doc))
        rc = main(["score", "--manifest", str(noref), "--config",
                   str(cfg_file), "--metrics", "MSE,SNR",
                   "--out-dir", str(tmp_path)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "masked" in err and "MSE" in err
        table = load_table(tmp_path / "metrics.json")
        assert table.missing[:, table.metric_index("MSE")].all()
        assert not table.missing[:, table.metric_index("SNR")].any()

    def test_metric_selection_and_overrides(self, corpus_root, cfg_file,
                                            tmp_path):
        rc = main(["score", "--manifest", str(corpus_root / "manifest.json"),
                   "--config", str(cfg_file), "--metrics", "RAPS-FD",
                   "--raps-bins", "16", "--out-dir", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "metrics.json").read_text())
        assert doc["config"]["raps"]["n_bins"] == 16
        table = load_table(tmp_path / "metrics.json")
        assert table.metric_names == ["RAPS-FD"]


class TestCorrelate:
    def test_artifacts(self, scored_dir, cfg_file, tmp_path):
        rc = main(["correlate", "--table", str(scored_dir / "metrics.json"),
                   "--config", str(cfg_file), "--out-dir", str(tmp_path)])
        assert rc == 0
        for stem in ("unpaired_matrix", "paired_matrix", "group_summary"):
            assert (tmp_path / f"{stem}.json").exists()
            assert (tmp_path / f"{stem}.csv").exists()
        report = (tmp_path / "correlation_report.txt").read_text()
        assert "unpaired metrics" in report and "paired metrics" in report
        assert "class-averaged correlations" in report
        doc = json.loads((tmp_path / "unpaired_matrix.json").read_text())
        assert "lower=|PLCC|" in doc["layout"]
        vals = np.array(
            [[np.nan if v is None else v for v in row]
             for row in doc["entries"]], dtype=np.float64)
        finite = vals[np.isfinite(vals)]
        assert np.all(finite >= 0.0) and np.all(finite <= 1.0)

    def test_per_patient_subdirectories(self, scored_dir, cfg_file, tmp_path):
        rc = main(["correlate", "--table", str(scored_dir / "metrics.json"),
                   "--config", str(cfg_file), "--out-dir", str(tmp_path),
                   "--per-patient"])
        assert rc == 0
        for patient in ("p00", "p01"):
            sub = tmp_path / f"patient_{patient}"
            assert (sub / "correlation_report.txt").exists()
            assert (sub / "unpaired_matrix.json").exists()

    def test_too_few_images_exit_1(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        table_path = _craft_table_json(
            tmp_path / "t.json", rng.normal(size=(2, 4)),
            ["MSE", "SSIM", "SNR", "NIQE"])
        rc = main(["correlate", "--table", str(table_path),
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 1
        assert "at least 3 images" in capsys.readouterr().err

    def test_constant_column_excluded_exit_2(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        values = rng.normal(size=(6, 4))
        values[:, 2] = 1.0  # SNR constant
        table_path = _craft_table_json(tmp_path / "t.json", values,
                                       ["MSE", "SSIM", "SNR", "NIQE"])
        rc = main(["correlate", "--table", str(table_path),
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 2
        assert "constant" in capsys.readouterr().err
        report = (tmp_path / "out" / "correlation_report.txt").read_text()
        paired_doc = json.loads((tmp_path / "out" / "paired_matrix.json")
                                .read_text())
        assert "SNR" not in paired_doc["metric_names"]
        assert "SNR" not in report

    def test_missing_patient_ids_with_flag_exit_2(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        table_path = _craft_table_json(tmp_path / "t.json",
                                       rng.normal(size=(6, 4)),
                                       ["MSE", "SSIM", "SNR", "NIQE"])
        rc = main(["correlate", "--table", str(table_path),
                   "--out-dir", str(tmp_path / "out"), "--per-patient"])
        assert rc == 2
        assert "no patient ids" in capsys.readouterr().err


class TestImportance:
    def test_artifacts(self, scored_dir, cfg_file, tmp_path):
        rc = main(["importance", "--table", str(scored_dir / "metrics.json"),
                   "--config", str(cfg_file), "--k", "3",
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        svg = (tmp_path / "importance.svg").read_text()
        assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")
        paired_labels = ["MSE", "PSNR", "SSIM", "VIF",
                         "LPIPS1", "LPIPS2", "LPIPS3"]
        for label in paired_labels:
            doc = json.loads(
                (tmp_path / f"importance_{label}.json").read_text())
            assert doc["label"] == label
            assert doc["k"] == 3
            assert len(doc["importances"]) == 8
            total = sum(doc["importances"])
            assert total == pytest.approx(1.0, abs=1e-9) or total == 0.0
        lines = (tmp_path / "importance_summary.csv").read_text().splitlines()
        assert lines[0] == "label,feature,importance,mean_nrmse"
        assert len(lines) == 1 + len(paired_labels) * 8

    def test_tree_flag_overrides_recorded(self, scored_dir, tmp_path):
        rc = main(["importance", "--table", str(scored_dir / "metrics.json"),
                   "--k", "3", "--max-depth", "2", "--min-samples-leaf", "2",
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "importance_MSE.json").read_text())
        assert doc["config"]["tree"]["max_depth"] == 2
        assert doc["config"]["tree"]["min_samples_leaf"] == 2

    def test_no_fittable_label_exit_1(self, scored_dir, tmp_path, capsys):
        # two patient groups cannot fill three grouped folds
        rc = main(["importance", "--table", str(scored_dir / "metrics.json"),
                   "--k", "3", "--by-patient", "--out-dir", str(tmp_path)])
        assert rc == 1
        err = capsys.readouterr().err
        assert "skipped" in err and "error:" in err

    def test_unpaired_only_table_exit_1(self, tmp_path, capsys):
        rng = np.random.default_rng(4)
        table_path = _craft_table_json(tmp_path / "t.json",
                                       rng.normal(size=(6, 2)),
                                       ["SNR", "NIQE"])
        rc = main(["importance", "--table", str(table_path),
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 1
        assert "no paired metric" in capsys.readouterr().err


class TestBenchAndReport:
    def test_bench_artifacts(self, corpus_root, cfg_file, scored_dir,
                             tmp_path, capsys):
        rc = main(["bench", "--manifest", str(corpus_root / "manifest.json"),
                   "--config", str(cfg_file), "--metrics", "MSE,SNR,RAPS-FD",
                   "--repetitions", "5", "--out-dir", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "+/-" in out
        doc = json.loads((tmp_path / "timing.json").read_text())
        assert [r["metric"] for r in doc["rows"]] == ["MSE", "SNR", "RAPS-FD"]
        assert all(r["n_reps"] == 5 for r in doc["rows"])
        csv_lines = (tmp_path / "timing.csv").read_text().splitlines()
        assert csv_lines[0].startswith("metric,mean_seconds_per_slice")
        assert len(csv_lines) == 4
        assert (tmp_path / "timing.txt").exists()

    def test_bench_too_few_reps_exit_1(self, corpus_root, tmp_path, capsys):
        rc = main(["bench", "--manifest", str(corpus_root / "manifest.json"),
                   "--metrics", "MSE", "--repetitions", "4",
                   "--out-dir", str(tmp_path)])
        assert rc == 1
        assert "at least 5" in capsys.readouterr().err

    def test_report_consolidates(self, scored_dir, cfg_file, corpus_root,
                                 capsys):
        main(["correlate", "--table", str(scored_dir / "metrics.json"),
              "--config", str(cfg_file), "--out-dir", str(scored_dir)])
        main(["importance", "--table", str(scored_dir / "metrics.json"),
              "--config", str(cfg_file), "--k", "3",
              "--out-dir", str(scored_dir)])
        main(["bench", "--manifest", str(corpus_root / "manifest.json"),
              "--config", str(cfg_file), "--metrics", "MSE",
              "--repetitions", "5", "--out-dir", str(scored_dir)])
        capsys.readouterr()
        rc = main(["report", "--dir", str(scored_dir)])
        assert rc == 0
        text = (scored_dir / "report.txt").read_text()
        assert "scores: 6 images x 15 metrics, 0 masked cells" in text
        assert "config digest:" in text
        assert "correlation study" in text
        assert "Average computational time per slice" in text
        assert "importance chart:" in text
        assert capsys.readouterr().out.rstrip().endswith(
            str(scored_dir / "importance.svg"))
