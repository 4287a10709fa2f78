"""Blind quality-score export tests."""
import csv
import json
import math

import numpy as np
import pytest

from exphelpers import make_corpus, write_raster
from iqx import JobError, ManifestError, export_paq2piq, job_for_directory


def _job(manifest, out_dir, **kw):
    kw.setdefault("weights", "random:11")
    return job_for_directory(manifest, ("paq2piq",), out_dir, **kw)


def _read_scores(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["image_id", "score"]
    return [(r[0], float(r[1])) for r in rows[1:]]


class TestExportScores:
    def test_one_finite_score_per_id_in_manifest_order(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=3, height=64, width=64)
        path = export_paq2piq(_job(manifest, tmp_path / "o"))
        scores = _read_scores(path)
        assert [s[0] for s in scores] == ["img00", "img01", "img02"]
        assert all(math.isfinite(s[1]) for s in scores)

    def test_reproducible_across_runs(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=2, height=64, width=64)
        p1 = export_paq2piq(_job(manifest, tmp_path / "o1"))
        p2 = export_paq2piq(_job(manifest, tmp_path / "o2"))
        assert p1.read_bytes() == p2.read_bytes()

    def test_sidecar_metadata(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=1, height=64, width=64)
        path = export_paq2piq(_job(manifest, tmp_path / "o"))
        meta = json.loads((path.parent / (path.name + ".meta.json")).read_text())
        assert meta["extractor"] == "paq2piq"
        assert meta["network"] == "resnet18"
        assert meta["format"] == "quality-scores"
        assert len(meta["weights_hash"]) == 64
        assert meta["weights_mode"] == "random:11"
        assert meta["network_input"] == 224

    def test_differing_image_sizes_share_a_batch(self, tmp_path):
        # everything is upscaled to the network input side, so a batch
        # may mix source sizes freely
        root = tmp_path / "c"
        root.mkdir()
        rng = np.random.default_rng(4)
        images = []
        for i, (h, w) in enumerate([(64, 64), (48, 80)]):
            arr = np.clip(rng.normal(0, 0.3, (h, w)), -1, 1).astype(np.float32)
            write_raster(root / f"im{i}.iqai", arr)
            images.append({"id": f"im{i}", "denoised": f"im{i}.iqai"})
        (root / "manifest.json").write_text(json.dumps({"images": images}))
        scores = _read_scores(
            export_paq2piq(_job(root / "manifest.json", tmp_path / "o"))
        )
        assert [s[0] for s in scores] == ["im0", "im1"]

    def test_comma_in_id_round_trips_through_csv(self, tmp_path):
        root = tmp_path / "c"
        root.mkdir()
        write_raster(root / "a.iqai", np.zeros((64, 64), np.float32))
        (root / "manifest.json").write_text(
            json.dumps({"images": [{"id": "a,b", "denoised": "a.iqai"}]})
        )
        scores = _read_scores(
            export_paq2piq(_job(root / "manifest.json", tmp_path / "o"))
        )
        assert scores[0][0] == "a,b"


class TestFailureModes:
    def test_duplicate_manifest_id(self, tmp_path):
        root = tmp_path / "c"
        root.mkdir()
        write_raster(root / "a.iqai", np.zeros((64, 64), np.float32))
        (root / "manifest.json").write_text(
            json.dumps(
                {
                    "images": [
                        {"id": "a", "denoised": "a.iqai"},
                        {"id": "a", "denoised": "a.iqai"},
                    ]
                }
            )
        )
        with pytest.raises(ManifestError, match="duplicate image id"):
            export_paq2piq(_job(root / "manifest.json", tmp_path / "o"))

    def test_job_without_quality_predictor(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=1, height=64, width=64)
        job = job_for_directory(
            manifest, ("lpips3",), tmp_path / "o", weights="random:11"
        )
        with pytest.raises(JobError, match="quality predictor"):
            export_paq2piq(job)
