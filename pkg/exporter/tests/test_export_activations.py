"""Activation-stack export tests.

These use the fast backbones (AlexNet, SqueezeNet) and seeded random
weights; the heavier VGG-16 path is covered by the cross-component
round-trip suite.
"""
import json

import numpy as np
import pytest
import torch

from exphelpers import make_corpus, read_iqae, write_raster
from iqx import (
    InferenceError,
    JobError,
    ManifestError,
    export_activations,
    job_for_directory,
)
from iqx.networks import IMAGENET_MEAN, IMAGENET_STD, input_tensor


def _job(manifest, out_dir, extractors=("lpips2",), **kw):
    kw.setdefault("weights", "random:11")
    return job_for_directory(manifest, extractors, out_dir, **kw)


class TestSingleRecordContract:
    def test_one_image_one_layer_yields_one_record(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=1, height=64, width=64)
        job = _job(
            manifest, tmp_path / "o", layers={"lpips2": ("relu2",)}
        )
        written = export_activations(job)
        records, metadata = read_iqae(written["lpips2"])
        assert len(records) == 1
        image_id, name, arr = records[0]
        assert (image_id, name) == ("img00", "relu2")
        assert arr.ndim == 3
        # the second stage of this backbone produces 192 channels
        assert arr.shape[2] == 192
        assert metadata["layers"] == ["relu2"]

    def test_default_taps_grouped_per_image_in_depth_order(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=2, height=64, width=72)
        written = export_activations(_job(manifest, tmp_path / "o"))
        records, metadata = read_iqae(written["lpips2"])
        layer_names = ["relu1", "relu2", "relu3", "relu4", "relu5"]
        assert [(r[0], r[1]) for r in records] == [
            (f"img{i:02d}", name) for i in range(2) for name in layer_names
        ]
        assert metadata["layers"] == layer_names
        for _, name, arr in records:
            assert arr.shape[2] == metadata["layer_channels"][name]


class TestDeterminism:
    def test_reexport_is_byte_identical(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=2, height=64, width=64)
        w1 = export_activations(_job(manifest, tmp_path / "o1", ("lpips3",)))
        w2 = export_activations(_job(manifest, tmp_path / "o2", ("lpips3",)))
        assert w1["lpips3"].read_bytes() == w2["lpips3"].read_bytes()

    def test_weights_hash_is_stable_and_recorded(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=1, height=64, width=64)
        w1 = export_activations(_job(manifest, tmp_path / "o1"))
        w2 = export_activations(_job(manifest, tmp_path / "o2"))
        _, m1 = read_iqae(w1["lpips2"])
        _, m2 = read_iqae(w2["lpips2"])
        assert m1["weights_hash"] == m2["weights_hash"]
        assert len(m1["weights_hash"]) == 64
        assert m1["weights_mode"] == "random:11"
        assert m1["source"] == "denoised"
        assert m1["extractor"] == "lpips2"
        assert m1["format"] == "activation-stack"


class TestInputHandling:
    def test_solid_gray_image_yields_finite_activations(self, tmp_path):
        root = tmp_path / "c"
        root.mkdir()
        write_raster(root / "gray.iqai", np.zeros((64, 64), np.float32))
        (root / "manifest.json").write_text(
            json.dumps({"images": [{"id": "gray", "denoised": "gray.iqai"}]})
        )
        written = export_activations(
            _job(root / "manifest.json", tmp_path / "o", ("lpips2", "lpips3"))
        )
        for key in ("lpips2", "lpips3"):
            records, _ = read_iqae(written[key])
            assert records, key
            for _, _, arr in records:
                assert np.all(np.isfinite(arr))

    def test_channel_replication_and_standardization(self):
        grid = np.full((8, 8), 0.25, dtype=np.float32)
        x = input_tensor([grid])
        assert x.shape == (1, 3, 8, 8)
        for c in range(3):
            expected = (0.25 - IMAGENET_MEAN[c]) / IMAGENET_STD[c]
            assert torch.allclose(
                x[0, c], torch.full((8, 8), expected), atol=1e-6
            )

    def test_mixed_image_sizes_batch_safely(self, tmp_path):
        root = tmp_path / "c"
        root.mkdir()
        rng = np.random.default_rng(2)
        sizes = [(64, 64), (64, 64), (56, 72)]
        images = []
        for i, (h, w) in enumerate(sizes):
            arr = np.clip(rng.normal(0, 0.3, (h, w)), -1, 1).astype(np.float32)
            write_raster(root / f"im{i}.iqai", arr)
            images.append({"id": f"im{i}", "denoised": f"im{i}.iqai"})
        (root / "manifest.json").write_text(json.dumps({"images": images}))
        written = export_activations(
            _job(root / "manifest.json", tmp_path / "o", ("lpips3",))
        )
        records, _ = read_iqae(written["lpips3"])
        assert [r[0] for r in records[::5]] == ["im0", "im1", "im2"]
        # same-size images share spatial dims; the odd one differs
        assert records[0][2].shape == records[5][2].shape
        assert records[10][2].shape != records[0][2].shape


class TestFailureModes:
    def test_job_without_activation_extractor(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=1, height=64, width=64)
        job = _job(manifest, tmp_path / "o", ("paq2piq",))
        with pytest.raises(JobError, match="no activation extractor"):
            export_activations(job)

    def test_missing_source_role(self, tmp_path):
        root = tmp_path / "c"
        root.mkdir()
        write_raster(root / "a.iqai", np.zeros((64, 64), np.float32))
        (root / "manifest.json").write_text(
            json.dumps({"images": [{"id": "a", "denoised": "a.iqai"}]})
        )
        job = _job(root / "manifest.json", tmp_path / "o", source="reference")
        with pytest.raises(ManifestError, match="has no 'reference' path"):
            export_activations(job)

    def test_too_small_input_is_reported(self, tmp_path):
        manifest = make_corpus(tmp_path / "c", n=1, height=12, width=12)
        job = _job(manifest, tmp_path / "o", ("lpips2",))
        with pytest.raises(InferenceError, match="alexnet cannot process"):
            export_activations(job)
