"""Corpus scoring engine: full runs, masking, and the unpaired contract.

The unpaired contract is asserted two ways on a recording corpus: an
injected loader logs every raster path the engine touches, and a second
corpus has its reference files overwritten with garbage after manifest
validation so that any attempt to read them would surface as a masked
cell.
"""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from corpusgen import build_corpus, corpus_config

from ctiqa import (
    Domain,
    DomainError,
    FileFormatError,
    METRIC_ORDER,
    PAIRED_METRICS,
    ScoreEngine,
    UNPAIRED_METRICS,
    WindowSpec,
    image_from_values,
    load_image,
    load_manifest,
    mse,
    preprocess,
    save_image,
    select_metrics,
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest_path = build_corpus(root, n_clean=4, with_masks=True)
    return load_manifest(manifest_path)


class TestSelectMetrics:
    def test_named_groups(self):
        assert select_metrics(None) == METRIC_ORDER
        assert select_metrics("all") == METRIC_ORDER
        assert select_metrics("paired") == PAIRED_METRICS
        assert select_metrics("unpaired") == UNPAIRED_METRICS

    def test_lists_and_comma_strings(self):
        assert select_metrics("MSE, SSIM") == ("MSE", "SSIM")
        assert select_metrics(["KID", "NIQE"]) == ("KID", "NIQE")

    def test_bad_selections(self):
        with pytest.raises(DomainError):
            select_metrics("MSE,MSE")
        with pytest.raises(DomainError):
            select_metrics("NOTAMETRIC")
        with pytest.raises(DomainError):
            select_metrics("  ,  ")

    def test_groups_partition_the_order(self):
        assert tuple(m for m in METRIC_ORDER if m in PAIRED_METRICS) == \
            PAIRED_METRICS
        assert set(PAIRED_METRICS) | set(UNPAIRED_METRICS) == set(METRIC_ORDER)
        assert not set(PAIRED_METRICS) & set(UNPAIRED_METRICS)


class TestFullRun:
    def test_every_metric_scored(self, corpus):
        table = ScoreEngine(corpus, corpus_config()).run()
        assert table.metric_names == list(METRIC_ORDER)
        assert table.image_ids == sorted(table.image_ids)
        assert len(table.image_ids) == len(corpus.entries)
        assert not table.missing.any()
        assert np.all(np.isfinite(table.values))
        assert table.reasons == {}

    def test_deterministic_and_parallel_equivalent(self, corpus):
        eng = ScoreEngine(corpus, corpus_config())
        a = eng.run()
        b = ScoreEngine(corpus, corpus_config()).run()
        c = ScoreEngine(corpus, corpus_config()).run(jobs=3)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.values, c.values)
        assert a.image_ids == b.image_ids == c.image_ids

    def test_kid_scores_depend_on_config_seed(self, corpus):
        a = ScoreEngine(corpus, corpus_config(seed=0), metrics="KID").run()
        b = ScoreEngine(corpus, corpus_config(seed=1), metrics="KID").run()
        assert not np.array_equal(a.values, b.values)

    def test_manifest_order_does_not_matter(self, corpus, tmp_path):
        doc = json.loads((corpus.root / "manifest.json").read_text())
        doc["images"] = list(reversed(doc["images"]))
        shuffled = corpus.root / "shuffled.json"
        shuffled.write_text(json.dumps(doc))
        table = ScoreEngine(load_manifest(shuffled), corpus_config(),
                            metrics="MSE").run()
        assert table.image_ids == sorted(table.image_ids)

    def test_patient_ids_propagate(self, tmp_path):
        man = load_manifest(build_corpus(tmp_path, n_clean=3, patients=3))
        table = ScoreEngine(man, corpus_config(), metrics="MSE").run()
        assert table.patient_ids is not None
        assert all(p and p.startswith("p") for p in table.patient_ids)

    def test_empty_manifest_warns(self, tmp_path):
        p = tmp_path / "empty.json"
        p.write_text(json.dumps({"images": []}))
        eng = ScoreEngine(load_manifest(p), corpus_config(), metrics="MSE")
        with pytest.warns(UserWarning, match="empty manifest"):
            table = eng.run()
        assert table.values.shape == (0, 1)


class _RecordingLoader:
    def __init__(self):
        self.paths: list[Path] = []

    def __call__(self, path):
        self.paths.append(Path(path))
        return load_image(path)


class TestUnpairedContract:
    def test_reference_rasters_never_loaded(self, corpus):
        recorder = _RecordingLoader()
        table = ScoreEngine(corpus, corpus_config(), metrics="unpaired",
                            loader=recorder).run()
        assert not table.missing.any()
        refs = {e.reference for e in corpus.entries}
        touched = set(recorder.paths)
        assert not touched & refs
        assert not any("hd" in p.parts for p in touched)
        # sanity: the run did read the test and low-dose rasters
        assert {e.denoised for e in corpus.entries} <= touched
        assert {e.low_dose for e in corpus.entries} <= touched

    def test_paired_run_does_load_references(self, corpus):
        recorder = _RecordingLoader()
        ScoreEngine(corpus, corpus_config(), metrics="MSE",
                    loader=recorder).run()
        refs = {e.reference for e in corpus.entries}
        assert refs <= set(recorder.paths)

    def test_corrupted_references_score_cleanly_unpaired(self, tmp_path):
        man = load_manifest(build_corpus(tmp_path, n_clean=3,
                                         with_masks=True))
        for entry in man.entries:
            entry.reference.write_bytes(b"not an image at all")
        table = ScoreEngine(man, corpus_config(), metrics="unpaired").run()
        assert not table.missing.any()
        assert np.all(np.isfinite(table.values))
        # the same corruption is fatal for a paired run, proving the
        # reference files really are unreadable
        paired_table = ScoreEngine(man, corpus_config(), metrics="MSE").run()
        assert paired_table.missing.all()
        assert all(r.startswith("FileFormatError")
                   for r in paired_table.reasons.values())


class TestMaskingAndResources:
    def test_missing_reference_masks_paired_only(self, tmp_path):
        man_path = build_corpus(tmp_path, n_clean=3, with_masks=True)
        doc = json.loads(man_path.read_text())
        for item in doc["images"]:
            item.pop("reference")
        stripped = man_path.parent / "noref.json"
        stripped.write_text(json.dumps(doc))
        man = load_manifest(stripped)
        table = ScoreEngine(man, corpus_config(),
                            metrics=["MSE", "SSIM", "SNR"]).run()
        for image_id in table.image_ids:
            assert table.reasons[(image_id, "MSE")].startswith(
                "DegenerateInputError")
            assert (image_id, "SNR") not in table.reasons
        snr_col = table.values[:, table.metric_index("SNR")]
        assert np.all(np.isfinite(snr_col))

    def test_missing_resource_fails_construction(self, tmp_path):
        man_path = build_corpus(tmp_path, n_clean=3)
        doc = json.loads(man_path.read_text())
        del doc["embeddings"]
        bare = man_path.parent / "bare.json"
        bare.write_text(json.dumps(doc))
        man = load_manifest(bare)
        with pytest.raises(FileFormatError, match="inception"):
            ScoreEngine(man, corpus_config(), metrics="FID")
        with pytest.raises(FileFormatError, match="lpips1"):
            ScoreEngine(man, corpus_config(), metrics="LPIPS1")

    def test_missing_external_score_masks_one_row(self, tmp_path):
        man_path = build_corpus(tmp_path, n_clean=3)
        man = load_manifest(man_path)
        scores = man.external_scores["paq2piq"]
        lines = scores.read_text().strip().splitlines()
        dropped = lines[-1].split(",")[0]
        scores.write_text("\n".join(lines[:-1]) + "\n")
        table = ScoreEngine(man, corpus_config(), metrics="PaQ-2-PiQ").run()
        assert table.reasons[(dropped, "PaQ-2-PiQ")].startswith("DomainError")
        others = [i for i in table.image_ids if i != dropped]
        col = table.values[:, 0]
        assert all(
            np.isfinite(col[table.image_ids.index(i)]) for i in others
        )


class TestPreprocessing:
    def _hu_manifest(self, tmp_path):
        rng = np.random.default_rng(3)
        base = rng.uniform(-900.0, 300.0, size=(40, 40))
        noisy = base + rng.normal(0.0, 25.0, size=(40, 40))
        for name, vals in (("ld", base), ("dn", noisy), ("hd", base)):
            img = image_from_values(vals, 40, 40, Domain.HU)
            save_image(img, tmp_path / f"{name}.iqai")
        doc = {"images": [{"id": "a", "low_dose": "ld.iqai",
                           "denoised": "dn.iqai", "reference": "hd.iqai"}]}
        p = tmp_path / "manifest.json"
        p.write_text(json.dumps(doc))
        return p, base, noisy

    def test_hu_rasters_windowed_and_resized(self, tmp_path):
        p, base, noisy = self._hu_manifest(tmp_path)
        cfg = corpus_config(resize_width=32, resize_height=32)
        table = ScoreEngine(load_manifest(p), cfg, metrics="MSE").run()
        window = WindowSpec(cfg.window_center, cfg.window_width)
        expect = mse(
            preprocess(image_from_values(noisy, 40, 40, Domain.HU),
                       window=window, size=(32, 32)),
            preprocess(image_from_values(base, 40, 40, Domain.HU),
                       window=window, size=(32, 32)),
        )
        assert table.values[0, 0] == expect

    def test_psnr_peak_from_image(self, corpus):
        cfg = corpus_config(psnr_peak_from_image=True)
        table = ScoreEngine(corpus, cfg, metrics=["MSE", "PSNR"]).run()
        for i, image_id in enumerate(table.image_ids):
            entry = corpus.entry(image_id)
            peak = float(np.max(load_image(entry.denoised).pixels))
            expected = 10.0 * math.log10(peak * peak / table.values[i, 0])
            assert table.values[i, 1] == pytest.approx(expected, rel=1e-12)

    def test_psnr_peak_needs_positive_maximum(self, tmp_path):
        dark = np.full((16, 16), -0.5)
        ref = np.zeros((16, 16))
        save_image(image_from_values(dark, 16, 16, Domain.NORMALIZED),
                   tmp_path / "dn.iqai")
        save_image(image_from_values(ref, 16, 16, Domain.NORMALIZED),
                   tmp_path / "hd.iqai")
        doc = {"images": [{"id": "a", "low_dose": "dn.iqai",
                           "denoised": "dn.iqai", "reference": "hd.iqai"}]}
        (tmp_path / "m.json").write_text(json.dumps(doc))
        cfg = corpus_config(psnr_peak_from_image=True)
        table = ScoreEngine(load_manifest(tmp_path / "m.json"), cfg,
                            metrics="PSNR").run()
        assert table.reasons[("a", "PSNR")].startswith("DegenerateInputError")
