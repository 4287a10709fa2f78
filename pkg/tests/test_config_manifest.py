"""Configuration round-trips and corpus-manifest validation."""
import json

import numpy as np
import pytest

from ctiqa import (
    Config,
    Domain,
    DomainError,
    FileFormatError,
    config_from_dict,
    image_from_values,
    load_config,
    load_manifest,
    override,
    save_image,
)


class TestConfig:
    def test_defaults(self):
        cfg = Config()
        assert cfg.window_center == -500.0
        assert cfg.window_width == 1400.0
        assert cfg.preprocess_order == ("window", "resize")
        assert (cfg.resize_width, cfg.resize_height) == (256, 256)
        assert (cfg.patch_size, cfg.patch_stride) == (50, 25)
        assert cfg.psnr_peak == 2.0 and not cfg.psnr_peak_from_image
        assert cfg.strength_edges == (0.3, 0.6, 0.8)
        assert cfg.cv_folds == 10 and cfg.seed == 0

    def test_dict_round_trip(self):
        cfg = Config(seed=7, raps_bins=48, tree_max_depth=None,
                     psnr_peak_from_image=True)
        again = config_from_dict(cfg.to_dict())
        assert again == cfg

    def test_json_round_trip_via_file(self, tmp_path):
        cfg = Config(window_center=40.0, window_width=400.0, cv_folds=5)
        p = tmp_path / "cfg.json"
        p.write_text(cfg.to_json())
        assert load_config(p) == cfg

    def test_partial_document_keeps_defaults(self):
        cfg = config_from_dict({"seed": 9, "kid": {"subset_size": 20}})
        assert cfg.seed == 9
        assert cfg.kid_subset_size == 20
        assert cfg.kid_subsets == Config().kid_subsets
        assert cfg.window_center == -500.0

    def test_digest_stability_and_sensitivity(self):
        a, b = Config(), Config()
        assert a.digest() == b.digest()
        assert len(a.digest()) == 64
        assert set(a.digest()) <= set("0123456789abcdef")
        assert Config(seed=1).digest() != a.digest()
        assert Config(raps_bins=65).digest() != a.digest()

    def test_unknown_section_rejected(self):
        with pytest.raises(FileFormatError):
            config_from_dict({"windows": {"center": 0}})

    def test_unknown_key_in_section_rejected(self):
        with pytest.raises(FileFormatError):
            config_from_dict({"ssim": {"k3": 0.1}})
        with pytest.raises(FileFormatError):
            config_from_dict({"preprocess": {"sequence": ["window"]}})

    def test_non_object_root_rejected(self):
        with pytest.raises(FileFormatError):
            config_from_dict([1, 2, 3])

    def test_malformed_file_rejected(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(FileFormatError):
            load_config(p)
        with pytest.raises(FileFormatError):
            load_config(tmp_path / "absent.json")

    def test_preprocess_order_validation(self):
        swapped = Config(preprocess_order=("resize", "window"))
        assert swapped.preprocess_order == ("resize", "window")
        with pytest.raises(DomainError):
            Config(preprocess_order=("window",))
        with pytest.raises(DomainError):
            Config(preprocess_order=("window", "window"))
        with pytest.raises(DomainError):
            Config(preprocess_order=("window", "resize", "window"))

    def test_geometry_validation(self):
        with pytest.raises(DomainError):
            Config(resize_width=0)
        with pytest.raises(DomainError):
            Config(patch_stride=0)
        with pytest.raises(DomainError):
            Config(patch_size=-3)

    def test_override_updates_and_drops_none(self):
        base = Config()
        out = override(base, seed=3, raps_bins=None, cv_folds=4)
        assert out.seed == 3 and out.cv_folds == 4
        assert out.raps_bins == base.raps_bins
        assert base.seed == 0  # original untouched

    def test_override_rejects_unknown_field(self):
        with pytest.raises(DomainError):
            override(Config(), bogus=1)


def _tiny_image(tmp_path, name, fill=0.25):
    vals = np.full((12, 12), fill)
    img = image_from_values(vals, 12, 12, Domain.NORMALIZED)
    path = tmp_path / name
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(img, path)
    return name


def _write_manifest(tmp_path, doc, name="manifest.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


class TestManifest:
    def _basic_doc(self, tmp_path, n=2, **extra):
        images = []
        for i in range(n):
            images.append({
                "id": f"img{i}",
                "low_dose": _tiny_image(tmp_path, f"ld/{i}.iqai", 0.1),
                "denoised": _tiny_image(tmp_path, f"dn/{i}.iqai", 0.2),
            })
        doc = {"images": images}
        doc.update(extra)
        return doc

    def test_happy_path_resolves_against_manifest_dir(self, tmp_path):
        doc = self._basic_doc(tmp_path)
        doc["images"][0]["reference"] = _tiny_image(tmp_path, "hd/0.iqai")
        doc["images"][0]["patient"] = "p01"
        doc["images"][0]["tissue_mask"] = _tiny_image(tmp_path, "m/t0.iqai")
        doc["images"][0]["air_mask"] = _tiny_image(tmp_path, "m/a0.iqai")
        man = load_manifest(_write_manifest(tmp_path, doc))
        assert len(man.entries) == 2
        e0 = man.entry("img0")
        assert e0.low_dose == tmp_path / "ld/0.iqai"
        assert e0.reference == tmp_path / "hd/0.iqai"
        assert e0.patient_id == "p01"
        assert e0.tissue_mask == tmp_path / "m/t0.iqai"
        e1 = man.entry("img1")
        assert e1.reference is None and e1.patient_id is None
        assert e1.tissue_mask is None and e1.air_mask is None
        assert man.root == tmp_path
        with pytest.raises(KeyError):
            man.entry("nope")

    def test_resource_maps(self, tmp_path):
        (tmp_path / "emb").mkdir()
        (tmp_path / "emb/x.iqae").write_bytes(b"\x00")
        (tmp_path / "scores.csv").write_text("id,score\n")
        doc = self._basic_doc(
            tmp_path,
            embeddings={"lpips1_denoised": "emb/x.iqae"},
            external_scores={"paq2piq": "scores.csv"},
        )
        man = load_manifest(_write_manifest(tmp_path, doc))
        assert man.embeddings["lpips1_denoised"] == tmp_path / "emb/x.iqae"
        assert man.external_scores["paq2piq"] == tmp_path / "scores.csv"
        assert man.models == {}

    def test_duplicate_id_rejected(self, tmp_path):
        doc = self._basic_doc(tmp_path)
        doc["images"][1]["id"] = "img0"
        with pytest.raises(FileFormatError, match="duplicate"):
            load_manifest(_write_manifest(tmp_path, doc))

    def test_unknown_root_key_rejected(self, tmp_path):
        doc = self._basic_doc(tmp_path, notes="hello")
        with pytest.raises(FileFormatError, match="unknown manifest keys"):
            load_manifest(_write_manifest(tmp_path, doc))

    def test_missing_file_rejected(self, tmp_path):
        doc = self._basic_doc(tmp_path)
        doc["images"][0]["low_dose"] = "ld/absent.iqai"
        with pytest.raises(FileFormatError, match="not found"):
            load_manifest(_write_manifest(tmp_path, doc))

    def test_required_path_missing_rejected(self, tmp_path):
        doc = self._basic_doc(tmp_path)
        del doc["images"][0]["denoised"]
        with pytest.raises(FileFormatError, match="path missing"):
            load_manifest(_write_manifest(tmp_path, doc))

    def test_bad_id_rejected(self, tmp_path):
        doc = self._basic_doc(tmp_path)
        doc["images"][0]["id"] = ""
        with pytest.raises(FileFormatError):
            load_manifest(_write_manifest(tmp_path, doc))
        doc["images"][0]["id"] = 7
        with pytest.raises(FileFormatError):
            load_manifest(_write_manifest(tmp_path, doc))

    def test_images_must_be_list_of_objects(self, tmp_path):
        with pytest.raises(FileFormatError):
            load_manifest(_write_manifest(tmp_path, {"images": {"id": "x"}}))
        with pytest.raises(FileFormatError):
            load_manifest(_write_manifest(tmp_path, {"images": ["x"]}))

    def test_unknown_embedding_key_rejected(self, tmp_path):
        doc = self._basic_doc(tmp_path, embeddings={"lpips9_denoised": "x"})
        with pytest.raises(FileFormatError, match="unknown embeddings key"):
            load_manifest(_write_manifest(tmp_path, doc))

    def test_empty_path_value_rejected(self, tmp_path):
        (tmp_path / "m.json").write_text(
            json.dumps({"images": [], "models": {"brisque_svr": ""}})
        )
        with pytest.raises(FileFormatError, match="non-empty string"):
            load_manifest(tmp_path / "m.json")

    def test_malformed_json_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{{{{")
        with pytest.raises(FileFormatError):
            load_manifest(p)
        q = tmp_path / "list.json"
        q.write_text("[1, 2]")
        with pytest.raises(FileFormatError, match="object"):
            load_manifest(q)
