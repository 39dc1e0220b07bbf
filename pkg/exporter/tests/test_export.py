"""Artifact set export: file layout, sidecar invariants, reproducibility."""

import json

import numpy as np
import pytest

from spmexport import export, formats, task

RECIPE = dict(seed=0, epochs=1, train_n=600, test_n=200, calib_n=32,
              min_accuracy=0.0)  # deliberately tiny; accuracy not under test


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    out = tmp_path_factory.mktemp("artifact")
    sidecar = export.export_fixture(out, **RECIPE)
    return out, sidecar


class TestArtifactSet:
    def test_all_files_present(self, exported):
        out, _ = exported
        names = {p.name for p in out.iterdir()}
        assert names == {"fixture_cnn.spm", "calib.tns", "test_images.tns",
                         "test_labels.tns", "probe_inputs.tns", "sidecar.json"}

    def test_sidecar_invariants(self, exported):
        out, sidecar = exported
        assert sidecar == json.loads((out / "sidecar.json").read_text())
        assert 0.0 <= sidecar["accuracy"] <= 100.0
        logits = np.array(sidecar["probes"]["logits"])
        assert logits.shape == (16, 10)
        assert np.all(np.isfinite(logits))
        assert sidecar["counts"] == {"train": 600, "test": 200, "calib": 32,
                                     "probes": 16}

    def test_split_files_match_counts(self, exported):
        out, sidecar = exported
        calib = formats.read_tns(out / "calib.tns")
        test_x = formats.read_tns(out / "test_images.tns")
        test_y = formats.read_tns(out / "test_labels.tns")
        probes = formats.read_tns(out / "probe_inputs.tns")
        assert calib.shape == (32, 3, 16, 16)
        assert test_x.shape == (200, 3, 16, 16)
        assert test_y.shape == (200,) and test_y.dtype == np.uint32
        np.testing.assert_array_equal(probes, test_x[:16])

    def test_preprocessing_is_baked_and_recorded(self, exported):
        out, sidecar = exported
        pre = sidecar["preprocessing"]
        calib = formats.read_tns(out / "calib.tns").astype(np.float64)
        raw = calib * np.reshape(pre["std"], (1, 3, 1, 1)) \
            + np.reshape(pre["mean"], (1, 3, 1, 1))
        regen, _ = task.make_split(RECIPE["seed"] + 2, RECIPE["calib_n"])
        np.testing.assert_allclose(raw, regen, atol=1e-3)

    def test_reexport_is_bit_identical(self, exported, tmp_path):
        out, _ = exported
        export.export_fixture(tmp_path, **RECIPE)
        for name in ("fixture_cnn.spm", "calib.tns", "test_images.tns",
                     "test_labels.tns", "probe_inputs.tns", "sidecar.json"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name

    def test_accuracy_floor_enforced(self, tmp_path):
        with pytest.raises(RuntimeError, match="below the"):
            export.export_fixture(tmp_path, **{**RECIPE, "min_accuracy": 101.0})


class TestGraphDescription:
    def test_manifest_structure(self, exported):
        out, _ = exported
        manifest = formats.read_spm_manifest(out / "fixture_cnn.spm")
        graph = manifest["graph"]
        kinds = [n["kind"] for n in graph["nodes"]]
        assert kinds == ["conv2d", "batchnorm2d", "relu", "conv2d",
                         "batchnorm2d", "relu", "globalavgpool", "flatten",
                         "linear"]
        assert graph["output"] == "fc"
        assert graph["metadata"]["num_classes"] == 10
        assert manifest["tensors"]["conv2.weight"]["dims"] == [96, 32, 3, 3]
        total = sum(int(np.prod(t["dims"])) for t in manifest["tensors"].values())
        assert 29_000 <= total <= 31_000
