import json

import numpy as np
import pytest
import torch

import model_export.data as data
import model_export.train as train
from model_export.export import (export_classifier, export_segmenter,
                                 load_bundle, reference_forward, write_bundle)
from model_export.models import PointNetClassifier, PointNetSegmenter


def rand_clouds(seed, count, n=16):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, n, 3))


class TestDocument:
    def test_classifier_structure(self):
        doc = export_classifier(PointNetClassifier(3), num_points=16)
        assert doc["format_version"] == 1
        assert doc["task"] == "classification"
        assert doc["num_classes"] == 3
        kinds = [l["kind"] for l in doc["layers"]]
        assert "Dropout" not in kinds
        assert kinds.count("GlobalMaxPool") == 1
        assert kinds[-1] == "Output"
        ids = [l["id"] for l in doc["layers"]]
        assert ids == sorted(set(ids))

    def test_batchnorm_in_statistics_form(self):
        doc = export_classifier(PointNetClassifier(3))
        bn = [l for l in doc["layers"] if l["kind"] == "BatchNorm"]
        assert bn
        for l in bn:
            for field in ("gamma", "beta", "mean", "var", "eps"):
                assert field in l
            assert len(l["mean"]) == l["features"]

    def test_segmenter_concatenate_wiring(self):
        doc = export_segmenter(PointNetSegmenter(3))
        relus = [l["id"] for l in doc["layers"] if l["kind"] == "ReLU"]
        repeat = [l["id"] for l in doc["layers"] if l["kind"] == "Repeat"]
        cat = [l for l in doc["layers"] if l["kind"] == "Concatenate"]
        assert len(cat) == 1 and len(repeat) == 1
        assert cat[0]["inputs"] == relus[:3] + repeat

    def test_weights_are_float32_representable(self):
        doc = export_classifier(PointNetClassifier(3))
        for l in doc["layers"]:
            for field in ("weights", "bias", "gamma", "beta", "mean", "var"):
                if field in l:
                    vals = np.asarray(l[field], np.float64)
                    assert np.all(vals == vals.astype(np.float32))


class TestReferenceForward:
    @pytest.mark.parametrize("task", ["classification", "segmentation"])
    def test_matches_torch_forward(self, task):
        torch.manual_seed(7)
        if task == "classification":
            model = PointNetClassifier(3).eval()
            doc = export_classifier(model)
        else:
            model = PointNetSegmenter(3).eval()
            doc = export_segmenter(model)
        for pts in rand_clouds(7, 5):
            with torch.no_grad():
                want = model(torch.as_tensor(
                    pts[None], dtype=torch.float32))[0].numpy()
            got = reference_forward(doc, pts)
            assert np.abs(got - want).max() < 1e-5

    def test_unknown_kind_raises(self):
        doc = {"layers": [{"id": 1, "kind": "Mystery", "inputs": [0]}]}
        with pytest.raises(ValueError, match="Mystery"):
            reference_forward(doc, np.zeros((4, 3)))


class TestBundle:
    def test_round_trip_is_bitwise(self, tmp_path):
        model = PointNetClassifier(3).eval()
        doc = export_classifier(model, num_points=16)
        bundle = write_bundle(doc, rand_clouds(8, 4), str(tmp_path / "b"),
                              {"task": "classification", "seed": 8})
        loaded = load_bundle(bundle.directory)
        assert loaded.cloud_paths == bundle.cloud_paths
        with open(loaded.model_path) as fh:
            doc2 = json.load(fh)
        for i, rel in enumerate(loaded.cloud_paths):
            pts = np.loadtxt(f"{loaded.directory}/{rel}", ndmin=2)
            again = reference_forward(doc2, pts)
            assert np.array_equal(again, loaded.logits[i])
            assert np.array_equal(again, bundle.logits[i])

    def test_segmentation_bundle_has_labels(self, tmp_path):
        rng = np.random.default_rng(9)
        clouds, parts = data.segmentation_set(rng, 3, 16)
        doc = export_segmenter(PointNetSegmenter(3).eval(), num_points=16)
        bundle = write_bundle(doc, clouds, str(tmp_path / "s"),
                              {"task": "segmentation"}, labels=parts)
        assert len(bundle.label_paths) == 3
        got = np.loadtxt(f"{bundle.directory}/{bundle.label_paths[0]}",
                         dtype=int)
        assert np.array_equal(got, parts[0])


class TestTraining:
    def test_divergence_is_reported(self):
        with pytest.raises(RuntimeError, match="diverged"):
            train._check_finite(torch.tensor(float("nan")), epoch=3)

    def test_untrained_export(self, tmp_path):
        bundle = train.train_and_export("classification", seed=11, epochs=0,
                                        out_dir=str(tmp_path / "u"),
                                        reference_count=3)
        assert len(bundle.logits) == 3
        assert bundle.metadata["epochs"] == 0
        assert 0.0 <= bundle.metadata["val_accuracy"] <= 1.0

    def test_unknown_task_raises(self, tmp_path):
        with pytest.raises(ValueError, match="task"):
            train.train_and_export("detection", out_dir=str(tmp_path))

    def test_cli_writes_bundle(self, tmp_path):
        out = str(tmp_path / "cli")
        rc = train.main(["classification", "--out", out, "--epochs", "0",
                         "--reference", "2", "--seed", "3"])
        assert rc == 0
        loaded = load_bundle(out)
        assert len(loaded.cloud_paths) == 2
