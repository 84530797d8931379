"""CLI tests: commands, exit codes, and report structure."""

import json
import math

import numpy as np
import pytest

import pointcert.cli as cli
import pointcert.network as nw
import pointcert.oracle as oc
import pointcert.transforms as tf


@pytest.fixture
def workdir(tmp_path):
    model = nw.build_classification(3, widths=(8, 8), head=(8,), seed=0)
    rng = np.random.default_rng(7)
    pts = rng.standard_normal((16, 3))
    mpath = tmp_path / "model.json"
    ppath = tmp_path / "points.xyz"
    nw.save_model(model, mpath)
    nw.save_xyz(pts, ppath)
    return tmp_path, str(mpath), str(ppath), pts


class TestCertify:
    def test_semantic_certifies_fixture(self, workdir, capsys):
        tmp, mpath, ppath, _ = workdir
        out = tmp / "report.json"
        code = cli.main(["certify", "--model", mpath, "--points", ppath,
                         "--transform", "rotz", "--range", "-1 deg..1 deg",
                         "--output", str(out)])
        assert code == 0
        assert "certified" in capsys.readouterr().out
        report = json.loads(out.read_text())
        assert report["report_version"] == 1
        assert report["verdict"]["certified"] is True
        assert report["verdict"]["margin"] > 0
        assert report["cells"][0]["certified"] is True
        assert report["layer_gaps"][0][0] == "input"
        assert report["config"]["maxpool"]["strategy"] == "improved"

    def test_verdict_consistent_with_attack(self, workdir):
        tmp, mpath, ppath, pts = workdir
        code = cli.main(["certify", "--model", mpath, "--points", ppath,
                         "--transform", "rotz", "--range", "-5 deg..5 deg",
                         "--granularity", "2 deg"])
        model = nw.fold_batchnorm(nw.load_model(mpath))
        cloud = tf.PointCloud(pts)
        spec = tf.parse_transform("rotz")
        box = tf.parse_param_box("-5 deg..5 deg", 1)
        attack = oc.empirical_attack(model, cloud, spec, box, samples=3000)
        if code == 0:
            assert not attack.flipped

    def test_degenerate_range_equals_argmax(self, workdir):
        tmp, mpath, ppath, pts = workdir
        model = nw.fold_batchnorm(nw.load_model(mpath))
        pred = int(np.argmax(nw.forward(model, tf.PointCloud(pts))))
        ok = cli.main(["certify", "--model", mpath, "--points", ppath,
                       "--transform", "rotz", "--range", "0..0",
                       "--label", str(pred)])
        assert ok == 0
        out = tmp / "mis.json"
        bad = cli.main(["certify", "--model", mpath, "--points", ppath,
                        "--transform", "rotz", "--range", "0..0",
                        "--label", str((pred + 1) % 3), "--output", str(out)])
        assert bad == 1
        assert json.loads(out.read_text())["verdict"]["misclassified"] is True

    def test_linf_mode(self, workdir):
        tmp, mpath, ppath, _ = workdir
        out = tmp / "linf.json"
        code = cli.main(["certify", "--model", mpath, "--points", ppath,
                         "--linf-eps", "0.001", "--output", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["cells"][0]["box"] is None

    def test_missing_model_exits_2(self, workdir, capsys):
        tmp, _, ppath, _ = workdir
        missing = str(tmp / "nope.json")
        code = cli.main(["certify", "--model", missing, "--points", ppath,
                         "--transform", "rotz", "--range", "0..0"])
        assert code == 2
        assert "nope.json" in capsys.readouterr().err

    def test_mode_selection_errors(self, workdir):
        tmp, mpath, ppath, _ = workdir
        both = cli.main(["certify", "--model", mpath, "--points", ppath,
                         "--transform", "rotz", "--range", "0..0",
                         "--linf-eps", "0.1"])
        neither = cli.main(["certify", "--model", mpath, "--points", ppath])
        gran = cli.main(["certify", "--model", mpath, "--points", ppath,
                         "--linf-eps", "0.1", "--granularity", "1 deg"])
        assert both == neither == gran == 2

    def test_granularity_arity_error(self, workdir):
        tmp, mpath, ppath, _ = workdir
        code = cli.main(["certify", "--model", mpath, "--points", ppath,
                         "--transform", "rotz", "--range", "-1 deg..1 deg",
                         "--granularity", "1 deg,1 deg"])
        assert code == 2

    def test_unknown_transform_exits_2(self, workdir):
        tmp, mpath, ppath, _ = workdir
        code = cli.main(["certify", "--model", mpath, "--points", ppath,
                         "--transform", "warp", "--range", "0..0"])
        assert code == 2

    def test_threads_flag_matches_single(self, workdir, tmp_path):
        tmp, mpath, ppath, _ = workdir
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        base = ["certify", "--model", mpath, "--points", ppath,
                "--transform", "rotz", "--range", "-4 deg..4 deg",
                "--granularity", "2 deg"]
        assert cli.main(base + ["--threads", "1", "--output", str(a)]) == \
            cli.main(base + ["--threads", "4", "--output", str(b)])
        ra = json.loads(a.read_text())
        rb = json.loads(b.read_text())
        assert ra["verdict"]["margin"] == rb["verdict"]["margin"]
        assert [c["margin"] for c in ra["cells"]] == \
            [c["margin"] for c in rb["cells"]]


class TestSegmentationCertify:
    def test_segmentation_report(self, tmp_path, capsys):
        model = nw.build_segmentation(3, widths=(4, 8), bottleneck=8,
                                      head=(8,), seed=1)
        rng = np.random.default_rng(8)
        pts = rng.standard_normal((16, 3))
        folded = nw.fold_batchnorm(model)
        labels = np.argmax(nw.forward(folded, tf.PointCloud(pts)), axis=1)
        mpath = tmp_path / "seg.json"
        ppath = tmp_path / "pts.xyz"
        lpath = tmp_path / "labels.txt"
        out = tmp_path / "report.json"
        nw.save_model(model, mpath)
        nw.save_xyz(pts, ppath)
        nw.save_labels(labels, lpath)
        code = cli.main(["certify", "--model", str(mpath), "--points",
                         str(ppath), "--labels", str(lpath), "--transform",
                         "rotz", "--range", "0..0", "--output", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["task"] == "segmentation"
        assert report["verdict"]["ratio"] == 1.0
        assert len(report["verdict"]["points"]) == 16

    def test_missing_labels_exits_2(self, tmp_path):
        model = nw.build_segmentation(3, widths=(4, 8), bottleneck=8,
                                      head=(8,), seed=1)
        rng = np.random.default_rng(9)
        mpath = tmp_path / "seg.json"
        ppath = tmp_path / "pts.xyz"
        nw.save_model(model, mpath)
        nw.save_xyz(rng.standard_normal((16, 3)), ppath)
        code = cli.main(["certify", "--model", str(mpath), "--points",
                         str(ppath), "--transform", "rotz", "--range", "0..0"])
        assert code == 2


class TestRelax:
    def test_shear_dump_has_equal_intercepts(self, tmp_path, capsys):
        ppath = tmp_path / "p.xyz"
        nw.save_xyz(np.random.default_rng(0).standard_normal((5, 3)), ppath)
        out = tmp_path / "dump.txt"
        code = cli.main(["relax", "--transform", "shear",
                         "--range=-0.2..0.2,-0.1..0.3", "--points", str(ppath),
                         "--output", str(out)])
        assert code == 0
        spec, box, bounds = cli.parse_bounds_dump(str(out))
        assert str(spec) == "shear"
        assert np.allclose(bounds.b_l, bounds.b_u, atol=1e-12)

    def test_rotz_quarter_turn_row_numbers(self, tmp_path):
        ppath = tmp_path / "p.xyz"
        nw.save_xyz(np.array([[1.0, 1.0, 1.0]]), ppath)
        out = tmp_path / "dump.txt"
        code = cli.main(["relax", "--transform", "rotz", "--range",
                         "-90 deg..90 deg", "--points", str(ppath),
                         "--output", str(out)])
        assert code == 0
        _, _, bounds = cli.parse_bounds_dump(str(out))
        q = math.pi ** 2
        assert abs(bounds.w_l[0, 0, 0] + 1.0) < 1e-12
        assert abs(bounds.w_l[0, 1, 0] - 1.0) < 1e-12
        assert abs(bounds.b_l[0, 0] - (1.0 - q / 4)) < 1e-12
        assert abs(bounds.b_u[0, 0] - (1.0 + q / 8)) < 1e-12
        assert abs(bounds.b_l[0, 2] - 1.0) < 1e-12
        assert abs(bounds.b_u[0, 2] - 1.0) < 1e-12

    def test_stdout_dump(self, tmp_path, capsys):
        ppath = tmp_path / "p.xyz"
        nw.save_xyz(np.ones((2, 3)), ppath)
        code = cli.main(["relax", "--transform", "twist",
                         "--range=-0.1..0.1", "--points", str(ppath)])
        assert code == 0
        out = capsys.readouterr().out
        assert "transform: twist" in out
        assert len([l for l in out.splitlines()
                    if l and not l.startswith("#")]) == 6

    def test_dump_revalidates_cleanly(self, tmp_path):
        ppath = tmp_path / "p.xyz"
        nw.save_xyz(np.random.default_rng(1).standard_normal((8, 3)), ppath)
        out = tmp_path / "dump.txt"
        cli.main(["relax", "--transform", "taper*rotz", "--range",
                  "-0.2..0.2,-0.1..0.1,-10 deg..10 deg", "--points",
                  str(ppath), "--output", str(out)])
        code = cli.main(["selftest", "--check-bounds", str(out),
                         "--points", str(ppath), "--samples", "300"])
        assert code == 0

    def test_corrupted_dump_detected(self, tmp_path):
        ppath = tmp_path / "p.xyz"
        nw.save_xyz(np.random.default_rng(2).standard_normal((4, 3)), ppath)
        out = tmp_path / "dump.txt"
        cli.main(["relax", "--transform", "rotz", "--range",
                  "-20 deg..20 deg", "--points", str(ppath),
                  "--output", str(out)])
        lines = out.read_text().splitlines()
        for i, line in enumerate(lines):
            if not line.startswith("#"):
                cols = line.split()
                cols[-1] = str(float(cols[-1]) - 0.5)  # b_u down by 0.5
                lines[i] = " ".join(cols)
                break
        out.write_text("\n".join(lines) + "\n")
        code = cli.main(["selftest", "--check-bounds", str(out),
                         "--points", str(ppath), "--samples", "300"])
        assert code == 1


class TestBench:
    def test_small_bench_runs_and_is_deterministic(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        argv = ["bench", "--sizes", "10,20", "--seed", "3"]
        assert cli.main(argv + ["--output", str(a)]) == 0
        assert cli.main(argv + ["--output", str(b)]) == 0
        ra = json.loads(a.read_text())["bench"]
        rb = json.loads(b.read_text())["bench"]
        assert [r["points"] for r in ra] == [10, 20]
        assert all(r["time_s"] > 0 for r in ra)
        assert [r["digest"] for r in ra] == [r["digest"] for r in rb]


class TestSelftest:
    def test_pristine_passes(self, capsys):
        assert cli.main(["selftest", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert "checks passed" in out

    def test_injected_fault_fails(self, capsys):
        assert cli.main(["selftest", "--seed", "1", "--inject-fault"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_check_bounds_requires_points(self, tmp_path):
        dump = tmp_path / "d.txt"
        dump.write_text("# transform: rotz\n")
        assert cli.main(["selftest", "--check-bounds", str(dump)]) == 2


class TestInspect:
    def test_summary_and_eval(self, workdir, capsys, tmp_path):
        tmp, mpath, ppath, pts = workdir
        out = tmp_path / "inspect.json"
        code = cli.main(["inspect", "--model", mpath, "--eval", ppath,
                         "--output", str(out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "task: classification" in printed
        assert "GlobalMaxPool" in printed
        report = json.loads(out.read_text())
        model = nw.fold_batchnorm(nw.load_model(mpath))
        expected = nw.forward(model, tf.PointCloud(pts))
        assert np.allclose(report["logits"], expected, atol=1e-12)

    def test_missing_model_exits_2(self, tmp_path, capsys):
        code = cli.main(["inspect", "--model", str(tmp_path / "x.json")])
        assert code == 2
