"""Command-line front end: certification runs, relaxation dumps, benchmarks.

Commands: certify, relax, bench, selftest, inspect. Angles accept a
`deg` suffix anywhere a number is expected; everything internal is
radians. Exit codes: 0 success/certified, 1 not certified (or selftest
violations), 2 usage or data errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import network as nw
from . import oracle as oc
from . import taylor_relax as tr
from . import transforms as tf
from . import verifier as vf
from .maxpool_relax import MaxPoolConfig

REPORT_VERSION = 1

_SELFTEST_SPECS = ("rotz", "rotx", "roty", "rotzx", "rotzyx",
                   "shear", "twist", "taper")


def _threads_default() -> int:
    env = os.environ.get("POINTCERT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise ValueError(f"POINTCERT_THREADS must be an integer: {env!r}") from e
    return 1


def _parse_granularity(text: str, k: int) -> np.ndarray:
    parts = [p.strip() for p in text.split(",")]
    vals = np.array([tf.parse_angle_value(p) for p in parts])
    if vals.size == 1:
        vals = np.full(k, vals[0])
    if vals.size != k:
        raise ValueError(f"granularity needs 1 or {k} values, got {vals.size}")
    if np.any(vals <= 0):
        raise ValueError("granularity must be positive")
    return vals


def _maxpool_config(args) -> MaxPoolConfig:
    return MaxPoolConfig(strategy=args.maxpool,
                         group_size=args.maxpool_group_size,
                         cap=args.maxpool_cap)


def _load_model(path: str) -> nw.Model:
    model = nw.load_model(path)
    if any(l.kind == "BatchNorm" for l in model.layers):
        model = nw.fold_batchnorm(model)
    return model


def _write_report(args, report: dict):
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")


def cmd_certify(args) -> int:
    model = _load_model(args.model)
    cloud = nw.load_xyz(args.points)
    config = _maxpool_config(args)
    threads = args.threads if args.threads else _threads_default()
    semantic = args.transform is not None
    if semantic == (args.linf_eps is not None):
        raise ValueError("choose exactly one of --transform/--range or --linf-eps")

    report = {
        "report_version": REPORT_VERSION,
        "config": {
            "model": args.model, "points": args.points,
            "transform": args.transform, "range": args.range,
            "linf_eps": args.linf_eps, "granularity": args.granularity,
            "maxpool": {"strategy": config.strategy,
                        "group_size": config.group_size, "cap": config.cap},
            "threads": threads, "seed": args.seed,
        },
        "task": model.task,
    }

    if semantic:
        if args.range is None:
            raise ValueError("--transform requires --range")
        spec = tf.parse_transform(args.transform)
        box = tf.parse_param_box(args.range, spec.param_count)
        splits = (_parse_granularity(args.granularity, box.k)
                  if args.granularity else None)
        gap_abs = vf.semantic_input(spec, cloud, box)
    else:
        if args.granularity:
            raise ValueError("--granularity applies to --transform mode only")
        spec, box, splits = None, None, None
        gap_abs = vf.linf_input(cloud, args.linf_eps)

    if model.task == "segmentation":
        if not args.labels:
            raise ValueError("segmentation models need --labels")
        if not semantic:
            raise ValueError("segmentation certification is transform-mode only")
        labels = nw.load_labels(args.labels)
        verdict = vf.certify_segmentation(model, cloud, labels, spec, box,
                                          splits, config=config, threads=threads)
        certified = verdict.correct_count > 0 and verdict.ratio == 1.0
        report["verdict"] = {
            "certified": certified, "ratio": verdict.ratio,
            "correct_points": verdict.correct_count,
            "certified_points": verdict.certified_count,
            "points": [{"index": p.index, "correct": p.correct,
                        "certified": p.certified,
                        "margin": None if not math.isfinite(p.margin) else p.margin}
                       for p in verdict.points],
        }
        report["wall_time_s"] = verdict.wall_time_s
        print(f"certified points: {verdict.certified_count}/{verdict.correct_count}"
              f" correctly labeled (ratio {verdict.ratio:.3f})")
    else:
        target = args.label
        if target is None:
            target = int(np.argmax(nw.forward(model, cloud)))
        verdict = vf.certify_classification(model, cloud, spec, box if semantic
                                            else gap_abs, splits,
                                            target_label=target,
                                            config=config, threads=threads)
        certified = verdict.certified
        report["verdict"] = {
            "certified": verdict.certified,
            "margin": None if not math.isfinite(verdict.margin) else verdict.margin,
            "interval_margin": (None if not math.isfinite(verdict.interval_margin)
                                else verdict.interval_margin),
            "predicted": verdict.predicted, "target": verdict.target,
            "misclassified": verdict.misclassified,
        }
        report["cells"] = [
            {"box": None if c.box is None else
             {"lo": c.box.lo.tolist(), "hi": c.box.hi.tolist()},
             "margin": c.margin, "interval_margin": c.interval_margin,
             "certified": c.certified}
            for c in verdict.cells]
        report["wall_time_s"] = verdict.wall_time_s
        state = "certified" if verdict.certified else "not certified"
        if verdict.misclassified:
            state += " (misclassified: model predicts "
            state += f"{verdict.predicted}, target {verdict.target})"
            print(f"verdict: {state}")
        else:
            print(f"verdict: {state}")
            print(f"margin: {verdict.margin:.6g} over {len(verdict.cells)} "
                  f"cell(s), interval margin {verdict.interval_margin:.6g}")

    prop = vf.propagate(model, gap_abs, config)
    report["layer_gaps"] = [[label, gap] for label, gap
                            in vf.layer_gap_report(prop)]
    _write_report(args, report)
    print(f"wall time: {report['wall_time_s']:.3f}s")
    return 0 if certified else 1


def _dump_bounds(fh, spec, box, bounds):
    k = box.k
    fh.write("# pointcert bounds dump v1\n")
    fh.write(f"# transform: {spec}\n")
    lo = " ".join(f"{v:.17g}" for v in box.lo)
    hi = " ".join(f"{v:.17g}" for v in box.hi)
    fh.write(f"# box_lo: {lo}\n# box_hi: {hi}\n")
    fh.write(f"# columns: point coord w_l[{k}] b_l w_u[{k}] b_u\n")
    n = bounds.b_l.shape[0]
    for p in range(n):
        for c in range(3):
            row = [str(p), "xyz"[c]]
            row += [f"{v:.17g}" for v in bounds.w_l[p, c]]
            row.append(f"{bounds.b_l[p, c]:.17g}")
            row += [f"{v:.17g}" for v in bounds.w_u[p, c]]
            row.append(f"{bounds.b_u[p, c]:.17g}")
            fh.write(" ".join(row) + "\n")


def parse_bounds_dump(path: str):
    """Read a relax dump back into (spec, box, LinearBounds)."""
    header = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    header[key.strip()] = val.strip()
                continue
            rows.append(line.split())
    try:
        spec = tf.parse_transform(header["transform"])
        lo = np.array([float(v) for v in header["box_lo"].split()])
        hi = np.array([float(v) for v in header["box_hi"].split()])
    except KeyError as e:
        raise ValueError(f"dump {path} is missing header field {e}") from e
    box = tf.ParamBox(lo, hi)
    k = box.k
    if not rows:
        raise ValueError(f"dump {path} has no bound rows")
    n = len(rows) // 3
    w_l = np.zeros((n, 3, k))
    b_l = np.zeros((n, 3))
    w_u = np.zeros((n, 3, k))
    b_u = np.zeros((n, 3))
    for row in rows:
        p = int(row[0])
        c = "xyz".index(row[1])
        vals = [float(v) for v in row[2:]]
        if len(vals) != 2 * k + 2:
            raise ValueError(f"dump {path}: row has {len(vals)} values, "
                             f"expected {2 * k + 2}")
        w_l[p, c] = vals[:k]
        b_l[p, c] = vals[k]
        w_u[p, c] = vals[k + 1:2 * k + 1]
        b_u[p, c] = vals[2 * k + 1]
    return spec, box, tr.LinearBounds(w_l=w_l, b_l=b_l, w_u=w_u, b_u=b_u, box=box)


def cmd_relax(args) -> int:
    spec = tf.parse_transform(args.transform)
    box = tf.parse_param_box(args.range, spec.param_count)
    cloud = nw.load_xyz(args.points)
    bounds = tr.taylor_bounds(spec, cloud, box)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            _dump_bounds(fh, spec, box, bounds)
        print(f"wrote {3 * len(cloud)} bound rows to {args.output}")
    else:
        _dump_bounds(sys.stdout, spec, box, bounds)
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    spec = tf.parse_transform(args.transform)
    box = tf.parse_param_box(args.range, spec.param_count)
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'points':>10} {'time_s':>10} {'pts_per_s':>12}  digest")
    for size in sizes:
        pts = rng.standard_normal((size, 3))
        cloud = tf.PointCloud(pts)
        t0 = time.perf_counter()
        bounds = tr.taylor_bounds(spec, cloud, box)
        dt = time.perf_counter() - t0
        digest = hashlib.sha256(
            b"".join(np.ascontiguousarray(a).tobytes() for a in
                     (bounds.w_l, bounds.b_l, bounds.w_u, bounds.b_u))
        ).hexdigest()[:16]
        rows.append({"points": size, "time_s": dt,
                     "points_per_s": size / dt if dt > 0 else float("inf"),
                     "digest": digest})
        print(f"{size:>10} {dt:>10.4f} {size / dt:>12.0f}  {digest}")
    report = {"report_version": REPORT_VERSION,
              "config": {"transform": args.transform, "range": args.range,
                         "sizes": sizes, "seed": args.seed},
              "bench": rows}
    _write_report(args, report)
    return 0


def _selftest_builtin(seed: int, inject_fault: bool):
    rng = np.random.default_rng(seed)
    checks = []
    for i, name in enumerate(_SELFTEST_SPECS):
        spec = tf.parse_transform(name)
        k = spec.param_count
        cloud = tf.PointCloud(rng.standard_normal((24, 3)))
        box = tf.ParamBox(-rng.uniform(0.05, 0.4, k), rng.uniform(0.05, 0.4, k))
        bounds = tr.taylor_bounds(spec, cloud, box)
        if inject_fault and i == 0:
            bounds = tr.LinearBounds(w_l=bounds.w_l, b_l=bounds.b_l,
                                     w_u=bounds.w_u, b_u=bounds.b_u - 0.05,
                                     box=box)
        rep = oc.check_transform_bounds(spec, cloud, box, bounds,
                                        samples=400, seed=seed)
        checks.append((f"transform {name}", rep))
    model = nw.fold_batchnorm(
        nw.build_classification(3, widths=(8, 8), head=(8,), seed=seed))
    cloud = tf.PointCloud(rng.standard_normal((16, 3)))
    spec = tf.parse_transform("rotz")
    box = tf.ParamBox([-0.1], [0.1])
    ab = vf.semantic_input(spec, cloud, box)
    prop = vf.propagate(model, ab)
    checks.append(("network semantic",
                   oc.check_network_bounds(model, ab, prop, samples=30,
                                           seed=seed)))
    ab2 = vf.linf_input(cloud, 0.02)
    prop2 = vf.propagate(model, ab2)
    checks.append(("network linf",
                   oc.check_network_bounds(model, ab2, prop2, samples=30,
                                           seed=seed)))
    pred = int(np.argmax(nw.forward(model, cloud)))
    verdict = vf.certify_classification(model, cloud, spec, box,
                                        target_label=pred)
    attack = oc.empirical_attack(model, cloud, spec, box, samples=1000,
                                 seed=seed)
    consistent = (not verdict.certified) or (not attack.flipped)
    checks.append(("certify vs attack",
                   oc.SoundnessReport(samples=attack.samples,
                                      violations=0 if consistent else 1,
                                      worst=0.0 if consistent else
                                      -attack.worst_margin,
                                      max_slack=0.0)))
    return checks


def cmd_selftest(args) -> int:
    if args.check_bounds:
        if not args.points:
            raise ValueError("--check-bounds requires --points")
        spec, box, bounds = parse_bounds_dump(args.check_bounds)
        cloud = nw.load_xyz(args.points)
        if bounds.b_l.shape[0] != len(cloud):
            raise ValueError(
                f"dump covers {bounds.b_l.shape[0]} points, file has {len(cloud)}")
        rep = oc.check_transform_bounds(spec, cloud, box, bounds,
                                        samples=args.samples, seed=args.seed)
        print(f"check-bounds: {rep.samples} samples, {rep.violations} "
              f"violations, worst {rep.worst:.3g}, slack {rep.max_slack:.3g}")
        return 0 if rep.passed else 1
    checks = _selftest_builtin(args.seed, args.inject_fault)
    failed = 0
    for name, rep in checks:
        state = "ok" if rep.passed else "FAIL"
        print(f"{state:4s} {name}: {rep.samples} samples, "
              f"{rep.violations} violations, worst {rep.worst:.3g}")
        if not rep.passed:
            failed += 1
    print(f"selftest: {len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


def cmd_inspect(args) -> int:
    model = nw.load_model(args.model)
    warnings = nw.validate_model(model)
    n_params = sum(l.weights.size + l.bias.size for l in model.layers
                   if l.weights is not None)
    print(f"task: {model.task}, classes: {model.num_classes}, "
          f"num_points: {model.num_points or 'any'}")
    print(f"layers: {len(model.layers)}, parameters: {n_params}")
    for l in model.layers:
        per, width = model.shape_of(l.id)
        shape = f"({'n, ' if per else ''}{width})"
        extra = ""
        if l.weights is not None:
            extra = f" {l.in_features}->{l.out_features}"
        print(f"  [{l.id}] {l.kind}{extra} -> {shape} "
              f"inputs={list(l.inputs)}")
    for w in warnings:
        print(f"warning: {w}")
    report = {"report_version": REPORT_VERSION, "model": args.model,
              "task": model.task, "num_classes": model.num_classes,
              "num_points": model.num_points, "parameters": int(n_params),
              "warnings": warnings}
    if args.eval:
        folded = _load_model(args.model)
        cloud = nw.load_xyz(args.eval)
        logits = nw.forward(folded, cloud)
        report["logits"] = logits.tolist()
        print("logits: " + json.dumps(logits.tolist()))
    _write_report(args, report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointcert",
        description="Certification of point-cloud networks under semantic "
                    "transformations.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_maxpool(p):
        p.add_argument("--maxpool", choices=("interval", "baseline", "improved"),
                       default="improved", help="max-pool relaxation strategy")
        p.add_argument("--maxpool-group-size", type=int, default=4)
        p.add_argument("--maxpool-cap", type=int, default=10)

    c = sub.add_parser("certify", help="certify a model over a parameter box")
    c.add_argument("--model", required=True)
    c.add_argument("--points", required=True)
    c.add_argument("--labels", help="per-point labels (segmentation)")
    c.add_argument("--transform", help="transform expression, e.g. rotz or twist*rotz")
    c.add_argument("--range", help="per-parameter ranges lo..hi, comma separated")
    c.add_argument("--linf-eps", type=float, help="per-coordinate epsilon box")
    c.add_argument("--granularity", help="split cell width per parameter")
    c.add_argument("--label", type=int, help="target label (default: predicted)")
    add_maxpool(c)
    c.add_argument("--threads", type=int,
                   help="worker threads (default: POINTCERT_THREADS or 1)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--output", help="write a JSON report here")
    c.set_defaults(func=cmd_certify)

    r = sub.add_parser("relax", help="dump transform relaxation bounds")
    r.add_argument("--transform", required=True)
    r.add_argument("--range", required=True)
    r.add_argument("--points", required=True)
    r.add_argument("--output")
    r.set_defaults(func=cmd_relax)

    b = sub.add_parser("bench", help="time relaxation computation")
    b.add_argument("--sizes", default="100000,200000,300000")
    b.add_argument("--transform", default="rotz")
    b.add_argument("--range", default="-1 deg..1 deg")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--output")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("selftest", help="run the sampling oracle suite")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--inject-fault", action="store_true",
                   help="corrupt one bound to prove the checks can fail")
    s.add_argument("--check-bounds", metavar="DUMP",
                   help="validate a relax dump against sampled transforms")
    s.add_argument("--points", help="points file for --check-bounds")
    s.set_defaults(func=cmd_selftest)

    i = sub.add_parser("inspect", help="print a model summary")
    i.add_argument("--model", required=True)
    i.add_argument("--eval", metavar="POINTS",
                   help="also run the model on a points file and print logits")
    i.add_argument("--output")
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
