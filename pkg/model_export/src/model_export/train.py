"""Desk-scale training and the train_and_export entry point.

Training follows the standard point-cloud pipeline: clouds are centered
and scaled to the unit sphere by the dataset samplers, and each batch is
augmented with a random rotation around the z (up) axis. Zero epochs is
a supported configuration: the untrained model is exported as-is, which
exercises the format path independently of optimization.
"""

import argparse
import sys

import numpy as np
import torch

from . import data
from .export import export_classifier, export_segmenter, write_bundle
from .models import (CLS_HEAD, CLS_WIDTHS, SEG_BOTTLENECK, SEG_HEAD,
                     SEG_WIDTHS, PointNetClassifier, PointNetSegmenter)


def _augment(rng, clouds):
    out = np.empty_like(clouds)
    for i, pts in enumerate(clouds):
        out[i] = data.rotate_z(pts, rng.uniform(0.0, 2.0 * np.pi))
    return out


def _check_finite(loss, epoch):
    if not torch.isfinite(loss):
        raise RuntimeError(f"training diverged at epoch {epoch}: "
                           f"loss {float(loss)}")


def train_classifier(seed=0, num_points=16, widths=CLS_WIDTHS, head=CLS_HEAD,
                     epochs=30, per_class=64, lr=1e-2):
    """Train the 3-shape classifier; returns (model, val_accuracy)."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = PointNetClassifier(len(data.CLASS_NAMES), widths, head)
    clouds, labels = data.classification_set(rng, per_class, num_points)
    vclouds, vlabels = data.classification_set(rng, per_class // 4, num_points)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    y = torch.as_tensor(labels)
    for epoch in range(epochs):
        model.train()
        x = torch.as_tensor(_augment(rng, clouds), dtype=torch.float32)
        perm = torch.randperm(len(x))
        for start in range(0, len(x), 16):
            idx = perm[start:start + 16]
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            _check_finite(loss, epoch)
            loss.backward()
            opt.step()
    model.eval()
    with torch.no_grad():
        pred = model(torch.as_tensor(vclouds, dtype=torch.float32)).argmax(1)
    acc = float((pred.numpy() == vlabels).mean())
    return model, acc


def train_segmenter(seed=0, num_points=16, widths=SEG_WIDTHS,
                    bottleneck=SEG_BOTTLENECK, head=SEG_HEAD, epochs=30,
                    count=96, lr=1e-2):
    """Train the house part segmenter; returns (model, val_accuracy)."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = PointNetSegmenter(len(data.PART_NAMES), widths, bottleneck, head)
    clouds, parts = data.segmentation_set(rng, count, num_points)
    vclouds, vparts = data.segmentation_set(rng, count // 4, num_points)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    y = torch.as_tensor(parts)
    for epoch in range(epochs):
        model.train()
        x = torch.as_tensor(_augment(rng, clouds), dtype=torch.float32)
        perm = torch.randperm(len(x))
        for start in range(0, len(x), 16):
            idx = perm[start:start + 16]
            opt.zero_grad()
            logits = model(x[idx])
            loss = loss_fn(logits.reshape(-1, logits.shape[-1]),
                           y[idx].reshape(-1))
            _check_finite(loss, epoch)
            loss.backward()
            opt.step()
    model.eval()
    with torch.no_grad():
        pred = model(torch.as_tensor(vclouds, dtype=torch.float32)).argmax(-1)
    acc = float((pred.numpy() == vparts).mean())
    return model, acc


def _reference_clouds(task, rng, count, num_points):
    if task == "classification":
        samplers = data._SAMPLERS
        clouds = [data.normalize_cloud(samplers[i % 3](rng, num_points))
                  for i in range(count)]
        return np.asarray(clouds), None
    clouds, labels = data.segmentation_set(rng, count, num_points)
    return clouds, labels


def train_and_export(task, num_points=16, widths=None, seed=0, epochs=30,
                     out_dir="bundle", reference_count=100):
    """Train one model and write its export bundle; returns the bundle."""
    if task == "classification":
        model, acc = train_classifier(seed=seed, num_points=num_points,
                                      widths=widths or CLS_WIDTHS,
                                      epochs=epochs)
        doc = export_classifier(model, num_points)
    elif task == "segmentation":
        model, acc = train_segmenter(seed=seed, num_points=num_points,
                                     widths=widths or SEG_WIDTHS,
                                     epochs=epochs)
        doc = export_segmenter(model, num_points)
    else:
        raise ValueError(f"unknown task {task!r}")
    rng = np.random.default_rng(seed + 9000)
    clouds, labels = _reference_clouds(task, rng, reference_count, num_points)
    metadata = {"task": task, "seed": seed, "epochs": epochs,
                "num_points": num_points, "val_accuracy": acc}
    return write_bundle(doc, clouds, out_dir, metadata, labels=labels)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="pc-export",
        description="Train a tiny point-cloud model and export an "
                    "inference bundle.")
    parser.add_argument("task", choices=("classification", "segmentation"))
    parser.add_argument("--out", required=True, help="bundle directory")
    parser.add_argument("--points", type=int, default=16)
    parser.add_argument("--widths", help="comma-separated encoder widths")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--reference", type=int, default=100,
                        help="number of reference clouds")
    args = parser.parse_args(argv)
    widths = None
    if args.widths:
        widths = tuple(int(w) for w in args.widths.split(","))
    try:
        bundle = train_and_export(args.task, num_points=args.points,
                                  widths=widths, seed=args.seed,
                                  epochs=args.epochs, out_dir=args.out,
                                  reference_count=args.reference)
    except (RuntimeError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {bundle.model_path}")
    print(f"reference clouds: {len(bundle.cloud_paths)}, "
          f"val accuracy: {bundle.metadata['val_accuracy']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
