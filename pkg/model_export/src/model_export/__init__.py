"""Training and export of tiny point-cloud models to a portable format."""

from .data import (CLASS_NAMES, PART_NAMES, classification_set,
                   normalize_cloud, rotate_z, sample_box, sample_house,
                   sample_pyramid, sample_sphere, segmentation_set)
from .export import (BUNDLE_VERSION, FORMAT_VERSION, ExportBundle,
                     export_classifier, export_segmenter, load_bundle,
                     reference_forward, write_bundle)
from .models import PointNetClassifier, PointNetSegmenter
from .train import train_and_export, train_classifier, train_segmenter

__version__ = "0.1.0"

__all__ = [
    "BUNDLE_VERSION",
    "CLASS_NAMES",
    "ExportBundle",
    "FORMAT_VERSION",
    "PART_NAMES",
    "PointNetClassifier",
    "PointNetSegmenter",
    "classification_set",
    "export_classifier",
    "export_segmenter",
    "load_bundle",
    "normalize_cloud",
    "reference_forward",
    "rotate_z",
    "sample_box",
    "sample_house",
    "sample_pyramid",
    "sample_sphere",
    "segmentation_set",
    "train_and_export",
    "train_classifier",
    "train_segmenter",
    "write_bundle",
]
