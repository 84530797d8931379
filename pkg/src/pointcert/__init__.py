"""Robustness certification of point-cloud networks under semantic
transformations: parameterized linear relaxations of 3D transforms
propagated through PointNet-style models with sound output bounds."""

from .maxpool_relax import MaxPoolConfig, PoolGroup, grouped_maxpool, relax_group
from .network import (
    LayerSpec,
    Model,
    build_classification,
    build_segmentation,
    fold_batchnorm,
    forward,
    forward_batch,
    load_labels,
    load_model,
    load_xyz,
    save_labels,
    save_model,
    save_xyz,
    validate_model,
)
from .oracle import (
    AttackResult,
    SoundnessReport,
    check_network_bounds,
    check_transform_bounds,
    empirical_attack,
    sample_params,
)
from .taylor_relax import LinearBounds, SplitGrid, split, taylor_bounds
from .transforms import (
    ParamBox,
    Point3,
    PointCloud,
    TransformSpec,
    apply,
    apply_cloud,
    apply_points,
    hessian_params_interval,
    jacobian_params,
    jacobian_point,
    parse_param_box,
    parse_transform,
)
from .verifier import (
    InputAbstraction,
    Propagation,
    SegmentationVerdict,
    Verdict,
    certify_classification,
    certify_segmentation,
    layer_gap_report,
    linf_input,
    propagate,
    semantic_input,
)

__version__ = "1.0.0"

__all__ = [
    "AttackResult",
    "InputAbstraction",
    "LayerSpec",
    "LinearBounds",
    "MaxPoolConfig",
    "Model",
    "ParamBox",
    "Point3",
    "PointCloud",
    "PoolGroup",
    "Propagation",
    "SegmentationVerdict",
    "SoundnessReport",
    "SplitGrid",
    "TransformSpec",
    "Verdict",
    "apply",
    "apply_cloud",
    "apply_points",
    "build_classification",
    "build_segmentation",
    "certify_classification",
    "certify_segmentation",
    "check_network_bounds",
    "check_transform_bounds",
    "empirical_attack",
    "fold_batchnorm",
    "forward",
    "forward_batch",
    "grouped_maxpool",
    "hessian_params_interval",
    "jacobian_params",
    "jacobian_point",
    "layer_gap_report",
    "linf_input",
    "load_labels",
    "load_model",
    "load_xyz",
    "parse_param_box",
    "parse_transform",
    "propagate",
    "relax_group",
    "sample_params",
    "save_labels",
    "save_model",
    "save_xyz",
    "semantic_input",
    "split",
    "taylor_bounds",
    "validate_model",
]
