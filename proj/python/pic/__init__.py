"""Point cloud in-context learning: data synthesis, joint patching, metrics,
and checkpoint inference, backed by the C++ core."""

from ._pic import (
    LabelCodebook,
    PatchBatch,
    build_dataset,
    chamfer,
    gen_denoising,
    gen_reconstruction,
    gen_registration,
    gen_segmentation,
    infer,
    joint_sample,
    knn_indices,
    load_sample,
    make_mask,
    metric_cd,
    metric_miou,
    normalize,
    parse_config,
    rotate,
    sample_centers,
)

__all__ = [
    "LabelCodebook",
    "PatchBatch",
    "build_dataset",
    "chamfer",
    "gen_denoising",
    "gen_reconstruction",
    "gen_registration",
    "gen_segmentation",
    "infer",
    "joint_sample",
    "knn_indices",
    "load_sample",
    "make_mask",
    "metric_cd",
    "metric_miou",
    "normalize",
    "parse_config",
    "rotate",
    "sample_centers",
]
