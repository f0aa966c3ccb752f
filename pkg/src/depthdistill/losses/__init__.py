from .photometric import SsimConfig, SsimResult, PhotometricResult, ssim_map, pe
from .distill import (
    AlignmentParams,
    AlignmentFit,
    RansacConfig,
    DistillConfig,
    DistillResult,
    invert_expert,
    apply_alignment,
    align_least_squares,
    align_ransac,
    stat_loss,
    sobel,
    sobel_adjoint,
    turn_on_level,
    soft_sign,
    soft_binarize,
    spatial_loss,
    edges,
    dist_loss,
)

__all__ = [
    "SsimConfig",
    "SsimResult",
    "PhotometricResult",
    "ssim_map",
    "pe",
    "AlignmentParams",
    "AlignmentFit",
    "RansacConfig",
    "DistillConfig",
    "DistillResult",
    "invert_expert",
    "apply_alignment",
    "align_least_squares",
    "align_ransac",
    "stat_loss",
    "sobel",
    "sobel_adjoint",
    "turn_on_level",
    "soft_sign",
    "soft_binarize",
    "spatial_loss",
    "edges",
    "dist_loss",
]
