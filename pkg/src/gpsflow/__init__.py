"""GPS-guided day/night dense correspondence and pseudo-label generation."""

__version__ = "0.1.0"

from .confidence import confidence_map, zero_fraction  # noqa: E402
from .correspond import (  # noqa: E402
    correlation,
    fuse_volumes,
    normalize_features,
    scale_flow,
    similarity_map,
    soft_argmax_flow,
)
from .estimators import CorrespondenceMatcher, PseudoLabeler  # noqa: E402
from .geo import GpsFix, RefChoice, apply_gps_noise, haversine, scale_factor, select_reference  # noqa: E402
from .losses import ClassConfig, compose_objectives, warping_loss  # noqa: E402
from .warp import backward_warp, make_pseudolabels  # noqa: E402

__all__ = [
    "ClassConfig",
    "CorrespondenceMatcher",
    "GpsFix",
    "PseudoLabeler",
    "RefChoice",
    "apply_gps_noise",
    "backward_warp",
    "compose_objectives",
    "confidence_map",
    "correlation",
    "fuse_volumes",
    "haversine",
    "make_pseudolabels",
    "normalize_features",
    "scale_factor",
    "scale_flow",
    "select_reference",
    "similarity_map",
    "soft_argmax_flow",
    "warping_loss",
    "zero_fraction",
]
