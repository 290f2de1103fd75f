"""Illumination-aware color/thermal pedestrian detection."""

from ._core import (
    BBox,
    DetectorModel,
    IanModel,
    annotations_roundtrip,
    default_config,
    fuse_scores,
    fusion_weights,
    gate,
    ioa,
    iou,
    key_estimate,
    log_average_miss_rate,
    nms,
    normalize_config,
    range_estimate,
    synth_frame,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "DetectorModel",
    "IanModel",
    "annotations_roundtrip",
    "default_config",
    "fuse_scores",
    "fusion_weights",
    "gate",
    "ioa",
    "iou",
    "key_estimate",
    "log_average_miss_rate",
    "nms",
    "normalize_config",
    "range_estimate",
    "synth_frame",
]
