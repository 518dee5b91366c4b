"""Multimodal learner-engagement detection.

Facial-geometry features (eye aspect ratio, head pose, gaze) and
remote-photoplethysmography features (pulse rate, beat statistics) are
extracted per video and fused by a stacked ensemble into a 4-level
engagement prediction.
"""

from .datamodel import (
    DataError,
    EngagementLabel,
    LandmarkFrame,
    ProbabilityVector,
    RgbTrace,
    VideoRecord,
    parse_manifest,
    parse_video_record,
    serialize_video_record,
)

__all__ = [
    "DataError",
    "EngagementLabel",
    "LandmarkFrame",
    "ProbabilityVector",
    "RgbTrace",
    "VideoRecord",
    "parse_manifest",
    "parse_video_record",
    "serialize_video_record",
]

__version__ = "0.1.0"
