"""Video-to-interchange adapter: 68 facial landmarks + forehead mean RGB per frame."""

from .detectors import AdapterError, available_detectors, make_detector, register_detector
from .extract import AdapterConfig, ExtractionStats, batch_extract, extract_record, forehead_mean_rgb

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "ExtractionStats",
    "available_detectors",
    "batch_extract",
    "extract_record",
    "forehead_mean_rgb",
    "make_detector",
    "register_detector",
]

__version__ = "0.1.0"
