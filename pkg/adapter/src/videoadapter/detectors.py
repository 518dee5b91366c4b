"""Landmark detector backends.

A detector is a callable taking one BGR frame (H, W, 3 uint8) and returning
either a (68, 2) float array of iBUG-68 landmark pixel coordinates
(0-based indexing, p0..p67) or None when no face is found.

Backends are looked up by name so deployments can plug in whatever tooling
they have. The bundled production backend wraps dlib's frontal face detector
plus its 68-point shape predictor; it imports dlib lazily and needs the
predictor model file supplied via the adapter config.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class AdapterError(ValueError):
    """Unusable input or configuration for the adapter."""


Detector = Callable[[np.ndarray], Optional[np.ndarray]]

_REGISTRY: dict[str, Callable[..., Detector]] = {}


def register_detector(name: str, factory: Callable[..., Detector]) -> None:
    """Register a backend; `factory(model_path=...)` must return a Detector."""
    _REGISTRY[name] = factory


def available_detectors() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def make_detector(name: str, model_path: Optional[str] = None) -> Detector:
    if name not in _REGISTRY:
        raise AdapterError(
            f"unknown detector backend {name!r}; available: {', '.join(available_detectors())}"
        )
    return _REGISTRY[name](model_path=model_path)


class DlibLandmarkDetector:
    """dlib frontal-face detection + 68-point shape prediction.

    Picks the largest detected face. The shape-predictor model file is not
    redistributable with this package and must be supplied by the user.
    """

    def __init__(self, model_path: Optional[str]):
        try:
            import dlib
        except ImportError as e:
            raise AdapterError(
                "the 'dlib' backend requires the dlib package (pip install dlib)"
            ) from e
        if not model_path:
            raise AdapterError("the 'dlib' backend needs detector_model=<shape predictor path>")
        self._detector = dlib.get_frontal_face_detector()
        try:
            self._predictor = dlib.shape_predictor(model_path)
        except RuntimeError as e:
            raise AdapterError(f"cannot load shape predictor {model_path!r}: {e}") from e

    def __call__(self, frame_bgr: np.ndarray) -> Optional[np.ndarray]:
        import cv2

        gray = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2GRAY)
        rects = self._detector(gray, 0)
        if not rects:
            return None
        rect = max(rects, key=lambda r: r.width() * r.height())
        shape = self._predictor(gray, rect)
        return np.array([[p.x, p.y] for p in shape.parts()], dtype=float)


register_detector("dlib", lambda model_path=None: DlibLandmarkDetector(model_path))
