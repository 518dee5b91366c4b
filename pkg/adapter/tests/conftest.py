import math

import cv2
import numpy as np
import pytest

from videoadapter import register_detector

WIDTH, HEIGHT = 320, 240
FACE_BOX = (80, 40, 160, 170)  # x, y, w, h of the drawn face
FOREHEAD_COLOR_BGR = (150, 190, 210)


def fixed_landmarks(width=WIDTH, height=HEIGHT) -> np.ndarray:
    """Deterministic iBUG-68-shaped layout matching the drawn test face."""
    x0, y0, w, h = FACE_BOX
    sx = width / WIDTH
    sy = height / HEIGHT
    pts = np.zeros((68, 2))
    for i in range(17):  # jaw
        a = math.pi * i / 16.0
        pts[i] = (x0 + w / 2 - (w / 2) * math.cos(a), y0 + h * 0.45 + (h * 0.5) * math.sin(a))
    for i in range(5):  # brows (19 and 24 are the ROI anchors)
        pts[17 + i] = (x0 + w * (0.15 + 0.08 * i), y0 + h * 0.30)
        pts[22 + i] = (x0 + w * (0.55 + 0.08 * i), y0 + h * 0.30)
    for i in range(4):  # nose bridge, 30 = tip
        pts[27 + i] = (x0 + w * 0.5, y0 + h * (0.35 + 0.07 * i))
    for i in range(5):
        pts[31 + i] = (x0 + w * (0.42 + 0.04 * i), y0 + h * 0.60)
    for i in range(6):  # eyes
        pts[36 + i] = (x0 + w * (0.22 + 0.04 * i), y0 + h * 0.40)
        pts[42 + i] = (x0 + w * (0.56 + 0.04 * i), y0 + h * 0.40)
    for i in range(12):  # outer lips
        a = 2 * math.pi * i / 12.0
        pts[48 + i] = (x0 + w * (0.5 + 0.15 * math.cos(a)), y0 + h * (0.78 + 0.06 * math.sin(a)))
    for i in range(8):
        a = 2 * math.pi * i / 8.0
        pts[60 + i] = (x0 + w * (0.5 + 0.07 * math.cos(a)), y0 + h * (0.78 + 0.03 * math.sin(a)))
    pts[8] = (x0 + w * 0.5, y0 + h * 0.95)  # chin
    return pts * np.array([sx, sy])


def draw_face_frame(width=WIDTH, height=HEIGHT) -> np.ndarray:
    """One frame with a bright face; the forehead band has a known color."""
    img = np.full((height, width, 3), (70, 80, 90), np.uint8)
    x0, y0, w, h = FACE_BOX
    cv2.ellipse(img, (x0 + w // 2, y0 + h // 2), (w // 2, h // 2), 0, 0, 360, (140, 170, 200), -1)
    # paint the whole band above the brow line with the reference color
    img[: y0 + int(h * 0.30), :] = FOREHEAD_COLOR_BGR
    for ex in (0.30, 0.66):
        cv2.circle(img, (x0 + int(w * ex), y0 + int(h * 0.40)), 6, (30, 30, 30), -1)
    cv2.ellipse(img, (x0 + w // 2, y0 + int(h * 0.78)), (w // 6, h // 18), 0, 0, 360, (50, 50, 120), -1)
    return img


def blank_frame(width=WIDTH, height=HEIGHT) -> np.ndarray:
    return np.zeros((height, width, 3), np.uint8)


def write_video(path, frames, fps=30.0):
    h, w = frames[0].shape[:2]
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, (w, h))
    assert writer.isOpened()
    for f in frames:
        writer.write(f)
    writer.release()
    return path


def brightness_stub(model_path=None):
    """Content-sensitive stand-in detector: a bright face region means a face.

    Returns the fixed layout scaled to the frame, or None when the face area
    is dark (the blank frames the tests use to simulate detection failures).
    """

    def detect(frame_bgr):
        h, w = frame_bgr.shape[:2]
        x0, y0, fw, fh = FACE_BOX
        sx, sy = w / WIDTH, h / HEIGHT
        region = frame_bgr[
            int(y0 * sy) : int((y0 + fh) * sy), int(x0 * sx) : int((x0 + fw) * sx)
        ]
        if region.size == 0 or region.mean() < 40.0:
            return None
        return fixed_landmarks(w, h)

    return detect


register_detector("stub", brightness_stub)


@pytest.fixture
def face_video(tmp_path):
    frames = [draw_face_frame() for _ in range(30)]
    return write_video(tmp_path / "face.avi", frames)


@pytest.fixture
def stub_config():
    from videoadapter import AdapterConfig

    return AdapterConfig(detector="stub")
