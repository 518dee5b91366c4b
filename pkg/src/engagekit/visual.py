"""Visual feature extraction from landmark frames.

Level 1 produces per-frame numeric features: eye aspect ratio, head pose
angles recovered by PnP + Rodrigues + Euler decomposition, and the gaze
vector from image center to eye center. Level 2 bins those into categorical
classes (gaze direction, head position, eye openness), and per-video
aggregation turns the categorical sequence into a 15-dimensional vector of
class proportions.

All functions here are pure; per-frame and per-video work parallelizes freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .datamodel import DataError, LandmarkFrame, VideoRecord
from .geometry import CameraModel, rodrigues, rotation_to_euler, solve_pnp

# 0-based iBUG-68 anchor landmarks used for pose: nose tip, chin, left/right
# eye outer corner, left/right mouth corner.
PNP_ANCHOR_INDICES = (30, 8, 36, 45, 48, 54)

# Generic rigid 3D face model in mm, same order as PNP_ANCHOR_INDICES.
FACE_MODEL_MM = np.array(
    [
        [0.0, 0.0, 0.0],        # nose tip
        [0.0, -330.0, -65.0],   # chin
        [-225.0, 170.0, -135.0],  # left eye outer corner
        [225.0, 170.0, -135.0],   # right eye outer corner
        [-150.0, -150.0, -125.0],  # left mouth corner
        [150.0, -150.0, -125.0],   # right mouth corner
    ]
)
FACE_MODEL_MM.setflags(write=False)

LEFT_EYE_INDICES = tuple(range(36, 42))
RIGHT_EYE_INDICES = tuple(range(42, 48))


class DegenerateEyeError(DataError):
    """An eye's horizontal landmark span is zero; the aspect ratio is undefined."""


class GazeDirection(Enum):
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"
    FORWARD = "forward"


class HeadPosition(Enum):
    NEUTRAL = "neutral"
    TURNED_LEFT = "turned_left"
    TURNED_RIGHT = "turned_right"
    UP = "up"
    DOWN = "down"
    TILTED_LEFT = "tilted_left"
    TILTED_RIGHT = "tilted_right"


class EyeOpenness(Enum):
    FULLY_OPEN = "fully_open"
    PARTIALLY_CLOSED = "partially_closed"
    CLOSED = "closed"


GAZE_ORDER = tuple(GazeDirection)
HEAD_ORDER = tuple(HeadPosition)
EYE_ORDER = tuple(EyeOpenness)
FEATURE_NAMES = tuple(
    [f"gaze_{g.value}" for g in GAZE_ORDER]
    + [f"head_{h.value}" for h in HEAD_ORDER]
    + [f"eye_{e.value}" for e in EYE_ORDER]
)


@dataclass(frozen=True)
class VisualThresholds:
    """Experimentally chosen cut points for the categorical bins."""

    ear_closed_max: float = 0.15
    ear_partial_max: float = 0.25
    gaze_frac: float = 0.10
    yaw_deg: float = 15.0
    pitch_deg: float = 15.0
    roll_deg: float = 15.0

    def __post_init__(self) -> None:
        if not 0 < self.ear_closed_max < self.ear_partial_max:
            raise DataError(
                f"need 0 < ear_closed_max < ear_partial_max, got "
                f"{self.ear_closed_max} / {self.ear_partial_max}"
            )
        for name in ("gaze_frac", "yaw_deg", "pitch_deg", "roll_deg"):
            if getattr(self, name) <= 0:
                raise DataError(f"threshold {name} must be positive")


@dataclass(frozen=True)
class VisualFrameFeatures:
    """Per-frame numeric features: EAR, head pose in degrees, gaze vector in px."""

    ear: float
    pitch_deg: float
    yaw_deg: float
    roll_deg: float
    gaze: tuple[float, float]

    def __post_init__(self) -> None:
        if self.ear < 0 or not math.isfinite(self.ear):
            raise DataError(f"ear must be finite and >= 0, got {self.ear}")
        for name in ("pitch_deg", "yaw_deg", "roll_deg"):
            a = getattr(self, name)
            if not math.isfinite(a) or abs(a) > 180.0:
                raise DataError(f"{name} must lie in [-180, 180], got {a}")


@dataclass(frozen=True)
class VisualCategorical:
    """Per-frame categorical bins of gaze, head position and eye openness."""

    gaze_dir: GazeDirection
    head_pos: HeadPosition
    eye_open: EyeOpenness


@dataclass(frozen=True)
class VisualVideoFeatures:
    """Per-video class proportions: 5 gaze + 7 head + 3 eye, each group summing to 1."""

    gaze_props: tuple[float, ...]
    head_props: tuple[float, ...]
    eye_props: tuple[float, ...]

    def __post_init__(self) -> None:
        for name, props, order in (
            ("gaze", self.gaze_props, GAZE_ORDER),
            ("head", self.head_props, HEAD_ORDER),
            ("eye", self.eye_props, EYE_ORDER),
        ):
            if len(props) != len(order):
                raise DataError(f"{name} proportions must have {len(order)} entries")
            if any(v < 0 for v in props) or abs(sum(props) - 1.0) > 1e-9:
                raise DataError(f"{name} proportions must be non-negative and sum to 1")

    def vector(self) -> np.ndarray:
        """The 15-dim feature vector in FEATURE_NAMES order."""
        return np.array(self.gaze_props + self.head_props + self.eye_props, dtype=float)


def _span(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b))


def compute_ear(frame: LandmarkFrame) -> float:
    """Mean eye aspect ratio of both eyes.

    Each eye's ratio is the sum of its two vertical landmark gaps over twice
    the horizontal span; a zero horizontal span raises
    :class:`DegenerateEyeError` naming the eye.
    """
    p = frame.points_array()
    ears = []
    for name, (h0, h1), pairs in (
        ("left", (36, 39), ((37, 41), (38, 40))),
        ("right", (42, 45), ((43, 47), (44, 46))),
    ):
        horiz = _span(p[h0], p[h1])
        if horiz == 0.0:
            raise DegenerateEyeError(f"{name} eye has zero horizontal span in frame {frame.frame_index}")
        vert = sum(_span(p[a], p[b]) for a, b in pairs)
        ears.append(vert / (2.0 * horiz))
    return (ears[0] + ears[1]) / 2.0


def compute_gaze_vector(frame: LandmarkFrame) -> tuple[float, float]:
    """Vector from the mean eye center to the image center, in pixels."""
    p = frame.points_array()
    eye_center = (p[list(LEFT_EYE_INDICES)].mean(axis=0) + p[list(RIGHT_EYE_INDICES)].mean(axis=0)) / 2.0
    cx, cy = frame.image_width / 2.0, frame.image_height / 2.0
    return float(cx - eye_center[0]), float(cy - eye_center[1])


def estimate_head_pose(frame: LandmarkFrame, cam: Optional[CameraModel] = None) -> tuple[float, float, float]:
    """Head pose (pitch, yaw, roll) in degrees from the six anchor landmarks."""
    if cam is None:
        cam = CameraModel.for_image(frame.image_width, frame.image_height)
    image_points = frame.points_array()[list(PNP_ANCHOR_INDICES)]
    result = solve_pnp(FACE_MODEL_MM, image_points, cam)
    return rotation_to_euler(rodrigues(result.rotation))


def categorize(
    feat: VisualFrameFeatures, img_dims: tuple[int, int], th: VisualThresholds
) -> VisualCategorical:
    """Bin per-frame numeric features into their categorical classes.

    Gaze is forward only when both components sit inside the gaze_frac band;
    otherwise the larger-magnitude axis decides, horizontal winning ties.
    Head position tests yaw, then pitch, then roll against their thresholds.
    Eye openness thresholds are inclusive downward (ear == cut -> lower class).
    """
    width, height = img_dims
    gx, gy = feat.gaze
    if abs(gx) <= th.gaze_frac * width and abs(gy) <= th.gaze_frac * height:
        gaze = GazeDirection.FORWARD
    elif abs(gx) >= abs(gy):
        gaze = GazeDirection.LEFT if gx > 0 else GazeDirection.RIGHT
    else:
        gaze = GazeDirection.UP if gy > 0 else GazeDirection.DOWN

    if abs(feat.yaw_deg) > th.yaw_deg:
        head = HeadPosition.TURNED_RIGHT if feat.yaw_deg > 0 else HeadPosition.TURNED_LEFT
    elif abs(feat.pitch_deg) > th.pitch_deg:
        head = HeadPosition.UP if feat.pitch_deg > 0 else HeadPosition.DOWN
    elif abs(feat.roll_deg) > th.roll_deg:
        head = HeadPosition.TILTED_RIGHT if feat.roll_deg > 0 else HeadPosition.TILTED_LEFT
    else:
        head = HeadPosition.NEUTRAL

    if feat.ear <= th.ear_closed_max:
        eye = EyeOpenness.CLOSED
    elif feat.ear <= th.ear_partial_max:
        eye = EyeOpenness.PARTIALLY_CLOSED
    else:
        eye = EyeOpenness.FULLY_OPEN
    return VisualCategorical(gaze_dir=gaze, head_pos=head, eye_open=eye)


def aggregate_video(cats: Sequence[VisualCategorical]) -> VisualVideoFeatures:
    """Class-proportion histogram over a video's categorical frames."""
    if not cats:
        raise DataError("cannot aggregate an empty categorical sequence")
    n = float(len(cats))
    gaze = [sum(c.gaze_dir is g for c in cats) / n for g in GAZE_ORDER]
    head = [sum(c.head_pos is h for c in cats) / n for h in HEAD_ORDER]
    eye = [sum(c.eye_open is e for c in cats) / n for e in EYE_ORDER]
    return VisualVideoFeatures(gaze_props=tuple(gaze), head_props=tuple(head), eye_props=tuple(eye))


def frame_features(frame: LandmarkFrame, cam: Optional[CameraModel] = None) -> VisualFrameFeatures:
    """All level-1 numeric features for one frame."""
    pitch, yaw, roll = estimate_head_pose(frame, cam)
    return VisualFrameFeatures(
        ear=compute_ear(frame),
        pitch_deg=pitch,
        yaw_deg=yaw,
        roll_deg=roll,
        gaze=compute_gaze_vector(frame),
    )


def categorize_record(
    record: VideoRecord,
    th: Optional[VisualThresholds] = None,
    cam: Optional[CameraModel] = None,
) -> list[VisualCategorical]:
    """Per-frame categoricals for a whole record.

    The pose solve is memoized on the anchor landmark positions: consecutive
    frames with identical anchors (common in stabilized or synthetic footage)
    reuse the previous solution, which is exactly what recomputing would give.
    """
    th = th or VisualThresholds()
    if cam is None:
        cam = CameraModel.for_image(*record.image_size)
    dims = record.image_size
    cats: list[VisualCategorical] = []
    cached_anchors: Optional[tuple] = None
    cached_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    for frame in record.frames:
        anchors = tuple(frame.points[i] for i in PNP_ANCHOR_INDICES)
        if anchors != cached_anchors:
            cached_pose = estimate_head_pose(frame, cam)
            cached_anchors = anchors
        pitch, yaw, roll = cached_pose
        feat = VisualFrameFeatures(
            ear=compute_ear(frame),
            pitch_deg=pitch,
            yaw_deg=yaw,
            roll_deg=roll,
            gaze=compute_gaze_vector(frame),
        )
        cats.append(categorize(feat, dims, th))
    return cats


def extract_video_features(
    record: VideoRecord,
    th: Optional[VisualThresholds] = None,
    cam: Optional[CameraModel] = None,
) -> VisualVideoFeatures:
    """Level-1 + level-2 extraction and aggregation for one video."""
    return aggregate_video(categorize_record(record, th, cam))
