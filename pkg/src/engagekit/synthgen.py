"""Synthetic ground-truth generators for every pipeline stage.

Landmark sequences with known pose / eye-aspect-ratio / gaze, RGB traces with
an embedded pulse, and labeled corpora whose class structure is carried by a
chosen modality. Every generator is a pure function of its arguments and a
seed, and every artifact's ground truth is returned or written alongside it,
so tests never re-derive expected values from the code under test.

The projection arithmetic here is written out locally (not shared with the
pose solver) so that generator and solver stay independent routes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .datamodel import (
    DataError,
    EngagementLabel,
    LandmarkFrame,
    RgbTrace,
    VideoRecord,
    format_manifest,
    serialize_video_record,
)
from .geometry import CameraModel, euler_to_rotation
from .visual import FACE_MODEL_MM, PNP_ANCHOR_INDICES, VisualThresholds

INFORMATIVENESS_MODES = ("visual", "physio", "both", "complementary", "none")

TRACE_BASELINE = (140.0, 110.0, 95.0)
# per-channel gain of the pulsatile component: strongest in G, opposite sign in R
PULSE_CHANNEL_GAIN = (-0.6, 1.0, 0.45)
SECOND_HARMONIC = 0.3
DEFAULT_PULSE_AMP = 1.2

_EYE_SPAN_FRAC = 0.22   # single-eye width as a fraction of outer-corner distance
_FACE_DEPTH_MM = 1800.0


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a labeled synthetic corpus."""

    n_videos: int = 40
    fps: float = 20.0
    duration_s: float = 6.0
    image_width: int = 640
    image_height: int = 480
    modality_informativeness: str = "both"
    seed: int = 0
    pose_jitter_deg: float = 3.0
    per_frame_pose_jitter_deg: float = 0.0
    blink_rate_hz: float = 0.25
    ear_open: float = 0.32
    ear_closed: float = 0.06
    gaze_margin: float = 1.8
    bpm_jitter: float = 4.0
    trace_noise_sigma: float = 0.05
    drift_amp: float = 0.5

    def __post_init__(self) -> None:
        if self.n_videos < 1:
            raise DataError("n_videos must be >= 1")
        if self.fps <= 0 or self.duration_s <= 0:
            raise DataError("fps and duration_s must be positive")
        if self.modality_informativeness not in INFORMATIVENESS_MODES:
            raise DataError(
                f"modality_informativeness must be one of {INFORMATIVENESS_MODES}, "
                f"got {self.modality_informativeness!r}"
            )
        if not 0 <= self.ear_closed < self.ear_open <= 0.6:
            raise DataError("need 0 <= ear_closed < ear_open <= 0.6")
        for base in self._class_bpm():
            if not 40.0 <= base - self.bpm_jitter <= base + self.bpm_jitter <= 180.0:
                raise DataError(f"class BPM range around {base} leaves [40, 180]")

    def _class_bpm(self) -> tuple[float, float, float, float]:
        mode = self.modality_informativeness
        if mode in ("physio", "both"):
            return (55.0, 75.0, 95.0, 115.0)
        if mode == "complementary":
            return (80.0, 80.0, 60.0, 110.0)
        return (78.0, 78.0, 78.0, 78.0)

    def _class_gaze(self) -> tuple[str | None, ...]:
        # None means "draw uniformly per video" (visually uninformative)
        mode = self.modality_informativeness
        if mode in ("visual", "both"):
            return ("forward", "left", "right", "up")
        if mode == "complementary":
            return ("forward", "left", "right", "right")
        return (None, None, None, None)


def load_synth_spec(text: str) -> SynthSpec:
    """Parse a SynthSpec from its JSON mirror; unknown keys are rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"malformed synth spec: {e}") from e
    if not isinstance(doc, dict):
        raise DataError("synth spec must be a JSON object")
    known = set(SynthSpec.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise DataError(f"unknown synth spec keys: {sorted(unknown)}")
    return SynthSpec(**doc)


# ---------------------------------------------------------------------------
# Landmark construction
# ---------------------------------------------------------------------------


def _template_fractions() -> np.ndarray:
    """Frontal layout for all 68 landmarks as fractions of the anchor bbox."""
    t = np.zeros((68, 2))
    for i in range(17):  # jaw arc
        s = i / 16.0
        t[i] = (s, 0.45 + 0.5 * math.sin(math.pi * s))
    for i in range(5):   # brows
        t[17 + i] = (0.16 + 0.07 * i, 0.22)
        t[22 + i] = (0.54 + 0.07 * i, 0.22)
    for i in range(4):   # nose bridge
        t[27 + i] = (0.5, 0.30 + 0.07 * i)
    for i in range(5):   # nostril line
        t[31 + i] = (0.40 + 0.05 * i, 0.58)
    for i in range(6):   # eye placeholders (rebuilt exactly by the callers)
        t[36 + i] = (0.25 + 0.03 * i, 0.35)
        t[42 + i] = (0.60 + 0.03 * i, 0.35)
    for i in range(12):  # outer lip ellipse
        a = 2.0 * math.pi * i / 12.0
        t[48 + i] = (0.5 + 0.16 * math.cos(a), 0.78 + 0.07 * math.sin(a))
    for i in range(8):   # inner lip ellipse
        a = 2.0 * math.pi * i / 8.0
        t[60 + i] = (0.5 + 0.08 * math.cos(a), 0.78 + 0.035 * math.sin(a))
    return t


_TEMPLATE = _template_fractions()
_TEMPLATE.setflags(write=False)


def _project_model(rm: np.ndarray, t: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Pinhole projection of the rigid face model, spelled out locally."""
    pts = FACE_MODEL_MM @ rm.T + t
    f = cam.focal_length
    cx, cy = cam.principal_point
    return np.column_stack((f * pts[:, 0] / pts[:, 2] + cx, f * pts[:, 1] / pts[:, 2] + cy))


def _translation_for_target(rm: np.ndarray, target_px: tuple[float, float], cam: CameraModel) -> np.ndarray:
    """Translation placing the rotated eye-corner midpoint at target_px."""
    eye_mid = (FACE_MODEL_MM[2] + FACE_MODEL_MM[3]) / 2.0
    rotated = rm @ eye_mid
    tz = _FACE_DEPTH_MM
    z = rotated[2] + tz
    f = cam.focal_length
    cx, cy = cam.principal_point
    tx = (target_px[0] - cx) * z / f - rotated[0]
    ty = (target_px[1] - cy) * z / f - rotated[1]
    return np.array([tx, ty, tz])


def _build_eye(outer: np.ndarray, inner: np.ndarray, ear: float) -> list[tuple[float, float]]:
    """Six eye landmarks whose aspect ratio is exactly `ear`.

    Layout order matches the left-eye convention (outer corner, top pair,
    inner corner, bottom pair reversed); the ratio depends only on the
    vertical gaps and horizontal span, so it holds for either eye.
    """
    span = inner - outer
    h = float(np.linalg.norm(span))
    direction = span / h
    perp = np.array([-direction[1], direction[0]])
    v = ear * h
    top1 = outer + direction * (h / 3.0) + perp * (v / 2.0)
    bot1 = outer + direction * (h / 3.0) - perp * (v / 2.0)
    top2 = outer + direction * (2.0 * h / 3.0) + perp * (v / 2.0)
    bot2 = outer + direction * (2.0 * h / 3.0) - perp * (v / 2.0)
    return [tuple(outer), tuple(top1), tuple(top2), tuple(inner), tuple(bot2), tuple(bot1)]


def _assemble_frame(
    frame_index: int,
    fps: float,
    cam: CameraModel,
    anchors_px: np.ndarray,
    ear: float,
    image_size: tuple[int, int],
) -> LandmarkFrame:
    lo = anchors_px.min(axis=0)
    size = np.maximum(anchors_px.max(axis=0) - lo, 1.0)
    points = lo + _TEMPLATE * size

    for slot, px in zip(PNP_ANCHOR_INDICES, anchors_px):
        points[slot] = px

    left_outer = anchors_px[2]
    right_outer = anchors_px[3]
    corner_dist = float(np.linalg.norm(right_outer - left_outer))
    h = _EYE_SPAN_FRAC * corner_dist
    direction = (right_outer - left_outer) / corner_dist
    left_eye = _build_eye(left_outer, left_outer + direction * h, ear)
    # right eye: span runs inner -> outer so that index 45 is the outer corner
    right_inner = right_outer - direction * h
    right_eye = _build_eye(right_inner, right_outer, ear)
    for k in range(6):
        points[36 + k] = left_eye[k]
        points[42 + k] = right_eye[k]

    return LandmarkFrame(
        frame_index=frame_index,
        timestamp_s=frame_index / fps,
        image_width=image_size[0],
        image_height=image_size[1],
        points=tuple((float(x), float(y)) for x, y in points),
    )


def gen_pose_frames(
    true_angles: tuple[float, float, float],
    cam: CameraModel,
    n_frames: int,
    *,
    fps: float = 30.0,
    ear: float = 0.32,
    noise_px: float = 0.0,
    image_size: tuple[int, int] | None = None,
    seed: int | tuple[int, ...] = 0,
) -> list[LandmarkFrame]:
    """Frames whose six pose anchors are exact projections of the face model.

    The face model is rotated by Rz(roll) Ry(yaw) Rx(pitch), centered on the
    principal axis, and projected through `cam`; optional Gaussian pixel noise
    perturbs the anchors per frame. Remaining landmarks come from a fixed
    frontal template (only anchors and eye points feed any computation).
    """
    pitch, yaw, roll = true_angles
    if any(abs(a) > 45.0 for a in true_angles):
        raise DataError(f"pose angles must lie in [-45, 45] degrees, got {true_angles}")
    if image_size is None:
        image_size = (int(cam.principal_point[0] * 2), int(cam.principal_point[1] * 2))
    rm = euler_to_rotation(pitch, yaw, roll).m
    t = _translation_for_target(rm, cam.principal_point, cam)
    anchors = _project_model(rm, t, cam)
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n_frames):
        noisy = anchors + rng.normal(0.0, noise_px, anchors.shape) if noise_px > 0 else anchors
        frames.append(_assemble_frame(i, fps, cam, noisy, ear, image_size))
    return frames


def gen_blink_frames(
    ear_profile: Callable[[float], float] | Sequence[float],
    n_frames: int,
    *,
    fps: float = 30.0,
    image_size: tuple[int, int] = (640, 480),
) -> list[LandmarkFrame]:
    """Frontal frames whose eye aspect ratio equals the profile exactly.

    The profile is a function of time in seconds (or a per-frame sequence)
    with values in [0, 0.6]; eye landmarks use a fixed horizontal span with
    vertical gaps solved from the target ratio, making this a right inverse
    of the ratio computation.
    """
    cam = CameraModel.for_image(*image_size)
    rm = np.eye(3)
    t = _translation_for_target(rm, cam.principal_point, cam)
    anchors = _project_model(rm, t, cam)
    frames = []
    for i in range(n_frames):
        time_s = i / fps
        ear = float(ear_profile[i]) if not callable(ear_profile) else float(ear_profile(time_s))
        if not 0.0 <= ear <= 0.6:
            raise DataError(f"ear profile value {ear} at frame {i} outside [0, 0.6]")
        frames.append(_assemble_frame(i, fps, cam, anchors, ear, image_size))
    return frames


# ---------------------------------------------------------------------------
# Pulse traces
# ---------------------------------------------------------------------------


def pulse_waveform(t: np.ndarray, bpm: float) -> np.ndarray:
    """Unit pulse shape: fundamental plus a 30% second harmonic."""
    f = bpm / 60.0
    return np.sin(2.0 * math.pi * f * t) + SECOND_HARMONIC * np.sin(4.0 * math.pi * f * t)


def sigma_for_snr_db(snr_db: float, pulse_amp: float = DEFAULT_PULSE_AMP) -> float:
    """Per-channel white-noise sigma giving the requested SNR on the G channel."""
    signal_var = (pulse_amp**2) * (1.0 + SECOND_HARMONIC**2) / 2.0
    return math.sqrt(signal_var / (10.0 ** (snr_db / 10.0)))


def gen_pulse_trace(
    bpm: float,
    fps: float,
    duration_s: float,
    noise_sigma: float = 0.0,
    drift_amp: float = 0.0,
    *,
    pulse_amp: float = DEFAULT_PULSE_AMP,
    seed: int | tuple[int, ...] = 0,
) -> RgbTrace:
    """RGB trace with an embedded pulse at the given rate.

    The pulsatile component rides on a fixed skin-tone baseline with the
    plane-orthogonal-to-skin-detectable channel signature; optional slow
    drift (0.05 Hz) and white noise are added per channel.
    """
    if not 40.0 <= bpm <= 180.0:
        raise DataError(f"bpm must lie in [40, 180], got {bpm}")
    n = int(round(fps * duration_s))
    t = np.arange(n) / fps
    wave = pulse_waveform(t, bpm) * pulse_amp
    rng = np.random.default_rng(seed)
    drift_phase = rng.uniform(0.0, 2.0 * math.pi)
    drift = drift_amp * np.sin(2.0 * math.pi * 0.05 * t + drift_phase) if drift_amp else 0.0
    channels = np.empty((n, 3))
    for c in range(3):
        noise = rng.normal(0.0, noise_sigma, n) if noise_sigma > 0 else 0.0
        channels[:, c] = TRACE_BASELINE[c] + PULSE_CHANNEL_GAIN[c] * wave + drift + noise
    channels = np.clip(channels, 0.0, 255.0)
    return RgbTrace(fps=fps, samples=tuple(map(tuple, channels)))


# ---------------------------------------------------------------------------
# Labeled corpora
# ---------------------------------------------------------------------------

_GAZE_CHOICES = ("forward", "left", "right", "up", "down")


def _gaze_target_px(direction: str, spec: SynthSpec) -> tuple[float, float]:
    th = VisualThresholds()
    cx, cy = spec.image_width / 2.0, spec.image_height / 2.0
    off_x = spec.gaze_margin * th.gaze_frac * spec.image_width
    off_y = spec.gaze_margin * th.gaze_frac * spec.image_height
    return {
        "forward": (cx, cy),
        "left": (cx - off_x, cy),
        "right": (cx + off_x, cy),
        "up": (cx, cy - off_y),
        "down": (cx, cy + off_y),
    }[direction]


def _blink_profile(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    n = int(round(spec.fps * spec.duration_s))
    times = np.arange(n) / spec.fps
    ear = np.full(n, spec.ear_open)
    n_blinks = rng.poisson(spec.blink_rate_hz * spec.duration_s)
    half = 0.2  # seconds from blink center back to fully open
    for center in rng.uniform(0.0, spec.duration_s, size=n_blinks):
        d = np.abs(times - center)
        dip = spec.ear_closed + (spec.ear_open - spec.ear_closed) * np.minimum(d / half, 1.0)
        ear = np.minimum(ear, dip)
    return ear


def gen_video_record(spec: SynthSpec, video_index: int) -> tuple[VideoRecord, dict]:
    """One corpus video plus its machine-readable ground truth."""
    label = video_index % 4
    rng = np.random.default_rng((spec.seed, video_index))
    cam = CameraModel.for_image(spec.image_width, spec.image_height)
    image_size = (spec.image_width, spec.image_height)
    n = int(round(spec.fps * spec.duration_s))

    gaze_choice = spec._class_gaze()[label]
    gaze_dir = gaze_choice if gaze_choice is not None else _GAZE_CHOICES[rng.integers(5)]
    target = _gaze_target_px(gaze_dir, spec)
    pose_base = rng.normal(0.0, spec.pose_jitter_deg, 3).clip(-40.0, 40.0)
    bpm = float(spec._class_bpm()[label] + rng.uniform(-spec.bpm_jitter, spec.bpm_jitter))
    ear = _blink_profile(rng, spec)

    frames = []
    anchors = None
    for i in range(n):
        if anchors is None or spec.per_frame_pose_jitter_deg > 0:
            pose = pose_base
            if spec.per_frame_pose_jitter_deg > 0:
                pose = (pose_base + rng.normal(0.0, spec.per_frame_pose_jitter_deg, 3)).clip(-40.0, 40.0)
            rm = euler_to_rotation(*pose).m
            t = _translation_for_target(rm, target, cam)
            anchors = _project_model(rm, t, cam)
        frames.append(_assemble_frame(i, spec.fps, cam, anchors, float(ear[i]), image_size))

    trace = gen_pulse_trace(
        bpm,
        spec.fps,
        spec.duration_s,
        noise_sigma=spec.trace_noise_sigma,
        drift_amp=spec.drift_amp,
        seed=(spec.seed, video_index, 1),
    )
    vid = f"v{video_index:04d}"
    record = VideoRecord(
        video_id=vid,
        fps=spec.fps,
        frames=tuple(frames),
        trace=trace,
        label=EngagementLabel(label),
    )
    truth = {
        "label": label,
        "bpm": bpm,
        "gaze_direction": gaze_dir,
        "pose_deg": [float(a) for a in pose_base],
    }
    return record, truth


def gen_labeled_corpus(spec: SynthSpec, out_dir: "Path | str") -> Path:
    """Write interchange files, a manifest and a ground-truth sidecar.

    Returns the manifest path; manifest entries point at files relative to
    the manifest's directory. Fully determined by the spec.
    """
    out = Path(out_dir)
    videos_dir = out / "videos"
    videos_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    truths = {}
    for i in range(spec.n_videos):
        record, truth = gen_video_record(spec, i)
        rel = f"videos/{record.video_id}.json"
        (out / rel).write_text(serialize_video_record(record), encoding="utf-8")
        entries.append((record.video_id, rel, record.label.level))
        truths[record.video_id] = truth
    manifest_path = out / "manifest.csv"
    manifest_path.write_text(format_manifest(entries), encoding="utf-8")
    (out / "truth.json").write_text(
        json.dumps({"spec": asdict(spec), "videos": truths}, indent=1), encoding="utf-8"
    )
    return manifest_path
