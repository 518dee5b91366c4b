"""Core domain types plus interchange-format parsing and serialization.

One interchange JSON document describes one video: its 68-point landmark
frames, the per-frame mean RGB of the forehead region, and an optional
engagement label. A manifest CSV (``video_id,path,engagement``) lists the
documents belonging to a dataset. Everything downstream (visual features,
pulse extraction, classifiers) consumes these types only.

All types are immutable after construction and safe to share between
concurrent workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

N_LANDMARKS = 68
N_CLASSES = 4
PROB_SUM_TOL = 1e-9


class DataError(ValueError):
    """Input data violates a format or domain contract."""


@dataclass(frozen=True)
class EngagementLabel:
    """Ordinal engagement level, 0 (lowest) to 3 (highest)."""

    level: int

    def __post_init__(self) -> None:
        if not isinstance(self.level, int) or isinstance(self.level, bool):
            raise DataError(f"engagement level must be an integer, got {self.level!r}")
        if not 0 <= self.level <= 3:
            raise DataError(f"engagement level must be in 0..3, got {self.level}")


@dataclass(frozen=True)
class ProbabilityVector:
    """Distribution over the four engagement levels."""

    p: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        if len(self.p) != N_CLASSES:
            raise DataError(f"probability vector must have {N_CLASSES} entries, got {len(self.p)}")
        if any(not math.isfinite(v) or v < 0.0 for v in self.p):
            raise DataError(f"probabilities must be finite and non-negative: {self.p}")
        if abs(sum(self.p) - 1.0) > PROB_SUM_TOL:
            raise DataError(f"probabilities must sum to 1 within {PROB_SUM_TOL}: sum={sum(self.p)!r}")

    def argmax(self) -> int:
        """Index of the largest probability; ties resolve to the lower index."""
        best = 0
        for k in range(1, N_CLASSES):
            if self.p[k] > self.p[best]:
                best = k
        return best


@dataclass(frozen=True)
class LandmarkFrame:
    """One video frame's 68 facial landmark coordinates (pixels, 0-indexed p0..p67)."""

    frame_index: int
    timestamp_s: float
    image_width: int
    image_height: int
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise DataError(f"frame_index must be non-negative, got {self.frame_index}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise DataError(
                f"frame {self.frame_index}: image dimensions must be positive, "
                f"got {self.image_width}x{self.image_height}"
            )
        pts = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) != N_LANDMARKS:
            raise DataError(f"frame {self.frame_index}: expected {N_LANDMARKS} landmarks, got {len(pts)}")
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise DataError(f"frame {self.frame_index}: non-finite landmark coordinate")

    def points_array(self) -> np.ndarray:
        """Landmarks as a (68, 2) float array."""
        return np.asarray(self.points, dtype=float)


@dataclass(frozen=True)
class RgbTrace:
    """Per-frame mean (R, G, B) of the forehead region, values in [0, 255]."""

    fps: float
    samples: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise DataError(f"fps must be positive, got {self.fps}")
        samples = tuple((float(r), float(g), float(b)) for r, g, b in self.samples)
        object.__setattr__(self, "samples", samples)
        for i, rgb in enumerate(samples):
            for v in rgb:
                if not (math.isfinite(v) and 0.0 <= v <= 255.0):
                    raise DataError(f"trace sample {i}: channel value {v!r} outside [0, 255]")

    def __len__(self) -> int:
        return len(self.samples)

    def channels(self) -> np.ndarray:
        """Trace as an (n, 3) float array in R, G, B order."""
        return np.asarray(self.samples, dtype=float)


@dataclass(frozen=True)
class VideoRecord:
    """A complete per-video input: landmark frames plus the forehead RGB trace."""

    video_id: str
    fps: float
    frames: tuple[LandmarkFrame, ...]
    trace: RgbTrace
    label: Optional[EngagementLabel] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise DataError(f"record {self.video_id!r}: frames must be non-empty")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise DataError(f"record {self.video_id!r}: fps must be positive, got {self.fps}")
        if len(self.trace) != len(self.frames):
            raise DataError(
                f"record {self.video_id!r}: trace has {len(self.trace)} samples "
                f"but there are {len(self.frames)} frames"
            )
        w, h = self.frames[0].image_width, self.frames[0].image_height
        prev = -1
        for f in self.frames:
            if f.frame_index <= prev:
                raise DataError(
                    f"record {self.video_id!r}: frame_index {f.frame_index} not strictly increasing"
                )
            prev = f.frame_index
            if (f.image_width, f.image_height) != (w, h):
                raise DataError(
                    f"record {self.video_id!r}: frame {f.frame_index} has differing image dimensions"
                )

    @property
    def duration_s(self) -> float:
        return len(self.frames) / self.fps

    @property
    def image_size(self) -> tuple[int, int]:
        return self.frames[0].image_width, self.frames[0].image_height


def parse_video_record(text: str) -> VideoRecord:
    """Parse one interchange JSON document into a validated :class:`VideoRecord`.

    Schema::

        {"video_id": str, "fps": float, "width": int, "height": int,
         "engagement": int?,
         "frames": [{"i": int, "landmarks": [[x, y] * 68], "roi_rgb": [r, g, b]}]}

    Unknown keys are ignored so producers may attach extra metadata (for
    example detection-gap flags). Violations raise :class:`DataError` naming
    the offending frame.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"malformed JSON: {e}") from e
    if not isinstance(doc, dict):
        raise DataError("interchange document must be a JSON object")

    for key in ("video_id", "fps", "width", "height", "frames"):
        if key not in doc:
            raise DataError(f"missing required key {key!r}")
    video_id = str(doc["video_id"])
    try:
        fps = float(doc["fps"])
        width = int(doc["width"])
        height = int(doc["height"])
    except (TypeError, ValueError) as e:
        raise DataError(f"invalid fps/width/height: {e}") from e

    raw_frames = doc["frames"]
    if not isinstance(raw_frames, list):
        raise DataError("'frames' must be a list")

    frames: list[LandmarkFrame] = []
    rgb: list[tuple[float, float, float]] = []
    for pos, entry in enumerate(raw_frames):
        if not isinstance(entry, dict):
            raise DataError(f"frame {pos}: entry must be an object")
        idx = entry.get("i", pos)
        try:
            idx = int(idx)
        except (TypeError, ValueError):
            raise DataError(f"frame {pos}: invalid frame index {entry.get('i')!r}") from None
        landmarks = entry.get("landmarks")
        if not isinstance(landmarks, list) or len(landmarks) != N_LANDMARKS:
            n = len(landmarks) if isinstance(landmarks, list) else "none"
            raise DataError(f"frame {idx}: expected {N_LANDMARKS} landmarks, got {n}")
        roi = entry.get("roi_rgb")
        if not isinstance(roi, list) or len(roi) != 3:
            raise DataError(f"frame {idx}: 'roi_rgb' must be a 3-element list")
        try:
            points = tuple((float(p[0]), float(p[1])) for p in landmarks)
            sample = (float(roi[0]), float(roi[1]), float(roi[2]))
        except (TypeError, ValueError, IndexError) as e:
            raise DataError(f"frame {idx}: malformed coordinates: {e}") from e
        try:
            frames.append(
                LandmarkFrame(
                    frame_index=idx,
                    timestamp_s=idx / fps if fps > 0 else 0.0,
                    image_width=width,
                    image_height=height,
                    points=points,
                )
            )
        except DataError:
            raise
        rgb.append(sample)

    label = None
    if doc.get("engagement") is not None:
        raw = doc["engagement"]
        if not isinstance(raw, int) or isinstance(raw, bool):
            raise DataError(f"'engagement' must be an integer, got {raw!r}")
        label = EngagementLabel(raw)

    trace = RgbTrace(fps=fps, samples=tuple(rgb))
    return VideoRecord(video_id=video_id, fps=fps, frames=tuple(frames), trace=trace, label=label)


def serialize_video_record(rec: VideoRecord) -> str:
    """Serialize a record to interchange JSON; inverse of :func:`parse_video_record`."""
    width, height = rec.image_size
    doc: dict = {
        "video_id": rec.video_id,
        "fps": rec.fps,
        "width": width,
        "height": height,
    }
    if rec.label is not None:
        doc["engagement"] = rec.label.level
    doc["frames"] = [
        {
            "i": frame.frame_index,
            "landmarks": [[x, y] for x, y in frame.points],
            "roi_rgb": list(rec.trace.samples[k]),
        }
        for k, frame in enumerate(rec.frames)
    ]
    return json.dumps(doc, separators=(",", ":"))


MANIFEST_COLUMNS = ("video_id", "path", "engagement")


def parse_manifest(text: str) -> list[tuple[str, str, EngagementLabel]]:
    """Parse a manifest CSV into (video_id, path, label) entries.

    The header row must be exactly ``video_id,path,engagement``. Label values
    are validated to 0..3; violations report the offending line number
    (header is line 1).
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("manifest is empty (missing header row)") from None
    if tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
        raise DataError(
            f"manifest header must be {','.join(MANIFEST_COLUMNS)!r}, got {','.join(header)!r}"
        )
    entries: list[tuple[str, str, EngagementLabel]] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DataError(f"manifest line {line_no}: expected 3 columns, got {len(row)}")
        vid, path, raw = (c.strip() for c in row)
        try:
            level = int(raw)
        except ValueError:
            raise DataError(f"manifest line {line_no}: engagement {raw!r} is not an integer") from None
        try:
            label = EngagementLabel(level)
        except DataError:
            raise DataError(f"manifest line {line_no}: engagement {level} outside 0..3") from None
        entries.append((vid, path, label))
    return entries


def format_manifest(entries: Sequence[tuple[str, str, int]]) -> str:
    """Render manifest rows as CSV text (LF line endings)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for vid, path, level in entries:
        writer.writerow([vid, path, level])
    return buf.getvalue()
