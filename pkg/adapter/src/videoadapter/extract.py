"""Video-to-interchange conversion.

Per sampled frame: run the landmark detector, compute the forehead region
(the axis-aligned rectangle spanning horizontally between the inner brow
landmarks 19 and 24 and extending upward from that brow line by a fraction
of the brow-to-chin distance), and record the region's mean RGB. Frames
where detection fails carry the previous frame's landmarks and color plus a
``"gap": true`` flag, preserving the one-sample-per-frame alignment that the
downstream pipeline requires; leading failures are backfilled from the first
successful detection.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .detectors import AdapterError, Detector, make_detector

BROW_LEFT_INNER = 19
BROW_RIGHT_INNER = 24
CHIN = 8


@dataclass(frozen=True)
class AdapterConfig:
    detector: str = "dlib"
    detector_model: Optional[str] = None
    frame_stride: int = 1
    roi_up_frac: float = 0.25
    min_face_fraction: float = 0.9
    output_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.frame_stride < 1:
            raise AdapterError(f"frame_stride must be >= 1, got {self.frame_stride}")
        if not 0 < self.roi_up_frac <= 2.0:
            raise AdapterError(f"roi_up_frac out of range: {self.roi_up_frac}")
        if not 0 < self.min_face_fraction <= 1.0:
            raise AdapterError(f"min_face_fraction out of range: {self.min_face_fraction}")


@dataclass
class ExtractionStats:
    total_frames: int = 0
    sampled_frames: int = 0
    detected_frames: int = 0
    gap_frames: int = 0

    def summary(self) -> str:
        return (
            f"{self.detected_frames}/{self.sampled_frames} sampled frames had a detectable face "
            f"({self.total_frames} source frames, {self.gap_frames} gap-filled)"
        )


def forehead_mean_rgb(
    frame_bgr: np.ndarray, landmarks: np.ndarray, up_frac: float
) -> Optional[tuple[float, float, float]]:
    """Mean (R, G, B) of the forehead rectangle, or None if it leaves the image."""
    brow_l = landmarks[BROW_LEFT_INNER]
    brow_r = landmarks[BROW_RIGHT_INNER]
    chin = landmarks[CHIN]
    brow_mid = (brow_l + brow_r) / 2.0
    height = up_frac * float(np.linalg.norm(brow_mid - chin))
    brow_y = (brow_l[1] + brow_r[1]) / 2.0
    x0 = int(round(min(brow_l[0], brow_r[0])))
    x1 = int(round(max(brow_l[0], brow_r[0])))
    y0 = int(round(brow_y - height))
    y1 = int(round(brow_y))
    h, w = frame_bgr.shape[:2]
    x0, x1 = max(x0, 0), min(x1, w)
    y0, y1 = max(y0, 0), min(y1, h)
    if x1 <= x0 or y1 <= y0:
        return None
    patch = frame_bgr[y0:y1, x0:x1].astype(float)
    b, g, r = patch[:, :, 0].mean(), patch[:, :, 1].mean(), patch[:, :, 2].mean()
    return (float(r), float(g), float(b))


def extract_record(
    video_path: "Path | str",
    cfg: AdapterConfig,
    video_id: Optional[str] = None,
    engagement: Optional[int] = None,
    detector: Optional[Detector] = None,
) -> tuple[dict, ExtractionStats]:
    """Convert one video into an interchange document.

    Returns the document (ready for ``json.dumps``) and the detection
    statistics. Raises :class:`AdapterError` for unreadable files or when the
    detected-face fraction falls below ``cfg.min_face_fraction``.
    """
    path = Path(video_path)
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise AdapterError(f"cannot open video file {path}")
    detector = detector or make_detector(cfg.detector, cfg.detector_model)
    src_fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    if not math.isfinite(src_fps) or src_fps <= 0:
        src_fps = 30.0  # some containers omit fps metadata
    fps = src_fps / cfg.frame_stride

    stats = ExtractionStats()
    width = height = 0
    frames: list[dict] = []  # {"landmarks": ..., "roi_rgb": ..., "gap": bool}
    source_index = 0
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        if source_index % cfg.frame_stride == 0:
            stats.sampled_frames += 1
            height, width = frame.shape[:2]
            landmarks = detector(frame)
            rgb = None
            if landmarks is not None:
                landmarks = np.asarray(landmarks, dtype=float)
                if landmarks.shape != (68, 2):
                    raise AdapterError(
                        f"detector returned shape {landmarks.shape}, expected (68, 2)"
                    )
                rgb = forehead_mean_rgb(frame, landmarks, cfg.roi_up_frac)
            if landmarks is not None and rgb is not None:
                stats.detected_frames += 1
                frames.append({"landmarks": landmarks, "roi_rgb": rgb, "gap": False})
            else:
                frames.append({"landmarks": None, "roi_rgb": None, "gap": True})
        source_index += 1
    cap.release()
    stats.total_frames = source_index

    if stats.sampled_frames == 0:
        raise AdapterError(f"{path}: video contains no frames")
    if stats.detected_frames == 0:
        raise AdapterError(f"{path}: no face detected in any frame ({stats.summary()})")
    fraction = stats.detected_frames / stats.sampled_frames
    if fraction < cfg.min_face_fraction:
        raise AdapterError(
            f"{path}: face detected in {fraction:.0%} of frames, below the "
            f"{cfg.min_face_fraction:.0%} tolerance ({stats.summary()})"
        )

    # forward-fill gaps; leading gaps take the first successful detection
    first = next(f for f in frames if not f["gap"])
    prev = first
    for f in frames:
        if f["gap"]:
            f["landmarks"] = prev["landmarks"]
            f["roi_rgb"] = prev["roi_rgb"]
            stats.gap_frames += 1
        else:
            prev = f
    for f in frames:
        if f["landmarks"] is None:  # leading gap, before the first detection
            f["landmarks"] = first["landmarks"]
            f["roi_rgb"] = first["roi_rgb"]

    doc: dict = {
        "video_id": video_id or path.stem,
        "fps": fps,
        "width": int(width),
        "height": int(height),
    }
    if engagement is not None:
        doc["engagement"] = int(engagement)
    doc["frames"] = [
        {
            "i": k,
            "landmarks": [[float(x), float(y)] for x, y in f["landmarks"]],
            "roi_rgb": [float(c) for c in f["roi_rgb"]],
            **({"gap": True} if f["gap"] else {}),
        }
        for k, f in enumerate(frames)
    ]
    return doc, stats


def parse_raw_manifest(text: str) -> list[tuple[str, str, int]]:
    """Rows of a raw-video manifest: video_id,path,engagement.

    Same column layout as the pipeline manifest, but paths point at video
    files. Labels are mandatory (the emitted pipeline manifest requires them).
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["video_id", "path", "engagement"]:
        raise AdapterError("raw manifest header must be 'video_id,path,engagement'")
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise AdapterError(f"raw manifest line {line_no}: expected 3 columns")
        vid, path, label = (c.strip() for c in row)
        try:
            level = int(label)
        except ValueError:
            raise AdapterError(f"raw manifest line {line_no}: engagement {label!r} not an integer") from None
        if not 0 <= level <= 3:
            raise AdapterError(f"raw manifest line {line_no}: engagement {level} outside 0..3")
        rows.append((vid, path, level))
    return rows


def batch_extract(
    manifest_path: "Path | str",
    cfg: AdapterConfig,
    out_dir: "Path | str | None" = None,
    detector: Optional[Detector] = None,
) -> tuple[Path, list[tuple[str, str]]]:
    """Convert every manifest entry; continue past per-file failures.

    Writes one interchange file per input plus a pipeline-format manifest
    and, when anything failed, an ``errors.log``. Reruns overwrite outputs.
    Returns the output manifest path and the (video_id, error) failures.
    Raises :class:`AdapterError` if the manifest is unreadable or every file
    failed.
    """
    manifest_path = Path(manifest_path)
    try:
        rows = parse_raw_manifest(manifest_path.read_text(encoding="utf-8"))
    except OSError as e:
        raise AdapterError(f"cannot read raw manifest {manifest_path}: {e}") from e
    out = Path(out_dir or cfg.output_dir or "adapter_out")
    out.mkdir(parents=True, exist_ok=True)
    detector = detector or make_detector(cfg.detector, cfg.detector_model)

    written: list[tuple[str, str, int]] = []
    failures: list[tuple[str, str]] = []
    base = manifest_path.parent
    for vid, rel, label in rows:
        src = Path(rel)
        if not src.is_absolute():
            src = base / src
        try:
            doc, _ = extract_record(src, cfg, video_id=vid, engagement=label, detector=detector)
        except AdapterError as e:
            failures.append((vid, str(e)))
            continue
        out_file = out / f"{vid}.json"
        out_file.write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")
        written.append((vid, out_file.name, label))

    if rows and not written:
        raise AdapterError(
            f"all {len(rows)} videos failed; first failure: {failures[0][1]}"
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["video_id", "path", "engagement"])
    for vid, name, label in written:
        writer.writerow([vid, name, label])
    out_manifest = out / "manifest.csv"
    out_manifest.write_text(buf.getvalue(), encoding="utf-8")
    log = out / "errors.log"
    if failures:
        log.write_text("".join(f"{vid}: {err}\n" for vid, err in failures), encoding="utf-8")
    elif log.exists():
        log.unlink()
    return out_manifest, failures
