import numpy as np
import pytest

from engagekit.datamodel import EngagementLabel, LandmarkFrame, RgbTrace, VideoRecord


def make_frame(i=0, fps=30.0, width=640, height=480, points=None):
    if points is None:
        points = [(float(10 + k), float(20 + (k % 7))) for k in range(68)]
    return LandmarkFrame(
        frame_index=i,
        timestamp_s=i / fps,
        image_width=width,
        image_height=height,
        points=tuple(points),
    )


def make_record(n_frames=3, fps=30.0, label=None, rgb=(100.0, 100.0, 100.0), video_id="vid"):
    frames = tuple(make_frame(i, fps) for i in range(n_frames))
    trace = RgbTrace(fps=fps, samples=tuple(rgb for _ in range(n_frames)))
    lab = EngagementLabel(label) if label is not None else None
    return VideoRecord(video_id=video_id, fps=fps, frames=frames, trace=trace, label=lab)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
