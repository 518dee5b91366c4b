import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engagekit.datamodel import (
    DataError,
    EngagementLabel,
    LandmarkFrame,
    ProbabilityVector,
    RgbTrace,
    VideoRecord,
    format_manifest,
    parse_manifest,
    parse_video_record,
    serialize_video_record,
)

from conftest import make_frame, make_record


def record_to_doc(rec):
    return json.loads(serialize_video_record(rec))


class TestTypes:
    def test_label_range(self):
        for level in range(4):
            assert EngagementLabel(level).level == level
        with pytest.raises(DataError):
            EngagementLabel(4)
        with pytest.raises(DataError):
            EngagementLabel(-1)

    def test_probability_vector(self):
        pv = ProbabilityVector((0.1, 0.2, 0.3, 0.4))
        assert pv.argmax() == 3
        assert ProbabilityVector((0.4, 0.4, 0.1, 0.1)).argmax() == 0  # tie -> lower index
        with pytest.raises(DataError):
            ProbabilityVector((0.5, 0.5, 0.1, 0.1))
        with pytest.raises(DataError):
            ProbabilityVector((-0.1, 0.5, 0.3, 0.3))

    def test_frame_invariants(self):
        with pytest.raises(DataError, match="68"):
            make_frame(points=[(0.0, 0.0)] * 67)
        with pytest.raises(DataError, match="non-finite"):
            make_frame(points=[(float("nan"), 0.0)] + [(0.0, 0.0)] * 67)
        with pytest.raises(DataError):
            make_frame(width=0)

    def test_trace_range(self):
        with pytest.raises(DataError, match="outside"):
            RgbTrace(fps=30.0, samples=((0.0, 0.0, 256.0),))
        with pytest.raises(DataError):
            RgbTrace(fps=0.0, samples=((1.0, 1.0, 1.0),))

    def test_record_trace_alignment(self):
        frames = tuple(make_frame(i) for i in range(3))
        trace = RgbTrace(fps=30.0, samples=((1.0, 1.0, 1.0),) * 2)
        with pytest.raises(DataError, match="trace"):
            VideoRecord(video_id="v", fps=30.0, frames=frames, trace=trace)

    def test_record_frame_index_strictly_increasing(self):
        frames = (make_frame(0), make_frame(0))
        trace = RgbTrace(fps=30.0, samples=((1.0, 1.0, 1.0),) * 2)
        with pytest.raises(DataError, match="strictly increasing"):
            VideoRecord(video_id="v", fps=30.0, frames=frames, trace=trace)


class TestParse:
    def test_minimal_single_frame(self):
        doc = {
            "video_id": "one",
            "fps": 30.0,
            "width": 640,
            "height": 480,
            "frames": [{"i": 0, "landmarks": [[0.0, 0.0]] * 68, "roi_rgb": [100, 100, 100]}],
        }
        rec = parse_video_record(json.dumps(doc))
        assert len(rec.frames) == 1
        assert rec.trace.samples[0] == (100.0, 100.0, 100.0)
        assert rec.label is None

    def test_wrong_landmark_count_names_frame(self):
        rec = make_record(5)
        doc = record_to_doc(rec)
        doc["frames"][3]["landmarks"] = doc["frames"][3]["landmarks"][:67]
        with pytest.raises(DataError, match="frame 3"):
            parse_video_record(json.dumps(doc))

    def test_duration_arithmetic(self):
        rec = make_record(300, fps=30.0)
        assert rec.duration_s == pytest.approx(10.0)

    def test_malformed_json(self):
        with pytest.raises(DataError, match="malformed"):
            parse_video_record("{not json")

    def test_non_finite_coordinate_rejected(self):
        doc = record_to_doc(make_record(1))
        doc["frames"][0]["landmarks"][7] = [None, 1.0]
        with pytest.raises(DataError, match="frame 0"):
            parse_video_record(json.dumps(doc))

    def test_unknown_keys_ignored(self):
        doc = record_to_doc(make_record(1))
        doc["detector"] = "stub"
        doc["frames"][0]["gap"] = True
        rec = parse_video_record(json.dumps(doc))
        assert rec.video_id == "vid"


class TestSerialize:
    def test_label_present_in_document(self):
        doc = record_to_doc(make_record(2, label=2))
        assert doc["engagement"] == 2

    def test_label_absent_when_none(self):
        doc = record_to_doc(make_record(2))
        assert "engagement" not in doc

    def test_roundtrip_example(self):
        rec = make_record(4, label=1)
        assert parse_video_record(serialize_video_record(rec)) == rec


coord = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False, allow_infinity=False)
channel = st.floats(min_value=0.0, max_value=255.0, allow_nan=False)


@st.composite
def video_records(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    fps = draw(st.floats(min_value=1.0, max_value=120.0, allow_nan=False))
    width = draw(st.integers(min_value=1, max_value=4096))
    height = draw(st.integers(min_value=1, max_value=4096))
    frames = []
    samples = []
    for i in range(n):
        pts = tuple((draw(coord), draw(coord)) for _ in range(68))
        frames.append(
            LandmarkFrame(
                frame_index=i,
                timestamp_s=i / fps,
                image_width=width,
                image_height=height,
                points=pts,
            )
        )
        samples.append((draw(channel), draw(channel), draw(channel)))
    label = draw(st.one_of(st.none(), st.integers(min_value=0, max_value=3)))
    return VideoRecord(
        video_id=draw(st.text(min_size=1, max_size=12)),
        fps=fps,
        frames=tuple(frames),
        trace=RgbTrace(fps=fps, samples=tuple(samples)),
        label=EngagementLabel(label) if label is not None else None,
    )


@settings(max_examples=60, deadline=None)
@given(video_records())
def test_roundtrip_is_identity(rec):
    assert parse_video_record(serialize_video_record(rec)) == rec


class TestManifest:
    def test_two_rows(self):
        text = "video_id,path,engagement\na,x.json,0\nb,y.json,3\n"
        entries = parse_manifest(text)
        assert len(entries) == 2
        assert entries[0] == ("a", "x.json", EngagementLabel(0))
        assert entries[1][2].level == 3

    def test_label_out_of_range_reports_row(self):
        text = "video_id,path,engagement\na,x.json,0\nb,y.json,5\n"
        with pytest.raises(DataError, match="line 3"):
            parse_manifest(text)

    def test_empty_after_header(self):
        assert parse_manifest("video_id,path,engagement\n") == []

    def test_missing_column(self):
        with pytest.raises(DataError, match="header"):
            parse_manifest("video_id,engagement\na,0\n")

    def test_format_roundtrip(self):
        text = format_manifest([("a", "p/a.json", 2), ("b", "p/b.json", 0)])
        assert text.endswith("\n") and "\r" not in text
        entries = parse_manifest(text)
        assert [(v, p, l.level) for v, p, l in entries] == [
            ("a", "p/a.json", 2),
            ("b", "p/b.json", 0),
        ]
