"""Blood-volume-pulse extraction and per-video cardiovascular features.

The pulse signal is recovered from the forehead RGB trace with the
plane-orthogonal-to-skin projection applied over a sliding window with
overlap-add, then detrended, band-pass filtered, and reduced to beat-level
features: mean peak-to-peak interval, cumulative systolic/diastolic peak
sums, and the mean instantaneous heart rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt, find_peaks

from .datamodel import DataError, RgbTrace

# Plane-orthogonal-to-skin projection of temporally normalized RGB:
# S1 = G - B, S2 = G + B - 2R.
POS_PROJECTION = np.array([[0.0, 1.0, -1.0], [-2.0, 1.0, 1.0]])
POS_PROJECTION.setflags(write=False)

HR_VALID_RANGE_BPM = (30.0, 240.0)


class InsufficientBeatsError(DataError):
    """Fewer than two systolic peaks were found; beat features are undefined."""


@dataclass(frozen=True)
class PhysioParams:
    """Tunable parameters of the pulse-extraction chain."""

    window_s: float = 1.6
    band_low_hz: float = 0.7
    band_high_hz: float = 4.0
    filter_order: int = 2
    detrend_window_s: float = 1.0
    peak_prominence_frac: float = 0.3
    max_bpm: float = 240.0

    def __post_init__(self) -> None:
        if self.window_s <= 0 or self.detrend_window_s <= 0:
            raise DataError("window lengths must be positive")
        if not 0 < self.band_low_hz < self.band_high_hz:
            raise DataError(f"invalid band ({self.band_low_hz}, {self.band_high_hz})")
        if self.filter_order < 1 or self.peak_prominence_frac <= 0 or self.max_bpm <= 0:
            raise DataError("filter order, prominence fraction and max_bpm must be positive")


@dataclass(frozen=True, eq=False)
class BvpSignal:
    """Raw blood-volume-pulse samples (arbitrary units) at the trace frame rate."""

    samples: np.ndarray
    fps: float

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=float)
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise DataError("BVP samples must be a finite 1-D sequence")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        if self.fps <= 0:
            raise DataError("fps must be positive")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True, eq=False)
class FilteredBvp:
    """Band-passed pulse signal and the band that produced it."""

    samples: np.ndarray
    band: tuple[float, float]
    fps: float

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        low, high = self.band
        if not 0 < low < high < self.fps / 2.0:
            raise DataError(f"band ({low}, {high}) invalid for fps {self.fps}")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class BeatSeries:
    """Detected systolic peaks / diastolic troughs and the derived RR intervals."""

    systolic_peak_indices: tuple[int, ...]
    trough_indices: tuple[int, ...]
    rr_intervals_s: tuple[float, ...]
    fps: float

    def __post_init__(self) -> None:
        idx = self.systolic_peak_indices
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError("systolic peak indices must be strictly increasing")
        if any(rr <= 0 for rr in self.rr_intervals_s):
            raise DataError("RR intervals must be positive")


@dataclass(frozen=True)
class PhysioVideoFeatures:
    """Per-video cardiovascular summary consumed by the physiological classifier."""

    ppi_avg_s: float
    cs_sys: float
    cs_dia: float
    hr_trend_bpm: float

    @property
    def is_valid(self) -> bool:
        lo, hi = HR_VALID_RANGE_BPM
        return lo <= self.hr_trend_bpm <= hi

    def vector(self) -> np.ndarray:
        return np.array([self.ppi_avg_s, self.cs_sys, self.cs_dia, self.hr_trend_bpm])


FEATURE_NAMES = ("ppi_avg_s", "cs_sys", "cs_dia", "hr_trend_bpm")


def extract_bvp(trace: RgbTrace, params: PhysioParams | None = None) -> BvpSignal:
    """Recover the pulse signal from an RGB trace by sliding-window projection.

    Per window: each channel is divided by its window mean, projected to
    S1 = G - B and S2 = G + B - 2R, tuned as h = S1 + (std(S1)/std(S2)) * S2
    (the tuning term drops out when std(S2) == 0), zero-meaned and
    overlap-added. Output length equals input length.
    """
    params = params or PhysioParams()
    c = trace.channels()
    n = c.shape[0]
    window = int(round(params.window_s * trace.fps))
    if window < 2:
        raise DataError(f"window of {window} samples is too short")
    if n < window:
        raise DataError(f"trace of {n} samples is shorter than one {window}-sample window")

    out = np.zeros(n)
    for end in range(window - 1, n):
        start = end - window + 1
        win = c[start : end + 1]
        mean = win.mean(axis=0)
        if np.any(mean == 0.0):
            raise DataError(f"zero channel mean in window starting at sample {start}")
        norm = win / mean
        s1 = norm[:, 1] - norm[:, 2]
        s2 = norm[:, 1] + norm[:, 2] - 2.0 * norm[:, 0]
        sd2 = s2.std()
        h = s1 + (s1.std() / sd2) * s2 if sd2 > 0.0 else s1
        out[start : end + 1] += h - h.mean()
    return BvpSignal(samples=out, fps=trace.fps)


def detrend(bvp: BvpSignal, params: PhysioParams | None = None) -> BvpSignal:
    """Remove slow drift by subtracting a centered moving average (~1 s window)."""
    params = params or PhysioParams()
    x = bvp.samples
    n = len(x)
    if n < 2 * bvp.fps:
        raise DataError(f"signal of {n} samples is too short to detrend at {bvp.fps} fps")
    half = max(1, int(round(params.detrend_window_s * bvp.fps)) // 2)
    # shrinking window at the edges: mean over [i-half, i+half] clipped to bounds
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, n - 1)
    trend = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)
    return BvpSignal(samples=x - trend, fps=bvp.fps)


def bandpass(
    bvp: BvpSignal, low_hz: float, high_hz: float, params: PhysioParams | None = None
) -> FilteredBvp:
    """Zero-phase Butterworth band-pass (applied forward then backward)."""
    params = params or PhysioParams()
    nyq = bvp.fps / 2.0
    if not 0 < low_hz < high_hz < nyq:
        raise DataError(f"band ({low_hz}, {high_hz}) invalid for fps {bvp.fps}")
    b, a = butter(params.filter_order, [low_hz / nyq, high_hz / nyq], btype="band")
    padlen = 3 * (max(len(a), len(b)) - 1)
    if len(bvp) <= padlen:
        raise DataError(f"signal of {len(bvp)} samples too short for band-pass (needs > {padlen})")
    y = filtfilt(b, a, bvp.samples)
    return FilteredBvp(samples=y, band=(low_hz, high_hz), fps=bvp.fps)


def detect_beats(f: FilteredBvp, params: PhysioParams | None = None) -> BeatSeries:
    """Locate systolic peaks and diastolic troughs.

    Peaks are local maxima separated by at least fps * 60 / max_bpm samples
    with prominence >= peak_prominence_frac * std(signal); troughs are the
    same on the negated signal. Raises :class:`InsufficientBeatsError` when
    fewer than two systolic peaks exist.
    """
    params = params or PhysioParams()
    x = f.samples
    if len(x) == 0:
        raise DataError("empty filtered signal")
    sigma = float(x.std())
    if sigma == 0.0:
        raise InsufficientBeatsError("insufficient beats: signal is constant")
    min_dist = max(1, int(round(f.fps * 60.0 / params.max_bpm)))
    prominence = params.peak_prominence_frac * sigma
    peaks, _ = find_peaks(x, distance=min_dist, prominence=prominence)
    troughs, _ = find_peaks(-x, distance=min_dist, prominence=prominence)
    if len(peaks) < 2:
        raise InsufficientBeatsError(f"insufficient beats: found {len(peaks)} systolic peak(s)")
    rr = tuple(float(d) / f.fps for d in np.diff(peaks))
    return BeatSeries(
        systolic_peak_indices=tuple(int(i) for i in peaks),
        trough_indices=tuple(int(i) for i in troughs),
        rr_intervals_s=rr,
        fps=f.fps,
    )


def compute_physio_features(beats: BeatSeries, f: FilteredBvp) -> PhysioVideoFeatures:
    """Beat-level summary features.

    The mean heart rate is the mean of per-interval rates 60 / RR_i, i.e. the
    mean instantaneous rate, not the rate of the mean interval. Cumulative
    systolic/diastolic sums are sums of signal amplitude at peak/trough
    locations.
    """
    if len(beats.systolic_peak_indices) < 2:
        raise InsufficientBeatsError("insufficient beats: need at least 2 systolic peaks")
    rr = np.array(beats.rr_intervals_s)
    x = f.samples
    return PhysioVideoFeatures(
        ppi_avg_s=float(rr.mean()),
        cs_sys=float(x[list(beats.systolic_peak_indices)].sum()),
        cs_dia=float(x[list(beats.trough_indices)].sum()) if beats.trough_indices else 0.0,
        hr_trend_bpm=float((60.0 / rr).mean()),
    )


def extract_physio_features(trace: RgbTrace, params: PhysioParams | None = None) -> PhysioVideoFeatures:
    """Full chain: POS projection, detrend, band-pass, beat detection, features."""
    params = params or PhysioParams()
    bvp = extract_bvp(trace, params)
    detrended = detrend(bvp, params)
    filtered = bandpass(detrended, params.band_low_hz, params.band_high_hz, params)
    beats = detect_beats(filtered, params)
    return compute_physio_features(beats, filtered)


def debug_table(trace: RgbTrace, params: PhysioParams | None = None) -> str:
    """CSV debug dump of the chain: t_s, bvp, filtered, is_sys_peak, is_trough."""
    params = params or PhysioParams()
    bvp = extract_bvp(trace, params)
    filtered = bandpass(detrend(bvp, params), params.band_low_hz, params.band_high_hz, params)
    try:
        beats = detect_beats(filtered, params)
        sys_set = set(beats.systolic_peak_indices)
        dia_set = set(beats.trough_indices)
    except InsufficientBeatsError:
        sys_set, dia_set = set(), set()
    lines = ["t_s,bvp,filtered,is_sys_peak,is_trough"]
    for i in range(len(bvp)):
        lines.append(
            f"{i / trace.fps:.6f},{bvp.samples[i]:.9g},{filtered.samples[i]:.9g},"
            f"{int(i in sys_set)},{int(i in dia_set)}"
        )
    return "\n".join(lines) + "\n"
