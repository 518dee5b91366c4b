import math

import numpy as np
import pytest

from engagekit.datamodel import DataError, RgbTrace
from engagekit.physio import (
    BvpSignal,
    InsufficientBeatsError,
    PhysioParams,
    bandpass,
    compute_physio_features,
    detect_beats,
    detrend,
    extract_bvp,
    extract_physio_features,
    debug_table,
)
from engagekit.synthgen import gen_pulse_trace, sigma_for_snr_db


def dominant_frequency(x, fps):
    """FFT oracle: frequency of the largest positive-frequency bin."""
    spectrum = np.abs(np.fft.rfft(x - np.mean(x)))
    freqs = np.fft.rfftfreq(len(x), 1.0 / fps)
    return freqs[int(np.argmax(spectrum))]


def fft_bin_amplitude(x, fps, f):
    spectrum = np.abs(np.fft.rfft(x)) / len(x) * 2.0
    freqs = np.fft.rfftfreq(len(x), 1.0 / fps)
    return spectrum[int(np.argmin(np.abs(freqs - f)))]


def constant_trace(value=120.0, n=300, fps=30.0):
    return RgbTrace(fps=fps, samples=tuple((value, value, value) for _ in range(n)))


class TestExtractBvp:
    def test_constant_trace_gives_zero_bvp(self):
        bvp = extract_bvp(constant_trace())
        assert np.abs(bvp.samples).max() == 0.0
        assert len(bvp) == 300

    def test_embedded_pulse_dominates_spectrum(self):
        trace = gen_pulse_trace(72.0, 30.0, 10.0)
        bvp = extract_bvp(trace)
        assert dominant_frequency(bvp.samples, 30.0) == pytest.approx(1.2, abs=0.1)

    def test_sigma_s2_zero_handled(self):
        # relative deviations +w on G, -w on B, none on R make S2 vanish in
        # every window while S1 = 2w stays alive; w alternates so each
        # even-length window mean is exactly the baseline (fps 30 -> window 48)
        n, fps = 120, 30.0
        w = 0.01 * (-1.0) ** np.arange(n)
        samples = tuple((140.0, 110.0 * (1 + wi), 95.0 * (1 - wi)) for wi in w)
        bvp = extract_bvp(RgbTrace(fps=fps, samples=samples))
        assert np.all(np.isfinite(bvp.samples))
        assert np.abs(bvp.samples).max() > 0
        interior = bvp.samples[50:70]
        assert np.all(np.sign(interior) == np.sign(w[50:70]))  # h collapsed to S1 = 2w

    def test_scaling_invariance(self):
        trace = gen_pulse_trace(66.0, 30.0, 8.0)
        arr = trace.channels()
        scaled = RgbTrace(fps=30.0, samples=tuple(map(tuple, arr * 0.5)))
        a = extract_bvp(trace).samples
        b = extract_bvp(scaled).samples
        assert np.abs(a - b).max() <= 1e-9 * max(1.0, np.abs(a).max())

    def test_too_short_trace(self):
        with pytest.raises(DataError, match="shorter"):
            extract_bvp(constant_trace(n=10))

    def test_zero_channel_mean_names_window(self):
        samples = [(100.0, 100.0, 100.0)] * 100
        for k in range(40, 100):
            samples[k] = (0.0, 100.0, 100.0)
        with pytest.raises(DataError, match="window"):
            extract_bvp(RgbTrace(fps=30.0, samples=tuple(samples)))


class TestDetrend:
    def test_linear_ramp_interior_residual(self):
        fps, n = 30.0, 300
        ramp = np.linspace(0.0, 10.0, n)
        out = detrend(BvpSignal(samples=ramp, fps=fps)).samples
        interior = out[20:-20]
        assert np.abs(interior).max() < 0.01 * 10.0

    def test_zero_signal(self):
        out = detrend(BvpSignal(samples=np.zeros(120), fps=30.0)).samples
        assert np.abs(out).max() == 0.0

    def test_drift_attenuated_10x(self):
        fps, dur = 30.0, 20.0
        t = np.arange(int(fps * dur)) / fps
        signal = np.sin(2 * np.pi * 1.2 * t) + 2.0 * np.sin(2 * np.pi * 0.05 * t)
        out = detrend(BvpSignal(samples=signal, fps=fps)).samples
        before = fft_bin_amplitude(signal, fps, 0.05)
        after = fft_bin_amplitude(out, fps, 0.05)
        assert after <= before / 10.0

    def test_too_short_signal(self):
        with pytest.raises(DataError, match="short"):
            detrend(BvpSignal(samples=np.zeros(30), fps=30.0))


class TestBandpass:
    def test_passband_center_within_1db(self):
        fps = 30.0
        t = np.arange(int(fps * 20)) / fps
        x = np.sin(2 * np.pi * 1.5 * t)
        y = bandpass(BvpSignal(samples=x, fps=fps), 0.7, 4.0).samples
        amp = np.abs(y[len(y) // 4 : -len(y) // 4]).max()
        assert 0.89 <= amp <= 1.12

    @pytest.mark.parametrize("freq", [0.1, 8.0])
    def test_stopband_20db(self, freq):
        fps = 30.0
        t = np.arange(int(fps * 30)) / fps
        x = np.sin(2 * np.pi * freq * t)
        y = bandpass(BvpSignal(samples=x, fps=fps), 0.7, 4.0).samples
        amp = np.abs(y[len(y) // 4 : -len(y) // 4]).max()
        assert amp <= 10 ** (-20 / 20)

    def test_invalid_band(self):
        x = BvpSignal(samples=np.zeros(100), fps=30.0)
        with pytest.raises(DataError):
            bandpass(x, 4.0, 0.7)
        with pytest.raises(DataError):
            bandpass(x, 0.7, 16.0)  # above nyquist

    def test_linearity(self, rng):
        fps = 30.0
        x = rng.normal(size=600)
        y = rng.normal(size=600)
        a, b = 2.5, -1.25
        fx = bandpass(BvpSignal(samples=x, fps=fps), 0.7, 4.0).samples
        fy = bandpass(BvpSignal(samples=y, fps=fps), 0.7, 4.0).samples
        fxy = bandpass(BvpSignal(samples=a * x + b * y, fps=fps), 0.7, 4.0).samples
        assert np.abs(fxy - (a * fx + b * fy)).max() < 1e-9 * max(1.0, np.abs(fxy).max())

    def test_zero_phase_peak_shift(self):
        from scipy.signal import find_peaks

        fps = 30.0
        t = np.arange(int(fps * 10)) / fps
        x = np.sin(2 * np.pi * 1.5 * t)
        y = bandpass(BvpSignal(samples=x, fps=fps), 0.7, 4.0).samples
        peaks_in, _ = find_peaks(x[30:-30])
        peaks_out, _ = find_peaks(y[30:-30])
        for p in peaks_in:
            assert np.abs(peaks_out - p).min() <= 1


class TestDetectBeats:
    def filtered_sine(self, freq=1.2, fps=30.0, dur=10.0, noise=0.0, seed=0):
        t = np.arange(int(fps * dur)) / fps
        x = np.sin(2 * np.pi * freq * t)
        if noise:
            x = x + np.random.default_rng(seed).normal(0.0, noise, len(x))
        return bandpass(BvpSignal(samples=x, fps=fps), 0.7, 4.0)

    def test_clean_sine_peak_count_and_rr(self):
        beats = detect_beats(self.filtered_sine())
        assert len(beats.systolic_peak_indices) == 12
        assert np.allclose(beats.rr_intervals_s, 1 / 1.2, atol=1 / 30.0)

    def test_noisy_rr_mean(self):
        means = []
        for seed in range(100):
            beats = detect_beats(self.filtered_sine(noise=0.1, seed=seed))
            means.append(abs(float(np.mean(beats.rr_intervals_s)) - 1 / 1.2))
        assert np.quantile(means, 0.95) < 0.040

    def test_flat_signal_insufficient(self):
        flat = bandpass(BvpSignal(samples=np.zeros(300), fps=30.0), 0.7, 4.0)
        with pytest.raises(InsufficientBeatsError, match="insufficient beats"):
            detect_beats(flat)

    def test_peak_count_matches_duration(self):
        for freq, dur in ((1.0, 10.0), (2.0, 7.0), (0.8, 15.0)):
            beats = detect_beats(self.filtered_sine(freq=freq, dur=dur))
            assert abs(len(beats.systolic_peak_indices) - math.floor(freq * dur)) <= 1

    def test_troughs_interleave(self):
        beats = detect_beats(self.filtered_sine())
        assert len(beats.trough_indices) >= len(beats.systolic_peak_indices) - 2


class TestPhysioFeatures:
    def test_uniform_rr(self):
        fps = 30.0
        t = np.arange(int(fps * 10)) / fps
        f = bandpass(BvpSignal(samples=np.sin(2 * np.pi * 1.25 * t), fps=fps), 0.7, 4.0)
        feats = compute_physio_features(detect_beats(f), f)
        assert feats.ppi_avg_s == pytest.approx(0.8, abs=2 / fps)
        assert feats.hr_trend_bpm == pytest.approx(75.0, abs=3.0)

    def test_mean_of_rates_not_rate_of_mean(self):
        from engagekit.physio import BeatSeries, FilteredBvp

        fps = 10.0
        idx = (0, 5, 15)  # RR = 0.5 s then 1.0 s
        beats = BeatSeries(
            systolic_peak_indices=idx,
            trough_indices=(2, 10),
            rr_intervals_s=(0.5, 1.0),
            fps=fps,
        )
        f = FilteredBvp(samples=np.ones(20), band=(0.7, 4.0), fps=fps)
        feats = compute_physio_features(beats, f)
        assert feats.ppi_avg_s == pytest.approx(0.75)
        assert feats.hr_trend_bpm == pytest.approx(90.0)  # mean(120, 60)

    def test_cumulative_sums_are_amplitude_sums(self):
        fps = 30.0
        t = np.arange(int(fps * 10)) / fps
        f = bandpass(BvpSignal(samples=np.sin(2 * np.pi * 1.2 * t), fps=fps), 0.7, 4.0)
        beats = detect_beats(f)
        feats = compute_physio_features(beats, f)
        assert feats.cs_sys == pytest.approx(f.samples[list(beats.systolic_peak_indices)].sum())
        assert feats.cs_dia == pytest.approx(f.samples[list(beats.trough_indices)].sum())
        assert feats.cs_sys > 0 > feats.cs_dia


class TestFullChain:
    def test_72bpm_end_to_end(self):
        feats = extract_physio_features(gen_pulse_trace(72.0, 30.0, 10.0))
        assert feats.hr_trend_bpm == pytest.approx(72.0, abs=3.0)
        assert feats.is_valid

    def test_debug_table_shape(self):
        table = debug_table(gen_pulse_trace(72.0, 30.0, 10.0))
        lines = table.strip().splitlines()
        assert lines[0] == "t_s,bvp,filtered,is_sys_peak,is_trough"
        assert len(lines) == 301
        assert any(line.split(",")[3] == "1" for line in lines[1:])

    def test_snr_14db_95th_percentile(self):
        sigma = sigma_for_snr_db(14.0)
        errors = []
        for seed in range(100):
            trace = gen_pulse_trace(72.0, 30.0, 10.0, noise_sigma=sigma, seed=seed)
            feats = extract_physio_features(trace)
            errors.append(abs(feats.hr_trend_bpm - 72.0))
        assert np.quantile(errors, 0.95) < 3.0

    def test_null_signal_flagged(self):
        trace = gen_pulse_trace(72.0, 30.0, 10.0, noise_sigma=0.4, pulse_amp=0.0, seed=3)
        try:
            feats = extract_physio_features(trace)
        except InsufficientBeatsError:
            return
        assert not feats.is_valid or feats.hr_trend_bpm != pytest.approx(72.0, abs=3.0)
