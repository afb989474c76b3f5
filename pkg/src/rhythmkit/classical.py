"""Signal conditioning, FFT spectral-peak HR and the GREEN/CHROM/POS baselines.

The three pulse extractors are re-implementations of the published methods
with fixed constants:

* GREEN - spatial mean of the green channel.
* CHROM - per-block chrominance projection ``X - (std X / std Y) * Y`` with
  ``X = 3R - 2G`` and ``Y = 1.5R + G - 1.5B`` on mean-normalised colours.
* POS - plane-orthogonal-to-skin projection over 1.6 s windows, overlap-added.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg, signal as sps
from scipy import sparse

from .errors import NoPeakError, RhythmKitError
from .stmap import ClipWindow, SpatialTemporalMap

BAND_HZ = (0.7, 2.5)
MIN_FFT = 8192
DETREND_LAMBDA_30FPS = 300.0
BANDPASS_ORDER = 2
SNR_THRESHOLD_DB = 6.0
POS_WINDOW_S = 1.6

ESTIMATORS = ("green", "chrom", "pos")


@dataclass(frozen=True)
class PulseSignal:
    samples: np.ndarray
    fps: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise ValueError("pulse samples must be a finite 1-D array")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class HrEstimate:
    hr_bpm: float
    snr_db: float | None = None
    clip: ClipWindow | None = None

    @property
    def reliable(self) -> bool:
        """True when the peak stands clear of the in-band noise floor."""
        return self.snr_db is not None and self.snr_db >= SNR_THRESHOLD_DB


def default_detrend_lambda(fps: float) -> float:
    """300 at 30 fps; scaled with fps**2 so the cut-off frequency stays put."""
    return DETREND_LAMBDA_30FPS * (fps / 30.0) ** 2


def _second_difference_bands(n: int, lam: float) -> np.ndarray:
    """Upper banded storage of I + lam^2 D'D for ``linalg.solveh_banded``."""
    d = sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n))
    dtd = (d.T @ d).tocsr()
    ab = np.zeros((3, n))
    ab[2] = 1.0 + lam**2 * dtd.diagonal(0)
    ab[1, 1:] = lam**2 * dtd.diagonal(1)
    ab[0, 2:] = lam**2 * dtd.diagonal(2)
    return ab


def detrend(signal, smoothing_lambda: float | None = None, fps: float = 30.0) -> PulseSignal:
    """Smoothness-priors detrending: ``x - (I + lam^2 D'D)^-1 x``.

    ``D`` is the second-difference operator, so linear trends are removed
    exactly.
    """
    if isinstance(signal, PulseSignal):
        fps, signal = signal.fps, signal.samples
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or len(x) < 3:
        raise ValueError(f"detrend needs at least 3 samples, got {x.shape}")
    lam = default_detrend_lambda(fps) if smoothing_lambda is None else float(smoothing_lambda)
    trend = linalg.solveh_banded(_second_difference_bands(len(x), lam), x)
    return PulseSignal(x - trend, fps)


def bandpass(signal, fps: float = 30.0, lo_hz: float = BAND_HZ[0], hi_hz: float = BAND_HZ[1],
             order: int = BANDPASS_ORDER) -> PulseSignal:
    """Zero-phase Butterworth band-pass (forward-backward filtering)."""
    if isinstance(signal, PulseSignal):
        fps, signal = signal.fps, signal.samples
    if not 0 < lo_hz < hi_hz < fps / 2:
        raise ValueError(f"invalid band [{lo_hz}, {hi_hz}] Hz at {fps} fps")
    sos = sps.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=fps, output="sos")
    x = np.asarray(signal, dtype=np.float64)
    return PulseSignal(sps.sosfiltfilt(sos, x), fps)


def bandpass_gain(freq_hz, fps: float = 30.0, lo_hz: float = BAND_HZ[0], hi_hz: float = BAND_HZ[1],
                  order: int = BANDPASS_ORDER) -> np.ndarray:
    """Amplitude gain of :func:`bandpass` (|H|^2 for the two passes)."""
    sos = sps.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=fps, output="sos")
    _, h = sps.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freq_hz, dtype=float)), fs=fps)
    return np.abs(h) ** 2


def condition(signal, fps: float, lo_hz: float = BAND_HZ[0], hi_hz: float = BAND_HZ[1]) -> PulseSignal:
    return bandpass(detrend(signal, fps=fps), fps, lo_hz, hi_hz)


def _parabolic_peak(mag: np.ndarray, k: int) -> float:
    """Vertex offset (in bins) of the parabola through bins k-1, k, k+1."""
    if k <= 0 or k >= len(mag) - 1:
        return 0.0
    a, b, c = mag[k - 1], mag[k], mag[k + 1]
    denom = a - 2 * b + c
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))


def spectral_peak_hr(signal, fps: float = 30.0, lo_hz: float = BAND_HZ[0],
                     hi_hz: float = BAND_HZ[1], min_fft: int = MIN_FFT) -> HrEstimate:
    """HR from the dominant in-band peak of the magnitude spectrum.

    The mean is removed and a Hann window applied before a zero-padded FFT
    of at least ``min_fft`` points; the peak bin is refined by parabolic
    interpolation. ``snr_db`` compares power inside the Hann main lobe around
    the peak (half-width ``2 * fps / T``) with the rest of the band.
    """
    if isinstance(signal, PulseSignal):
        fps, signal = signal.fps, signal.samples
    x = np.asarray(signal, dtype=np.float64)
    if len(x) < 2 * fps:
        raise ValueError(f"need at least 2 s of samples, got {len(x)} at {fps} fps")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    x = x - x.mean()
    scale = float(np.max(np.abs(signal))) if len(x) else 0.0
    if not np.any(np.abs(x) > 1e-12 * max(scale, 1e-300)):
        raise NoPeakError("no spectral peak: signal is constant")

    n_fft = max(min_fft, 1 << (len(x) - 1).bit_length())
    mag = np.abs(np.fft.rfft(x * np.hanning(len(x)), n=n_fft))
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / fps)
    band = np.flatnonzero((freqs >= lo_hz) & (freqs <= hi_hz))
    if len(band) == 0:
        raise ValueError(f"band [{lo_hz}, {hi_hz}] Hz holds no FFT bins")
    k = int(band[np.argmax(mag[band])])
    if mag[k] <= 0.0:
        raise NoPeakError("no spectral peak: empty band")
    f_peak = (k + _parabolic_peak(mag, k)) * fps / n_fft

    power = mag[band] ** 2
    near = np.abs(freqs[band] - f_peak) <= 2.0 * fps / len(x)
    p_sig = float(power[near].sum())
    p_noise = float(power[~near].sum())
    snr_db = 10.0 * math.log10(p_sig / p_noise) if p_noise > 0 else math.inf
    return HrEstimate(hr_bpm=60.0 * f_peak, snr_db=snr_db)


# ---------------------------------------------------------------------------
# pulse extraction


def _as_traces(traces) -> tuple[np.ndarray, float | None]:
    """Coerce input to a (T, n, C) array; maps also yield their fps."""
    fps = None
    if isinstance(traces, SpatialTemporalMap):
        fps = traces.fps
        if traces.channels == 3 and traces.colorspace != "rgb":
            raise ValueError(f"{traces.colorspace} maps hold no RGB traces")
        traces = traces.data
    arr = np.asarray(traces, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise ValueError(f"traces must be (T, C) or (T, n, C), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("traces contain non-finite values")
    return arr, fps


def _require_rgb(arr: np.ndarray, method: str) -> None:
    if arr.shape[-1] != 3:
        raise ValueError(f"{method} needs RGB traces, got {arr.shape[-1]} channel(s)")


def _require_variation(pulse: np.ndarray, scale: float) -> None:
    if np.ptp(pulse) <= 1e-9 * max(scale, 1e-300):
        raise NoPeakError("no spectral peak: pulse signal has no temporal variation")


def _finish(pulse: np.ndarray, scale: float, fps: float, lo_hz: float, hi_hz: float) -> HrEstimate:
    _require_variation(pulse, scale)
    return spectral_peak_hr(condition(pulse, fps, lo_hz, hi_hz), fps, lo_hz, hi_hz)


def _channel_means(arr: np.ndarray) -> np.ndarray:
    mu = arr.mean(axis=0)
    if np.any(np.abs(mu) <= 1e-12):
        raise RhythmKitError("degenerate channel: zero temporal mean")
    return mu


def green_pulse(traces) -> np.ndarray:
    arr, _ = _as_traces(traces)
    channel = 1 if arr.shape[-1] == 3 else 0
    return arr[:, :, channel].mean(axis=1)


def chrom_pulse(traces) -> np.ndarray:
    arr, _ = _as_traces(traces)
    _require_rgb(arr, "CHROM")
    norm = arr / _channel_means(arr)
    r, g, b = norm[..., 0], norm[..., 1], norm[..., 2]
    x = 3.0 * r - 2.0 * g
    y = 1.5 * r + g - 1.5 * b
    sx, sy = x.std(axis=0), y.std(axis=0)
    alpha = np.divide(sx, sy, out=np.zeros_like(sx), where=sy > 0)
    return (x - alpha * y).mean(axis=1)


def pos_pulse(traces, fps: float, window_s: float = POS_WINDOW_S) -> np.ndarray:
    arr, _ = _as_traces(traces)
    _require_rgb(arr, "POS")
    t_len = len(arr)
    win = int(math.ceil(window_s * fps))
    if win > t_len:
        raise ValueError(f"POS window of {win} frames longer than clip of {t_len}")
    _channel_means(arr)
    # (M, n, C, win) views of every window position
    seg = sliding_window_view(arr, win, axis=0)
    mu = seg.mean(axis=-1, keepdims=True)
    if np.any(np.abs(mu) <= 1e-12):
        raise RhythmKitError("degenerate channel: zero window mean")
    cn = seg / mu
    s1 = cn[:, :, 1] - cn[:, :, 2]
    s2 = cn[:, :, 1] + cn[:, :, 2] - 2.0 * cn[:, :, 0]
    sd1, sd2 = s1.std(axis=-1, keepdims=True), s2.std(axis=-1, keepdims=True)
    alpha = np.divide(sd1, sd2, out=np.zeros_like(sd1), where=sd2 > 0)
    h = s1 + alpha * s2
    h -= h.mean(axis=-1, keepdims=True)
    # overlap-add window m into frames m .. m + win - 1
    out = np.zeros((t_len, arr.shape[1]))
    n_win = h.shape[0]
    for k in range(win):
        out[k:k + n_win] += h[:, :, k]
    return out.mean(axis=1)


def _resolve_fps(fps: float | None, map_fps: float | None) -> float:
    fps = fps if fps is not None else map_fps
    if fps is None:
        raise ValueError("fps is required for raw traces")
    return float(fps)


def estimate_green(traces, fps: float | None = None, lo_hz: float = BAND_HZ[0],
                   hi_hz: float = BAND_HZ[1]) -> HrEstimate:
    arr, map_fps = _as_traces(traces)
    fps = _resolve_fps(fps, map_fps)
    pulse = green_pulse(arr)
    return _finish(pulse, float(np.max(np.abs(pulse))), fps, lo_hz, hi_hz)


def estimate_chrom(traces, fps: float | None = None, lo_hz: float = BAND_HZ[0],
                   hi_hz: float = BAND_HZ[1]) -> HrEstimate:
    arr, map_fps = _as_traces(traces)
    fps = _resolve_fps(fps, map_fps)
    # normalised colours are O(1)
    return _finish(chrom_pulse(arr), 1.0, fps, lo_hz, hi_hz)


def estimate_pos(traces, fps: float | None = None, lo_hz: float = BAND_HZ[0],
                 hi_hz: float = BAND_HZ[1], window_s: float = POS_WINDOW_S) -> HrEstimate:
    arr, map_fps = _as_traces(traces)
    fps = _resolve_fps(fps, map_fps)
    return _finish(pos_pulse(arr, fps, window_s), 1.0, fps, lo_hz, hi_hz)


def estimate(method: str, traces, fps: float | None = None) -> HrEstimate:
    try:
        fn = {"green": estimate_green, "chrom": estimate_chrom, "pos": estimate_pos}[method]
    except KeyError:
        raise ValueError(f"unknown estimator {method!r}; choose from {ESTIMATORS}") from None
    return fn(traces, fps)
