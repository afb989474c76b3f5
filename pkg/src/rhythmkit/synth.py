"""Synthetic pulse signals, block traces, maps and frame sequences with
known heart rate.

The pulse is a two-harmonic sinusoid driven by an (optionally
piecewise-linear) HR trajectory. Drift and noise levels are expressed in
pulse-amplitude units; ``depth`` converts one pulse unit into a fraction of
the base skin intensity when colours are synthesised.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .classical import PulseSignal
from .geometry import DEFAULT_SCHEMA, LandmarkSchema
from .ingest import N_LANDMARKS, FrameSequence, GroundTruthTrace, LandmarkTrack
from .stmap import ClipWindow, SpatialTemporalMap, map_from_block_means, slide_windows

HR_LIMITS = (42.0, 150.0)
SKIN_RGB = (200.0, 140.0, 120.0)
NIR_BASE = 120.0
BACKGROUND_RGB = (40.0, 90.0, 60.0)


@dataclass(frozen=True)
class SynthSpec:
    hr_bpm: float | tuple[tuple[float, float], ...] = 72.0
    fps: float = 30.0
    duration_s: float = 10.0
    amplitude: float = 1.0
    harmonic: float = 0.0
    drift_hz: float = 0.1
    drift_amp: float = 0.0
    motion_sigma: float = 0.0
    sensor_sigma: float = 0.0
    depth: float = 0.01
    channel_ratios: tuple[float, float, float] = (0.5, 1.0, 0.7)
    seed: int = 0

    def __post_init__(self):
        hr = self.hr_bpm
        if isinstance(hr, (list, tuple)):
            knots = tuple((float(t), float(b)) for t, b in hr)
            if not knots or any(b < a for (a, _), (b, _) in zip(knots, knots[1:])):
                raise ValueError("hr trajectory knots must have non-decreasing times")
            object.__setattr__(self, "hr_bpm", knots)
            rates = [b for _, b in knots]
        else:
            object.__setattr__(self, "hr_bpm", float(hr))
            rates = [float(hr)]
        if min(rates) < HR_LIMITS[0] or max(rates) > HR_LIMITS[1]:
            raise ValueError(f"hr must lie in {HR_LIMITS} bpm, got {rates}")
        if not self.fps > 2.0 * max(rates) / 60.0:
            raise ValueError(f"fps {self.fps} too low for {max(rates)} bpm")
        if not self.duration_s > 0:
            raise ValueError("duration must be positive")
        for name in ("amplitude", "harmonic", "drift_amp", "motion_sigma", "sensor_sigma", "depth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "channel_ratios", tuple(float(r) for r in self.channel_ratios))

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))

    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) / self.fps

    def hr_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if isinstance(self.hr_bpm, tuple):
            ts, rates = zip(*self.hr_bpm)
            return np.interp(t, ts, rates)
        return np.full(t.shape, self.hr_bpm)

    # -- text config ---------------------------------------------------
    @classmethod
    def from_file(cls, path) -> "SynthSpec":
        """Parse ``key = value`` lines. ``hr_bpm`` may be ``t:bpm, t:bpm, ...``."""
        kinds = {f.name: f for f in fields(cls)}
        kwargs = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep or key not in kinds:
                raise ValueError(f"{path}:{lineno}: unknown synth setting {key!r}")
            kwargs[key] = _parse_value(key, value)
        return cls(**kwargs)

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if key == "hr_bpm" and isinstance(value, (tuple, list)):
                value = ", ".join(f"{t!r}:{b!r}" for t, b in value)
            elif key == "channel_ratios":
                value = ", ".join(repr(v) for v in value)
            else:
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _parse_value(key: str, value: str):
    value = value.strip().strip("[]")
    if key == "hr_bpm":
        if ":" in value:
            return tuple(tuple(float(v) for v in knot.split(":")) for knot in value.split(","))
        return float(value)
    if key == "channel_ratios":
        return tuple(float(v) for v in value.split(","))
    if key == "seed":
        return int(value)
    return float(value)


def _phase(spec: SynthSpec, t: np.ndarray) -> np.ndarray:
    """2*pi times the integral of the instantaneous pulse frequency."""
    if not isinstance(spec.hr_bpm, tuple):
        return 2.0 * np.pi * spec.hr_bpm / 60.0 * t
    f = spec.hr_at(t) / 60.0
    cyc = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
    return 2.0 * np.pi * (cyc + f[0] * t[0])


def _unit_pulse(spec: SynthSpec, t: np.ndarray, phase0: float) -> np.ndarray:
    ph = _phase(spec, t) + phase0
    return np.sin(ph) + spec.harmonic * np.sin(2.0 * ph)


def gen_pulse_trace(spec: SynthSpec) -> PulseSignal:
    rng = np.random.default_rng(spec.seed)
    t = spec.times()
    phase0, drift_phase = rng.uniform(0, 2 * np.pi, size=2)
    s = spec.amplitude * _unit_pulse(spec, t, phase0)
    s = s + spec.drift_amp * np.sin(2 * np.pi * spec.drift_hz * t + drift_phase)
    noise_sigma = math.hypot(spec.motion_sigma, spec.sensor_sigma)
    if noise_sigma > 0:
        s = s + noise_sigma * rng.standard_normal(len(t))
    return PulseSignal(s, spec.fps)


def gen_synthetic_traces(spec: SynthSpec, n_blocks: int = 25, channels: int = 3) -> np.ndarray:
    """Raw per-block colour means of shape (T, n_blocks, channels).

    Pulse modulation is scaled per channel by ``channel_ratios`` and per
    block by a random gain; drift and motion are common-mode intensity
    changes; sensor noise is independent per block and channel.
    """
    if channels not in (1, 3):
        raise ValueError("channels must be 1 or 3")
    rng = np.random.default_rng(spec.seed)
    t = spec.times()
    phase0, drift_phase = rng.uniform(0, 2 * np.pi, size=2)
    pulse = _unit_pulse(spec, t, phase0)
    common = spec.drift_amp * np.sin(2 * np.pi * spec.drift_hz * t + drift_phase)
    common = common + spec.motion_sigma * rng.standard_normal(len(t))

    base_rgb = np.array(SKIN_RGB) if channels == 3 else np.array([NIR_BASE])
    ratios = np.array(spec.channel_ratios) if channels == 3 else np.array([1.0])
    base = base_rgb * rng.uniform(0.9, 1.1, size=(n_blocks, channels))
    gains = rng.uniform(0.6, 1.4, size=n_blocks)
    sensor = spec.sensor_sigma * rng.standard_normal((len(t), n_blocks, channels))

    mod = (
        spec.amplitude * pulse[:, None, None] * gains[None, :, None] * ratios[None, None, :]
        + common[:, None, None]
        + sensor
    )
    return base[None] * (1.0 + spec.depth * mod)


def trajectory_mean(spec: SynthSpec, start_frame: int, length: int) -> float:
    """Mean instantaneous HR over the frames of a window."""
    t = (start_frame + np.arange(length)) / spec.fps
    return float(spec.hr_at(t).mean())


def gen_synthetic_stmap(spec: SynthSpec, n_blocks: int = 25, channels: int = 3,
                        colorspace: str = "yuv") -> tuple[SpatialTemporalMap, float]:
    """One map spanning the whole spec duration, plus its gt HR."""
    traces = gen_synthetic_traces(spec, n_blocks, channels)
    gt = trajectory_mean(spec, 0, len(traces))
    clip = ClipWindow(0, len(traces), 0, gt)
    stmap = map_from_block_means(traces, np.ones(len(traces), bool), spec.fps, colorspace, clip)
    return stmap, gt


def gen_synthetic_video_maps(spec: SynthSpec, n_blocks: int = 25, channels: int = 3,
                             win_frames: int = 300, step_seconds: float = 0.5,
                             colorspace: str = "yuv", subject_id: str = "",
                             video_id: str = "") -> list[SpatialTemporalMap]:
    """Slide clip windows over one synthetic video and build a map per clip."""
    traces = gen_synthetic_traces(spec, n_blocks, channels)
    valid = np.ones(len(traces), dtype=bool)
    maps = []
    for w in slide_windows(len(traces), spec.fps, win_frames, step_seconds):
        clip = replace(w, gt_hr_bpm=trajectory_mean(spec, w.start_frame, w.length))
        maps.append(map_from_block_means(
            traces[w.start_frame:w.stop_frame], valid[w.start_frame:w.stop_frame],
            spec.fps, colorspace, clip, subject_id, video_id,
        ))
    return maps


# ---------------------------------------------------------------------------
# frames


def synthetic_landmarks(left: float, top: float, right: float, bottom: float,
                        schema: LandmarkSchema = DEFAULT_SCHEMA) -> np.ndarray:
    """An upright 81-point layout for a face filling the given rectangle.

    Semantic points (cheeks, chin, eyebrow centres, eyes) land on the schema
    indices so that the face box spans the rectangle; the rest are spread
    over the interior.
    """
    w = right - left
    cx = 0.5 * (left + right)
    h = (bottom - top - 2.0) / 1.2
    brow_y = top + 1.0 + 0.2 * h
    chin_y = brow_y + h
    mid_y = brow_y + 0.5 * h

    pts = np.zeros((N_LANDMARKS, 2))
    # interior filler on a 9x9 lattice
    gx, gy = np.meshgrid(np.linspace(left + 0.2 * w, right - 0.2 * w, 9),
                         np.linspace(brow_y, chin_y - 0.1 * h, 9))
    pts[:] = np.stack([gx.ravel(), gy.ravel()], axis=1)

    def put(indices, xy):
        for i, p in zip(indices, np.broadcast_to(np.asarray(xy, float), (len(indices), 2))):
            pts[i] = p

    eye_y = brow_y + 0.18 * h
    eye_dx = np.linspace(-0.06, 0.06, len(schema.left_eye)) * w
    put(schema.left_eye, np.stack([cx - 0.2 * w + eye_dx, np.full(len(eye_dx), eye_y)], 1))
    eye_dx = np.linspace(-0.06, 0.06, len(schema.right_eye)) * w
    put(schema.right_eye, np.stack([cx + 0.2 * w + eye_dx, np.full(len(eye_dx), eye_y)], 1))
    put(schema.cheek_left, (left, mid_y))
    put(schema.cheek_right, (right, mid_y))
    put(schema.chin, (cx, chin_y))
    half = len(schema.eyebrow_centers) // 2
    for k, i in enumerate(schema.eyebrow_centers):
        side = -1.0 if k < half else 1.0
        pts[i] = (cx + side * 0.2 * w, brow_y)
    return pts


def gen_synthetic_frames(spec: SynthSpec, size: tuple[int, int] = (64, 64), channels: int = 3,
                         subject_id: str = "synth", video_id: str = "synth_0",
                         ) -> tuple[FrameSequence, LandmarkTrack, GroundTruthTrace]:
    """Skin-tone face rectangle on a non-skin background, pulse-modulated."""
    height, width = size
    if height < 32 or width < 32:
        raise ValueError(f"frame size must be at least 32x32, got {size}")
    rng = np.random.default_rng(spec.seed)
    t = spec.times()
    n = len(t)
    phase0, drift_phase = rng.uniform(0, 2 * np.pi, size=2)
    pulse = spec.amplitude * _unit_pulse(spec, t, phase0)
    common = spec.drift_amp * np.sin(2 * np.pi * spec.drift_hz * t + drift_phase)
    common = common + spec.motion_sigma * rng.standard_normal(n)

    left, right = round(0.15 * width), round(0.85 * width)
    top, bottom = round(0.08 * height), round(0.94 * height)
    if channels == 3:
        skin, bg, ratios = np.array(SKIN_RGB), np.array(BACKGROUND_RGB), np.array(spec.channel_ratios)
    else:
        skin, bg, ratios = np.array([NIR_BASE]), np.array([40.0]), np.array([1.0])

    face = np.zeros((height, width), dtype=bool)
    face[top:bottom, left:right] = True
    frames = np.empty((n, height, width, channels), dtype=np.uint8)
    # at least one grey level of dither so the pulse survives quantisation
    pixel_sigma = np.maximum(skin * spec.depth * spec.sensor_sigma, 1.0)
    for k in range(n):
        colour = skin * (1.0 + spec.depth * (pulse[k] * ratios + common[k]))
        img = np.where(face[..., None], colour, bg)
        img = img + pixel_sigma * rng.standard_normal((height, width, channels))
        frames[k] = np.clip(np.round(img), 0, 255).astype(np.uint8)

    timestamps = np.round(np.arange(n) * 1000.0 / spec.fps).astype(np.int64)
    seq = FrameSequence(frames, timestamps, spec.fps, subject_id, video_id)
    lm = synthetic_landmarks(left, top, right - 1, bottom)
    track = LandmarkTrack(np.repeat(lm[None], n, axis=0), np.ones(n, dtype=bool))
    trace = GroundTruthTrace(timestamps.astype(float), spec.hr_at(t))
    return seq, track, trace


def gen_map_corpus(n_videos: int, clips_per_video: int = 8, hr_range: tuple[float, float] = (50.0, 140.0),
                   seed: int = 0, noise_sigma: float = 0.3, drift_amp: float = 0.5,
                   n_blocks: int = 25, channels: int = 3, win_frames: int = 300,
                   fps: float = 30.0) -> list[SpatialTemporalMap]:
    """Maps from ``n_videos`` seeded synthetic videos, each with a constant
    HR drawn uniformly from ``hr_range`` and ``clips_per_video`` windows
    half a second apart."""
    rng = np.random.default_rng(seed)
    step = int(round(0.5 * fps))
    duration = (win_frames + (clips_per_video - 1) * step) / fps
    maps = []
    for v in range(n_videos):
        spec = SynthSpec(
            hr_bpm=float(rng.uniform(*hr_range)), fps=fps, duration_s=duration,
            harmonic=float(rng.uniform(0.0, 0.5)), drift_amp=drift_amp,
            motion_sigma=noise_sigma, sensor_sigma=noise_sigma,
            seed=int(rng.integers(2**31)),
        )
        maps.extend(gen_synthetic_video_maps(spec, n_blocks, channels, win_frames, 0.5,
                                             subject_id=f"s{seed}_{v:03d}", video_id=f"s{seed}_v{v:03d}"))
    return maps
