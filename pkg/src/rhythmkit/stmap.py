"""Spatial-temporal maps: block pooling, colour transform, normalisation,
clip windowing and temporal masking augmentation.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import GeometryError, RhythmKitError
from .geometry import (
    DEFAULT_SCHEMA,
    LandmarkSchema,
    align_face,
    face_box,
    grid_blocks,
    rgb_to_ycrcb,
    skin_mask,
)

MAP_MAGIC = b"RKM1"
MIN_MASK_COVERAGE = 0.05

COLORSPACES = ("yuv", "rgb", "ycrcb")

YUV_MATRIX = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.169, -0.331, 0.5],
        [0.5, -0.419, -0.081],
    ]
)
YUV_OFFSET = np.array([0.0, 128.0, 128.0])


@dataclass(frozen=True)
class ClipWindow:
    start_frame: int
    length: int
    step_frames: int = 0
    gt_hr_bpm: float | None = None

    def __post_init__(self):
        if self.start_frame < 0 or self.length < 1:
            raise ValueError(f"invalid clip window {self.start_frame}+{self.length}")

    @property
    def stop_frame(self) -> int:
        return self.start_frame + self.length


@dataclass(frozen=True)
class SpatialTemporalMap:
    """A (T, n, c) array of per-block, per-channel signals scaled to [0, 255]."""

    data: np.ndarray
    fps: float
    colorspace: str = "yuv"
    clip: ClipWindow | None = None
    subject_id: str = ""
    video_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"map data must be (T, n, c), got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def t_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def gt_hr_bpm(self) -> float | None:
        return None if self.clip is None else self.clip.gt_hr_bpm

    def rows(self) -> np.ndarray:
        """Flattened (n*c, T) view ordered Y1, U1, V1, Y2, ..."""
        return self.data.reshape(self.t_frames, -1).T


# ---------------------------------------------------------------------------
# pooling and colour


def block_mean(frame: np.ndarray, region: tuple[int, int, int, int], mask: np.ndarray | None = None) -> np.ndarray:
    """Per-channel mean of ``frame`` over the masked pixels of ``region``.

    Falls back to the plain region mean when fewer than 5% of the region's
    pixels are masked in.
    """
    top, left, h, w = region
    if h <= 0 or w <= 0:
        raise ValueError(f"empty region {region}")
    img = np.asarray(frame, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    block = img[top:top + h, left:left + w]
    if block.shape[:2] != (h, w):
        raise ValueError(f"region {region} exceeds frame of shape {img.shape[:2]}")
    if mask is not None:
        m = np.asarray(mask, dtype=bool)[top:top + h, left:left + w]
        count = int(m.sum())
        if count >= MIN_MASK_COVERAGE * h * w and count > 0:
            return block[m].mean(axis=0)
    return block.reshape(-1, block.shape[-1]).mean(axis=0)


def rgb_to_yuv(rgb) -> np.ndarray:
    """Affine RGB -> YUV transform on the last axis."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ YUV_MATRIX.T + YUV_OFFSET


def convert_colorspace(rgb: np.ndarray, colorspace: str) -> np.ndarray:
    if rgb.shape[-1] == 1:
        return rgb
    if colorspace == "yuv":
        return rgb_to_yuv(rgb)
    if colorspace == "rgb":
        return np.asarray(rgb, dtype=np.float64)
    if colorspace == "ycrcb":
        return rgb_to_ycrcb(rgb)
    raise ValueError(f"unknown colorspace {colorspace!r}; expected one of {COLORSPACES}")


def minmax_normalize_row(signal) -> np.ndarray:
    """Scale a signal to [0, 255]; constant signals map to zeros."""
    x = np.asarray(signal, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if not hi > lo:
        return np.zeros_like(x)
    out = (x - lo) * (255.0 / (hi - lo))
    # pin the extremes against rounding
    out[x == lo] = 0.0
    out[x == hi] = 255.0
    return out


def minmax_normalize(data: np.ndarray) -> np.ndarray:
    """Row-wise :func:`minmax_normalize_row` over the time axis of a (T, ...) array."""
    x = np.asarray(data, dtype=np.float64)
    flat = x.reshape(x.shape[0], -1)
    out = np.empty_like(flat)
    for j in range(flat.shape[1]):
        out[:, j] = minmax_normalize_row(flat[:, j])
    return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# windows


def slide_windows(seq_len: int, fps: float, win_frames: int = 300, step_seconds: float = 0.5) -> list[ClipWindow]:
    if win_frames < 1:
        raise ValueError("window must hold at least one frame")
    if win_frames > seq_len:
        raise RhythmKitError(f"sequence of {seq_len} frames shorter than {win_frames}-frame window")
    step = int(round(step_seconds * fps))
    if step < 1:
        raise ValueError(f"step of {step_seconds} s at {fps} fps is under one frame")
    return [ClipWindow(s, win_frames, step) for s in range(0, seq_len - win_frames + 1, step)]


def label_windows(windows, timestamps_ms, trace) -> list[ClipWindow]:
    """Attach the mean ground-truth HR over each window's time span."""
    ts = np.asarray(timestamps_ms)
    return [
        replace(w, gt_hr_bpm=trace.mean_hr(float(ts[w.start_frame]), float(ts[w.stop_frame - 1])))
        for w in windows
    ]


# ---------------------------------------------------------------------------
# map construction


def frame_block_means(frames, track, rows: int = 5, cols: int = 5,
                      schema: LandmarkSchema = DEFAULT_SCHEMA) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame, per-block source-colour means.

    Returns ``(means, valid)`` with ``means`` of shape (N, rows*cols, C).
    Frames whose landmarks are invalid, or whose box misses the frame, get
    ``valid=False`` and zero means.
    """
    frames = np.asarray(frames)
    if frames.ndim == 3:
        frames = frames[..., None]
    n_frames, nc = len(frames), frames.shape[-1]
    if len(track) != n_frames:
        raise ValueError(f"{len(track)} landmark frames for {n_frames} image frames")
    means = np.zeros((n_frames, rows * cols, nc))
    valid = np.zeros(n_frames, dtype=bool)
    for t in range(n_frames):
        if not track.valid[t]:
            continue
        try:
            box = face_box(track.points[t], schema)
            face = align_face(frames[t], box)
            grid = grid_blocks(face, rows, cols)
        except GeometryError:
            continue
        mask = skin_mask(face).pixels
        for i, region in enumerate(grid.regions):
            means[t, i] = block_mean(face.pixels, region, mask)
        valid[t] = True
    return means, valid


def fill_invalid(means: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Linearly interpolate invalid frames from valid neighbours (ends held)."""
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise RhythmKitError("all frames in clip have invalid landmarks")
    if valid.all():
        return np.asarray(means, dtype=np.float64)
    t = np.arange(len(means))
    flat = np.asarray(means, dtype=np.float64).reshape(len(means), -1)
    out = np.empty_like(flat)
    for j in range(flat.shape[1]):
        out[:, j] = np.interp(t, t[valid], flat[valid, j])
    return out.reshape(means.shape)


def map_from_block_means(means: np.ndarray, valid, fps: float, colorspace: str = "yuv",
                         clip: ClipWindow | None = None, subject_id: str = "",
                         video_id: str = "") -> SpatialTemporalMap:
    """Gap-fill, colour-transform and normalise pooled RGB block means."""
    filled = fill_invalid(means, valid)
    converted = convert_colorspace(filled, colorspace)
    cs = colorspace if filled.shape[-1] == 3 else "mono"
    return SpatialTemporalMap(minmax_normalize(converted), fps, cs, clip, subject_id, video_id)


def build_stmap(frames, track, fps: float, grid: tuple[int, int] = (5, 5),
                colorspace: str = "yuv", clip: ClipWindow | None = None,
                schema: LandmarkSchema = DEFAULT_SCHEMA) -> SpatialTemporalMap:
    """Spatial-temporal map of one clip of frames with matching landmarks."""
    if clip is not None:
        frames = np.asarray(frames)[clip.start_frame:clip.stop_frame]
        track = type(track)(track.points[clip.start_frame:clip.stop_frame],
                            track.valid[clip.start_frame:clip.stop_frame])
    means, valid = frame_block_means(frames, track, grid[0], grid[1], schema)
    return map_from_block_means(means, valid, fps, colorspace, clip)


# ---------------------------------------------------------------------------
# augmentation


def draw_mask_span(rng: np.random.Generator, t_frames: int, min_len: int = 10,
                   max_len: int = 30, prob: float = 0.5) -> tuple[int, int] | None:
    """Draw ``(start, length)`` of a masked span, or ``None`` for no mask."""
    if max_len >= t_frames:
        raise ValueError(f"mask length {max_len} must be shorter than the map ({t_frames})")
    if not 1 <= min_len <= max_len:
        raise ValueError(f"invalid mask length range [{min_len}, {max_len}]")
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"mask probability {prob} outside [0, 1]")
    if rng.random() >= prob:
        return None
    length = int(rng.integers(min_len, max_len + 1))
    start = int(rng.integers(0, t_frames - length + 1))
    return start, length


def mask_augment(stmap: SpatialTemporalMap, rng_seed, min_len: int = 10, max_len: int = 30,
                 prob: float = 0.5) -> SpatialTemporalMap:
    """Zero every row over one random time span with probability ``prob``.

    ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(rng_seed)
    span = draw_mask_span(rng, stmap.t_frames, min_len, max_len, prob)
    if span is None:
        return stmap
    data = stmap.data.copy()
    data[span[0]:span[0] + span[1]] = 0.0
    return replace(stmap, data=data)


# ---------------------------------------------------------------------------
# files


def write_stmap(stmap: SpatialTemporalMap, path) -> Path:
    """Write ``<path>`` (binary) and ``<path>.meta`` (key=value text)."""
    path = Path(path)
    t, n, c = stmap.data.shape
    with open(path, "wb") as fh:
        fh.write(MAP_MAGIC + struct.pack("<3If", t, n, c, stmap.fps))
        fh.write(np.ascontiguousarray(stmap.data, dtype="<f4").tobytes())
    clip = stmap.clip
    meta = {
        "subject_id": stmap.subject_id,
        "video_id": stmap.video_id,
        "colorspace": stmap.colorspace,
        "clip_start": "" if clip is None else clip.start_frame,
        "clip_length": "" if clip is None else clip.length,
        "step_frames": "" if clip is None else clip.step_frames,
        "gt_hr_bpm": "" if clip is None or clip.gt_hr_bpm is None else repr(float(clip.gt_hr_bpm)),
    }
    Path(str(path) + ".meta").write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    return path


def read_stmap(path) -> SpatialTemporalMap:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 20 or raw[:4] != MAP_MAGIC:
        raise RhythmKitError(f"{path}: not an RKM1 map file")
    t, n, c, fps = struct.unpack("<3If", raw[4:20])
    expected = 20 + 4 * t * n * c
    if len(raw) != expected:
        raise RhythmKitError(f"{path}: {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=20).reshape(t, n, c).astype(np.float64)

    meta: dict[str, str] = {}
    meta_path = Path(str(path) + ".meta")
    if meta_path.exists():
        for line in meta_path.read_text().splitlines():
            key, sep, value = line.partition("=")
            if sep:
                meta[key.strip()] = value.strip()
    clip = None
    if meta.get("clip_start"):
        gt = meta.get("gt_hr_bpm")
        clip = ClipWindow(
            int(meta["clip_start"]),
            int(meta.get("clip_length") or t),
            int(meta.get("step_frames") or 0),
            float(gt) if gt else None,
        )
    return SpatialTemporalMap(
        data, float(fps), meta.get("colorspace", "yuv"), clip,
        meta.get("subject_id", ""), meta.get("video_id", ""),
    )


def window_count(win_frames, seq_len, step_frames):
    """Closed-form window count, floor((L - W) / s) + 1, zero when W > L.

    Accepts scalars or broadcastable integer arrays.
    """
    w, n, s = np.asarray(win_frames), np.asarray(seq_len), np.asarray(step_frames)
    if np.any(s < 1):
        raise ValueError("step must be at least one frame")
    count = np.where(w > n, 0, (n - w) // s + 1)
    return int(count) if count.ndim == 0 else count
