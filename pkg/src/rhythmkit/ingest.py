"""Loading and validating frame sequences, landmark tracks and ground truth.

On-disk layout of one video directory::

    frames.bin      16-byte header ("RKF1", u32 width, height, channels)
                    followed by uint8 frames, row-major, channel-interleaved
    manifest.csv    optional "# key=value" comment lines, then
                    frame_index,timestamp_ms
    landmarks.csv   frame_index,x0,y0,...,x80,y80
    gt.csv          time_ms,hr_bpm[,bvp]
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestError

FRAME_MAGIC = b"RKF1"
N_LANDMARKS = 81
HR_RANGE = (30.0, 240.0)

FRAMES_FILE = "frames.bin"
MANIFEST_FILE = "manifest.csv"
LANDMARKS_FILE = "landmarks.csv"
GT_FILE = "gt.csv"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FrameSequence:
    """Ordered frames with millisecond timestamps.

    ``frames`` has shape (N, height, width, channels) and dtype uint8.
    """

    frames: np.ndarray
    timestamps_ms: np.ndarray
    nominal_fps: float
    subject_id: str = ""
    video_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames)
        ts = np.asarray(self.timestamps_ms, dtype=np.int64)
        if frames.ndim == 3:
            frames = frames[..., None]
        if frames.ndim != 4 or frames.shape[-1] not in (1, 3):
            raise IngestError(f"frames must be (N, H, W, 1|3), got {frames.shape}")
        if frames.dtype != np.uint8:
            raise IngestError("frames must be 8-bit")
        if len(frames) == 0:
            raise IngestError("empty sequence")
        if len(ts) != len(frames):
            raise IngestError(f"{len(ts)} timestamps for {len(frames)} frames")
        if np.any(ts < 0):
            raise IngestError("negative timestamps")
        if np.any(np.diff(ts) <= 0):
            raise IngestError("non-increasing timestamps")
        if not (self.nominal_fps > 0 and math.isfinite(self.nominal_fps)):
            raise IngestError(f"invalid nominal fps {self.nominal_fps}")
        object.__setattr__(self, "frames", _frozen(frames))
        object.__setattr__(self, "timestamps_ms", _frozen(ts))
        object.__setattr__(self, "nominal_fps", float(self.nominal_fps))

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]


@dataclass(frozen=True)
class LandmarkTrack:
    """Per-frame 81-point landmarks; rows of invalid frames are NaN."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if pts.ndim != 3 or pts.shape[1:] != (N_LANDMARKS, 2):
            raise IngestError(f"landmark points must be (N, 81, 2), got {pts.shape}")
        if valid.shape != (len(pts),):
            raise IngestError("validity flags do not match track length")
        if not np.all(np.isfinite(pts[valid])):
            raise IngestError("valid frame with non-finite landmark")
        pts = pts.copy()
        pts[~valid] = np.nan
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "valid", _frozen(valid))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GroundTruthTrace:
    hr_time_ms: np.ndarray
    hr_bpm: np.ndarray
    bvp_time_ms: np.ndarray | None = None
    bvp: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.hr_time_ms, dtype=np.float64)
        hr = np.asarray(self.hr_bpm, dtype=np.float64)
        if len(hr) == 0:
            raise IngestError("empty trace")
        if t.shape != hr.shape:
            raise IngestError("time and hr columns differ in length")
        if not np.all(np.isfinite(hr)) or hr.min() < HR_RANGE[0] or hr.max() > HR_RANGE[1]:
            raise IngestError("hr out of range [30, 240] bpm")
        if np.any(np.diff(t) < 0):
            raise IngestError("ground-truth times decreasing")
        object.__setattr__(self, "hr_time_ms", _frozen(t))
        object.__setattr__(self, "hr_bpm", _frozen(hr))
        if self.bvp is not None:
            object.__setattr__(self, "bvp", _frozen(np.asarray(self.bvp, dtype=np.float64)))
            object.__setattr__(
                self, "bvp_time_ms", _frozen(np.asarray(self.bvp_time_ms, dtype=np.float64))
            )

    def mean_hr(self, t0_ms: float | None = None, t1_ms: float | None = None) -> float:
        """Mean HR over samples with t0 <= time <= t1.

        Falls back to linear interpolation at the span centre when no sample
        lies inside the span.
        """
        if t0_ms is None:
            return float(self.hr_bpm.mean())
        inside = (self.hr_time_ms >= t0_ms) & (self.hr_time_ms <= t1_ms)
        if inside.any():
            return float(self.hr_bpm[inside].mean())
        return float(np.interp(0.5 * (t0_ms + t1_ms), self.hr_time_ms, self.hr_bpm))


# ---------------------------------------------------------------------------
# frame files


def _read_manifest(path: Path) -> tuple[np.ndarray, dict[str, str]]:
    if not path.exists():
        raise FileNotFoundError(f"missing manifest: {path}")
    meta: dict[str, str] = {}
    rows = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, _, value = stripped.lstrip("#").partition("=")
            meta[key.strip()] = value.strip()
            continue
        body.append(stripped)
    reader = csv.reader(body)
    header = next(reader, None)
    if header is None:
        raise IngestError(f"empty sequence: {path}")
    if [h.strip() for h in header] != ["frame_index", "timestamp_ms"]:
        raise IngestError(f"bad manifest header in {path}: {header}")
    for i, row in enumerate(reader):
        try:
            idx, ts = int(row[0]), int(row[1])
        except (ValueError, IndexError) as exc:
            raise IngestError(f"bad manifest row {i + 2} in {path}: {row}") from exc
        if idx != i:
            raise IngestError(f"manifest frame_index {idx} out of order at row {i + 2}")
        rows.append(ts)
    if not rows:
        raise IngestError(f"empty sequence: {path}")
    ts = np.asarray(rows, dtype=np.int64)
    if np.any(np.diff(ts) <= 0):
        raise IngestError(f"non-increasing timestamps in {path}")
    return ts, meta


def load_frame_sequence(path) -> FrameSequence:
    """Load ``frames.bin`` + ``manifest.csv`` from a video directory."""
    root = Path(path)
    ts, meta = _read_manifest(root / MANIFEST_FILE)
    bin_path = root / FRAMES_FILE
    if not bin_path.exists():
        raise FileNotFoundError(f"missing frame file: {bin_path}")
    raw = bin_path.read_bytes()
    if len(raw) < 16 or raw[:4] != FRAME_MAGIC:
        raise IngestError(f"{bin_path}: not an RKF1 frame file")
    width, height, channels = struct.unpack("<3I", raw[4:16])
    if channels not in (1, 3) or width == 0 or height == 0:
        raise IngestError(f"{bin_path}: bad header {width}x{height}x{channels}")
    frame_size = width * height * channels
    payload = len(raw) - 16
    if payload != frame_size * len(ts):
        raise IngestError(
            f"{bin_path}: payload of {payload} bytes does not match "
            f"{len(ts)} frames of {width}x{height}x{channels}"
        )
    frames = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(len(ts), height, width, channels)

    if "fps" in meta:
        fps = float(meta["fps"])
    elif len(ts) > 1:
        fps = 1000.0 / float(np.median(np.diff(ts)))
    else:
        raise IngestError(f"{root}: cannot infer fps from a single frame")
    return FrameSequence(
        frames=frames,
        timestamps_ms=ts,
        nominal_fps=fps,
        subject_id=meta.get("subject_id", root.parent.name),
        video_id=meta.get("video_id", root.name),
    )


def write_frame_sequence(seq: FrameSequence, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    header = FRAME_MAGIC + struct.pack("<3I", seq.width, seq.height, seq.channels)
    with open(root / FRAMES_FILE, "wb") as fh:
        fh.write(header)
        fh.write(seq.frames.tobytes())
    with open(root / MANIFEST_FILE, "w", newline="") as fh:
        fh.write(f"# fps={seq.nominal_fps!r}\n")
        if seq.subject_id:
            fh.write(f"# subject_id={seq.subject_id}\n")
        if seq.video_id:
            fh.write(f"# video_id={seq.video_id}\n")
        fh.write("frame_index,timestamp_ms\n")
        for i, t in enumerate(seq.timestamps_ms):
            fh.write(f"{i},{int(t)}\n")
    return root


# ---------------------------------------------------------------------------
# landmarks and ground truth


def load_landmarks(path, n_frames: int | None = None) -> LandmarkTrack:
    """Read a landmark CSV; frames without a row are marked invalid.

    Rows holding non-finite coordinates (e.g. ``nan``) count as failed
    detections. Non-numeric text is an error.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing landmarks file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "frame_index":
            raise IngestError(f"bad landmarks header in {path}")
        if len(header) != 1 + 2 * N_LANDMARKS:
            raise IngestError(f"landmark arity: header has {len(header) - 1} coordinates")
        entries: dict[int, np.ndarray] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 1 + 2 * N_LANDMARKS:
                raise IngestError(
                    f"landmark arity: row {lineno} of {path} has {len(row) - 1} values, "
                    f"expected {2 * N_LANDMARKS}"
                )
            try:
                idx = int(row[0])
                coords = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise IngestError(f"non-numeric coordinate in row {lineno} of {path}") from exc
            if idx < 0:
                raise IngestError(f"negative frame_index in row {lineno} of {path}")
            entries[idx] = coords.reshape(N_LANDMARKS, 2)

    length = n_frames if n_frames is not None else (max(entries) + 1 if entries else 0)
    points = np.full((length, N_LANDMARKS, 2), np.nan)
    valid = np.zeros(length, dtype=bool)
    for idx, pts in entries.items():
        if idx >= length:
            raise IngestError(f"landmark frame_index {idx} beyond sequence length {length}")
        if np.all(np.isfinite(pts)):
            points[idx] = pts
            valid[idx] = True
    return LandmarkTrack(points, valid)


def write_landmarks(track: LandmarkTrack, path) -> None:
    cols = ["frame_index"] + [f"{a}{i}" for i in range(N_LANDMARKS) for a in ("x", "y")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in np.flatnonzero(track.valid):
            w.writerow([int(i)] + [repr(float(v)) for v in track.points[i].ravel()])


def load_ground_truth(path) -> GroundTruthTrace:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing ground-truth file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError(f"empty trace: {path}")
        header = [h.strip() for h in header]
        if header[:2] != ["time_ms", "hr_bpm"]:
            raise IngestError(f"bad ground-truth header in {path}: {header}")
        has_bvp = len(header) > 2 and header[2] == "bvp"
        t, hr, bvp = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t.append(float(row[0]))
                hr.append(float(row[1]))
                if has_bvp:
                    bvp.append(float(row[2]))
            except (ValueError, IndexError) as exc:
                raise IngestError(f"bad ground-truth row {lineno} in {path}") from exc
    if not hr:
        raise IngestError(f"empty trace: {path}")
    if has_bvp:
        return GroundTruthTrace(t, hr, bvp_time_ms=t, bvp=bvp)
    return GroundTruthTrace(t, hr)


def write_ground_truth(trace: GroundTruthTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if trace.bvp is not None and np.array_equal(trace.bvp_time_ms, trace.hr_time_ms):
            w.writerow(["time_ms", "hr_bpm", "bvp"])
            for row in zip(trace.hr_time_ms, trace.hr_bpm, trace.bvp):
                w.writerow([repr(float(v)) for v in row])
        else:
            w.writerow(["time_ms", "hr_bpm"])
            for row in zip(trace.hr_time_ms, trace.hr_bpm):
                w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# resampling and smoothing


def _resample_plan(seq: FrameSequence, target_fps: float) -> tuple[np.ndarray, np.ndarray]:
    if not target_fps > 0:
        raise ValueError(f"target_fps must be positive, got {target_fps}")
    if target_fps > seq.nominal_fps + 1e-9:
        raise ValueError(f"target_fps {target_fps} exceeds nominal fps {seq.nominal_fps}")
    ts = seq.timestamps_ms.astype(np.float64)
    dt = 1000.0 / target_fps
    # half-ms slack: input timestamps are rounded to integers
    n_out = int(math.floor((ts[-1] - ts[0] + 0.5) / dt)) + 1
    grid = ts[0] + dt * np.arange(n_out)
    grid_ms = np.round(grid).astype(np.int64)
    if np.any(np.diff(grid_ms) <= 0):
        raise ValueError(f"target_fps {target_fps} too high for millisecond timestamps")
    if len(ts) == 1:
        return np.zeros(n_out, dtype=np.int64), grid_ms
    right = np.clip(np.searchsorted(ts, grid), 1, len(ts) - 1)
    left = right - 1
    pick = np.where(grid - ts[left] <= ts[right] - grid, left, right)
    return pick, grid_ms


def resample_sequence(seq: FrameSequence, target_fps: float) -> FrameSequence:
    """Pick the nearest frame for each point of a uniform grid at ``target_fps``.

    Frames are never blended. Output timestamps are the (rounded) grid times.
    """
    pick, grid_ms = _resample_plan(seq, target_fps)
    if (
        target_fps == seq.nominal_fps
        and np.array_equal(pick, np.arange(len(seq)))
        and np.array_equal(grid_ms, seq.timestamps_ms)
    ):
        return seq
    return FrameSequence(
        frames=seq.frames[pick],
        timestamps_ms=grid_ms,
        nominal_fps=target_fps,
        subject_id=seq.subject_id,
        video_id=seq.video_id,
    )


def resample_track(track: LandmarkTrack, seq: FrameSequence, target_fps: float) -> LandmarkTrack:
    """Apply the frame selection of ``resample_sequence`` to a landmark track."""
    if len(track) != len(seq):
        raise ValueError("landmark track and frame sequence differ in length")
    pick, _ = _resample_plan(seq, target_fps)
    return LandmarkTrack(track.points[pick], track.valid[pick])


def smooth_landmarks(track: LandmarkTrack, window: int = 5) -> LandmarkTrack:
    """Centered moving average over valid frames, truncated at the ends."""
    if isinstance(window, bool) or not isinstance(window, (int, np.integer)) or window < 1:
        raise ValueError(f"window must be a positive odd integer, got {window!r}")
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    n = len(track)
    if window == 1 or n == 0:
        return track
    half = window // 2
    valid = track.valid
    pts = np.where(valid[:, None, None], track.points, 0.0)

    csum = np.concatenate([np.zeros((1, N_LANDMARKS, 2)), np.cumsum(pts, axis=0)])
    ccount = np.concatenate([[0], np.cumsum(valid)])
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    counts = (ccount[hi] - ccount[lo]).astype(np.float64)
    sums = csum[hi] - csum[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        smoothed = sums / counts[:, None, None]
    # constant tracks must come back bit-identical
    const = np.zeros(n, dtype=bool)
    for i in np.flatnonzero(valid):
        nb = slice(lo[i], hi[i])
        nbv = valid[nb]
        const[i] = np.all(track.points[nb][nbv] == track.points[i])
    smoothed[const] = track.points[const]
    smoothed[~valid] = np.nan
    return LandmarkTrack(smoothed, valid.copy())
