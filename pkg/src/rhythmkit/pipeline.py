"""Glue between the on-disk video layout, map extraction and estimators."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .classical import SNR_THRESHOLD_DB, HrEstimate, estimate
from .errors import NoPeakError, RhythmKitError
from .geometry import DEFAULT_SCHEMA, LandmarkSchema
from .ingest import (
    FRAMES_FILE,
    GT_FILE,
    LANDMARKS_FILE,
    FrameSequence,
    GroundTruthTrace,
    LandmarkTrack,
    load_frame_sequence,
    load_ground_truth,
    load_landmarks,
    smooth_landmarks,
)
from .stmap import (
    ClipWindow,
    SpatialTemporalMap,
    fill_invalid,
    frame_block_means,
    label_windows,
    map_from_block_means,
    read_stmap,
    slide_windows,
)

MAP_SUFFIX = ".stm"


@dataclass(frozen=True)
class ExtractOptions:
    win_frames: int = 300
    step_seconds: float = 0.5
    grid: tuple[int, int] = (5, 5)
    colorspace: str = "yuv"
    landmark_window: int = 5
    schema: LandmarkSchema = DEFAULT_SCHEMA


@dataclass
class VideoData:
    path: Path
    seq: FrameSequence
    track: LandmarkTrack
    trace: GroundTruthTrace | None


def find_video_dirs(root) -> list[Path]:
    """``root`` itself if it holds a frame file, else every directory below it that does."""
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"no such file or directory: {root}")
    if (root / FRAMES_FILE).exists():
        return [root]
    found = sorted(p.parent for p in root.rglob(FRAMES_FILE))
    if not found:
        raise RhythmKitError(f"no video directories (with {FRAMES_FILE}) under {root}")
    return found


def find_map_files(root) -> list[Path]:
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"no such file or directory: {root}")
    if root.is_file():
        return [root]
    found = sorted(root.rglob("*" + MAP_SUFFIX))
    if not found:
        raise RhythmKitError(f"no {MAP_SUFFIX} files under {root}")
    return found


def load_video(path, landmark_window: int = 5) -> VideoData:
    path = Path(path)
    seq = load_frame_sequence(path)
    track = load_landmarks(path / LANDMARKS_FILE, n_frames=len(seq))
    if landmark_window > 1:
        track = smooth_landmarks(track, landmark_window)
    trace = load_ground_truth(path / GT_FILE) if (path / GT_FILE).exists() else None
    return VideoData(path, seq, track, trace)


def _windows(video: VideoData, opts: ExtractOptions) -> list[ClipWindow]:
    windows = slide_windows(len(video.seq), video.seq.nominal_fps, opts.win_frames, opts.step_seconds)
    if video.trace is not None:
        windows = label_windows(windows, video.seq.timestamps_ms, video.trace)
    return windows


def video_block_means(video: VideoData, opts: ExtractOptions) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = opts.grid
    means, valid = frame_block_means(video.seq.frames, video.track, rows, cols, opts.schema)
    if not valid.any():
        raise RhythmKitError(f"{video.path}: no frame has a usable face region")
    return means, valid


def extract_maps(path, opts: ExtractOptions = ExtractOptions()) -> list[SpatialTemporalMap]:
    """One normalized map per clip window of the video at ``path``."""
    video = load_video(path, opts.landmark_window)
    windows = _windows(video, opts)
    means, valid = video_block_means(video, opts)
    seq = video.seq
    return [
        map_from_block_means(means[w.start_frame:w.stop_frame], valid[w.start_frame:w.stop_frame],
                             seq.nominal_fps, opts.colorspace, w, seq.subject_id, seq.video_id)
        for w in windows
    ]


@dataclass(frozen=True)
class ClipResult:
    video_id: str
    subject_id: str
    clip: ClipWindow
    estimate: HrEstimate | None
    error: str = ""


def _gate(est: HrEstimate, min_snr_db: float | None) -> HrEstimate:
    if min_snr_db is not None and est.snr_db is not None and est.snr_db < min_snr_db:
        raise NoPeakError(f"no spectral peak: SNR {est.snr_db:.1f} dB below {min_snr_db:g} dB")
    return est


def estimate_video(path, method: str, opts: ExtractOptions = ExtractOptions(),
                   min_snr_db: float | None = SNR_THRESHOLD_DB) -> list[ClipResult]:
    """Classical per-clip estimates from the raw (unnormalized) block means.

    Clips whose spectral SNR falls below ``min_snr_db`` are reported as
    having no peak; pass ``None`` to keep every clip's estimate.
    """
    video = load_video(path, opts.landmark_window)
    windows = _windows(video, opts)
    means, valid = video_block_means(video, opts)
    traces = fill_invalid(means, valid)
    fps = video.seq.nominal_fps
    out = []
    for w in windows:
        try:
            est = _gate(estimate(method, traces[w.start_frame:w.stop_frame], fps), min_snr_db)
            out.append(ClipResult(video.seq.video_id, video.seq.subject_id, w, replace(est, clip=w)))
        except NoPeakError as exc:
            out.append(ClipResult(video.seq.video_id, video.seq.subject_id, w, None, str(exc)))
    return out


def estimate_maps(maps: list[SpatialTemporalMap], method: str,
                  min_snr_db: float | None = SNR_THRESHOLD_DB) -> list[ClipResult]:
    out = []
    for m in maps:
        try:
            est = _gate(estimate(method, m), min_snr_db)
            out.append(ClipResult(m.video_id, m.subject_id, m.clip, replace(est, clip=m.clip)))
        except NoPeakError as exc:
            out.append(ClipResult(m.video_id, m.subject_id, m.clip, None, str(exc)))
    return out


def load_maps(paths) -> list[SpatialTemporalMap]:
    return [read_stmap(p) for p in paths]


def group_by_video(maps) -> dict[str, list[SpatialTemporalMap]]:
    """Maps keyed by video id, each list ordered by clip start."""
    groups: dict[str, list[SpatialTemporalMap]] = {}
    for m in maps:
        groups.setdefault(m.video_id, []).append(m)
    for vid, ms in groups.items():
        ms.sort(key=lambda m: m.clip.start_frame if m.clip is not None else 0)
    return dict(sorted(groups.items()))


def video_gt(maps: list[SpatialTemporalMap]) -> float | None:
    labels = [m.gt_hr_bpm for m in maps if m.gt_hr_bpm is not None]
    return float(np.mean(labels)) if labels else None
