"""Training loop for RhythmNet: Adam, online mask augmentation and the
L1 + smoothness objective over runs of adjacent clips."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import RhythmKitError
from .losses import total_loss_and_grad
from .model import BackboneConfig, RhythmNet
from .nn import Adam
from .stmap import SpatialTemporalMap, draw_mask_span

log = logging.getLogger(__name__)


class TrainingError(RhythmKitError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    lam: float = 100.0
    batch_runs: int = 4  # runs (groups of adjacent clips) per optimizer step
    mask_prob: float = 0.5
    mask_min: int = 10
    mask_max: int = 30
    group_size: int = 6
    seed: int = 0
    variant: str = "compact"
    use_gru: bool = True
    gru_hidden: int = 0  # 0 -> feature width
    fps_train: float = 30.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.lr < 0 or self.lam < 0:
            raise ValueError("lr and lam must be non-negative")
        if self.batch_runs < 1 or self.group_size < 1:
            raise ValueError("batch_runs and group_size must be positive")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must lie in [0, 1]")
        if not 1 <= self.mask_min <= self.mask_max:
            raise ValueError("need 1 <= mask_min <= mask_max")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Read ``key = value`` lines; ``#`` starts a comment."""
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or key not in kinds:
                raise ValueError(f"{path}:{lineno}: unknown or malformed setting {raw.strip()!r}")
            values[key] = _coerce(kinds[key], value, f"{path}:{lineno}")
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def _coerce(kind: str, value: str, where: str):
    try:
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value.strip("\"'")
    except ValueError:
        raise ValueError(f"{where}: cannot parse {value!r} as {kind}") from None


@dataclass
class TrainSample:
    data: np.ndarray  # (T, n, c)
    hr_bpm: float
    video_id: str = ""
    start_frame: int = 0

    @classmethod
    def from_map(cls, m: SpatialTemporalMap) -> "TrainSample":
        if m.gt_hr_bpm is None:
            raise ValueError(f"map of {m.video_id or 'unknown video'} has no ground-truth HR")
        start = m.clip.start_frame if m.clip is not None else 0
        return cls(m.data, float(m.gt_hr_bpm), m.video_id, start)


@dataclass
class EpochLog:
    epoch: int
    l1: float
    smooth: float
    total: float


@dataclass
class TrainLog:
    epochs: list[EpochLog] = field(default_factory=list)

    def l1_curve(self) -> np.ndarray:
        return np.array([e.l1 for e in self.epochs])


def make_runs(samples: Sequence[TrainSample], group_size: int) -> list[list[int]]:
    """Chunk each video's clips, ordered by start frame, into runs of
    ``group_size`` adjacent clips (the last run may be shorter)."""
    by_video: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        by_video.setdefault(s.video_id, []).append(i)
    runs = []
    for vid in sorted(by_video):
        idx = sorted(by_video[vid], key=lambda i: (samples[i].start_frame, i))
        runs.extend(idx[k:k + group_size] for k in range(0, len(idx), group_size))
    return runs


def _augment(data: np.ndarray, rng: np.random.Generator, cfg: TrainConfig) -> np.ndarray:
    span = draw_mask_span(rng, data.shape[0], cfg.mask_min, cfg.mask_max, cfg.mask_prob)
    if span is None:
        return data
    out = data.copy()
    out[span[0]:span[0] + span[1]] = 0.0
    return out


def build_model(cfg: TrainConfig, input_shape: tuple[int, int, int]) -> RhythmNet:
    if cfg.variant == "resnet18":
        backbone = BackboneConfig.resnet18(input_shape)
    else:
        backbone = BackboneConfig(cfg.variant, input_shape=tuple(input_shape))
    return RhythmNet(backbone, cfg.use_gru, cfg.gru_hidden or None, cfg.seed,
                     fps_train=cfg.fps_train, group_size=cfg.group_size)


def train(samples: Sequence[TrainSample], cfg: TrainConfig, model: RhythmNet | None = None,
          on_epoch: Callable[[EpochLog, RhythmNet], None] | None = None) -> tuple[RhythmNet, TrainLog]:
    """Fit a model; deterministic for a given ``cfg.seed`` and sample order.

    Targets are standardized with the training-label mean and std, which
    are stored on the model. The smoothness term constrains the temporal
    head, so a model without GRU trains on L1 alone. Raises :class:`TrainingError` when the loss
    becomes non-finite.
    """
    samples = list(samples)
    if not samples:
        raise TrainingError("no training samples")
    shapes = {s.data.shape for s in samples}
    if len(shapes) != 1:
        raise TrainingError(f"training maps differ in shape: {sorted(shapes)}")
    if model is None:
        model = build_model(cfg, shapes.pop())
        labels = np.array([s.hr_bpm for s in samples])
        model.target_mean = float(labels.mean())
        model.target_std = float(max(labels.std(), 1.0))
    std = model.target_std

    runs = make_runs(samples, cfg.group_size)
    lam = cfg.lam if model.use_gru else 0.0
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.named_parameters(), lr=cfg.lr)
    history = TrainLog()
    model.train()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(runs))
        sums = np.zeros(3)
        n_clips = 0
        for b in range(0, len(order), cfg.batch_runs):
            batch = [runs[k] for k in order[b:b + cfg.batch_runs]]
            idx = [i for r in batch for i in r]
            local, pos = [], 0
            for r in batch:
                local.append(list(range(pos, pos + len(r))))
                pos += len(r)
            x = model.prepare(np.stack([_augment(samples[i].data, rng, cfg) for i in idx]))
            gt = np.array([samples[i].hr_bpm for i in idx])
            fwd = model.forward_runs(x, local)
            pred = model.to_bpm(fwd.hr_z)
            loss, grad = total_loss_and_grad(pred, gt, lam, local)
            if not math.isfinite(loss.total):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b // cfg.batch_runs}: "
                                    f"l1={loss.l1} smooth={loss.smooth}")
            model.zero_grad()
            # chain rule through bpm = mean + std * z
            model.backward_runs(fwd, grad * std)
            opt.step()
            sums += np.array([loss.l1, loss.smooth, loss.total]) * len(idx)
            n_clips += len(idx)
        entry = EpochLog(epoch, *(float(v) for v in sums / n_clips))
        history.epochs.append(entry)
        log.info("epoch %d: l1 %.3f smooth %.3f total %.3f", epoch, entry.l1, entry.smooth, entry.total)
        if on_epoch is not None:
            on_epoch(entry, model)
    return model, history
