"""RhythmNet: a residual CNN regressing HR from one spatial-temporal map,
optionally followed by a GRU over the features of adjacent clips."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .nn import GRU, Conv2d, Dense, GlobalAvgPool, Layer, LayerNorm, ReLU, ResidualBlock, Sequential
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .stmap import SpatialTemporalMap

FPS_TRAIN = 30.0
VARIANTS = ("compact", "resnet18")


@dataclass(frozen=True)
class BackboneConfig:
    """``compact`` has one residual block per stage; ``resnet18`` has two
    per stage with ResNet-18 widths and a closing 3x3 convolution."""

    variant: str = "compact"
    widths: tuple[int, ...] = (16, 32, 64, 128)
    blocks_per_stage: int = 1
    input_shape: tuple[int, int, int] = (300, 25, 3)  # (T, n, c)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown backbone variant {self.variant!r}; choose from {VARIANTS}")
        if len(self.widths) != 4 or min(self.widths) < 1:
            raise ValueError(f"need four positive stage widths, got {self.widths}")
        t, n, c = self.input_shape
        # the stem halves T and the later stages halve both axes three times
        if t < 16 or n < 8 or c < 1:
            raise ValueError(f"input shape {self.input_shape} too small for the backbone")

    @classmethod
    def resnet18(cls, input_shape=(300, 25, 3)) -> "BackboneConfig":
        return cls("resnet18", (64, 128, 256, 512), 2, tuple(input_shape))

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]


def _build_backbone(cfg: BackboneConfig, rng, dtype) -> Sequential:
    c = cfg.input_shape[2]
    layers: list[Layer] = [Conv2d(c, cfg.widths[0], 3, (2, 1), 1, rng, dtype), ReLU()]
    prev = cfg.widths[0]
    for stage, width in enumerate(cfg.widths):
        for b in range(cfg.blocks_per_stage):
            stride = 2 if stage > 0 and b == 0 else 1
            layers.append(ResidualBlock(prev, width, stride, rng, dtype))
            prev = width
    if cfg.variant == "resnet18":
        layers += [Conv2d(prev, prev, 3, 1, 1, rng, dtype), ReLU()]
    # normalized features keep the GRU gates out of saturation
    layers += [GlobalAvgPool(), LayerNorm(prev, dtype=dtype)]
    return Sequential(*layers)


@dataclass
class ClipForward:
    """Intermediate results of one batched forward pass, kept for backprop."""
    features: np.ndarray
    hr_z: np.ndarray
    gru_caches: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    head_in: np.ndarray | None = None


class RhythmNet(Layer):
    """Maps (T, n, c) maps with 0..255 rows to heart rates in bpm.

    The network predicts a standardized target ``z``; the bpm value is
    ``target_mean + target_std * z``. Predictions are made at
    ``fps_train`` and rescaled by ``fps / fps_train`` at inference.
    """

    def __init__(self, config: BackboneConfig | None = None, use_gru: bool = True,
                 gru_hidden: int | None = None, seed: int = 0, dtype=np.float32,
                 fps_train: float = FPS_TRAIN, group_size: int = 6):
        super().__init__()
        self.config = config or BackboneConfig()
        self.use_gru = bool(use_gru)
        self.gru_hidden = int(gru_hidden or self.config.feature_dim)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.fps_train = float(fps_train)
        self.group_size = int(group_size)
        self.target_mean = 0.0
        self.target_std = 1.0
        rng = np.random.default_rng(seed)
        self._children["backbone"] = _build_backbone(self.config, rng, self.dtype)
        head_in = self.config.feature_dim
        if self.use_gru:
            self._children["gru"] = GRU(head_in, self.gru_hidden, rng, self.dtype)
            head_in = self.gru_hidden
        self._children["head"] = Dense(head_in, 1, rng, self.dtype)
        # start the output near the target mean
        self._children["head"]._params["weight"].value *= 0.1

    # ------------------------------------------------------------------ io

    def prepare(self, maps) -> np.ndarray:
        """Stack maps (or a (B, T, n, c) array) into scaled NCHW input."""
        if isinstance(maps, np.ndarray) and maps.ndim == 4:
            arr = maps
        else:
            arr = np.stack([m.data if isinstance(m, SpatialTemporalMap) else np.asarray(m) for m in maps])
        if arr.ndim != 4:
            raise ValueError(f"expected a batch of (T, n, c) maps, got {arr.shape}")
        if arr.shape[1:] != tuple(self.config.input_shape):
            raise ValueError(f"map shape {arr.shape[1:]} does not match the model input "
                             f"{tuple(self.config.input_shape)}")
        x = arr.astype(self.dtype) / self.dtype.type(127.5) - self.dtype.type(1.0)
        return np.ascontiguousarray(x.transpose(0, 3, 1, 2))

    def to_bpm(self, z) -> np.ndarray:
        return self.target_mean + self.target_std * np.asarray(z, dtype=np.float64)

    # ------------------------------------------------------------- forward

    def features(self, x: np.ndarray) -> np.ndarray:
        return self._children["backbone"].forward(x)

    def forward_runs(self, x: np.ndarray, runs: Sequence[Sequence[int]] | None = None) -> ClipForward:
        """Forward a batch; ``runs`` are index lists of adjacent clips that
        the GRU consumes as sequences (ignored without a GRU). Every clip
        must belong to exactly one run; by default each clip is its own run."""
        feats = self.features(x)
        n = len(feats)
        if not self.use_gru:
            z = self._children["head"].forward(feats)[:, 0]
            return ClipForward(feats, z)
        runs = [list(r) for r in runs] if runs is not None else [[i] for i in range(n)]
        flat = sorted(i for r in runs for i in r)
        if flat != list(range(n)):
            raise ValueError("GRU runs must partition the batch")
        gru: GRU = self._children["gru"]
        head_in = np.empty((n, self.gru_hidden), dtype=feats.dtype)
        caches = []
        for r in runs:
            out, cache = gru.run(feats[r][None])
            head_in[r] = out[0]
            caches.append(cache)
        z = self._children["head"].forward(head_in)[:, 0]
        return ClipForward(feats, z, caches, runs, head_in)

    def backward_runs(self, fwd: ClipForward, dz: np.ndarray) -> None:
        """Accumulate parameter gradients for ``dL/dz`` of a :meth:`forward_runs` result."""
        dz = np.asarray(dz, dtype=self.dtype)[:, None]
        dhead = self._children["head"].backward(dz)
        if self.use_gru:
            gru: GRU = self._children["gru"]
            dfeat = np.empty_like(fwd.features)
            for r, cache in zip(fwd.runs, fwd.gru_caches):
                dx, _ = gru.backprop(dhead[r][None], cache)
                dfeat[r] = dx[0]
        else:
            dfeat = dhead
        self._children["backbone"].backward(dfeat)

    def forward_clip(self, stmap) -> tuple[np.ndarray, float]:
        """Features and raw bpm for a single map (a length-1 GRU run when
        the GRU is enabled); no fps correction is applied."""
        data = stmap.data if isinstance(stmap, SpatialTemporalMap) else np.asarray(stmap)
        fwd = self.forward_runs(self.prepare([data]))
        return fwd.features[0].astype(np.float64), float(self.to_bpm(fwd.hr_z)[0])

    def gru_head(self, feature_seq) -> np.ndarray:
        """Raw bpm per element of an (S, F) feature sequence."""
        if not self.use_gru:
            raise ValueError("model was built without a GRU")
        feats = np.asarray(feature_seq, dtype=self.dtype)
        if feats.ndim != 2 or len(feats) == 0:
            raise ValueError(f"GRU head needs a non-empty (S, F) feature sequence, got {feats.shape}")
        out, _ = self._children["gru"].run(feats[None])
        z = self._children["head"].forward(out[0])[:, 0]
        return self.to_bpm(z)

    # --------------------------------------------------------- persistence

    def metadata(self) -> dict:
        return {
            "backbone": asdict(self.config),
            "use_gru": self.use_gru,
            "gru_hidden": self.gru_hidden,
            "seed": self.seed,
            "fps_train": self.fps_train,
            "group_size": self.group_size,
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.value for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if own.keys() != state.keys():
            missing = sorted(own.keys() - state.keys())
            extra = sorted(state.keys() - own.keys())
            raise ValueError(f"checkpoint does not fit the model (missing {missing[:3]}, extra {extra[:3]})")
        for name, p in own.items():
            if p.value.shape != state[name].shape:
                raise ValueError(f"shape mismatch for {name}: {state[name].shape} vs {p.value.shape}")
            p.value[...] = state[name]

    def save(self, path, extra: dict | None = None):
        meta = self.metadata()
        meta.update(extra or {})
        return save_checkpoint(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "RhythmNet":
        params, meta = load_checkpoint(path)
        try:
            bb = meta["backbone"]
            cfg = BackboneConfig(bb["variant"], tuple(bb["widths"]), int(bb["blocks_per_stage"]),
                                 tuple(bb["input_shape"]))
            model = cls(cfg, meta["use_gru"], meta["gru_hidden"], meta.get("seed", 0),
                        fps_train=meta["fps_train"], group_size=meta.get("group_size", 6))
            model.target_mean = float(meta["target_mean"])
            model.target_std = float(meta["target_std"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: checkpoint metadata incomplete ({exc})") from exc
        model.load_state_dict(params)
        return model


# ----------------------------------------------------------------- inference


def _runs_for(n: int, group_size: int) -> list[list[int]]:
    return [list(range(i, min(i + group_size, n))) for i in range(0, n, group_size)]


def predict_clips(model: RhythmNet, maps: Sequence, fps: float | None = None,
                  batch_size: int = 32) -> np.ndarray:
    """Per-clip bpm for the maps of one video, in the order given.

    Maps are sorted by clip start for the GRU so that runs cover adjacent
    clips; results are returned in input order. When ``fps`` is omitted it
    is read from the maps.
    """
    maps = list(maps)
    if not maps:
        raise ValueError("no clips to predict")
    if fps is None:
        rates = {m.fps for m in maps if isinstance(m, SpatialTemporalMap)}
        if len(rates) != 1:
            raise ValueError("cannot infer fps from the maps; pass it explicitly")
        fps = rates.pop()
    if not fps > 0:
        raise ValueError(f"fps must be positive, got {fps}")

    def start(i):
        m = maps[i]
        if isinstance(m, SpatialTemporalMap) and m.clip is not None:
            return m.clip.start_frame
        return i

    order = sorted(range(len(maps)), key=lambda i: (start(i), i))
    model.eval()
    out = np.empty(len(maps))
    runs = _runs_for(len(order), model.group_size if model.use_gru else 1)
    # keep whole runs within a batch
    per_batch = max(1, batch_size // max(1, model.group_size)) if model.use_gru else batch_size
    for b in range(0, len(runs), per_batch):
        chunk = runs[b:b + per_batch]
        idx = [order[i] for r in chunk for i in r]
        base = chunk[0][0]
        local = [[i - base for i in r] for r in chunk]
        x = model.prepare([maps[i].data if isinstance(maps[i], SpatialTemporalMap) else maps[i] for i in idx])
        fwd = model.forward_runs(x, local)
        out[idx] = model.to_bpm(fwd.hr_z)
    model.train()
    return out * (fps / model.fps_train)


def predict_video(model: RhythmNet, maps: Sequence, fps: float | None = None) -> float:
    """Video-level bpm: mean of the per-clip predictions."""
    return float(np.mean(predict_clips(model, maps, fps)))
