"""Face ROI box, rigid alignment, skin mask and the ROI block grid."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GeometryError
from .ingest import N_LANDMARKS

HEIGHT_SCALE = 1.2
# fraction of the eyebrow-to-chin distance added above the eyebrows
FOREHEAD_FRACTION = HEIGHT_SCALE - 1.0


@dataclass(frozen=True)
class LandmarkSchema:
    """Semantic index sets into the 81-point layout.

    The detector's point ordering is configuration; the defaults match the
    layout produced by :func:`rhythmkit.synth.synthetic_landmarks`.
    """

    left_eye: tuple[int, ...] = (36, 37, 38, 39, 40, 41)
    right_eye: tuple[int, ...] = (42, 43, 44, 45, 46, 47)
    cheek_left: tuple[int, ...] = (0,)
    cheek_right: tuple[int, ...] = (16,)
    chin: tuple[int, ...] = (8,)
    eyebrow_centers: tuple[int, ...] = (19, 24)

    KEYS = ("left_eye", "right_eye", "cheek_left", "cheek_right", "chin", "eyebrow_centers")

    def __post_init__(self):
        for key in self.KEYS:
            idx = tuple(int(i) for i in getattr(self, key))
            if not idx:
                raise ValueError(f"landmark schema entry {key!r} is empty")
            if min(idx) < 0 or max(idx) >= N_LANDMARKS:
                raise ValueError(f"landmark schema entry {key!r} out of range: {idx}")
            object.__setattr__(self, key, idx)

    @classmethod
    def from_file(cls, path) -> "LandmarkSchema":
        """Parse ``key = [i, j, ...]`` lines; ``#`` starts a comment."""
        values: dict[str, tuple[int, ...]] = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            key, sep, rhs = line.partition("=")
            key = key.strip()
            if not sep or key not in cls.KEYS:
                raise ValueError(f"{path}:{lineno}: unknown schema entry {key!r}")
            rhs = rhs.strip().strip("[]")
            try:
                values[key] = tuple(int(v) for v in rhs.split(",") if v.strip())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: indices must be integers") from exc
        return cls(**values)


DEFAULT_SCHEMA = LandmarkSchema()


@dataclass(frozen=True)
class FaceBox:
    center: tuple[float, float]
    width: float
    height: float
    rotation_deg: float


@dataclass(frozen=True)
class AlignedFace:
    """Axis-aligned face crop; ``valid`` marks pixels sampled inside the frame."""

    pixels: np.ndarray
    valid: np.ndarray
    box: FaceBox

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class Mask:
    pixels: np.ndarray

    @property
    def fraction(self) -> float:
        return float(self.pixels.mean()) if self.pixels.size else 0.0

    @property
    def empty(self) -> bool:
        return not self.pixels.any()


@dataclass(frozen=True)
class RoiGrid:
    rows: int
    cols: int
    # (top, left, height, width) in crop pixel coordinates, row-major
    regions: tuple[tuple[int, int, int, int], ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.rows * self.cols


def _rotate(points: np.ndarray, angle_rad: float, origin: np.ndarray) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    rot = np.array([[c, -s], [s, c]])
    return (points - origin) @ rot.T + origin


def face_box(landmarks: np.ndarray, schema: LandmarkSchema = DEFAULT_SCHEMA) -> FaceBox:
    """Face box from one frame of landmarks.

    The in-plane angle comes from the line through the eye centres; width and
    height are measured after undoing that rotation.
    """
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.shape != (N_LANDMARKS, 2) or not np.all(np.isfinite(pts)):
        raise GeometryError("face_box needs 81 finite landmark points")
    left = pts[list(schema.left_eye)].mean(axis=0)
    right = pts[list(schema.right_eye)].mean(axis=0)
    d = right - left
    if math.hypot(*d) < 1e-9:
        raise GeometryError("degenerate landmarks: coincident eye centres")
    angle = math.atan2(d[1], d[0])
    origin = 0.5 * (left + right)
    upright = _rotate(pts, -angle, origin)

    x_left = upright[list(schema.cheek_left), 0].mean()
    x_right = upright[list(schema.cheek_right), 0].mean()
    brow_y = upright[list(schema.eyebrow_centers), 1].mean()
    chin_y = upright[list(schema.chin), 1].mean()
    width = abs(x_right - x_left)
    h = abs(chin_y - brow_y)
    if width <= 0 or h <= 0:
        raise GeometryError("degenerate landmarks: zero face width or height")

    # box spans from FOREHEAD_FRACTION*h above the eyebrows down to the chin
    top = min(brow_y, chin_y) - FOREHEAD_FRACTION * h
    center_upright = np.array([0.5 * (x_left + x_right), top + 0.5 * HEIGHT_SCALE * h])
    center = _rotate(center_upright[None], angle, origin)[0]
    return FaceBox(
        center=(float(center[0]), float(center[1])),
        width=float(width),
        height=float(HEIGHT_SCALE * h),
        rotation_deg=math.degrees(angle),
    )


def _sample_grid(box: FaceBox) -> tuple[np.ndarray, np.ndarray]:
    """Source (x, y) coordinates for every crop pixel."""
    w = max(1, int(round(box.width)))
    h = max(1, int(round(box.height)))
    u = np.arange(w) - 0.5 * w
    v = np.arange(h) - 0.5 * h
    uu, vv = np.meshgrid(u, v)
    a = math.radians(box.rotation_deg)
    c, s = math.cos(a), math.sin(a)
    x = box.center[0] + c * uu - s * vv
    y = box.center[1] + s * uu + c * vv
    return x, y


def align_face(frame: np.ndarray, box: FaceBox) -> AlignedFace:
    """Rigidly map the rotated box onto an upright crop at source scale.

    Bilinear sampling; crop pixels falling outside the frame are zero and
    flagged invalid.
    """
    img = np.asarray(frame)
    if img.ndim == 2:
        img = img[..., None]
    fh, fw, nc = img.shape
    x, y = _sample_grid(box)
    valid = (x >= 0) & (x <= fw - 1) & (y >= 0) & (y <= fh - 1)
    if not valid.any():
        raise GeometryError("face box lies entirely outside the frame")
    a = math.radians(box.rotation_deg)
    if abs(math.sin(a)) == 0.0 and np.all(x == np.round(x)) and np.all(y == np.round(y)):
        # integer-aligned, unrotated: plain crop
        xi = np.clip(x.astype(np.int64), 0, fw - 1)
        yi = np.clip(y.astype(np.int64), 0, fh - 1)
        out = img[yi, xi].astype(np.float64)
    else:
        coords = np.stack([y.ravel(), x.ravel()])
        out = np.empty(x.shape + (nc,), dtype=np.float64)
        src = img.astype(np.float64)
        for ch in range(nc):
            out[..., ch] = ndimage.map_coordinates(
                src[..., ch], coords, order=1, mode="constant", cval=0.0
            ).reshape(x.shape)
    out[~valid] = 0.0
    return AlignedFace(pixels=out, valid=valid, box=box)


def rgb_to_ycrcb(pixels: np.ndarray) -> np.ndarray:
    """Full-range ITU-R BT.601 YCrCb, channel order (Y, Cr, Cb)."""
    p = np.asarray(pixels, dtype=np.float64)
    r, g, b = p[..., 0], p[..., 1], p[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cr = (r - y) * 0.713 + 128.0
    cb = (b - y) * 0.564 + 128.0
    return np.stack([y, cr, cb], axis=-1)


SKIN_CR = (133.0, 173.0)
SKIN_CB = (77.0, 127.0)
SKIN_MIN_Y = 40.0


def skin_mask(face: AlignedFace) -> Mask:
    """Fixed-threshold YCrCb skin rule; single-channel crops pass through."""
    if face.channels == 1:
        return Mask(face.valid.copy())
    ycc = rgb_to_ycrcb(face.pixels)
    y, cr, cb = ycc[..., 0], ycc[..., 1], ycc[..., 2]
    skin = (
        (cr >= SKIN_CR[0]) & (cr <= SKIN_CR[1])
        & (cb >= SKIN_CB[0]) & (cb <= SKIN_CB[1])
        & (y > SKIN_MIN_Y)
    )
    return Mask(skin & face.valid)


def grid_blocks(face: AlignedFace | tuple[int, int], rows: int = 5, cols: int = 5) -> RoiGrid:
    """Tile the crop into rows x cols blocks; remainders go to the last row/column."""
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    height, width = face.shape if isinstance(face, AlignedFace) else face
    if height < rows or width < cols:
        raise GeometryError(f"face crop {height}x{width} smaller than {rows}x{cols} grid")
    bh, bw = height // rows, width // cols
    regions = []
    for i in range(rows):
        top = i * bh
        hh = bh if i < rows - 1 else height - top
        for j in range(cols):
            left = j * bw
            ww = bw if j < cols - 1 else width - left
            regions.append((top, left, hh, ww))
    return RoiGrid(rows, cols, tuple(regions))
