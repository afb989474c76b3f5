import math

import numpy as np
import pytest

from rhythmkit.errors import GeometryError
from rhythmkit.geometry import (
    DEFAULT_SCHEMA,
    AlignedFace,
    FaceBox,
    LandmarkSchema,
    align_face,
    face_box,
    grid_blocks,
    rgb_to_ycrcb,
    skin_mask,
)
from rhythmkit.ingest import N_LANDMARKS


def hand_landmarks(schema=DEFAULT_SCHEMA):
    """Cheeks at x=100/200, eyebrow centres at y=80, chin at y=180."""
    pts = np.full((N_LANDMARKS, 2), 150.0)
    for i in schema.left_eye:
        pts[i] = (125.0, 100.0)
    for i in schema.right_eye:
        pts[i] = (175.0, 100.0)
    pts[list(schema.cheek_left)] = (100.0, 130.0)
    pts[list(schema.cheek_right)] = (200.0, 130.0)
    pts[list(schema.chin)] = (150.0, 180.0)
    pts[list(schema.eyebrow_centers)] = (150.0, 80.0)
    return pts


def rotate(pts, deg, origin=(150.0, 100.0)):
    a = math.radians(deg)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    o = np.asarray(origin)
    return (pts - o) @ rot.T + o


def constant_face(rgb, shape=(10, 10)):
    pix = np.broadcast_to(np.asarray(rgb, float), shape + (len(rgb),)).copy()
    box = FaceBox((0.0, 0.0), float(shape[1]), float(shape[0]), 0.0)
    return AlignedFace(pix, np.ones(shape, bool), box)


class TestFaceBox:
    def test_hand_arithmetic(self):
        box = face_box(hand_landmarks())
        assert box.width == pytest.approx(100.0)
        assert box.height == pytest.approx(120.0)
        assert box.rotation_deg == pytest.approx(0.0)
        # forehead extension: box spans y = 60..180
        assert box.center == pytest.approx((150.0, 120.0))

    @pytest.mark.parametrize("deg", [10.0, -25.0, 3.5])
    def test_rotation(self, deg):
        box = face_box(rotate(hand_landmarks(), deg))
        assert box.rotation_deg == pytest.approx(deg)
        assert box.width == pytest.approx(100.0)
        assert box.height == pytest.approx(120.0)

    def test_translation_invariance(self):
        base = face_box(hand_landmarks())
        moved = face_box(hand_landmarks() + np.array([37.5, -12.0]))
        assert moved.width == pytest.approx(base.width)
        assert moved.height == pytest.approx(base.height)
        assert moved.center == pytest.approx((base.center[0] + 37.5, base.center[1] - 12.0))

    def test_coincident_eyes(self):
        pts = hand_landmarks()
        pts[list(DEFAULT_SCHEMA.right_eye)] = (125.0, 100.0)
        with pytest.raises(GeometryError, match="coincident eye"):
            face_box(pts)

    def test_nan_landmarks(self):
        pts = hand_landmarks()
        pts[3] = np.nan
        with pytest.raises(GeometryError):
            face_box(pts)


class TestSchema:
    def test_from_file(self, tmp_path):
        path = tmp_path / "schema.toml"
        path.write_text("[landmarks]\nchin = [9]  # moved\ncheek_left = [1, 2]\n")
        schema = LandmarkSchema.from_file(path)
        assert schema.chin == (9,)
        assert schema.cheek_left == (1, 2)
        assert schema.left_eye == DEFAULT_SCHEMA.left_eye

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "schema.toml"
        path.write_text("nose = [30]\n")
        with pytest.raises(ValueError, match="unknown schema entry"):
            LandmarkSchema.from_file(path)

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            LandmarkSchema(chin=(81,))

    def test_custom_schema_is_used(self):
        schema = LandmarkSchema(chin=(5,), cheek_left=(1,), cheek_right=(15,))
        box = face_box(hand_landmarks(schema), schema)
        assert box.width == pytest.approx(100.0)
        assert box.height == pytest.approx(120.0)


class TestAlignFace:
    def test_plain_crop(self):
        rng = np.random.default_rng(0)
        frame = rng.integers(0, 256, size=(40, 50, 3), dtype=np.uint8)
        box = FaceBox(center=(25.0, 20.0), width=20.0, height=10.0, rotation_deg=0.0)
        face = align_face(frame, box)
        assert face.valid.all()
        assert np.array_equal(face.pixels, frame[15:25, 15:35].astype(float))

    @pytest.mark.parametrize("deg", [0.0, 17.0, -40.0, 90.0])
    def test_uniform_frame(self, deg):
        frame = np.full((60, 60, 3), (200, 140, 120), dtype=np.uint8)
        box = FaceBox(center=(30.0, 30.0), width=20.0, height=24.0, rotation_deg=deg)
        face = align_face(frame, box)
        assert face.shape == (24, 20)
        assert np.allclose(face.pixels[face.valid], (200, 140, 120))

    def test_rotation_is_rigid(self):
        # a bright row through the box centre stays a row in the crop
        frame = np.zeros((101, 101), dtype=np.uint8)
        box = FaceBox(center=(50.0, 50.0), width=40.0, height=40.0, rotation_deg=30.0)
        x, y = np.meshgrid(np.arange(101), np.arange(101))
        a = math.radians(30.0)
        v = -math.sin(a) * (x - 50) + math.cos(a) * (y - 50)
        frame[np.abs(v) < 1.5] = 255
        face = align_face(frame, box)
        row_means = face.pixels[..., 0].mean(axis=1)
        assert np.argmax(row_means) in (19, 20, 21)

    def test_partially_outside_flags_invalid(self):
        frame = np.full((20, 20, 3), 100, dtype=np.uint8)
        box = FaceBox(center=(2.0, 10.0), width=10.0, height=10.0, rotation_deg=0.0)
        face = align_face(frame, box)
        assert not face.valid.all() and face.valid.any()
        assert np.all(face.pixels[~face.valid] == 0)

    def test_fully_outside(self):
        frame = np.zeros((20, 20, 3), dtype=np.uint8)
        box = FaceBox(center=(500.0, 500.0), width=10.0, height=10.0, rotation_deg=0.0)
        with pytest.raises(GeometryError, match="outside"):
            align_face(frame, box)


class TestSkinMask:
    def test_skin_patch(self):
        assert skin_mask(constant_face((200, 140, 120))).fraction > 0.99

    def test_green_frame(self):
        assert skin_mask(constant_face((0, 255, 0))).fraction < 0.01

    def test_single_channel(self):
        mask = skin_mask(constant_face((90,)))
        assert mask.pixels.all()

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        face = AlignedFace(rng.uniform(0, 255, (16, 16, 3)), np.ones((16, 16), bool),
                           FaceBox((0, 0), 16, 16, 0))
        assert np.array_equal(skin_mask(face).pixels, skin_mask(face).pixels)

    def test_ycrcb_anchors(self):
        ycc = rgb_to_ycrcb(np.array([[255.0, 255.0, 255.0], [0.0, 0.0, 0.0]]))
        assert np.allclose(ycc, [[255, 128, 128], [0, 128, 128]])

    def test_empty_mask_flagged(self):
        assert skin_mask(constant_face((0, 0, 255))).empty


class TestGridBlocks:
    def test_100_by_100(self):
        grid = grid_blocks((100, 100), 5, 5)
        assert grid.n == 25
        assert all(r[2:] == (20, 20) for r in grid.regions)

    def test_remainder(self):
        grid = grid_blocks((101, 101), 5, 5)
        assert grid.regions[-1] == (80, 80, 21, 21)
        assert grid.regions[0] == (0, 0, 20, 20)

    def test_too_small(self):
        with pytest.raises(GeometryError, match="smaller than"):
            grid_blocks((3, 3), 5, 5)

    @pytest.mark.parametrize("shape,rows,cols", [((37, 53), 5, 5), ((10, 7), 3, 7), ((9, 9), 1, 1)])
    def test_exact_tiling(self, shape, rows, cols):
        cover = np.zeros(shape, int)
        for top, left, h, w in grid_blocks(shape, rows, cols).regions:
            cover[top:top + h, left:left + w] += 1
        assert np.all(cover == 1)

    def test_accepts_aligned_face(self):
        grid = grid_blocks(constant_face((1, 2, 3), (12, 15)), 3, 5)
        assert grid.regions[-1] == (8, 12, 4, 3)
