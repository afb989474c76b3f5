import numpy as np
import pytest

from rhythmkit.errors import RhythmKitError
from rhythmkit.ingest import LandmarkTrack
from rhythmkit.stmap import (
    ClipWindow,
    SpatialTemporalMap,
    block_mean,
    build_stmap,
    draw_mask_span,
    fill_invalid,
    frame_block_means,
    map_from_block_means,
    mask_augment,
    minmax_normalize,
    minmax_normalize_row,
    read_stmap,
    rgb_to_yuv,
    slide_windows,
    window_count,
    write_stmap,
)
from rhythmkit.synth import SynthSpec, gen_synthetic_frames


def random_map(t=300, n=25, c=3, seed=0):
    rng = np.random.default_rng(seed)
    return SpatialTemporalMap(minmax_normalize(rng.normal(size=(t, n, c))), 30.0)


@pytest.fixture(scope="module")
def synth_clip():
    spec = SynthSpec(hr_bpm=72.0, duration_s=4.0, seed=5)
    return gen_synthetic_frames(spec, size=(48, 48))


class TestBlockMean:
    def test_uniform(self):
        frame = np.full((10, 10, 3), 50.0)
        assert np.array_equal(block_mean(frame, (0, 0, 10, 10)), [50, 50, 50])

    def test_half_and_half(self):
        frame = np.zeros((4, 4, 3))
        frame[:, 2:] = 100.0
        assert np.allclose(block_mean(frame, (0, 0, 4, 4), np.ones((4, 4), bool)), 50.0)

    def test_mask_excludes_pixels(self):
        frame = np.zeros((4, 4, 1))
        frame[:, 2:] = 100.0
        mask = np.zeros((4, 4), bool)
        mask[:, 2:] = True
        assert block_mean(frame, (0, 0, 4, 4), mask)[0] == 100.0

    def test_sparse_mask_falls_back(self):
        frame = np.zeros((10, 10, 1))
        frame[0, 0] = 100.0
        mask = np.zeros((10, 10), bool)
        mask[0, 0] = True  # 1% coverage
        assert block_mean(frame, (0, 0, 10, 10), mask)[0] == pytest.approx(1.0)

    def test_zero_area(self):
        with pytest.raises(ValueError, match="empty region"):
            block_mean(np.zeros((4, 4, 3)), (0, 0, 0, 4))


class TestYuv:
    @pytest.mark.parametrize("rgb,yuv", [
        ((0, 0, 0), (0, 128, 128)),
        ((255, 255, 255), (255, 128, 128)),
        ((255, 0, 0), (76.245, 84.905, 255.5)),
    ])
    def test_anchors(self, rgb, yuv):
        assert np.allclose(rgb_to_yuv(rgb), yuv, rtol=0, atol=1e-9)

    def test_vectorised(self):
        arr = np.zeros((2, 5, 3))
        assert rgb_to_yuv(arr).shape == (2, 5, 3)


class TestNormalize:
    def test_hand_row(self):
        assert np.array_equal(minmax_normalize_row([1, 2, 3]), [0, 127.5, 255])

    def test_constant(self):
        assert np.array_equal(minmax_normalize_row([5, 5, 5]), [0, 0, 0])

    def test_extremes_unchanged(self):
        assert np.array_equal(minmax_normalize_row([0, 255]), [0, 255])

    def test_idempotent(self):
        row = minmax_normalize_row(np.random.default_rng(2).normal(size=50))
        assert np.allclose(minmax_normalize_row(row), row, atol=1e-12)

    @pytest.mark.parametrize("k,b", [(2.0, 0.0), (0.37, 11.0), (13.0, -40.0)])
    def test_positive_affine_invariance(self, k, b):
        x = np.random.default_rng(3).uniform(0, 255, size=(40, 4, 3))
        assert np.allclose(minmax_normalize(k * x + b), minmax_normalize(x), atol=1e-9)


class TestWindows:
    def test_41_windows(self):
        wins = slide_windows(900, 30.0, 300, 0.5)
        assert len(wins) == 41
        assert wins[1].start_frame == 15 and wins[-1].stop_frame == 900

    def test_single_window(self):
        assert len(slide_windows(300, 30.0, 300)) == 1

    def test_too_short(self):
        with pytest.raises(RhythmKitError):
            slide_windows(299, 30.0, 300)

    def test_formula_matches_enumeration_sample(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            seq_len = int(rng.integers(1, 500))
            win = int(rng.integers(1, seq_len + 1))
            fps = float(rng.integers(2, 60))
            wins = slide_windows(seq_len, fps, win, 0.5)
            assert len(wins) == window_count(win, seq_len, wins[0].step_frames)
            assert all(w.stop_frame <= seq_len for w in wins)

    def test_window_count_zero_when_too_long(self):
        assert window_count(10, 5, 1) == 0


class TestBuildStmap:
    def test_shape_and_range(self, synth_clip):
        seq, track, _ = synth_clip
        m = build_stmap(seq.frames, track, seq.nominal_fps)
        assert m.data.shape == (len(seq), 25, 3)
        assert m.data.min() >= 0 and m.data.max() <= 255
        assert m.rows().shape == (75, len(seq))

    def test_pulse_rows_span_full_range(self, synth_clip):
        seq, track, _ = synth_clip
        m = build_stmap(seq.frames, track, seq.nominal_fps)
        rows = m.rows()
        assert np.all(rows.min(axis=1) == 0) and np.all(rows.max(axis=1) == 255)

    def test_constant_clip(self):
        frames = np.full((20, 48, 48, 3), (200, 140, 120), np.uint8)
        from rhythmkit.synth import synthetic_landmarks
        lm = synthetic_landmarks(7, 4, 40, 45)
        track = LandmarkTrack(np.repeat(lm[None], 20, 0), np.ones(20, bool))
        m = build_stmap(frames, track, 30.0)
        assert np.all(m.data == 0)

    def test_single_channel(self):
        spec = SynthSpec(hr_bpm=80.0, duration_s=2.0, seed=1)
        seq, track, _ = gen_synthetic_frames(spec, size=(40, 40), channels=1)
        m = build_stmap(seq.frames, track, 30.0)
        assert m.channels == 1

    @pytest.mark.parametrize("k,b", [(0.5, 3.0), (1.7, -20.0)])
    def test_affine_pixel_invariance(self, synth_clip, k, b):
        seq, track, _ = synth_clip
        means, valid = frame_block_means(seq.frames, track)
        base = map_from_block_means(means, valid, 30.0)
        moved = map_from_block_means(k * means + b, valid, 30.0)
        assert np.allclose(base.data, moved.data, atol=1e-9)

    def test_pixel_scaling_scales_block_means(self, synth_clip):
        seq, track, _ = synth_clip
        # single channel skips the colour-dependent skin rule
        frames = seq.frames[..., 1:2].astype(np.float64)
        means, _ = frame_block_means(frames, track)
        scaled, _ = frame_block_means(frames * 0.75, track)
        assert np.allclose(scaled, 0.75 * means)

    def test_invalid_frames_interpolated(self):
        means = np.arange(5, dtype=float)[:, None, None] * np.ones((5, 2, 3))
        valid = np.array([1, 0, 0, 1, 1], bool)
        means[1:3] = 0.0
        filled = fill_invalid(means, valid)
        assert np.allclose(filled[:, 0, 0], [0, 1, 2, 3, 4])

    def test_all_invalid(self, synth_clip):
        seq, track, _ = synth_clip
        bad = LandmarkTrack(track.points, np.zeros(len(track), bool))
        with pytest.raises(RhythmKitError, match="all frames"):
            build_stmap(seq.frames, bad, 30.0)

    def test_clip_slice(self, synth_clip):
        seq, track, _ = synth_clip
        clip = ClipWindow(15, 60, 15)
        m = build_stmap(seq.frames, track, 30.0, clip=clip)
        assert m.t_frames == 60 and m.clip is clip


class TestMaskAugment:
    def test_prob_zero_bit_identical(self):
        m = random_map()
        out = mask_augment(m, 123, prob=0.0)
        assert out.data.tobytes() == m.data.tobytes()

    def test_deterministic_span(self):
        m = random_map()
        a = mask_augment(m, 9, prob=1.0)
        b = mask_augment(m, 9, prob=1.0)
        assert np.array_equal(a.data, b.data)
        zero_t = np.where(np.all(a.data == 0, axis=(1, 2)))[0]
        assert 10 <= len(zero_t) <= 30
        assert np.all(np.diff(zero_t) == 1)

    def test_span_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            start, length = draw_mask_span(rng, 300, prob=1.0)
            assert 10 <= length <= 30 and 0 <= start and start + length <= 300

    def test_max_len_too_long(self):
        with pytest.raises(ValueError):
            mask_augment(random_map(), 0, max_len=300)


class TestStmFile:
    def test_round_trip(self, tmp_path):
        m = random_map(t=50, n=4, c=3)
        m = SpatialTemporalMap(m.data, 30.0, "yuv", ClipWindow(15, 50, 15, 71.5), "s1", "v1")
        write_stmap(m, tmp_path / "a.stm")
        back = read_stmap(tmp_path / "a.stm")
        assert np.array_equal(back.data, m.data.astype(np.float32))
        assert back.clip == m.clip
        assert (back.subject_id, back.video_id, back.fps) == ("s1", "v1", 30.0)

    def test_header_layout(self, tmp_path):
        m = SpatialTemporalMap(np.zeros((2, 3, 1)), 25.0)
        write_stmap(m, tmp_path / "b.stm")
        raw = (tmp_path / "b.stm").read_bytes()
        assert raw[:4] == b"RKM1"
        assert np.frombuffer(raw[4:16], "<u4").tolist() == [2, 3, 1]
        assert len(raw) == 20 + 4 * 6

    def test_bad_magic(self, tmp_path):
        (tmp_path / "c.stm").write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(RhythmKitError, match="RKM1"):
            read_stmap(tmp_path / "c.stm")
