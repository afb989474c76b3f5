import numpy as np
import pytest

from rhythmkit.classical import SNR_THRESHOLD_DB, estimate, spectral_peak_hr
from rhythmkit.errors import NoPeakError
from rhythmkit.ingest import load_frame_sequence, write_frame_sequence, write_ground_truth, write_landmarks
from rhythmkit.pipeline import estimate_video
from rhythmkit.stmap import slide_windows
from rhythmkit.synth import (
    SynthSpec,
    gen_map_corpus,
    gen_pulse_trace,
    gen_synthetic_frames,
    gen_synthetic_stmap,
    gen_synthetic_traces,
    gen_synthetic_video_maps,
    trajectory_mean,
)


def write_video(tmp_path, spec, size=(64, 64)):
    seq, track, trace = gen_synthetic_frames(spec, size)
    write_frame_sequence(seq, tmp_path)
    write_landmarks(track, tmp_path / "landmarks.csv")
    write_ground_truth(trace, tmp_path / "gt.csv")
    return tmp_path


class TestSpec:
    @pytest.mark.parametrize("hr", [41.0, 151.0])
    def test_hr_limits(self, hr):
        with pytest.raises(ValueError, match="hr must lie"):
            SynthSpec(hr_bpm=hr)

    def test_nyquist(self):
        with pytest.raises(ValueError, match="too low"):
            SynthSpec(hr_bpm=140.0, fps=4.0)

    def test_negative_amplitude(self):
        with pytest.raises(ValueError, match="non-negative"):
            SynthSpec(amplitude=-1.0)

    def test_text_round_trip(self, tmp_path):
        spec = SynthSpec(hr_bpm=((0.0, 60.0), (30.0, 90.0)), harmonic=0.2, seed=4)
        (tmp_path / "s.spec").write_text(spec.to_text())
        assert SynthSpec.from_file(tmp_path / "s.spec") == spec

    def test_unknown_key(self, tmp_path):
        (tmp_path / "s.spec").write_text("hr = 70\n")
        with pytest.raises(ValueError, match="unknown synth setting"):
            SynthSpec.from_file(tmp_path / "s.spec")


class TestPulseTrace:
    def test_recovers_72(self):
        sig = gen_pulse_trace(SynthSpec(hr_bpm=72.0, duration_s=10.0, seed=1))
        assert spectral_peak_hr(sig).hr_bpm == pytest.approx(72.0, abs=0.5)

    def test_zero_amplitude_is_constant(self):
        sig = gen_pulse_trace(SynthSpec(amplitude=0.0))
        assert np.ptp(sig.samples) == 0.0

    def test_trajectory_windows_increase(self):
        spec = SynthSpec(hr_bpm=((0.0, 60.0), (30.0, 90.0)), duration_s=30.0, seed=2)
        sig = gen_pulse_trace(spec)
        est = [spectral_peak_hr(sig.samples[i:i + 300], 30.0).hr_bpm for i in range(0, 900, 300)]
        assert np.all(np.diff(est) > 0)

    def test_deterministic(self):
        spec = SynthSpec(motion_sigma=0.3, sensor_sigma=0.3, drift_amp=1.0, seed=9)
        assert gen_pulse_trace(spec).samples.tobytes() == gen_pulse_trace(spec).samples.tobytes()


class TestSynthMaps:
    def test_green_peak_from_clean_traces(self):
        tr = gen_synthetic_traces(SynthSpec(hr_bpm=72.0, seed=3))
        assert estimate("green", tr, 30.0).hr_bpm == pytest.approx(72.0, abs=1.0)

    def test_noise_only(self):
        spec = SynthSpec(amplitude=0.0, sensor_sigma=0.5, seed=3)
        tr = gen_synthetic_traces(spec)
        for method in ("green", "chrom", "pos"):
            try:
                assert estimate(method, tr, 30.0).snr_db < SNR_THRESHOLD_DB
            except NoPeakError:
                pass

    def test_stmap_shape_and_label(self):
        stmap, gt = gen_synthetic_stmap(SynthSpec(hr_bpm=80.0, seed=0), n_blocks=16, channels=1)
        assert stmap.data.shape == (300, 16, 1)
        assert gt == pytest.approx(80.0)

    def test_green_is_strongest(self):
        tr = gen_synthetic_traces(SynthSpec(hr_bpm=72.0, seed=0))
        rel = tr / tr.mean(axis=0)
        amp = rel.std(axis=(0, 1))
        assert amp[1] > amp[2] > amp[0]

    def test_video_maps_labels_follow_trajectory(self):
        spec = SynthSpec(hr_bpm=((0.0, 60.0), (20.0, 100.0)), duration_s=20.0, seed=1)
        maps = gen_synthetic_video_maps(spec)
        assert len(maps) == len(slide_windows(600, 30.0))
        for m in maps:
            t = (m.clip.start_frame + np.arange(m.clip.length)) / 30.0
            exact = 60.0 + 2.0 * t.mean()
            assert m.gt_hr_bpm == pytest.approx(exact, abs=0.1)
        assert trajectory_mean(spec, 0, 600) == pytest.approx(80.0, abs=0.1)

    def test_corpus(self):
        maps = gen_map_corpus(3, clips_per_video=4, seed=5)
        assert len(maps) == 12
        assert len({m.video_id for m in maps}) == 3
        again = gen_map_corpus(3, clips_per_video=4, seed=5)
        assert all(np.array_equal(a.data, b.data) for a, b in zip(maps, again))


class TestSynthFrames:
    def test_size_check(self):
        with pytest.raises(ValueError, match="at least 32x32"):
            gen_synthetic_frames(SynthSpec(), size=(16, 64))

    def test_deterministic(self):
        a = gen_synthetic_frames(SynthSpec(seed=3, duration_s=2.0))[0]
        b = gen_synthetic_frames(SynthSpec(seed=3, duration_s=2.0))[0]
        assert a.frames.tobytes() == b.frames.tobytes()

    def test_end_to_end_green(self, tmp_path):
        path = write_video(tmp_path, SynthSpec(hr_bpm=72.0, duration_s=10.0, seed=0))
        assert len(load_frame_sequence(path)) == 300
        (res,) = estimate_video(path, "green")
        assert res.estimate.hr_bpm == pytest.approx(72.0, abs=2.0)

    def test_zero_amplitude_no_peak(self, tmp_path):
        path = write_video(tmp_path, SynthSpec(amplitude=0.0, duration_s=10.0, seed=0))
        (res,) = estimate_video(path, "green")
        assert res.estimate is None and "no spectral peak" in res.error

    def test_drift_only_no_peak(self, tmp_path):
        path = write_video(tmp_path, SynthSpec(amplitude=0.0, drift_amp=1.0, duration_s=10.0, seed=1))
        for method in ("green", "chrom", "pos"):
            (res,) = estimate_video(path, method)
            assert res.estimate is None
