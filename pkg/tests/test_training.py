import numpy as np
import pytest

from rhythmkit.model import BackboneConfig, RhythmNet
from rhythmkit.stmap import SpatialTemporalMap
from rhythmkit.synth import gen_map_corpus
from rhythmkit.training import TrainConfig, TrainingError, TrainSample, make_runs, train

SHAPE = (32, 8, 3)


def tiny_samples(n_videos=3, clips=6, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for v in range(n_videos):
        hr = float(rng.uniform(60, 120))
        for c in range(clips):
            out.append(TrainSample(rng.uniform(0, 255, SHAPE), hr + c * 0.1, f"v{v}", 15 * c))
    return out


def tiny_cfg(**kw):
    base = dict(epochs=2, seed=0, group_size=3, batch_runs=2)
    base.update(kw)
    return TrainConfig(**base)


def tiny_model(use_gru=True, seed=0):
    m = RhythmNet(BackboneConfig(widths=(4, 4, 6, 8), input_shape=SHAPE), use_gru, seed=seed, group_size=3)
    m.target_mean, m.target_std = 90.0, 15.0
    return m


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.epochs, cfg.lr, cfg.lam, cfg.group_size) == (50, 1e-3, 100.0, 6)
        assert (cfg.mask_prob, cfg.mask_min, cfg.mask_max) == (0.5, 10, 30)

    def test_file_round_trip(self, tmp_path):
        cfg = TrainConfig(epochs=7, lam=3.5, use_gru=False, variant="resnet18")
        (tmp_path / "t.cfg").write_text(cfg.to_text())
        assert TrainConfig.from_file(tmp_path / "t.cfg") == cfg

    def test_file_errors(self, tmp_path):
        (tmp_path / "a.cfg").write_text("epochz = 3\n")
        with pytest.raises(ValueError, match="unknown or malformed"):
            TrainConfig.from_file(tmp_path / "a.cfg")
        (tmp_path / "b.cfg").write_text("epochs = many\n")
        with pytest.raises(ValueError, match="cannot parse"):
            TrainConfig.from_file(tmp_path / "b.cfg")

    @pytest.mark.parametrize("kw", [dict(epochs=-1), dict(lr=-1.0), dict(mask_prob=1.5),
                                    dict(mask_min=20, mask_max=10), dict(batch_runs=0)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestRuns:
    def test_groups_adjacent_clips_per_video(self):
        samples = tiny_samples(2, 8)
        samples.reverse()
        runs = make_runs(samples, 6)
        assert [len(r) for r in runs] == [6, 2, 6, 2]
        for r in runs:
            assert len({samples[i].video_id for i in r}) == 1
            starts = [samples[i].start_frame for i in r]
            assert starts == sorted(starts)

    def test_short_video(self):
        samples = tiny_samples(1, 4) + tiny_samples(1, 1, seed=1)[:1]
        samples[-1].video_id = "lonely"
        runs = make_runs(samples, 6)
        assert sorted(len(r) for r in runs) == [1, 4]

    def test_short_video_trains(self):
        samples = tiny_samples(1, 4)
        samples.append(TrainSample(samples[0].data, 70.0, "lonely", 0))
        _, log = train(samples, tiny_cfg(group_size=6, epochs=1), tiny_model())
        assert np.isfinite(log.epochs[0].total)


class TestTrain:
    def test_zero_lr_leaves_parameters(self):
        model = tiny_model()
        before = {k: v.copy() for k, v in model.state_dict().items()}
        train(tiny_samples(), tiny_cfg(lr=0.0, epochs=3), model)
        after = model.state_dict()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_deterministic(self):
        a, la = train(tiny_samples(), tiny_cfg(), tiny_model())
        b, lb = train(tiny_samples(), tiny_cfg(), tiny_model())
        assert all(a.state_dict()[k].tobytes() == b.state_dict()[k].tobytes() for k in a.state_dict())
        assert [e.total for e in la.epochs] == [e.total for e in lb.epochs]

    def test_log_per_epoch(self):
        _, log = train(tiny_samples(), tiny_cfg(epochs=3), tiny_model())
        assert [e.epoch for e in log.epochs] == [1, 2, 3]
        for e in log.epochs:
            assert e.total == pytest.approx(e.l1 + 100.0 * e.smooth)

    def test_no_gru_trains_on_l1_only(self):
        _, log = train(tiny_samples(), tiny_cfg(), tiny_model(use_gru=False))
        assert all(e.total == e.l1 for e in log.epochs)

    def test_target_standardization(self):
        samples = tiny_samples()
        cfg = tiny_cfg(epochs=0, variant="compact")
        model, _ = train([TrainSample(np.zeros((300, 25, 3)), s.hr_bpm, s.video_id, s.start_frame)
                          for s in samples], cfg)
        labels = np.array([s.hr_bpm for s in samples])
        assert model.target_mean == pytest.approx(labels.mean())
        assert model.target_std == pytest.approx(labels.std())

    def test_empty(self):
        with pytest.raises(TrainingError, match="no training samples"):
            train([], tiny_cfg())

    def test_mixed_shapes(self):
        samples = tiny_samples()
        samples[0] = TrainSample(np.zeros((40, 8, 3)), 70.0, "v0", 0)
        with pytest.raises(TrainingError, match="differ in shape"):
            train(samples, tiny_cfg())

    def test_non_finite_loss_aborts(self):
        samples = tiny_samples()
        samples[2].data = np.full(SHAPE, np.nan)
        with pytest.raises(TrainingError, match="non-finite loss at epoch 1"):
            train(samples, tiny_cfg(mask_prob=0.0), tiny_model())

    def test_missing_label(self):
        m = gen_map_corpus(1, 1)[0]
        m = SpatialTemporalMap(m.data, m.fps, video_id=m.video_id)
        with pytest.raises(ValueError, match="no ground-truth"):
            TrainSample.from_map(m)


@pytest.mark.slow
def test_training_l1_halves_within_20_epochs():
    samples = [TrainSample.from_map(m) for m in gen_map_corpus(25, 8, seed=1)]
    assert len(samples) == 200
    _, log = train(samples, TrainConfig(epochs=20, use_gru=False, seed=0))
    curve = log.l1_curve()
    print(f"training L1 {curve[0]:.2f} -> {curve.min():.2f}")
    assert curve.min() <= 0.5 * curve[0]
