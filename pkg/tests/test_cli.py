import csv
import json

import numpy as np
import pytest

from rhythmkit.cli import main
from rhythmkit.stmap import read_stmap
from rhythmkit.synth import SynthSpec


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def video30(tmp_path_factory):
    out = tmp_path_factory.mktemp("v30")
    assert main(["synth", "frames", "--duration", "30", "--hr", "72", "-o", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "corpus", "--count", "4", "--clips", "6", "-o", str(out)]) == 0
    return out


class TestExtract:
    def test_41_clips(self, video30, tmp_path, capsys):
        assert main(["extract", str(video30), "-o", str(tmp_path)]) == 0
        files = sorted(tmp_path.rglob("*.stm"))
        assert len(files) == 41
        m = read_stmap(files[0])
        assert m.data.shape == (300, 25, 3) and m.colorspace == "yuv"
        assert "extracted 41 clips from 1 videos" in capsys.readouterr().out

    def test_single_block_grid(self, video30, tmp_path):
        assert main(["extract", str(video30), "-o", str(tmp_path), "--grid", "1x1"]) == 0
        assert read_stmap(next(tmp_path.rglob("*.stm"))).n_blocks == 1

    def test_missing_landmarks(self, tmp_path, capsys):
        main(["synth", "frames", "--duration", "10", "-o", str(tmp_path / "v")])
        (tmp_path / "v" / "landmarks.csv").unlink()
        assert main(["extract", str(tmp_path / "v"), "-o", str(tmp_path / "out")]) != 0
        assert str(tmp_path / "v" / "landmarks.csv") in capsys.readouterr().err

    def test_bad_grid_is_usage_error(self, video30, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["extract", str(video30), "-o", str(tmp_path), "--grid", "5by5"])
        assert exc.value.code == 2


class TestEstimate:
    def test_green_72(self, video30, tmp_path):
        assert main(["estimate", str(video30), "--method", "green", "-o", str(tmp_path)]) == 0
        (video,) = rows(tmp_path / "videos.csv")
        assert float(video["hr_bpm"]) == pytest.approx(72.0, abs=2.0)
        assert len(rows(tmp_path / "clips.csv")) == 41

    def test_from_maps(self, video30, tmp_path):
        main(["extract", str(video30), "-o", str(tmp_path / "maps"), "--colorspace", "rgb"])
        assert main(["estimate", str(tmp_path / "maps"), "--method", "pos", "-o", str(tmp_path / "e")]) == 0
        assert float(rows(tmp_path / "e" / "videos.csv")[0]["hr_bpm"]) == pytest.approx(72.0, abs=2.0)

    def test_all_clips_no_peak(self, tmp_path, capsys):
        (tmp_path / "flat.spec").write_text(SynthSpec(amplitude=0.0, duration_s=10.0).to_text())
        main(["synth", "frames", "--spec", str(tmp_path / "flat.spec"), "-o", str(tmp_path / "v")])
        assert main(["estimate", str(tmp_path / "v"), "--method", "green", "-o", str(tmp_path / "e")]) != 0
        assert "spectral peak" in capsys.readouterr().err
        assert rows(tmp_path / "e" / "clips.csv")[0]["status"] == "no-peak"

    def test_unknown_method(self, video30, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["estimate", str(video30), "--method", "ica", "-o", str(tmp_path)])
        assert exc.value.code == 2


class TestTrainInfer:
    def test_train_twice_identical(self, corpus, tmp_path):
        for name in ("a", "b"):
            assert main(["train", str(corpus), "-o", str(tmp_path / f"{name}.rkw"), "--epochs", "2", "-q"]) == 0
        assert (tmp_path / "a.rkw").read_bytes() == (tmp_path / "b.rkw").read_bytes()

    def test_log_and_config(self, corpus, tmp_path):
        (tmp_path / "t.cfg").write_text("epochs = 1\nlam = 5\n")
        assert main(["train", str(corpus), "-o", str(tmp_path / "m.rkw"), "--config", str(tmp_path / "t.cfg"),
                     "--log", str(tmp_path / "log.csv"), "-q"]) == 0
        (entry,) = rows(tmp_path / "log.csv")
        assert float(entry["total"]) == pytest.approx(float(entry["l1"]) + 5 * float(entry["smooth"]))

    def test_bad_config_fails_before_compute(self, corpus, tmp_path, capsys):
        (tmp_path / "t.cfg").write_text("epochs = -3\n")
        assert main(["train", str(corpus), "-o", str(tmp_path / "m.rkw"), "--config", str(tmp_path / "t.cfg")]) == 1
        assert not (tmp_path / "m.rkw").exists()

    def test_infer_fps_ratio(self, corpus, tmp_path):
        main(["train", str(corpus), "-o", str(tmp_path / "m.rkw"), "--epochs", "1", "-q"])
        main(["infer", str(corpus), "--model", str(tmp_path / "m.rkw"), "-o", str(tmp_path / "a")])
        main(["infer", str(corpus), "--model", str(tmp_path / "m.rkw"), "-o", str(tmp_path / "b"),
              "--fps", "30.5"])
        a = np.array([float(r["hr_bpm"]) for r in rows(tmp_path / "a" / "clips.csv")])
        b = np.array([float(r["hr_bpm"]) for r in rows(tmp_path / "b" / "clips.csv")])
        assert len(a) == 24 and np.allclose(b, a * 30.5 / 30.0, rtol=1e-12)

    def test_missing_checkpoint(self, corpus, tmp_path):
        assert main(["infer", str(corpus), "--model", str(tmp_path / "none.rkw"), "-o", str(tmp_path)]) == 1


class TestEvaluate:
    def test_prediction_csv(self, tmp_path):
        (tmp_path / "p.csv").write_text("estimator,hr_bpm,gt_hr_bpm\ngreen,72,70\ngreen,78,80\n")
        assert main(["evaluate", str(tmp_path / "p.csv"), "-o", str(tmp_path / "r")]) == 0
        summary = json.loads((tmp_path / "r" / "metrics.json").read_text())
        (row,) = summary["rows"]
        assert (row["mae_bpm"], row["rmse_bpm"], row["mean_err_bpm"]) == (2.0, 2.0, 0.0)
        assert (tmp_path / "r" / "bland_altman_green.csv").exists()

    def test_missing_columns(self, tmp_path, capsys):
        (tmp_path / "p.csv").write_text("a,b\n1,2\n")
        assert main(["evaluate", str(tmp_path / "p.csv"), "-o", str(tmp_path / "r")]) == 1
        assert "hr_bpm and gt_hr_bpm" in capsys.readouterr().err

    def test_nothing_to_evaluate(self, tmp_path):
        assert main(["evaluate", "-o", str(tmp_path)]) == 1


class TestSynth:
    def test_trace(self, tmp_path):
        assert main(["synth", "trace", "--hr", "90", "--duration", "5", "-o", str(tmp_path)]) == 0
        data = rows(tmp_path / "video_000.csv")
        assert len(data) == 150 and float(data[0]["hr_bpm"]) == 90.0

    def test_maps_from_spec_file(self, tmp_path):
        (tmp_path / "s.spec").write_text(SynthSpec(hr_bpm=66.0, duration_s=12.0).to_text())
        assert main(["synth", "maps", "--spec", str(tmp_path / "s.spec"), "-o", str(tmp_path / "m")]) == 0
        assert len(list((tmp_path / "m").rglob("*.stm"))) == 5

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RHYTHMKIT_SEED", "11")
        main(["synth", "trace", "--noise", "0.3", "-o", str(tmp_path / "a")])
        main(["--seed", "11", "synth", "trace", "--noise", "0.3", "-o", str(tmp_path / "b")])
        assert (tmp_path / "a" / "video_000.csv").read_bytes() == (tmp_path / "b" / "video_000.csv").read_bytes()
