"""Command-line interface: extract, estimate, train, infer, evaluate, synth."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .classical import ESTIMATORS, SNR_THRESHOLD_DB
from .errors import RhythmKitError
from .evaluation import (
    ReportRow,
    bland_altman_export,
    compute_metrics,
    format_table,
    make_folds,
    write_bland_altman_csv,
    write_report,
)
from .geometry import LandmarkSchema
from .ingest import FRAMES_FILE, GT_FILE, LANDMARKS_FILE, write_frame_sequence, write_ground_truth, write_landmarks
from .model import RhythmNet, predict_clips
from .pipeline import (
    MAP_SUFFIX,
    ExtractOptions,
    estimate_maps,
    estimate_video,
    extract_maps,
    find_map_files,
    find_video_dirs,
    group_by_video,
    load_maps,
    video_gt,
)
from .stmap import write_stmap
from .synth import SynthSpec, gen_map_corpus, gen_pulse_trace, gen_synthetic_frames, gen_synthetic_video_maps
from .training import TrainConfig, TrainSample, train

log = logging.getLogger("rhythmkit")

SEED_ENV = "RHYTHMKIT_SEED"
MODEL_METHOD = "rhythmnet"


class CliError(Exception):
    """Reported as ``rhythmkit: error: ...`` with exit status 1."""


# ---------------------------------------------------------------------------
# helpers


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 5x5, got {text!r}") from None
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be positive")
    return rows, cols


def _size(text: str) -> tuple[int, int]:
    h, w = _grid(text)
    return h, w


def _pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def _snr(text: str) -> float | None:
    if text.lower() == "none":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in dB or 'none', got {text!r}") from None


def _map_jobs(fn, items, jobs: int) -> list:
    """Order-preserving map, optionally over a process pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _extract_options(args) -> ExtractOptions:
    schema = LandmarkSchema.from_file(args.schema) if getattr(args, "schema", None) else None
    opts = ExtractOptions(args.window, args.step, args.grid, args.colorspace, args.landmark_window)
    return replace(opts, schema=schema) if schema is not None else opts


def _check_inputs(paths) -> None:
    for p in paths:
        if not Path(p).exists():
            raise CliError(f"no such file or directory: {p}")


def _collect_maps(inputs, opts: ExtractOptions, jobs: int) -> list:
    """Maps from .stm files/directories, extracting raw video directories on the fly."""
    maps, videos = [], []
    for inp in inputs:
        p = Path(inp)
        if p.is_file() or not any(True for _ in p.rglob(FRAMES_FILE)):
            maps.extend(load_maps(find_map_files(p)))
        else:
            videos.extend(find_video_dirs(p))
    for batch in _map_jobs(partial(extract_maps, opts=opts), videos, jobs):
        maps.extend(batch)
    if not maps:
        raise CliError("no clips found in the inputs")
    return maps


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# extract


def _extract_one(video_dir, opts, out_dir):
    maps = extract_maps(video_dir, opts)
    vid = maps[0].video_id or Path(video_dir).name
    target = Path(out_dir) / vid
    target.mkdir(parents=True, exist_ok=True)
    for m in maps:
        write_stmap(m, target / f"clip_{m.clip.start_frame:06d}{MAP_SUFFIX}")
    return len(maps)


def cmd_extract(args) -> int:
    _check_inputs(args.inputs)
    opts = _extract_options(args)
    videos = [v for inp in args.inputs for v in find_video_dirs(inp)]
    counts = _map_jobs(partial(_extract_one, opts=opts, out_dir=args.out), videos, args.jobs)
    print(f"extracted {sum(counts)} clips from {len(videos)} videos into {args.out}")
    return 0


# ---------------------------------------------------------------------------
# estimate


def _estimate_rows(results):
    clip_rows, per_video = [], {}
    for r in results:
        est = r.estimate
        clip_rows.append([r.video_id, r.subject_id, r.clip.start_frame, _fmt(est.hr_bpm if est else None),
                          _fmt(est.snr_db if est else None), _fmt(r.clip.gt_hr_bpm),
                          "ok" if est else "no-peak"])
        entry = per_video.setdefault(r.video_id, {"subject": r.subject_id, "hr": [], "gt": []})
        if est is not None:
            entry["hr"].append(est.hr_bpm)
        if r.clip.gt_hr_bpm is not None:
            entry["gt"].append(r.clip.gt_hr_bpm)
    return clip_rows, per_video


def _classical_results(inputs, method, opts, jobs, min_snr):
    results = []
    for inp in inputs:
        p = Path(inp)
        if p.is_dir() and any(True for _ in p.rglob(FRAMES_FILE)):
            videos = find_video_dirs(p)
            run = partial(estimate_video, method=method, opts=opts, min_snr_db=min_snr)
            for batch in _map_jobs(run, videos, jobs):
                results.extend(batch)
        else:
            results.extend(estimate_maps(load_maps(find_map_files(p)), method, min_snr))
    return results


def cmd_estimate(args) -> int:
    _check_inputs(args.inputs)
    opts = _extract_options(args)
    results = _classical_results(args.inputs, args.method, opts, args.jobs, args.min_snr)
    clip_rows, per_video = _estimate_rows(results)
    out = Path(args.out)
    _write_csv(out / "clips.csv", ["video_id", "subject_id", "clip_start", "hr_bpm", "snr_db",
                                   "gt_hr_bpm", "status"], clip_rows)
    video_rows, failed = [], []
    for vid, e in per_video.items():
        if not e["hr"]:
            failed.append(vid)
            continue
        gt = float(np.mean(e["gt"])) if e["gt"] else None
        video_rows.append([vid, e["subject"], args.method, _fmt(float(np.mean(e["hr"]))), _fmt(gt),
                           len(e["hr"])])
    _write_csv(out / "videos.csv", ["video_id", "subject_id", "estimator", "hr_bpm", "gt_hr_bpm",
                                    "n_clips"], video_rows)
    for row in video_rows:
        print(f"{row[0]}: {float(row[3]):.2f} bpm ({row[5]} clips)")
    if failed:
        raise CliError(f"no clip of {', '.join(failed)} produced a spectral peak")
    return 0


# ---------------------------------------------------------------------------
# train / infer


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig(seed=args.seed)
    overrides = {k: getattr(args, k) for k in ("epochs", "lr", "lam", "batch_runs", "mask_prob", "mask_min",
                                               "mask_max", "group_size", "variant", "gru_hidden")
                 if getattr(args, k) is not None}
    if args.no_gru:
        overrides["use_gru"] = False
    if args.seed_given or not args.config:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides)


def cmd_train(args) -> int:
    _check_inputs(args.inputs)
    cfg = _train_config(args)
    opts = _extract_options(args)
    maps = _collect_maps(args.inputs, opts, args.jobs)
    unlabeled = [m for m in maps if m.gt_hr_bpm is None]
    if unlabeled:
        raise CliError(f"{len(unlabeled)} training clips lack ground truth (e.g. video {unlabeled[0].video_id!r})")
    samples = [TrainSample.from_map(m) for m in maps]
    epoch_rows = []

    def on_epoch(entry, _model):
        epoch_rows.append([entry.epoch, _fmt(entry.l1), _fmt(entry.smooth), _fmt(entry.total)])
        if not args.quiet:
            print(f"epoch {entry.epoch}/{cfg.epochs}: l1 {entry.l1:.3f} smooth {entry.smooth:.3f} "
                  f"total {entry.total:.3f}", flush=True)

    model, _ = train(samples, cfg, on_epoch=on_epoch)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out, {"train_config": cfg.to_text(), "n_train_clips": len(samples),
                     "colorspace": maps[0].colorspace})
    if args.log:
        _write_csv(args.log, ["epoch", "l1", "smooth", "total"], epoch_rows)
    print(f"trained on {len(samples)} clips; checkpoint written to {out}")
    return 0


def _predict_groups(model: RhythmNet, groups: dict, fps_override: float | None):
    rows, videos = [], []
    for vid, maps in groups.items():
        fps = fps_override or maps[0].fps
        clip_hr = predict_clips(model, maps, fps)
        for m, hr in zip(maps, clip_hr):
            rows.append([vid, m.subject_id, m.clip.start_frame if m.clip else "", _fmt(float(hr)),
                         _fmt(m.gt_hr_bpm)])
        videos.append([vid, maps[0].subject_id, MODEL_METHOD, _fmt(float(np.mean(clip_hr))),
                       _fmt(video_gt(maps)), len(maps)])
    return rows, videos


def cmd_infer(args) -> int:
    _check_inputs([args.model, *args.inputs])
    model = RhythmNet.load(args.model)
    opts = _extract_options(args)
    groups = group_by_video(_collect_maps(args.inputs, opts, args.jobs))
    rows, videos = _predict_groups(model, groups, args.fps)
    out = Path(args.out)
    _write_csv(out / "clips.csv", ["video_id", "subject_id", "clip_start", "hr_bpm", "gt_hr_bpm"], rows)
    _write_csv(out / "videos.csv", ["video_id", "subject_id", "estimator", "hr_bpm", "gt_hr_bpm",
                                    "n_clips"], videos)
    for row in videos:
        print(f"{row[0]}: {float(row[3]):.2f} bpm ({row[5]} clips)")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _read_predictions(path) -> list[dict]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows or "hr_bpm" not in rows[0] or "gt_hr_bpm" not in rows[0]:
        raise CliError(f"{path}: expected columns hr_bpm and gt_hr_bpm")
    out = []
    for i, r in enumerate(rows, start=2):
        if not r["hr_bpm"] or not r["gt_hr_bpm"]:
            continue
        try:
            out.append({"estimator": r.get("estimator") or path.stem, "fold": r.get("fold") or "all",
                        "est": float(r["hr_bpm"]), "gt": float(r["gt_hr_bpm"])})
        except ValueError:
            raise CliError(f"{path}: non-numeric value in row {i}") from None
    return out


def _report(rows: list[ReportRow], pairs_by_est: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_report(rows, out / "metrics.csv", out / "metrics.json")
    (out / "table.txt").write_text(format_table(rows) + "\n")
    for est, (e, g) in pairs_by_est.items():
        if len(e) >= 2:
            write_bland_altman_csv(bland_altman_export(e, g), out / f"bland_altman_{est}.csv")
    print(format_table(rows))


def _rows_from_pairs(records: list[dict]) -> tuple[list[ReportRow], dict]:
    rows, pairs = [], {}
    estimators = sorted({r["estimator"] for r in records})
    for est in estimators:
        sel = [r for r in records if r["estimator"] == est]
        folds = sorted({r["fold"] for r in sel} - {"all"})
        for fold in folds:
            fr = [r for r in sel if r["fold"] == fold]
            rows.append(ReportRow(fold, est, compute_metrics([r["est"] for r in fr], [r["gt"] for r in fr])))
        e = [r["est"] for r in sel]
        g = [r["gt"] for r in sel]
        rows.append(ReportRow("all", est, compute_metrics(e, g)))
        pairs[est] = (e, g)
    return rows, pairs


def _dataset_records(args, opts) -> list[dict]:
    videos = [v for root in args.dataset for v in find_video_dirs(root)]
    for v in videos:
        if not (v / GT_FILE).exists():
            raise CliError(f"missing ground truth: {v / GT_FILE}")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in (*ESTIMATORS, MODEL_METHOD)]
    if unknown:
        raise CliError(f"unknown method(s) {unknown}; choose from {[*ESTIMATORS, MODEL_METHOD]}")
    records = []
    for method in methods:
        if method == MODEL_METHOD:
            continue
        run = partial(estimate_video, method=method, opts=opts, min_snr_db=args.min_snr)
        per_video = _map_jobs(run, videos, args.jobs)
        for results in per_video:
            hrs = [r.estimate.hr_bpm for r in results if r.estimate is not None]
            gts = [r.clip.gt_hr_bpm for r in results]
            if args.per_clip:
                records += [{"estimator": method, "fold": "all", "est": r.estimate.hr_bpm, "gt": r.clip.gt_hr_bpm,
                             "video": r.video_id} for r in results if r.estimate is not None]
            elif hrs:
                records.append({"estimator": method, "fold": "all", "est": float(np.mean(hrs)),
                                "gt": float(np.mean(gts)), "video": results[0].video_id})
            else:
                log.warning("%s: no spectral peak in any clip of %s", method, results[0].video_id)
    if MODEL_METHOD in methods:
        records += _model_records(args, opts, videos)
    return records


def _model_records(args, opts, videos) -> list[dict]:
    maps = [m for batch in _map_jobs(partial(extract_maps, opts=opts), videos, args.jobs) for m in batch]
    groups = group_by_video(maps)
    records = []

    def add(model, vids, fold):
        for vid in vids:
            ms = groups[vid]
            clip_hr = predict_clips(model, ms, ms[0].fps)
            if args.per_clip:
                records.extend({"estimator": MODEL_METHOD, "fold": fold, "est": float(h), "gt": m.gt_hr_bpm,
                                "video": vid} for h, m in zip(clip_hr, ms))
            else:
                records.append({"estimator": MODEL_METHOD, "fold": fold, "est": float(np.mean(clip_hr)),
                                "gt": video_gt(ms), "video": vid})

    if args.model:
        add(RhythmNet.load(args.model), list(groups), "all")
        return records
    cfg = _train_config(args)
    subjects = {vid: ms[0].subject_id for vid, ms in groups.items()}
    plan = make_folds(subjects.values(), args.folds, cfg.seed)
    for i in range(plan.k):
        train_subj, test_subj = plan.split(i)
        train_maps = [m for vid, ms in groups.items() if subjects[vid] in train_subj for m in ms]
        model, _ = train([TrainSample.from_map(m) for m in train_maps], cfg)
        add(model, [vid for vid in groups if subjects[vid] in test_subj], f"fold{i + 1}")
    return records


def cmd_evaluate(args) -> int:
    if not args.predictions and not args.dataset:
        raise CliError("give prediction CSVs or --dataset")
    _check_inputs([*args.predictions, *(args.dataset or [])])
    records = []
    for p in args.predictions:
        records += _read_predictions(p)
    if args.dataset:
        records += _dataset_records(args, _extract_options(args))
    if not records:
        raise CliError("no (estimate, ground truth) pairs to evaluate")
    rows, pairs = _rows_from_pairs(records)
    _report(rows, pairs, Path(args.out))
    return 0


# ---------------------------------------------------------------------------
# synth


def _synth_spec(args) -> SynthSpec:
    if args.spec:
        return SynthSpec.from_file(args.spec)
    return SynthSpec(hr_bpm=args.hr, fps=args.fps, duration_s=args.duration, harmonic=args.harmonic,
                     drift_amp=args.drift, motion_sigma=args.noise, sensor_sigma=args.noise,
                     seed=args.seed)


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "corpus":
        maps = gen_map_corpus(args.count, args.clips, args.hr_range, args.seed, args.noise, args.drift,
                              channels=args.channels)
        for m in maps:
            d = out / m.video_id
            d.mkdir(exist_ok=True)
            write_stmap(m, d / f"clip_{m.clip.start_frame:06d}{MAP_SUFFIX}")
        print(f"wrote {len(maps)} maps from {args.count} videos to {out}")
        return 0

    rng = np.random.default_rng(args.seed)
    specs = []
    for i in range(args.count):
        if args.count == 1:
            specs.append(_synth_spec(args))
        else:
            hr = float(rng.uniform(*args.hr_range))
            specs.append(replace(_synth_spec(args), hr_bpm=hr, seed=int(rng.integers(2**31))))
    for i, spec in enumerate(specs):
        subject = f"subject_{i // args.videos_per_subject:03d}"
        vid = f"video_{i:03d}"
        if args.kind == "frames":
            seq, track, trace = gen_synthetic_frames(spec, args.size, args.channels, subject, vid)
            target = out / subject / vid if args.count > 1 else out
            write_frame_sequence(seq, target)
            write_landmarks(track, target / LANDMARKS_FILE)
            write_ground_truth(trace, target / GT_FILE)
        elif args.kind == "maps":
            maps = gen_synthetic_video_maps(spec, args.blocks, args.channels, args.window, args.step,
                                            subject_id=subject, video_id=vid)
            target = out / vid
            target.mkdir(parents=True, exist_ok=True)
            for m in maps:
                write_stmap(m, target / f"clip_{m.clip.start_frame:06d}{MAP_SUFFIX}")
        else:
            sig = gen_pulse_trace(spec)
            t = np.arange(len(sig)) * 1000.0 / sig.fps
            _write_csv(out / f"{vid}.csv", ["time_ms", "signal", "hr_bpm"],
                       [[repr(float(a)), repr(float(b)), repr(float(c))]
                        for a, b, c in zip(t, sig.samples, spec.hr_at(t / 1000.0))])
        spec_name = f"{vid}.spec" if args.count > 1 else "synth.spec"
        (out / spec_name).write_text(spec.to_text())
    print(f"wrote {len(specs)} synthetic {args.kind} to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_extract_opts(p) -> None:
    g = p.add_argument_group("map extraction")
    g.add_argument("--window", type=int, default=300, metavar="FRAMES",
                   help="clip window length in frames (default: 300, the RhythmNet setting)")
    g.add_argument("--step", type=float, default=0.5, metavar="SECONDS",
                   help="window step in seconds (default: 0.5, the RhythmNet setting)")
    g.add_argument("--grid", type=_grid, default=(5, 5), metavar="RxC",
                   help="ROI block grid (default: 5x5, the RhythmNet setting)")
    g.add_argument("--colorspace", choices=("yuv", "rgb", "ycrcb"), default="yuv",
                   help="map colour space (default: yuv, the RhythmNet choice)")
    g.add_argument("--landmark-window", type=int, default=5, metavar="FRAMES",
                   help="centered landmark smoothing window, 1 disables (default: 5, chosen here)")
    g.add_argument("--schema", metavar="FILE", help="landmark index schema file (default: built-in index sets)")


def _add_jobs(p) -> None:
    p.add_argument("--jobs", type=int, default=1, help="worker processes; results do not depend on it (default: 1)")


def _add_train_opts(p) -> None:
    g = p.add_argument_group("training (unset values come from --config, then built-in defaults)")
    g.add_argument("--config", metavar="FILE", help="training config file of key = value lines")
    g.add_argument("--epochs", type=int, help="epochs (default: 50, the RhythmNet setting)")
    g.add_argument("--lr", type=float, help="Adam learning rate (default: 0.001, the RhythmNet setting)")
    g.add_argument("--lam", type=float, help="smooth-loss weight lambda (default: 100, the RhythmNet setting)")
    g.add_argument("--batch-runs", type=int, help="clip groups per optimizer step (default: 4, chosen here)")
    g.add_argument("--mask-prob", type=float, help="probability of masking a map (default: 0.5, the RhythmNet setting)")
    g.add_argument("--mask-min", type=int, help="shortest mask in frames (default: 10, the RhythmNet setting)")
    g.add_argument("--mask-max", type=int, help="longest mask in frames (default: 30, the RhythmNet setting)")
    g.add_argument("--group-size", type=int, help="adjacent clips per smooth-loss group (default: 6, the RhythmNet setting)")
    g.add_argument("--variant", choices=("compact", "resnet18"), help="backbone (default: compact, chosen here)")
    g.add_argument("--gru-hidden", type=int, help="GRU hidden size (default: feature width)")
    g.add_argument("--no-gru", action="store_true", help="train the per-clip model without the GRU head")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhythmkit", description="Remote heart-rate estimation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default: ${SEED_ENV}, else 0)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="build spatial-temporal maps from video directories")
    p.add_argument("inputs", nargs="+", help="video directories or dataset roots")
    p.add_argument("-o", "--out", required=True, help="output directory for .stm files")
    _add_extract_opts(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("estimate", help="classical HR estimation (GREEN, CHROM, POS)")
    p.add_argument("inputs", nargs="+", help="video directories, dataset roots, or .stm files/directories")
    p.add_argument("--method", choices=ESTIMATORS, default="pos", help="estimator (default: pos)")
    p.add_argument("--min-snr", type=_snr, default=SNR_THRESHOLD_DB, metavar="DB",
                   help=f"treat clips below this spectral SNR as no-peak; 'none' keeps all "
                        f"(default: {SNR_THRESHOLD_DB:g}, chosen here)")
    p.add_argument("-o", "--out", required=True, help="output directory for clips.csv and videos.csv")
    _add_extract_opts(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("train", help="train a RhythmNet model")
    p.add_argument("inputs", nargs="+", help="labelled .stm files/directories or video directories with gt.csv")
    p.add_argument("-o", "--out", required=True, help="checkpoint path")
    p.add_argument("--log", metavar="CSV", help="write per-epoch losses here")
    p.add_argument("-q", "--quiet", action="store_true", help="no per-epoch output")
    _add_train_opts(p)
    _add_extract_opts(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict HR with a trained model")
    p.add_argument("inputs", nargs="+", help=".stm files/directories or video directories")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--fps", type=float, help="override the source frame rate used for the fps ratio")
    p.add_argument("-o", "--out", required=True, help="output directory for clips.csv and videos.csv")
    _add_extract_opts(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="metrics, Bland-Altman data and summary tables")
    p.add_argument("predictions", nargs="*", help="CSV files with hr_bpm and gt_hr_bpm columns")
    p.add_argument("--dataset", nargs="+", metavar="DIR", help="dataset roots in the ingest layout with gt.csv")
    p.add_argument("--methods", default="green,chrom,pos",
                   help=f"comma list of {', '.join((*ESTIMATORS, MODEL_METHOD))} for --dataset (default: green,chrom,pos)")
    p.add_argument("--model", help="evaluate this checkpoint for the rhythmnet method instead of cross-validation")
    p.add_argument("--folds", type=int, default=5,
                   help="subject-exclusive folds for rhythmnet cross-validation (default: 5, the RhythmNet protocol)")
    p.add_argument("--per-clip", action="store_true", help="score clips instead of one estimate per video")
    p.add_argument("--min-snr", type=_snr, default=None, metavar="DB",
                   help="drop classical clip estimates below this spectral SNR (default: none, every clip counts)")
    p.add_argument("-o", "--out", required=True, help="output directory for the report")
    _add_train_opts(p)
    _add_extract_opts(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate synthetic videos, maps or pulse traces")
    p.add_argument("kind", choices=("frames", "maps", "trace", "corpus"))
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--spec", metavar="FILE", help="synthesis spec file of key = value lines")
    p.add_argument("--hr", type=float, default=72.0, help="heart rate in bpm (default: 72)")
    p.add_argument("--fps", type=float, default=30.0, help="frame rate (default: 30)")
    p.add_argument("--duration", type=float, default=10.0, help="seconds (default: 10)")
    p.add_argument("--harmonic", type=float, default=0.0, help="second-harmonic ratio (default: 0)")
    p.add_argument("--drift", type=float, default=0.0, help="0.1 Hz illumination drift amplitude (default: 0)")
    p.add_argument("--noise", type=float, default=0.0, help="motion and sensor noise sigma (default: 0)")
    p.add_argument("--size", type=_size, default=(64, 64), metavar="HxW", help="frame size (default: 64x64)")
    p.add_argument("--channels", type=int, choices=(1, 3), default=3, help="colour channels (default: 3)")
    p.add_argument("--blocks", type=int, default=25, help="map blocks (default: 25)")
    p.add_argument("--window", type=int, default=300, help="map window in frames (default: 300)")
    p.add_argument("--step", type=float, default=0.5, help="map window step in seconds (default: 0.5)")
    p.add_argument("--count", type=int, default=1, help="number of videos (default: 1)")
    p.add_argument("--hr-range", type=_pair, default=(50.0, 140.0), metavar="LO,HI",
                   help="HR range when --count > 1 (default: 50,140)")
    p.add_argument("--videos-per-subject", type=int, default=1, help="videos sharing a subject id (default: 1)")
    p.add_argument("--clips", type=int, default=8, help="clips per video for the corpus kind (default: 8)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = _default_seed()
        if getattr(args, "jobs", 1) < 1:
            raise CliError("--jobs must be at least 1")
        return args.func(args)
    except (CliError, RhythmKitError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"rhythmkit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
