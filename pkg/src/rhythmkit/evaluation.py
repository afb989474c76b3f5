"""Error metrics, subject-exclusive folds and Bland-Altman export."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METRIC_FIELDS = ("mean_err_bpm", "std_err_bpm", "mae_bpm", "rmse_bpm", "mer_percent", "pearson_r")
BA_Z = 1.96


@dataclass(frozen=True)
class Metrics:
    """Error statistics of estimates against ground truth.

    ``std_err_bpm`` uses the sample (N - 1) convention and is 0 for a
    single pair. ``pearson_r`` is 0 with ``degenerate`` set when either
    side has zero variance.
    """

    mean_err_bpm: float
    std_err_bpm: float
    mae_bpm: float
    rmse_bpm: float
    mer_percent: float
    pearson_r: float
    n: int
    degenerate: bool = False

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_FIELDS} | {"n": self.n, "degenerate": self.degenerate}


def _pairs(estimates, gt=None) -> tuple[np.ndarray, np.ndarray]:
    if gt is None:
        arr = np.asarray(list(estimates), dtype=np.float64)
        if arr.size == 0:
            raise ValueError("no estimates to evaluate")
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("estimates must be (est_bpm, gt_bpm) pairs")
        est, ref = arr[:, 0], arr[:, 1]
    else:
        est = np.asarray(estimates, dtype=np.float64).ravel()
        ref = np.asarray(gt, dtype=np.float64).ravel()
        if est.shape != ref.shape:
            raise ValueError(f"{len(est)} estimates vs {len(ref)} ground-truth values")
        if est.size == 0:
            raise ValueError("no estimates to evaluate")
    if not (np.all(np.isfinite(est)) and np.all(np.isfinite(ref))):
        raise ValueError("estimates and ground truth must be finite")
    return est, ref


def compute_metrics(estimates, gt=None) -> Metrics:
    """Metrics from ``(est, gt)`` pairs, or from two parallel sequences."""
    est, ref = _pairs(estimates, gt)
    if np.any(ref <= 0):
        raise ValueError("ground-truth HR must be positive (zero ground truth)")
    err = est - ref
    n = len(err)
    std = float(err.std(ddof=1)) if n > 1 else 0.0
    degenerate = n < 2 or np.ptp(est) == 0 or np.ptp(ref) == 0
    r = 0.0 if degenerate else float(np.clip(np.corrcoef(est, ref)[0, 1], -1.0, 1.0))
    return Metrics(
        mean_err_bpm=float(err.mean()),
        std_err_bpm=std,
        mae_bpm=float(np.abs(err).mean()),
        rmse_bpm=float(np.sqrt(np.mean(err**2))),
        mer_percent=float(np.mean(np.abs(err) / ref) * 100.0),
        pearson_r=r,
        n=n,
        degenerate=bool(degenerate),
    )


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[str, ...], ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def subjects(self) -> set[str]:
        return {s for f in self.folds for s in f}

    def split(self, i: int) -> tuple[set[str], set[str]]:
        """(train subjects, test subjects) for fold ``i``."""
        test = set(self.folds[i])
        return self.subjects() - test, test


def make_folds(subject_ids: Iterable[str], k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle the distinct subjects with ``seed`` and deal them round-robin into ``k`` folds."""
    subjects = sorted(set(subject_ids))
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > len(subjects):
        raise ValueError(f"k={k} folds exceed the {len(subjects)} distinct subjects")
    order = np.random.default_rng(seed).permutation(len(subjects))
    folds = [[] for _ in range(k)]
    for pos, idx in enumerate(order):
        folds[pos % k].append(subjects[idx])
    return FoldPlan(tuple(tuple(sorted(f)) for f in folds), seed)


# ---------------------------------------------------------------------------
# Bland-Altman


@dataclass(frozen=True)
class BlandAltman:
    means: np.ndarray
    diffs: np.ndarray
    mean_diff: float
    std_diff: float
    lower: float
    upper: float


def bland_altman_export(estimates, gt=None) -> BlandAltman:
    """Pair means and differences with ``mean_diff +- 1.96 * std_diff``
    limits (sample std)."""
    est, ref = _pairs(estimates, gt)
    if len(est) < 2:
        raise ValueError("need >= 2 pairs for limits of agreement")
    diffs = est - ref
    md = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    return BlandAltman((est + ref) / 2.0, diffs, md, sd, md - BA_Z * sd, md + BA_Z * sd)


def write_bland_altman_csv(ba: BlandAltman, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# mean_diff={ba.mean_diff!r}\n# std_diff={ba.std_diff!r}\n")
        fh.write(f"# lower={ba.lower!r}\n# upper={ba.upper!r}\n")
        w = csv.writer(fh)
        w.writerow(["mean_bpm", "diff_bpm"])
        for m, d in zip(ba.means, ba.diffs):
            w.writerow([repr(float(m)), repr(float(d))])
    return path


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ReportRow:
    fold: str
    estimator: str
    metrics: Metrics


def write_report(rows: Sequence[ReportRow], csv_path, json_path=None) -> None:
    """CSV with one row per (fold, estimator) and an optional JSON summary
    holding the same rows plus the metric conventions."""
    fields = ["fold", "estimator", *METRIC_FIELDS, "n", "degenerate"]
    with Path(csv_path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({"fold": r.fold, "estimator": r.estimator} | r.metrics.as_row())
    if json_path is not None:
        summary = {
            "conventions": {
                "error": "estimate - ground truth (bpm)",
                "std": "sample (N-1)",
                "mer": "mean of per-sample |error| / ground truth, percent",
                "pearson_degenerate": "reported as 0 with degenerate=true",
            },
            "rows": [{"fold": r.fold, "estimator": r.estimator} | asdict(r.metrics) for r in rows],
        }
        Path(json_path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def format_table(rows: Sequence[ReportRow]) -> str:
    """Plain-text table: Method, Mean, Std, MAE, RMSE, MER, r."""
    head = f"{'Method':<24}{'Mean':>8}{'Std':>8}{'MAE':>8}{'RMSE':>8}{'MER':>9}{'r':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        m = r.metrics
        name = r.estimator if r.fold in ("", "all") else f"{r.estimator} [{r.fold}]"
        lines.append(f"{name:<24}{m.mean_err_bpm:>8.2f}{m.std_err_bpm:>8.2f}{m.mae_bpm:>8.2f}"
                     f"{m.rmse_bpm:>8.2f}{m.mer_percent:>8.2f}%{m.pearson_r:>7.2f}")
    return "\n".join(lines)
