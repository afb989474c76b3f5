"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-5


@dataclass
class BlockReport:
    name: str
    checked: int
    max_rel_error: float
    unreliable: list[tuple[int, ...]] = field(default_factory=list)
    failed: list[tuple[int, ...]] = field(default_factory=list)


@dataclass
class GradCheckReport:
    tolerance: float
    blocks: dict[str, BlockReport]

    @property
    def max_rel_error(self) -> float:
        return max((b.max_rel_error for b in self.blocks.values()), default=0.0)

    @property
    def unreliable(self) -> dict[str, list]:
        return {n: b.unreliable for n, b in self.blocks.items() if b.unreliable}

    @property
    def passed(self) -> bool:
        return all(not b.failed for b in self.blocks.values())

    def summary(self) -> str:
        lines = [f"gradient check (tol {self.tolerance:g}): {'PASS' if self.passed else 'FAIL'}"]
        for b in self.blocks.values():
            lines.append(f"  {b.name}: {b.checked} entries, max rel err {b.max_rel_error:.2e}"
                         + (f", {len(b.unreliable)} unreliable" if b.unreliable else ""))
        return "\n".join(lines)


def _rel_error(a: float, n: float, floor: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def _is_kink(f, p, idx, h, value_scale) -> bool:
    """One-sided slopes whose disagreement does not shrink linearly with h.

    At a smooth point the gap between forward and backward slopes is about
    h * |f''|, so each tenfold step reduction shrinks it tenfold. A kink at
    the point keeps the gap constant; a kink inside the step makes it vanish
    once the step no longer straddles it.
    """
    x0 = p[idx]

    def gap(step):
        p[idx] = x0 + step
        fp = f()
        p[idx] = x0 - step
        fm = f()
        p[idx] = x0
        f0 = f()
        return abs((fp - f0) / step - (f0 - fm) / step)

    noise = 1e-7 * max(1.0, value_scale)
    gaps = [gap(h), gap(h / 10.0), gap(h / 100.0)]
    for big, small in zip(gaps, gaps[1:]):
        if big <= noise:
            break
        if not 0.01 <= small / big <= 0.5:
            return True
    return False


def grad_check(f: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
               params: dict[str, np.ndarray], tolerance: float = 1e-4, step: float = DEFAULT_STEP,
               max_per_block: int | None = None, seed: int = 0,
               abs_floor: float = 1e-8) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``f(params)`` returns ``(value, grads)``. Parameters are perturbed in
    place (and restored); use float64 arrays. With ``max_per_block`` only a
    seeded random subset of entries per block is probed. Entries sitting on
    a kink are reported as unreliable rather than failed.
    """
    value, analytic = f(params)
    # callers may hand back views of buffers that later calls overwrite
    analytic = {k: np.array(v, dtype=np.float64, copy=True) for k, v in analytic.items()}
    if not np.isfinite(value):
        raise ValueError("function value is not finite at the check point")
    rng = np.random.default_rng(seed)
    blocks = {}
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"gradient checks need float64 parameters ({name} is {p.dtype})")
        g = np.asarray(analytic[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"analytic gradient shape {g.shape} != {p.shape} for {name!r}")
        flat_idx = np.arange(p.size)
        if max_per_block is not None and p.size > max_per_block:
            flat_idx = np.sort(rng.choice(p.size, size=max_per_block, replace=False))
        scale = float(np.abs(g).max()) if g.size else 0.0
        # below this, differences are finite-difference rounding noise
        floor = max(abs_floor * scale, 1e-9 * max(1.0, abs(value)))
        report = BlockReport(name, len(flat_idx), 0.0)
        for fi in flat_idx:
            idx = np.unravel_index(fi, p.shape)
            x0 = p[idx]
            p[idx] = x0 + step
            fp = f(params)[0]
            p[idx] = x0 - step
            fm = f(params)[0]
            p[idx] = x0
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise ValueError(f"non-finite function value perturbing {name}{idx}")
            numeric = (fp - fm) / (2.0 * step)
            err = _rel_error(float(g[idx]), numeric, floor)
            if err >= tolerance:
                if _is_kink(lambda: f(params)[0], p, idx, step, abs(value)):
                    report.unreliable.append(idx)
                    continue
                report.failed.append(idx)
            report.max_rel_error = max(report.max_rel_error, err)
        blocks[name] = report
    return GradCheckReport(tolerance, blocks)
