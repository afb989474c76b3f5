"""Gated recurrent unit: single-step functions and a sequence layer with BPTT.

Row-vector convention, ``x_t`` is (B, I) and ``h`` is (B, H)::

    z  = sigmoid(x W_z' + h U_z' + b_z)
    r  = sigmoid(x W_r' + h U_r' + b_r)
    hc = tanh(x W_h' + (r * h) U_h' + b_h)
    h' = (1 - z) * h + z * hc
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Layer, Parameter, he_uniform

GATE_NAMES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class GruCellParams:
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        hidden, inp = self.W_z.shape
        for g in "zrh":
            w, u, b = (getattr(self, f"{k}_{g}") for k in "WUb")
            if w.shape != (hidden, inp) or u.shape != (hidden, hidden) or b.shape != (hidden,):
                raise ValueError(f"inconsistent GRU parameter shapes for gate {g!r}")

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int, dtype=np.float64) -> "GruCellParams":
        shapes = {"W": (hidden_size, input_size), "U": (hidden_size, hidden_size), "b": (hidden_size,)}
        return cls(**{n: np.zeros(shapes[n[0]], dtype=dtype) for n in GATE_NAMES})

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator,
             dtype=np.float32) -> "GruCellParams":
        vals = {}
        for n in GATE_NAMES:
            if n[0] == "W":
                vals[n] = he_uniform(rng, (hidden_size, input_size), input_size, dtype) * 0.5
            elif n[0] == "U":
                vals[n] = he_uniform(rng, (hidden_size, hidden_size), hidden_size, dtype) * 0.5
            else:
                vals[n] = np.zeros(hidden_size, dtype=dtype)
        return cls(**vals)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in GATE_NAMES}


def _check_dims(p: GruCellParams, x: np.ndarray, h: np.ndarray) -> None:
    if x.shape[-1] != p.input_size:
        raise ValueError(f"GRU input size {x.shape[-1]} != {p.input_size}")
    if h.shape[-1] != p.hidden_size:
        raise ValueError(f"GRU hidden size {h.shape[-1]} != {p.hidden_size}")
    if x.shape[:-1] != h.shape[:-1]:
        raise ValueError(f"GRU batch mismatch {x.shape} vs {h.shape}")


def gru_step_cached(p: GruCellParams, x: np.ndarray, h: np.ndarray):
    _check_dims(p, x, h)
    z = sigmoid(x @ p.W_z.T + h @ p.U_z.T + p.b_z)
    r = sigmoid(x @ p.W_r.T + h @ p.U_r.T + p.b_r)
    rh = r * h
    hc = np.tanh(x @ p.W_h.T + rh @ p.U_h.T + p.b_h)
    h_new = (1.0 - z) * h + z * hc
    return h_new, (x, h, z, r, rh, hc)


def gru_step(p: GruCellParams, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    return gru_step_cached(p, np.asarray(x), np.asarray(h_prev))[0]


def gru_step_backward(p: GruCellParams, dh_new: np.ndarray, cache, grads: dict[str, np.ndarray]):
    """Backprop one step; accumulates into ``grads`` and returns ``(dx, dh_prev)``."""
    x, h, z, r, rh, hc = cache
    dz = dh_new * (hc - h)
    dhc = dh_new * z
    dh = dh_new * (1.0 - z)

    da_h = dhc * (1.0 - hc * hc)
    grads["W_h"] += da_h.T @ x
    grads["U_h"] += da_h.T @ rh
    grads["b_h"] += da_h.sum(axis=0)
    drh = da_h @ p.U_h
    dr = drh * h
    dh += drh * r
    dx = da_h @ p.W_h

    da_z = dz * z * (1.0 - z)
    grads["W_z"] += da_z.T @ x
    grads["U_z"] += da_z.T @ h
    grads["b_z"] += da_z.sum(axis=0)
    dh += da_z @ p.U_z
    dx += da_z @ p.W_z

    da_r = dr * r * (1.0 - r)
    grads["W_r"] += da_r.T @ x
    grads["U_r"] += da_r.T @ h
    grads["b_r"] += da_r.sum(axis=0)
    dh += da_r @ p.U_r
    dx += da_r @ p.W_r
    return dx, dh


class GRU(Layer):
    """One-layer GRU over (B, S, I) sequences, returning all hidden states (B, S, H)."""

    def __init__(self, input_size: int, hidden_size: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        init = GruCellParams.init(input_size, hidden_size, rng, dtype)
        for name, value in init.as_dict().items():
            self._params[name] = Parameter(value)
        self.hidden_size = hidden_size

    @property
    def cell(self) -> GruCellParams:
        return GruCellParams(**{n: self._params[n].value for n in GATE_NAMES})

    def run(self, x, h0=None):
        """Forward pass returning ``(out, caches)`` without touching layer state,
        so several sequences can be in flight before their backward passes."""
        if x.ndim != 3:
            raise ValueError(f"GRU expects (B, S, I) input, got {x.shape}")
        b, s, _ = x.shape
        if s == 0:
            raise ValueError("GRU needs a non-empty sequence")
        cell = self.cell
        h = np.zeros((b, self.hidden_size), dtype=x.dtype) if h0 is None else h0
        out = np.empty((b, s, self.hidden_size), dtype=x.dtype)
        caches = []
        for t in range(s):
            h, cache = gru_step_cached(cell, x[:, t], h)
            caches.append(cache)
            out[:, t] = h
        return out, caches

    def backprop(self, dy, caches):
        """Backward pass for a :meth:`run` call; returns ``(dx, dh0)``."""
        cell = self.cell
        grads = {n: self._params[n].grad for n in GATE_NAMES}
        b, s, _ = dy.shape
        dx = np.empty((b, s, cell.input_size), dtype=dy.dtype)
        dh = np.zeros((b, self.hidden_size), dtype=dy.dtype)
        for t in reversed(range(s)):
            dx[:, t], dh = gru_step_backward(cell, dy[:, t] + dh, caches[t], grads)
        return dx, dh

    def forward(self, x, h0=None):
        out, self._caches = self.run(x, h0)
        return out

    def backward(self, dy):
        dx, self.dh0 = self.backprop(dy, self._caches)
        return dx
