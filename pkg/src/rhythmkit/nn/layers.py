"""Layers with explicit forward/backward passes over NCHW arrays.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Parameter.grad`` during
``backward``. There is no graph: containers call children in order.
"""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Parameter:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape


class Layer:
    """Base class; subclasses register parameters in ``self._params``."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._children: dict[str, Layer] = {}
        self.training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0

    def train(self, mode: bool = True) -> "Layer":
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Layer":
        return self.train(False)

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    __call__ = forward


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


# ---------------------------------------------------------------------------
# convolution


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, stride=1, padding=0,
                   bias: np.ndarray | None = None) -> tuple[np.ndarray, tuple]:
    """Zero-padded 2-D cross-correlation.

    ``x`` is (B, C, H, W), ``kernel`` is (F, C, kh, kw). Returns the
    (B, F, Ho, Wo) output and a cache for :func:`conv2d_backward`, with
    ``Ho = (H + 2p - kh) // s + 1``.
    """
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and kernel, got {x.shape}, {kernel.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    kh, kw = kernel.shape[2:]
    if x.shape[2] + 2 * ph < kh or x.shape[3] + 2 * pw < kw:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {x.shape[2:]} (+{ph},{pw})")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    b, c, ho, wo = win.shape[:4]
    # channel-major im2col, (B, C*kh*kw, Ho*Wo), so the product is already NCHW
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(b, c * kh * kw, ho * wo)
    wmat = kernel.reshape(kernel.shape[0], -1)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out += bias[:, None]
    return out.reshape(b, -1, ho, wo), (x.shape, cols, kernel, (sh, sw), (ph, pw))


def conv2d_backward(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients ``(dx, dkernel, dbias)`` of :func:`conv2d_forward`."""
    x_shape, cols, kernel, (sh, sw), (ph, pw) = cache
    b, c, h, w = x_shape
    f, _, kh, kw = kernel.shape
    _, _, ho, wo = dy.shape
    dy3 = dy.reshape(b, f, ho * wo)
    dkernel = np.matmul(dy3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape)
    dbias = dy3.sum(axis=(0, 2))
    dcols = np.matmul(kernel.reshape(f, -1).T, dy3).reshape(b, c, kh, kw, ho, wo)
    dxp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += dcols[:, :, i, j]
    dx = dxp[:, :, ph:ph + h, pw:pw + w]
    return np.ascontiguousarray(dx), dkernel, dbias


class Conv2d(Layer):
    def __init__(self, in_ch: int, out_ch: int, kernel=3, stride=1, padding=0,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = _pair(kernel)
        self.stride, self.padding = _pair(stride), _pair(padding)
        fan_in = in_ch * kh * kw
        self._params["weight"] = Parameter(he_uniform(rng, (out_ch, in_ch, kh, kw), fan_in, dtype))
        self._params["bias"] = Parameter(np.zeros(out_ch, dtype=dtype))
        self._cache = None

    def forward(self, x):
        y, self._cache = conv2d_forward(x, self._params["weight"].value, self.stride,
                                        self.padding, self._params["bias"].value)
        return y

    def backward(self, dy):
        dx, dw, db = conv2d_backward(dy, self._cache)
        self._params["weight"].grad += dw
        self._params["bias"].grad += db
        return dx


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self._params["weight"] = Parameter(he_uniform(rng, (in_features, out_features), in_features, dtype))
        self._params["bias"] = Parameter(np.zeros(out_features, dtype=dtype))
        self._x = None

    def forward(self, x):
        w = self._params["weight"].value
        if x.shape[-1] != w.shape[0]:
            raise ValueError(f"dense layer expects {w.shape[0]} features, got {x.shape[-1]}")
        self._x = x
        return x @ w + self._params["bias"].value

    def backward(self, dy):
        x = self._x
        x2 = x.reshape(-1, x.shape[-1])
        dy2 = dy.reshape(-1, dy.shape[-1])
        self._params["weight"].grad += x2.T @ dy2
        self._params["bias"].grad += dy2.sum(axis=0)
        return dy @ self._params["weight"].value.T


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        # np.maximum keeps NaN visible to the caller
        return np.maximum(x, x.dtype.type(0))

    def backward(self, dy):
        return np.where(self._mask, dy, 0).astype(dy.dtype, copy=False)


class MaxPool2d(Layer):
    """Non-overlapping-or-strided max pooling; ties route to the first max."""

    def __init__(self, kernel=2, stride=None):
        super().__init__()
        self.kernel = _pair(kernel)
        self.stride = _pair(stride if stride is not None else kernel)

    def forward(self, x):
        kh, kw = self.kernel
        sh, sw = self.stride
        if x.shape[2] < kh or x.shape[3] < kw:
            raise ValueError(f"pool kernel {self.kernel} larger than input {x.shape[2:]}")
        win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        flat = win.reshape(win.shape[:4] + (kh * kw,))
        arg = flat.argmax(axis=-1)
        self._cache = (x.shape, arg, win.shape[2:4])
        return np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        x_shape, arg, (ho, wo) = self._cache
        kh, kw = self.kernel
        sh, sw = self.stride
        dx = np.zeros(x_shape, dtype=dy.dtype)
        di, dj = np.divmod(arg, kw)
        b, c = np.meshgrid(np.arange(x_shape[0]), np.arange(x_shape[1]), indexing="ij")
        for oi in range(ho):
            for oj in range(wo):
                rows = oi * sh + di[:, :, oi, oj]
                cols = oj * sw + dj[:, :, oi, oj]
                np.add.at(dx, (b, c, rows, cols), dy[:, :, oi, oj])
        return dx


class GlobalAvgPool(Layer):
    """(B, C, H, W) -> (B, C) spatial mean."""

    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy):
        b, c, h, w = self._shape
        return np.broadcast_to(dy[:, :, None, None] / (h * w), self._shape).astype(dy.dtype)


class LayerNorm(Layer):
    """Standardize the last axis per sample, then apply a learned gain and shift."""

    def __init__(self, features: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self._params["gain"] = Parameter(np.ones(features, dtype=dtype))
        self._params["shift"] = Parameter(np.zeros(features, dtype=dtype))

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv)
        return xhat * self._params["gain"].value + self._params["shift"].value

    def backward(self, dy):
        xhat, inv = self._cache
        g = self._params["gain"]
        lead = tuple(range(dy.ndim - 1))
        g.grad += (dy * xhat).sum(axis=lead)
        self._params["shift"].grad += dy.sum(axis=lead)
        dxhat = dy * g.value
        return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        super().__init__()
        self.layers = list(layers)
        for i, layer in enumerate(self.layers):
            self._children[str(i)] = layer

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class ResidualBlock(Layer):
    """conv3x3(stride) -> ReLU -> conv3x3, plus identity or 1x1 projection, -> ReLU."""

    def __init__(self, in_ch: int, out_ch: int, stride=1,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        stride = _pair(stride)
        self._children["conv1"] = Conv2d(in_ch, out_ch, 3, stride, 1, rng, dtype)
        self._children["relu1"] = ReLU()
        self._children["conv2"] = Conv2d(out_ch, out_ch, 3, 1, 1, rng, dtype)
        if stride != (1, 1) or in_ch != out_ch:
            self._children["proj"] = Conv2d(in_ch, out_ch, 1, stride, 0, rng, dtype)
        self._children["relu_out"] = ReLU()

    def forward(self, x):
        c = self._children
        y = c["conv2"].forward(c["relu1"].forward(c["conv1"].forward(x)))
        skip = c["proj"].forward(x) if "proj" in c else x
        return c["relu_out"].forward(y + skip)

    def backward(self, dy):
        c = self._children
        d = c["relu_out"].backward(dy)
        dx = c["conv1"].backward(c["relu1"].backward(c["conv2"].backward(d)))
        dx = dx + (c["proj"].backward(d) if "proj" in c else d)
        return dx


def l1_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error and its (sub)gradient, sign(0) = 0."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction")
    diff = pred - target
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size
