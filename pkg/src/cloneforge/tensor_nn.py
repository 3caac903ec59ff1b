"""Dense float32 layers with exact analytic backward passes.

Only what the clone encoder needs: strided 5x5 convolution, ReLU,
adaptive average pooling to 1x1, a linear projection, a row-wise L2
norm, scalar softplus, and Adam. Each layer caches what its backward
needs on the most recent forward; parameter gradients are accumulated
into ``Param.grad`` and cleared by ``adam_step``.

Layers are plain objects, not an autograd graph: the caller invokes
backward passes in reverse order and threads the input gradient through
by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Param:
    """A trainable tensor plus its gradient and Adam state."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    step_count: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        value = np.asarray(self.value, dtype=np.float32)
        # ascontiguousarray would promote 0-d scalars to 1-d
        self.value = np.ascontiguousarray(value) if value.ndim else value.copy()
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return int(self.value.size)


def _as_f32(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float32)


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(N,C,H,W) -> (C*k*k, N*Ho*Wo) patch matrix, laid out for one big GEMM.

    Works channel-first internally so the k*k gather loop copies
    contiguous-ish blocks instead of transposing per tap.
    """
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.pad(np.ascontiguousarray(x.transpose(1, 0, 2, 3)), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * k * k, n * ho * wo)


def _col2im(cols: np.ndarray, x_shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add the patch-matrix gradient back to input layout."""
    n, c, h, w = x_shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    cols = cols.reshape(c, k, k, n, ho, wo)
    xp = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, i, j]
    out = xp if pad == 0 else xp[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


class Conv2d:
    """Strided cross-correlation (the usual deep-learning convention, no kernel flip)."""

    def __init__(self, weight: Param, bias: Param, stride: int = 2, padding: int = 2):
        c_out, c_in, kh, kw = weight.value.shape
        if kh != kw:
            raise ValueError(f"square kernels only, got {kh}x{kw}")
        if bias.value.shape != (c_out,):
            raise ValueError(f"bias shape {bias.value.shape} does not match {c_out} output channels")
        self.weight = weight
        self.bias = bias
        self.stride = stride
        self.padding = padding
        self._cache: tuple | None = None

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        k = self.weight.value.shape[2]
        return (
            (h + 2 * self.padding - k) // self.stride + 1,
            (w + 2 * self.padding - k) // self.stride + 1,
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_f32(x)
        c_out, c_in, k, _ = self.weight.value.shape
        if x.ndim != 4 or x.shape[1] != c_in:
            raise ValueError(f"expected input N x {c_in} x H x W, got {x.shape}")
        n = x.shape[0]
        ho, wo = self.out_hw(x.shape[2], x.shape[3])
        cols = _im2col(x, k, self.stride, self.padding)  # (K, N*Ho*Wo)
        w_mat = self.weight.value.reshape(c_out, c_in * k * k)
        out = w_mat @ cols  # single GEMM: (c_out, N*Ho*Wo)
        out += self.bias.value[:, None]
        self._cache = (cols, x.shape)
        return out.reshape(c_out, n, ho, wo).transpose(1, 0, 2, 3)

    def backward(self, grad_out: np.ndarray, input_grad: bool = True) -> np.ndarray | None:
        """Accumulate weight/bias grads; input gradient only when asked.

        The first layer of a network feeds on data, so its input
        gradient is dead weight; callers skip it with input_grad=False.
        """
        if self._cache is None:
            raise RuntimeError("backward before forward")
        cols, x_shape = self._cache
        c_out, c_in, k, _ = self.weight.value.shape
        g = _as_f32(grad_out)
        self.bias.grad += g.sum(axis=(0, 2, 3))
        g_mat = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(c_out, -1)
        self.weight.grad += (g_mat @ cols.T).reshape(self.weight.value.shape)
        if not input_grad:
            return None
        w_mat = self.weight.value.reshape(c_out, c_in * k * k)
        dcols = w_mat.T @ g_mat
        return _col2im(dcols, x_shape, k, self.stride, self.padding)


class ReLU:
    def __init__(self) -> None:
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_f32(x)
        self._mask = x > 0  # subgradient 0 at x == 0
        return np.where(self._mask, x, np.float32(0.0))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise RuntimeError("backward before forward")
        return np.where(self._mask, _as_f32(grad_out), np.float32(0.0))


class AdaptiveAvgPool:
    """Mean over each full H x W plane, i.e. adaptive average pooling to 1x1."""

    def __init__(self) -> None:
        self._hw: tuple[int, int] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_f32(x)
        self._hw = (x.shape[2], x.shape[3])
        return x.mean(axis=(2, 3), keepdims=True, dtype=np.float32)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._hw is None:
            raise RuntimeError("backward before forward")
        h, w = self._hw
        g = _as_f32(grad_out) / np.float32(h * w)
        return np.broadcast_to(g, g.shape[:2] + (h, w)).astype(np.float32)


class Linear:
    """out = x @ weight.T + bias with weight of shape (d_out, d_in)."""

    def __init__(self, weight: Param, bias: Param):
        if bias.value.shape != (weight.value.shape[0],):
            raise ValueError("bias shape does not match weight rows")
        self.weight = weight
        self.bias = bias
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_f32(x)
        if x.ndim != 2 or x.shape[1] != self.weight.value.shape[1]:
            raise ValueError(f"expected input N x {self.weight.value.shape[1]}, got {x.shape}")
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("backward before forward")
        g = _as_f32(grad_out)
        self.weight.grad += g.T @ self._x
        self.bias.grad += g.sum(axis=0)
        return g @ self.weight.value


class L2NormRows:
    """Per-row Euclidean norm of an (N, d) matrix; gradient 0 for an all-zero row."""

    def __init__(self) -> None:
        self._cache: tuple[np.ndarray, np.ndarray] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_f32(x)
        norms = np.sqrt(np.sum(x * x, axis=1, dtype=np.float32))
        self._cache = (x, norms)
        return norms

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward before forward")
        x, norms = self._cache
        safe = np.where(norms > 0, norms, np.float32(1.0))
        g = (_as_f32(grad_out) / safe)[:, None] * x
        g[norms == 0] = 0.0
        return g


def softplus(x: float) -> float:
    """log(1 + e^x), overflow-safe; always strictly positive for finite x."""
    if x > 30.0:
        return x + float(np.log1p(np.exp(-x)))
    return float(np.log1p(np.exp(x)))


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + float(np.exp(-x)))
    e = float(np.exp(x))
    return e / (1.0 + e)


def adam_step(
    params: list[Param],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One bias-corrected Adam update; zeroes gradients afterwards.

    ``weight_decay`` is the classic L2-coupled form: it is added to the
    gradient before the moment updates rather than applied decoupled.
    """
    for p in params:
        g = p.grad
        if weight_decay > 0.0:
            g = g + np.float32(weight_decay) * p.value
        p.step_count += 1
        t = p.step_count
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1**t)
        v_hat = p.adam_v / (1.0 - beta2**t)
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(np.float32)
        p.grad[...] = 0.0
