"""Differentiable operations over :class:`~hazelab.nn.tensor.Tensor`.

Conventions:
  * activations are N x C x H x W, kernels Cout x Cin x K x K
  * conv2d computes cross-correlation (no kernel flip) with symmetric
    zero padding of (K-1)//2 per side; stride 1 preserves H and W
  * maxpool2d uses window-clamped ("same") padding at stride 1 and valid
    windows at stride 2; ties route gradient to the first element in
    row-major window order
  * every operation is a pure function of its inputs and deterministic

All operations follow the dtype of their inputs, so the same code runs in
float32 for training and float64 for gradient checking.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function on raw arrays."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# convolution


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """Cross-correlate ``x`` (N,C,H,W) with ``w`` (Co,C,K,K) plus bias ``b`` (Co,).

    Same-zero padding of (K-1)//2 per side; stride 1 keeps spatial extents,
    stride 2 halves them (rounding up).
    """
    _require(x.data.ndim == 4, f"conv2d input must be 4-d N,C,H,W, got shape {x.shape}")
    _require(w.data.ndim == 4, f"conv2d kernel must be 4-d Co,Ci,K,K, got shape {w.shape}")
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    _require(kh == kw, f"conv2d kernel must be square, got {kh}x{kw}")
    _require(kh % 2 == 1, f"conv2d kernel size must be odd, got {kh}")
    _require(stride in (1, 2), f"conv2d stride must be 1 or 2, got {stride}")
    _require(ci == c, f"conv2d channel mismatch: input has {c} channels, kernel expects {ci}")
    _require(b.shape == (co,), f"conv2d bias shape {b.shape} must be ({co},)")

    k = kh
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1

    # im2col: (N, Ho, Wo, C*K*K) then one GEMM against the flattened kernel
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    wmat = w.data.reshape(co, c * k * k)
    out_data = (col @ wmat.T + b.data).reshape(n, ho, wo, co).transpose(0, 3, 1, 2)

    out = Tensor(np.ascontiguousarray(out_data), parents=(x, w, b))

    def _bwd(g: np.ndarray) -> None:
        g_col = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
        if b.requires_grad:
            b.accumulate_grad(g_col.sum(axis=0))
        if w.requires_grad:
            # recompute the column matrix rather than retaining it
            win_b = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
            col_b = win_b.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
            w.accumulate_grad((g_col.T @ col_b).reshape(co, c, k, k))
        if x.requires_grad:
            d_col = (g_col @ wmat).reshape(n, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d_col[..., i, j]
            x.accumulate_grad(dxp[:, :, pad : pad + h, pad : pad + wd])

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# pooling and resampling


def maxpool2d(x: Tensor, kernel: int, stride: int) -> Tensor:
    """Windowed maximum. Stride 1 clamps windows at borders and keeps H,W;
    stride 2 uses valid windows only."""
    _require(x.data.ndim == 4, f"maxpool2d input must be 4-d, got shape {x.shape}")
    _require(kernel >= 1, f"maxpool2d kernel must be >= 1, got {kernel}")
    _require(stride in (1, 2), f"maxpool2d stride must be 1 or 2, got {stride}")
    n, c, h, w = x.shape
    k = kernel

    if stride == 1:
        pad_lo = (k - 1) // 2
        pad_hi = k // 2
        _require(
            k <= h + pad_lo + pad_hi and k <= w + pad_lo + pad_hi,
            f"maxpool2d kernel {k} exceeds padded extent of {h}x{w} input",
        )
        fill = -np.inf if np.issubdtype(x.data.dtype, np.floating) else np.iinfo(x.data.dtype).min
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad_lo, pad_hi), (pad_lo, pad_hi)), constant_values=fill)
    else:
        pad_lo = 0
        _require(k <= h and k <= w, f"maxpool2d kernel {k} exceeds {h}x{w} input at stride {stride}")
        xp = x.data

    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, ho, wo, k * k)
    arg = np.argmax(flat, axis=-1)  # first occurrence in row-major window order
    out_data = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    out = Tensor(np.ascontiguousarray(out_data), parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if not x.requires_grad:
            return
        ni, ci_, ii, jj = np.indices((n, c, ho, wo))
        rows = ii * stride + arg // k
        cols = jj * stride + arg % k
        dxp = np.zeros_like(xp, dtype=g.dtype)
        np.add.at(dxp, (ni, ci_, rows, cols), g)
        if stride == 1:
            x.accumulate_grad(dxp[:, :, pad_lo : pad_lo + h, pad_lo : pad_lo + w])
        else:
            x.accumulate_grad(dxp)

    out._backward = _bwd
    return out


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Replicate each value into a 2x2 block: (N,C,H,W) -> (N,C,2H,2W)."""
    _require(x.data.ndim == 4, f"upsample input must be 4-d, got shape {x.shape}")
    n, c, h, w = x.shape
    out = Tensor(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3), parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# activations


def swish(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    sig = sigmoid_values(x.data)
    out = Tensor(x.data * sig, parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (sig + x.data * sig * (1.0 - sig)))

    out._backward = _bwd
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0))

    out._backward = _bwd
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = sigmoid_values(x.data)
    out = Tensor(y, parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * y * (1.0 - y))

    out._backward = _bwd
    return out


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel spatial normalization (no affine terms)."""
    _require(x.data.ndim == 4, f"instance_norm input must be 4-d, got shape {x.shape}")
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x.data - mu) * inv
    out = Tensor(y, parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            gm = g.mean(axis=(2, 3), keepdims=True)
            gym = (g * y).mean(axis=(2, 3), keepdims=True)
            x.accumulate_grad(inv * (g - gm - y * gym))

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# structure


def concat_channels(*xs: Tensor) -> Tensor:
    """Concatenate along the channel axis; all inputs share N, H, W."""
    _require(len(xs) >= 1, "concat_channels needs at least one input")
    first = xs[0]
    for t in xs[1:]:
        _require(
            t.shape[0] == first.shape[0] and t.shape[2:] == first.shape[2:],
            f"concat_channels extent mismatch: {t.shape} vs {first.shape}",
        )
    out = Tensor(np.concatenate([t.data for t in xs], axis=1), parents=xs)
    splits = np.cumsum([t.shape[1] for t in xs])[:-1]

    def _bwd(g: np.ndarray) -> None:
        for t, piece in zip(xs, np.split(g, splits, axis=1)):
            if t.requires_grad:
                t.accumulate_grad(piece)

    out._backward = _bwd
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """(N,C,H,W) -> (N,C) spatial mean."""
    _require(x.data.ndim == 4, f"global_avg_pool input must be 4-d, got shape {x.shape}")
    n, c, h, w = x.shape
    out = Tensor(x.data.mean(axis=(2, 3)), parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g[:, :, None, None], (n, c, h, w)) / (h * w))

    out._backward = _bwd
    return out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """(N,F) @ (O,F).T + (O,) -> (N,O)."""
    _require(x.data.ndim == 2, f"linear input must be 2-d, got shape {x.shape}")
    _require(
        w.data.ndim == 2 and w.shape[1] == x.shape[1],
        f"linear weight shape {w.shape} incompatible with input {x.shape}",
    )
    out = Tensor(x.data @ w.data.T + b.data, parents=(x, w, b))

    def _bwd(g: np.ndarray) -> None:
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))
        if w.requires_grad:
            w.accumulate_grad(g.T @ x.data)
        if x.requires_grad:
            x.accumulate_grad(g @ w.data)

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# arithmetic and reductions


def add(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, parents=(a, b))

    def _bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    out._backward = _bwd
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"sub shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data, parents=(a, b))

    def _bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    out._backward = _bwd
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, parents=(a, b))

    def _bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    out._backward = _bwd
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c, parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * c)

    out._backward = _bwd
    return out


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    out = Tensor(np.asarray(x.data.mean()), parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g) / n))

    out._backward = _bwd
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum()), parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g)))

    out._backward = _bwd
    return out
