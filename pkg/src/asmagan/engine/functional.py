"""Layer primitives: convolution, normalization, activations, pooling.

Convolution gathers patches im2col-style with ``sliding_window_view`` and
scatters gradients back with one strided add per kernel offset. Slow
loop-based references live in :mod:`asmagan.engine.reference`.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .labels import StyleLabel
from .tensor import Tensor, as_tensor, record_branch

__all__ = [
    "DimensionError",
    "ConfigurationError",
    "pad2d",
    "conv2d",
    "conv2d_transposed",
    "instance_norm",
    "cond_instance_norm",
    "take_row",
    "leaky_relu",
    "relu",
    "tanh",
    "sigmoid",
    "upsample_nearest",
    "avg_pool",
    "global_avg_pool",
    "concat_channels",
    "broadcast_label",
    "channel_mean",
    "channel_max",
    "linear",
    "cross_entropy",
    "spectral_divide",
]


class DimensionError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigurationError(ValueError):
    """Operation parameters are invalid for the given input."""


# padding ---------------------------------------------------------------------


def _reflect_adjoint(g: np.ndarray, p: int, axis: int) -> np.ndarray:
    """Fold the gradient of a reflect-padded axis back onto the source."""
    n = g.shape[axis] - 2 * p
    core = np.take(g, np.arange(p, p + n), axis=axis).copy()
    for i in range(p):
        src_l = p - i
        src_r = n - 2 - i
        left = np.take(g, [i], axis=axis)
        right = np.take(g, [p + n + i], axis=axis)
        idx = [slice(None)] * g.ndim
        idx[axis] = slice(src_l, src_l + 1)
        core[tuple(idx)] += left
        idx[axis] = slice(src_r, src_r + 1)
        core[tuple(idx)] += right
    return core


def _pad_array(x: np.ndarray, p: int, mode: str) -> np.ndarray:
    if p == 0:
        return x
    width = ((0, 0), (0, 0), (p, p), (p, p))
    if mode == "reflect":
        return np.pad(x, width, mode="reflect")
    return np.pad(x, width, mode="constant")


def _unpad_grad(g: np.ndarray, p: int, mode: str) -> np.ndarray:
    if p == 0:
        return g
    if mode == "reflect":
        return _reflect_adjoint(_reflect_adjoint(g, p, 2), p, 3)
    return g[:, :, p:-p, p:-p]


def _check_pad(x_shape: tuple, p: int, mode: str) -> None:
    if mode not in ("reflect", "zero"):
        raise ConfigurationError(f"pad_mode must be 'reflect' or 'zero', got {mode!r}")
    if mode == "reflect" and p > 0 and (p >= x_shape[2] or p >= x_shape[3]):
        raise ConfigurationError(
            f"reflect padding {p} needs spatial dims > {p}, got {x_shape[2]}x{x_shape[3]}"
        )


def pad2d(x: Tensor, p: int, mode: str = "zero") -> Tensor:
    _check_pad(x.shape, p, mode)
    return Tensor._make(_pad_array(x.data, p, mode), (x,), lambda g: (_unpad_grad(g, p, mode),))


# convolution -----------------------------------------------------------------


def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # (N, C, Ho, Wo, k, k) view, strided
    v = sliding_window_view(xp, (k, k), axis=(2, 3))
    return v[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def _scatter_windows(cols: np.ndarray, out_shape: tuple, k: int, stride: int) -> np.ndarray:
    """Adjoint of :func:`_windows`: cols (N,C,Ho,Wo,k,k) summed into out_shape."""
    out = np.zeros(out_shape, dtype=cols.dtype)
    ho, wo = cols.shape[2], cols.shape[3]
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += cols[
                :, :, :, :, i, j
            ]
    return out


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    pad_mode: str = "zero",
) -> Tensor:
    """2-D cross-correlation of NCHW input with an (O, C, k, k) weight."""
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects NCHW input and OIkk weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2:
        raise DimensionError(f"weight {weight.shape} does not match input channels {c}")
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"bias shape {bias.shape} != ({o},)")
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    _check_pad(x.shape, padding, pad_mode)
    hp, wp = h + 2 * padding, w + 2 * padding
    if hp < k or wp < k:
        raise DimensionError(f"padded input {hp}x{wp} smaller than kernel {k}")
    ho, wo = (hp - k) // stride + 1, (wp - k) // stride + 1

    xp = _pad_array(x.data, padding, pad_mode)
    cols = _windows(xp, k, stride, ho, wo).transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    wm = weight.data.reshape(o, c * k * k)
    out = cols @ wm.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wm).reshape(n, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
            gx = _unpad_grad(_scatter_windows(dcols, (n, c, hp, wp), k, stride), padding, pad_mode)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor._make(out, parents, bw)


def conv2d_transposed(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Transposed convolution with an (C_in, C_out, k, k) weight.

    Equals the input-gradient of :func:`conv2d` (zero padding) for the same
    weight array, stride and padding.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d_transposed expects NCHW input, got {x.shape}, {weight.shape}")
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    n, c, h, w = x.shape
    ci, o, k, k2 = weight.shape
    if ci != c or k != k2:
        raise DimensionError(f"weight {weight.shape} does not match input channels {c}")
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"bias shape {bias.shape} != ({o},)")
    full_h, full_w = (h - 1) * stride + k, (w - 1) * stride + k
    ho, wo = full_h - 2 * padding, full_w - 2 * padding
    if ho <= 0 or wo <= 0:
        raise DimensionError(f"transposed conv output would be {ho}x{wo}")

    xm = x.data.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    wm = weight.data.reshape(c, o * k * k)
    cols = (xm @ wm).reshape(n, h, w, o, k, k).transpose(0, 3, 1, 2, 4, 5)
    full = _scatter_windows(cols, (n, o, full_h, full_w), k, stride)
    out = full[:, :, padding : padding + ho, padding : padding + wo]
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def bw(g):
        gfull = np.zeros((n, o, full_h, full_w), dtype=g.dtype)
        gfull[:, :, padding : padding + ho, padding : padding + wo] = g
        dcols = _windows(gfull, k, stride, h, w).transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, o * k * k)
        gx = (dcols @ wm.T).reshape(n, h, w, c).transpose(0, 3, 1, 2) if x.requires_grad else None
        gw = (xm.T @ dcols).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor._make(out, parents, bw)


# normalization ---------------------------------------------------------------


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(n, c) normalization with biased variance, then affine ``gamma``/``beta``.

    ``gamma`` and ``beta`` have shape (C,) or, for per-sample affine
    parameters, (N, C).
    """
    if x.ndim != 4:
        raise DimensionError(f"instance_norm expects NCHW, got {x.shape}")
    n, c, h, w = x.shape
    if h * w < 2:
        raise DimensionError("instance_norm needs H*W >= 2 (degenerate statistics)")
    if gamma.shape not in ((c,), (n, c)) or beta.shape != gamma.shape:
        raise DimensionError(f"affine shapes {gamma.shape}/{beta.shape} do not match C={c}")
    a = x.data
    mu = a.mean(axis=(2, 3), keepdims=True)
    xc = a - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gshape = (1, c, 1, 1) if gamma.ndim == 1 else (n, c, 1, 1)
    gm = gamma.data.reshape(gshape)
    out = gm * xhat + beta.data.reshape(gshape)

    def bw(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gm
            m1 = dxhat.mean(axis=(2, 3), keepdims=True)
            m2 = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
            gx = inv * (dxhat - m1 - xhat * m2)
        red = (0, 2, 3) if gamma.ndim == 1 else (2, 3)
        gg = (g * xhat).sum(axis=red)
        gb = g.sum(axis=red)
        return gx, gg, gb

    return Tensor._make(out, (x, gamma, beta), bw)


def take_row(table: Tensor, index: int) -> Tensor:
    """Select row ``index`` of a 2-D table; only that row receives gradient."""
    shape = table.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return Tensor._make(table.data[index].copy(), (table,), bw)


def cond_instance_norm(
    x: Tensor, gammas: Tensor, betas: Tensor, label: StyleLabel, eps: float = 1e-5
) -> Tensor:
    """Instance norm whose affine parameters are row ``label`` of K x C tables."""
    k = gammas.shape[0]
    if label.num_styles != k or not 0 <= label.index < k:
        raise ConfigurationError(f"label {label.index} out of range for {k} styles")
    return instance_norm(x, take_row(gammas, label.index), take_row(betas, label.index), eps)


# activations -----------------------------------------------------------------


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    a = x.data
    pos = a > 0
    record_branch(pos)
    out = np.where(pos, a, a * slope)
    return Tensor._make(out, (x,), lambda g: (np.where(pos, g, g * slope),))


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return Tensor._make(t, (x,), lambda g: (g * (1.0 - t * t),))


def sigmoid(x: Tensor) -> Tensor:
    # tanh form saturates to exactly 0/1 without overflow
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor._make(s, (x,), lambda g: (g * s * (1.0 - s),))


# resampling and pooling ------------------------------------------------------


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ConfigurationError("upsample factor must be >= 1")
    if factor == 1:
        return x
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)
    return Tensor._make(
        out, (x,), lambda g: (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)
    )


def avg_pool(x: Tensor, kernel: int, stride: int | None = None) -> Tensor:
    stride = stride or kernel
    n, c, h, w = x.shape
    if kernel > h or kernel > w:
        raise DimensionError(f"pool kernel {kernel} larger than input {h}x{w}")
    ho, wo = (h - kernel) // stride + 1, (w - kernel) // stride + 1
    out = _windows(x.data, kernel, stride, ho, wo).mean(axis=(4, 5))
    scale = 1.0 / (kernel * kernel)

    def bw(g):
        cols = np.broadcast_to((g * scale)[..., None, None], (n, c, ho, wo, kernel, kernel))
        return (_scatter_windows(cols, (n, c, h, w), kernel, stride),)

    return Tensor._make(np.ascontiguousarray(out), (x,), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C) spatial mean."""
    return x.mean(axis=(2, 3))


def channel_mean(x: Tensor) -> Tensor:
    return x.mean(axis=1, keepdims=True)


def channel_max(x: Tensor) -> Tensor:
    """Max over channels, keepdims; ties route gradient to the first maximum."""
    a = x.data
    idx = a.argmax(axis=1)[:, None]
    record_branch(idx)
    out = np.take_along_axis(a, idx, axis=1)

    def bw(g):
        full = np.zeros_like(a)
        np.put_along_axis(full, idx, g, axis=1)
        return (full,)

    return Tensor._make(out, (x,), bw)


# channel plumbing ------------------------------------------------------------


def concat_channels(*xs: Tensor) -> Tensor:
    if len(xs) == 1 and isinstance(xs[0], (list, tuple)):
        xs = tuple(xs[0])
    ref = xs[0].shape
    for t in xs[1:]:
        if t.ndim != 4 or t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise DimensionError(f"cannot concat {t.shape} with {ref} along channels")
    splits = np.cumsum([t.shape[1] for t in xs])[:-1]
    out = np.concatenate([t.data for t in xs], axis=1)
    return Tensor._make(out, xs, lambda g: tuple(np.split(g, splits, axis=1)))


def broadcast_label(label: StyleLabel, h: int, w: int, batch: int | None = None, dtype=None) -> Tensor:
    """Constant label maps: channel ``label.index`` is 1, the rest 0.

    Returns (K, h, w), or (batch, K, h, w) when ``batch`` is given.
    """
    maps = np.zeros((label.num_styles, h, w), dtype=dtype or np.float32)
    maps[label.index] = 1.0
    if batch is not None:
        maps = np.broadcast_to(maps, (batch,) + maps.shape).copy()
    return Tensor(maps)


# dense -----------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """(N, in) x (out, in) -> (N, out)."""
    out = x @ weight.T
    return out + bias if bias is not None else out


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of (N, K) logits against integer targets."""
    z = logits.data
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = z.shape[0]
    targets = np.asarray(targets)
    loss = -logp[np.arange(n), targets].mean()

    def bw(g):
        p = np.exp(logp)
        p[np.arange(n), targets] -= 1.0
        return (p * (g / n),)

    return Tensor._make(np.asarray(loss, dtype=z.dtype), (logits,), bw)


def spectral_divide(weight: Tensor, u: np.ndarray, eps: float = 1e-12) -> tuple[Tensor, float]:
    """Return ``weight / sigma`` with sigma = uᵀ W v, v = normalize(Wᵀu).

    ``weight`` is viewed as a matrix (out, rest). Since sigma equals
    ‖Wᵀu‖ for that v, its gradient is exactly u vᵀ with u held fixed.
    """
    wm = weight.data.reshape(weight.shape[0], -1)
    wtu = wm.T @ u
    norm = float(np.linalg.norm(wtu))
    sigma = max(norm, eps)
    v = wtu / sigma
    out = weight.data / sigma

    def bw(g):
        gm = g.reshape(wm.shape)
        inner = float((gm * wm).sum())
        return ((gm / sigma - (inner / sigma**2) * np.outer(u, v)).reshape(weight.shape),)

    return Tensor._make(out, (weight,), bw), sigma
