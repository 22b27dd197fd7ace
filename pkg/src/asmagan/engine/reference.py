"""Loop-based reference kernels.

These are deliberately naive and only used as correctness oracles for the
vectorized kernels in :mod:`asmagan.engine.functional`.
"""

import numpy as np


def conv2d_naive(x, w, b=None, stride=1, padding=0, pad_mode="zero"):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    if padding:
        mode = "reflect" if pad_mode == "reflect" else "constant"
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), mode=mode)
    hp, wp = x.shape[2:]
    ho, wo = (hp - k) // stride + 1, (wp - k) // stride + 1
    out = np.zeros((n, o, ho, wo), dtype=x.dtype)
    for ni in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = x[ni, :, i * stride : i * stride + k, j * stride : j * stride + k]
                    out[ni, oi, i, j] = np.sum(patch * w[oi])
            if b is not None:
                out[ni, oi] += b[oi]
    return out


def conv2d_transposed_naive(x, w, b=None, stride=1, padding=0):
    n, c, h, wd = x.shape
    _, o, k, _ = w.shape
    full = np.zeros((n, o, (h - 1) * stride + k, (wd - 1) * stride + k), dtype=x.dtype)
    for ni in range(n):
        for ci in range(c):
            for i in range(h):
                for j in range(wd):
                    full[ni, :, i * stride : i * stride + k, j * stride : j * stride + k] += x[ni, ci, i, j] * w[ci]
    hf, wf = full.shape[2:]
    out = full[:, :, padding : hf - padding, padding : wf - padding]
    if b is not None:
        out = out + b[None, :, None, None]
    return out
