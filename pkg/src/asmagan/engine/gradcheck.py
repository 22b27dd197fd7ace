"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, track_branches


def _eval(f: Callable[[], Tensor]) -> tuple[float, list]:
    with track_branches() as log:
        v = float(f().data)
    return v, log


def numerical_grad(
    f: Callable[[], Tensor], t: Tensor, eps: float = 1e-5, indices=None, skip_kinks: bool = False
) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. entries of ``t.data``.

    ``indices`` restricts the probe to a subset of flat positions; the
    returned array holds the estimates for those positions only. With
    ``skip_kinks`` a probe whose two sides take different branches of a
    nonsmooth op (ReLU-like, abs, argmax) is returned as NaN.
    """
    flat = t.data.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.empty(len(idx), dtype=np.float64)
    for n, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + eps
        fp, bp = _eval(f)
        flat[i] = orig - eps
        fm, bm = _eval(f)
        flat[i] = orig
        out[n] = np.nan if skip_kinks and bp != bm else (fp - fm) / (2 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| / max(|a|, |n|, floor), elementwise then max."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


class GradCheckStats:
    """Worst error plus how many probes were dropped for straddling a kink."""

    def __init__(self) -> None:
        self.worst = 0.0
        self.probes = 0
        self.skipped = 0


def check_gradients(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    max_probes: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
    skip_kinks: bool = False,
    stats: GradCheckStats | None = None,
) -> float:
    """Worst relative error between backprop and finite differences.

    ``f`` must rebuild the graph on every call. With ``max_probes`` only that
    many randomly chosen entries of each input are probed. With
    ``skip_kinks`` probes straddling a branch point are replaced by other
    entries (sampled mode) or dropped (exhaustive mode). The denominator
    floor is scaled by ``max(1, |f|)`` so that structurally zero gradients
    are not judged against roundoff of a large loss.
    """
    stats = stats if stats is not None else GradCheckStats()
    for t in inputs:
        t.grad = None
    loss = f()
    floor = floor * max(1.0, abs(float(loss.data)))
    loss.backward()
    for t in inputs:
        analytic = t.grad.reshape(-1) if t.grad is not None else np.zeros(t.size)
        if max_probes is not None and t.size > max_probes:
            rng = rng or np.random.default_rng(0)
            order = rng.permutation(t.size)
            sel, num = [], []
            for i in order:
                v = numerical_grad(f, t, eps, [i], skip_kinks)[0]
                if np.isnan(v):
                    stats.skipped += 1
                    continue
                sel.append(analytic[i])
                num.append(v)
                if len(num) == max_probes:
                    break
            sel, numeric = np.array(sel), np.array(num)
        else:
            numeric = numerical_grad(f, t, eps, None, skip_kinks)
            ok = ~np.isnan(numeric)
            stats.skipped += int((~ok).sum())
            sel, numeric = analytic[ok], numeric[ok]
        stats.probes += len(numeric)
        stats.worst = max(stats.worst, relative_error(sel, numeric, floor))
    return stats.worst
