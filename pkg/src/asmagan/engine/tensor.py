"""Dense tensor with reverse-mode automatic differentiation.

Every differentiable operation creates a new :class:`Tensor` that records its
parents and a gradient rule. :meth:`Tensor.backward` walks the recorded nodes
in exact reverse creation order.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GraphError",
    "no_grad",
    "is_grad_enabled",
    "precision",
    "get_default_dtype",
    "set_default_dtype",
    "tensor",
    "as_tensor",
    "track_branches",
    "record_branch",
]


class GraphError(RuntimeError):
    """Raised for misuse of the differentiation graph."""


_grad_enabled = True
_default_dtype = np.dtype(np.float32)
_counter = itertools.count()

VERIFY = np.dtype(np.float64)
TRAIN = np.dtype(np.float32)


_branch_log: list | None = None


@contextlib.contextmanager
def track_branches() -> Iterator[list]:
    """Collect fingerprints of the branch taken by every nonsmooth op.

    Two evaluations with equal fingerprints lie on the same smooth piece,
    which is what a finite-difference probe needs.
    """
    global _branch_log
    prev = _branch_log
    _branch_log = []
    try:
        yield _branch_log
    finally:
        _branch_log = prev


def record_branch(pattern: np.ndarray) -> None:
    if _branch_log is not None:
        _branch_log.append(np.packbits(np.asarray(pattern, dtype=bool)).tobytes()
                           if pattern.dtype == bool else np.asarray(pattern).tobytes())


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def get_default_dtype() -> np.dtype:
    return _default_dtype


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (VERIFY, TRAIN):
        raise ValueError(f"unsupported precision {dtype}; use float32 or float64")
    _default_dtype = dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default dtype ("float64" verification, "float32" training)."""
    prev = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Real array of rank 0..4 carrying an optional gradient.

    ``data`` is a contiguous numpy array; ``grad`` is populated by
    :meth:`backward` for leaves with ``requires_grad=True``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_id", "_freed", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(_default_dtype)
        if arr.ndim > 4:
            raise ValueError(f"tensors are limited to rank 4, got shape {arr.shape}")
        self.data = arr if arr.flags.c_contiguous else arr.copy()  # keeps rank 0
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._id = next(_counter)
        self._freed = False
        self.name = name

    # construction -----------------------------------------------------------

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._id = next(_counter)
        out._freed = False
        out.name = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # differentiation --------------------------------------------------------

    def backward(self) -> None:
        """Populate ``.grad`` of every reachable leaf with ``requires_grad``.

        The loss must be a scalar. The graph is released afterwards, so a
        second call on the same loss raises :class:`GraphError`.
        """
        if self.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {self.shape}")
        if self._freed:
            raise GraphError("graph already consumed by a previous backward(); rebuild the forward pass")
        if not self.requires_grad:
            raise GraphError("loss is detached from every parameter (no requires_grad leaves)")

        nodes: dict[int, Tensor] = {}
        stack = [self]
        while stack:
            t = stack.pop()
            if t._id in nodes:
                continue
            nodes[t._id] = t
            stack.extend(p for p in t._parents if p.requires_grad)

        grads: dict[int, np.ndarray] = {self._id: np.ones_like(self.data)}
        for nid in sorted(nodes, reverse=True):
            t = nodes[nid]
            g = grads.pop(nid, None)
            if g is None:
                continue
            if t._backward is None:
                t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            parent_grads = t._backward(g)
            for p, pg in zip(t._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if p._id in grads:
                    grads[p._id] = grads[p._id] + pg
                else:
                    grads[p._id] = pg
        for t in nodes.values():
            if t._backward is not None:
                t._backward = None
                t._parents = ()
                t._freed = True

    # elementwise arithmetic -------------------------------------------------

    def __add__(self, other) -> "Tensor":
        o = as_tensor(other, self.dtype)
        sa, sb = self.shape, o.shape

        def bw(g):
            return _unbroadcast(g, sa), _unbroadcast(g, sb)

        return Tensor._make(self.data + o.data, (self, o), bw)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        o = as_tensor(other, self.dtype)
        sa, sb = self.shape, o.shape

        def bw(g):
            return _unbroadcast(g, sa), _unbroadcast(-g, sb)

        return Tensor._make(self.data - o.data, (self, o), bw)

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other, self.dtype) - self

    def __mul__(self, other) -> "Tensor":
        o = as_tensor(other, self.dtype)
        a, b = self.data, o.data

        def bw(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._make(a * b, (self, o), bw)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        o = as_tensor(other, self.dtype)
        a, b = self.data, o.data

        def bw(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor._make(a / b, (self, o), bw)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other, self.dtype) / self

    def __pow__(self, p: float) -> "Tensor":
        a = self.data
        return Tensor._make(a**p, (self,), lambda g: (g * p * a ** (p - 1),))

    def __matmul__(self, other) -> "Tensor":
        o = as_tensor(other, self.dtype)
        a, b = self.data, o.data
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")

        def bw(g):
            return g @ b.T, a.T @ g

        return Tensor._make(a @ b, (self, o), bw)

    def abs(self) -> "Tensor":
        a = self.data
        record_branch(a > 0)
        return Tensor._make(np.abs(a), (self,), lambda g: (g * np.sign(a),))

    def exp(self) -> "Tensor":
        e = np.exp(self.data)
        return Tensor._make(e, (self,), lambda g: (g * e,))

    # reductions and shape ---------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        return Tensor._make(
            np.array(self.data.transpose(axes), order="C"), (self,), lambda g: (g.transpose(inv),)
        )

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, idx) -> "Tensor":
        shape, dtype = self.shape, self.dtype

        def bw(g):
            full = np.zeros(shape, dtype=dtype)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(np.array(self.data[idx], order="C"), (self,), bw)


def tensor(data, requires_grad: bool = False, dtype=None, name: str | None = None) -> Tensor:
    """Create a leaf tensor in the default (or given) dtype."""
    return Tensor(np.array(data, dtype=dtype or _default_dtype), requires_grad=requires_grad, name=name)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or _default_dtype))
