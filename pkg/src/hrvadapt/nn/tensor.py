"""A small reverse-mode automatic differentiation core over float64 numpy
arrays.

Every operation records a closure that routes the output gradient to its
inputs; ``Tensor.backward`` replays them in reverse topological order.  The
op set is exactly what the models in this package need (affine maps,
gate nonlinearities, 1-D convolution, reductions, slicing, concatenation);
it is not a general-purpose autodiff layer.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from ..errors import ShapeError, StateError

TensorLike = "Tensor | np.ndarray | float"


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape the operand had before broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_grad_owned")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._grad_owned = False

    # -- graph plumbing ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def _needs_graph(self) -> bool:
        return self.requires_grad or self._backward is not None

    def _accum(self, g: np.ndarray) -> None:
        if not self._needs_graph():
            return
        if self.grad is None:
            # may be a view (e.g. broadcast_to); never mutated while unowned
            self.grad = g
            self._grad_owned = False
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def _accum_at(self, idx, g: np.ndarray) -> None:
        """Scatter-accumulate into one region of the gradient, touching only
        that region (keeps per-step slicing linear instead of quadratic)."""
        if not self._needs_graph():
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
            self._grad_owned = True
        elif not self._grad_owned:
            self.grad = self.grad.copy()
            self._grad_owned = True
        self.grad[idx] += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate gradients from this tensor to every reachable leaf.

        A scalar seeds itself with 1; non-scalars need an explicit output
        gradient.  Calling this on a tensor with no recorded graph is a
        state error (nothing was computed to differentiate through).
        """
        if self._backward is None and not self.requires_grad:
            raise StateError("backward called without a recorded forward graph")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("non-scalar backward requires an explicit gradient")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ShapeError(
                    f"gradient shape {grad.shape} does not match tensor shape {self.data.shape}"
                )

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operations ----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._accum(_unbroadcast(g, a.data.shape))
            b._accum(_unbroadcast(g, b.data.shape))

        return _node(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self

        def bw(g):
            a._accum(-g)

        return _node(-a.data, (a,), bw)

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._accum(_unbroadcast(g * b.data, a.data.shape))
            b._accum(_unbroadcast(g * a.data, b.data.shape))

        return _node(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise ShapeError("tensor/tensor division is not part of this op set")
        return self * (1.0 / float(other))

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2:
            raise ShapeError("matmul expects 2-D operands")
        if a.data.shape[1] != b.data.shape[0]:
            raise ShapeError(f"matmul mismatch: {a.data.shape} @ {b.data.shape}")

        def bw(g):
            a._accum(g @ b.data.T)
            b._accum(a.data.T @ g)

        return _node(a.data @ b.data, (a, b), bw)

    def relu(self) -> "Tensor":
        a = self
        keep = a.data > 0

        def bw(g):
            a._accum(g * keep)

        return _node(np.where(keep, a.data, 0.0), (a,), bw)

    def sigmoid(self) -> "Tensor":
        a = self
        s = expit(a.data)

        def bw(g):
            a._accum(g * s * (1.0 - s))

        return _node(s, (a,), bw)

    def tanh(self) -> "Tensor":
        a = self
        t = np.tanh(a.data)

        def bw(g):
            a._accum(g * (1.0 - t * t))

        return _node(t, (a,), bw)

    def softplus(self) -> "Tensor":
        a = self

        def bw(g):
            a._accum(g * expit(a.data))

        return _node(np.logaddexp(0.0, a.data), (a,), bw)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            if axis is None:
                a._accum(np.broadcast_to(g, a.data.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accum(np.broadcast_to(gg, a.data.shape))

        return _node(out, (a,), bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        def bw(g):
            a._accum(g.reshape(a.data.shape))

        return _node(a.data.reshape(shape), (a,), bw)

    def __getitem__(self, idx) -> "Tensor":
        """Basic (non-repeating) indexing only; gradients scatter back."""
        a = self

        def bw(g):
            a._accum_at(idx, g)

        return _node(a.data[idx], (a,), bw)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p._needs_graph() for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accum(piece)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        for i, t in enumerate(tensors):
            t._accum(np.take(g, i, axis=axis))

    return _node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """1-D convolution: x [batch, length, in_ch], w [out_ch, in_ch, kernel],
    b [out_ch] -> [batch, out_length, out_ch]."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError("conv1d expects x [B, L, C] and w [O, C, K]")
    batch, length, in_ch = x.data.shape
    out_ch, w_in, kernel = w.data.shape
    if w_in != in_ch:
        raise ShapeError(f"conv1d channel mismatch: input {in_ch}, weight {w_in}")
    if length < kernel:
        raise ShapeError(f"conv1d input length {length} shorter than kernel {kernel}")
    if stride < 1:
        raise ShapeError("conv1d stride must be >= 1")

    windows = np.lib.stride_tricks.sliding_window_view(x.data, kernel, axis=1)[:, ::stride]
    out = np.einsum("blck,ock->blo", windows, w.data, optimize=True) + b.data
    out_len = out.shape[1]

    def bw(g):
        w._accum(np.einsum("blo,blck->ock", g, windows, optimize=True))
        b._accum(g.sum(axis=(0, 1)))
        if x._needs_graph():
            gx = np.zeros_like(x.data)
            pos = stride * np.arange(out_len)
            for k in range(kernel):
                gx[:, pos + k, :] += np.einsum("blo,oc->blc", g, w.data[:, :, k], optimize=True)
            x._accum(gx)

    return _node(out, (x, w, b), bw)
