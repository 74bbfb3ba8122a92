"""Reverse-mode automatic differentiation over float64 numpy buffers.

The computation graph is implicit: every op returns a ``Tensor`` whose
parents are the op's inputs and whose creation order is already a valid
topological order. Backward functions are themselves written in terms of
the public ops, so gradients are ordinary graph nodes and can be
differentiated again (needed for the gradient penalty's second-order term
when ``grad(..., create_graph=True)`` is used).
"""
from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when an op's inputs violate its shape rule."""


_grad_enabled = True
_serial = itertools.count()


class no_grad:
    """Context manager that stops ops from recording parents/backward fns."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


class Tensor:
    """One node of the computation graph. Data is always float64."""

    __slots__ = ("data", "_parents", "_vjp", "_serial")

    def __init__(self, data, parents=(), vjp=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        if _grad_enabled and vjp is not None:
            self._parents: tuple[Tensor, ...] = tuple(parents)
            self._vjp: Callable | None = vjp
        else:
            self._parents = ()
            self._vjp = None
        self._serial = next(_serial)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, serial={self._serial})"

    # operator sugar
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _sum_to(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcast gradient back down to the original operand shape."""
    while g.data.ndim > len(shape):
        g = sum_axis(g, 0)
    for ax, n in enumerate(shape):
        if n == 1 and g.data.shape[ax] != 1:
            g = sum_axis(g, ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from e
    return Tensor(out_data, (a, b),
                  lambda g: (_sum_to(g, a.shape), _sum_to(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out_data = a.data - b.data
    except ValueError as e:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}") from e
    return Tensor(out_data, (a, b),
                  lambda g: (_sum_to(g, a.shape), _sum_to(mul(g, Tensor(-1.0)), b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out_data = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from e
    return Tensor(out_data, (a, b),
                  lambda g: (_sum_to(mul(g, b), a.shape), _sum_to(mul(g, a), b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    return Tensor(a.data @ b.data, (a, b),
                  lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d, got {a.shape}")
    return Tensor(a.data.T, (a,), lambda g: (transpose(g),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return Tensor(a.data.reshape(shape), (a,), lambda g: (reshape(g, old),))


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return Tensor(np.broadcast_to(a.data, shape).copy(), (a,),
                  lambda g: (_sum_to(g, old),))


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: empty input list")
    try:
        out_data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {[p.shape for p in parts]} on axis {axis}") from e
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(slice_axis(g, axis, offsets[i], offsets[i + 1])
                     for i in range(len(parts)))

    return Tensor(out_data, tuple(parts), vjp)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    n = a.data.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"slice: [{start}:{stop}] out of range for axis {axis} of {a.shape}")
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    out_data = a.data[tuple(index)].copy()

    def vjp(g):
        # embed the gradient in zeros via concat so the vjp stays differentiable
        pieces = []
        if start > 0:
            left_shape = list(a.shape)
            left_shape[axis] = start
            pieces.append(Tensor(np.zeros(left_shape)))
        pieces.append(g)
        if stop < n:
            right_shape = list(a.shape)
            right_shape[axis] = n - stop
            pieces.append(Tensor(np.zeros(right_shape)))
        return (concat(pieces, axis=axis) if len(pieces) > 1 else g,)

    return Tensor(out_data, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    if _grad_enabled:
        out._parents = (a,)
        out._vjp = lambda g: (mul(g, sub(Tensor(1.0), square(out))),)
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(out_data)
    if _grad_enabled:
        out._parents = (a,)
        out._vjp = lambda g: (mul(g, mul(out, sub(Tensor(1.0), out))),)
    return out


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))
    if _grad_enabled:
        out._parents = (a,)
        out._vjp = lambda g: (mul(g, out),)
    return out


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), (a,), lambda g: (mul(g, reciprocal(a)),))


def reciprocal(a: Tensor) -> Tensor:
    out = Tensor(1.0 / a.data)
    if _grad_enabled:
        out._parents = (a,)
        out._vjp = lambda g: (mul(g, mul(Tensor(-1.0), square(out))),)
    return out


def sqrt(a: Tensor) -> Tensor:
    out = Tensor(np.sqrt(a.data))
    if _grad_enabled:
        out._parents = (a,)
        out._vjp = lambda g: (mul(g, mul(Tensor(0.5), reciprocal(out))),)
    return out


def square(a: Tensor) -> Tensor:
    return Tensor(a.data * a.data, (a,),
                  lambda g: (mul(g, mul(Tensor(2.0), a)),))


def abs_(a: Tensor) -> Tensor:
    # subgradient at 0 is 0, via np.sign; the sign is a constant, so no
    # second-order flow through it (correct almost everywhere)
    return Tensor(np.abs(a.data), (a,),
                  lambda g: (mul(g, Tensor(np.sign(a.data))),))


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if not keepdims:
            kshape = list(shape)
            kshape[axis] = 1
            g = reshape(g, tuple(kshape))
        return (broadcast_to(g, shape),)

    return Tensor(out_data, (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return Tensor(a.data.sum(), (a,),
                  lambda g: (broadcast_to(g, shape),))


def mean(a: Tensor) -> Tensor:
    return mul(sum_all(a), Tensor(1.0 / a.data.size))


def mean_abs(a: Tensor) -> Tensor:
    """Mean of |a| over every element (batch and free dims alike)."""
    return mean(abs_(a))


def abs_sum(a: Tensor) -> Tensor:
    return sum_all(abs_(a))


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def grad(output: Tensor, wrt: Iterable[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Reverse-mode gradients of a scalar ``output`` w.r.t. each tensor in ``wrt``.

    Leaves not reachable from ``output`` get zero gradients. With
    ``create_graph=True`` the returned gradients are differentiable graph
    nodes themselves.
    """
    if output.data.size != 1:
        raise ShapeError(f"grad: output must be scalar, got shape {output.shape}")
    wrt = list(wrt)
    topo = _topo(output)
    grads: dict[int, Tensor] = {id(output): Tensor(np.ones(output.shape))}

    def run():
        for node in reversed(topo):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            for p, pg in zip(node._parents, node._vjp(g)):
                if pg is None:
                    continue
                acc = grads.get(id(p))
                grads[id(p)] = pg if acc is None else add(acc, pg)

    if create_graph:
        run()
    else:
        with no_grad():
            run()

    out = []
    for w in wrt:
        g = grads.get(id(w))
        out.append(g if g is not None else Tensor(np.zeros(w.shape)))
    return out
