"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough ops for this model family: dense/sparse matrix products,
elementwise arithmetic with broadcasting, the activations we use, row
gathering with scatter-add backward, concatenation, and reductions.
Values are kept in float64 so analytic gradients can be validated against
central finite differences.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad=False, parents=(), backward=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += grad

    def backward(self):
        if self.value.ndim != 0:
            raise ValueError("backward() requires a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.value + b.value, parents=(a, b))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad, b.shape))

    out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.value - b.value, parents=(a, b))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-grad, b.shape))

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.value * b.value, parents=(a, b))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad * a.value, b.shape))

    out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.value @ b.value, parents=(a, b))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ grad)

    out._backward = backward
    return out


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.value.T, parents=(a,))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad.T)

    out._backward = backward
    return out


def spmm(matrix: sp.spmatrix, x: Tensor) -> Tensor:
    """Sparse-constant @ dense-tensor product."""
    out = Tensor(matrix @ x.value, parents=(x,))

    def backward(grad):
        if x.requires_grad:
            x._accumulate(matrix.T @ grad)

    out._backward = backward
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.value, 0.0), parents=(a,))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad * (a.value > 0))

    out._backward = backward
    return out


def leaky_relu(a: Tensor, alpha: float) -> Tensor:
    out = Tensor(np.where(a.value > 0, a.value, alpha * a.value), parents=(a,))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad * np.where(a.value > 0, 1.0, alpha))

    out._backward = backward
    return out


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.value)
    out = Tensor(value, parents=(a,))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad * (1.0 - value * value))

    out._backward = backward
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    value = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(value, parents=(a,))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad * value * (1.0 - value))

    out._backward = backward
    return out


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), overflow-safe; gradient is sigmoid(x)."""
    out = Tensor(np.logaddexp(0.0, a.value), parents=(a,))

    def backward(grad):
        if a.requires_grad:
            x = a.value
            s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                         np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
            a._accumulate(grad * s)

    out._backward = backward
    return out


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx)
    out = Tensor(a.value[idx], parents=(a,))

    def backward(grad):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            np.add.at(a.grad, idx, grad)

    out._backward = backward
    return out


def reduce_sum(a: Tensor, axis=None) -> Tensor:
    out = Tensor(a.value.sum(axis=axis), parents=(a,))

    def backward(grad):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.broadcast_to(grad, a.shape).copy())
            else:
                a._accumulate(np.broadcast_to(np.expand_dims(grad, axis), a.shape).copy())

    out._backward = backward
    return out


def concat(tensors: list, axis: int = 1) -> Tensor:
    out = Tensor(np.concatenate([t.value for t in tensors], axis=axis),
                 parents=tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t._accumulate(np.take(grad, range(lo, hi), axis=axis))

    out._backward = backward
    return out


def mean_of(tensors: list) -> Tensor:
    """Elementwise mean of same-shape tensors (layer aggregation)."""
    acc = tensors[0]
    for t in tensors[1:]:
        acc = add(acc, t)
    return mul(acc, 1.0 / len(tensors))


def dropout(a: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p) at train time."""
    if not training or p <= 0.0:
        return a
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return mul(a, constant(mask))


def sum_squares(tensors: list) -> Tensor:
    """Sum of squared entries over a parameter list (L2 penalty body)."""
    total = None
    for t in tensors:
        term = reduce_sum(mul(t, t))
        total = term if total is None else add(total, term)
    return total
