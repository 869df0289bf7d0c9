"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps a float32 or float64 ndarray (rank >= 1; scalars are shape
(1,)) and records the primitive that produced it. Calling backward() on a
scalar root walks the recorded graph once in reverse topological order and
accumulates gradients into every leaf created with requires_grad=True.

Tensors are immutable values: no primitive writes into an existing array,
so graphs may share nodes freely and identical inputs always produce
identical results.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float64 if arr.dtype == np.float64 else np.float32)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over the axes that numpy broadcasting expanded."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Optional[Callable] = None

    # ------------------------------------------------------------------
    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"],
                backward_fn: Callable) -> "Tensor":
        """Create a graph node. backward_fn(out_grad) returns one gradient
        array (or None) per parent."""
        out = cls.__new__(cls)
        out.data = data if data.ndim else data.reshape(1)
        out.grad = None
        out.name = None
        out._parents = tuple(parents)
        out.requires_grad = any(p.requires_grad for p in out._parents)
        out._backward_fn = backward_fn if out.requires_grad else None
        if not out.requires_grad:
            out._parents = ()
        return out

    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # ------------------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        self must hold exactly one element.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar root, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and (p.requires_grad or p._parents):
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward_fn is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward_fn(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # ------------------------------------------------------------------
    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Tensor):
            if other.dtype != self.dtype:
                raise TypeError(
                    f"dtype mismatch: {self.dtype} vs {other.dtype}")
            return other
        return None

    def __add__(self, other):
        rhs = self._coerce(other)
        if rhs is None:
            data = self.data + np.asarray(other, dtype=self.dtype)
            return Tensor.from_op(data, (self,),
                                  lambda g: (unbroadcast(g, self.shape),))
        data = self.data + rhs.data
        return Tensor.from_op(
            data, (self, rhs),
            lambda g: (unbroadcast(g, self.shape), unbroadcast(g, rhs.shape)))

    __radd__ = __add__

    def __neg__(self):
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        rhs = self._coerce(other)
        if rhs is None:
            data = self.data - np.asarray(other, dtype=self.dtype)
            return Tensor.from_op(data, (self,),
                                  lambda g: (unbroadcast(g, self.shape),))
        data = self.data - rhs.data
        return Tensor.from_op(
            data, (self, rhs),
            lambda g: (unbroadcast(g, self.shape), unbroadcast(-g, rhs.shape)))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        rhs = self._coerce(other)
        if rhs is None:
            c = np.asarray(other, dtype=self.dtype)
            return Tensor.from_op(self.data * c, (self,),
                                  lambda g: (unbroadcast(g * c, self.shape),))
        data = self.data * rhs.data
        a, b = self.data, rhs.data
        return Tensor.from_op(
            data, (self, rhs),
            lambda g: (unbroadcast(g * b, self.shape),
                       unbroadcast(g * a, rhs.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        rhs = self._coerce(other)
        if rhs is None:
            return self * (1.0 / float(other))
        data = self.data / rhs.data
        a, b = self.data, rhs.data
        return Tensor.from_op(
            data, (self, rhs),
            lambda g: (unbroadcast(g / b, self.shape),
                       unbroadcast(-g * a / (b * b), rhs.shape)))

    def __rtruediv__(self, other):
        return (self ** -1.0) * other

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        e = float(exponent)
        data = self.data ** e
        x = self.data
        return Tensor.from_op(data, (self,),
                              lambda g: (g * e * x ** (e - 1.0),))

    def __matmul__(self, other):
        rhs = self._coerce(other)
        if rhs is None:
            raise TypeError("matmul requires a Tensor operand")
        a, b = self.data, rhs.data
        data = np.matmul(a, b)

        def backward(g):
            ga = gb = None
            if self.requires_grad:
                ga = unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
            if rhs.requires_grad:
                gb = unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
            return ga, gb

        return Tensor.from_op(data, (self, rhs), backward)

    # ------------------------------------------------------------------
    # reductions and shape ops
    def sum(self, axis=None, keepdims: bool = False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g.reshape((1,) * len(shape)), shape).copy(),)
            if not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                axes = tuple(a % len(shape) for a in axes)
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(_as_array(data), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        data = self.data.reshape(shape)
        src = self.shape
        return Tensor.from_op(data, (self,), lambda g: (g.reshape(src),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        data = self.data.transpose(axes)
        return Tensor.from_op(data, (self,), lambda g: (g.transpose(inv),))

    def swapaxes(self, a: int, b: int):
        data = self.data.swapaxes(a, b)
        return Tensor.from_op(data, (self,), lambda g: (g.swapaxes(a, b),))

    def __getitem__(self, idx):
        data = self.data[idx]
        if np.isscalar(data) or data.ndim == 0:
            data = np.asarray(data).reshape(1)

            def backward(g):
                full = np.zeros_like(self.data)
                full[idx] = g.reshape(())
                return (full,)
        else:
            def backward(g):
                full = np.zeros_like(self.data)
                full[idx] = g
                return (full,)

        return Tensor.from_op(data, (self,), backward)

    # elementwise helpers used across the package
    def exp(self):
        data = np.exp(self.data)
        return Tensor.from_op(data, (self,), lambda g: (g * data,))

    def log(self):
        x = self.data
        return Tensor.from_op(np.log(x), (self,), lambda g: (g / x,))

    def sqrt(self):
        data = np.sqrt(self.data)
        return Tensor.from_op(data, (self,), lambda g: (g * 0.5 / data,))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along axis, splitting gradients back on backward."""
    tensors = list(tensors)
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise TypeError(f"dtype mismatch in concat: {sorted(map(str, dtypes))}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(data, tensors, backward)


def where(cond: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise select by a constant boolean mask: cond ? a : b."""
    if a.dtype != b.dtype:
        raise TypeError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    cond = np.asarray(cond, dtype=bool)
    data = np.where(cond, a.data, b.data)

    def backward(g):
        return (unbroadcast(np.where(cond, g, 0.0), a.shape),
                unbroadcast(np.where(cond, 0.0, g), b.shape))

    return Tensor.from_op(data, (a, b), backward)
