"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 array and records the operations applied to
it; ``backward()`` on a scalar root replays the tape in reverse and
accumulates gradients into every leaf created with ``requires_grad``.
Graphs are built fresh per evaluation and thrown away afterwards.

Only the primitives needed by the model are implemented: elementwise
arithmetic with numpy broadcasting, exp/log/tanh/sqrt/power, reductions,
matmul, basic reshaping, and two composite positive-definite ops
(``posdef_solve`` and the zero-mean Gaussian log-density) whose forward
passes run through the jittered Cholesky in :mod:`pidkl.linalg`.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

from .. import linalg
from ..errors import DimensionMismatch, UnsupportedPrimitive

_SCALAR_TYPES = (int, float, np.integer, np.floating)
_COERCIBLE = (np.ndarray,) + _SCALAR_TYPES

# Inputs to sqrt are floored here so that posterior standard deviations
# stay differentiable when the variance collapses numerically.
SQRT_FLOOR = 1e-10


class Tensor:
    """Node in the reverse-mode tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # Keep numpy from consuming Tensors elementwise; reflected operators
    # dispatch here instead.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- construction -----------------------------------------------------

    @staticmethod
    def leaf(data) -> "Tensor":
        return Tensor(data, requires_grad=True)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __float__(self):
        raise UnsupportedPrimitive(
            "Tensor cannot be coerced to float inside a recorded computation"
        )

    def __bool__(self):
        raise UnsupportedPrimitive("Tensor has no truth value")

    # -- graph plumbing ----------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        """Reverse sweep from a scalar root; fills ``grad`` on leaves."""
        if self.data.size != 1:
            raise DimensionMismatch("backward() requires a scalar root")
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
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out = _node(self.data + other.data, (self, other))
        if out.requires_grad:

            def bwd(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g, other.data.shape))

            out._backward = bwd
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out = _node(self.data - other.data, (self, other))
        if out.requires_grad:

            def bwd(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(-g, other.data.shape))

            out._backward = bwd
        return out

    def __rsub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other.__sub__(self)

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out = _node(self.data * other.data, (self, other))
        if out.requires_grad:

            def bwd(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g * self.data, other.data.shape))

            out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out = _node(self.data / other.data, (self, other))
        if out.requires_grad:

            def bwd(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(
                        _unbroadcast(-g * self.data / other.data**2, other.data.shape)
                    )

            out._backward = bwd
        return out

    def __rtruediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other.__truediv__(self)

    def __pow__(self, exponent):
        if not isinstance(exponent, _SCALAR_TYPES):
            raise UnsupportedPrimitive("power supports constant exponents only")
        e = float(exponent)
        out = _node(self.data**e, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * e * self.data ** (e - 1.0))
        return out

    def __matmul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        a, b = self.data, other.data
        if a.ndim == 2 and b.ndim == 2:
            out = _node(a @ b, (self, other))
            if out.requires_grad:

                def bwd(g):
                    if self.requires_grad:
                        self._accumulate(g @ b.T)
                    if other.requires_grad:
                        other._accumulate(a.T @ g)

                out._backward = bwd
            return out
        if a.ndim == 2 and b.ndim == 1:
            out = _node(a @ b, (self, other))
            if out.requires_grad:

                def bwd(g):
                    if self.requires_grad:
                        self._accumulate(np.outer(g, b))
                    if other.requires_grad:
                        other._accumulate(a.T @ g)

                out._backward = bwd
            return out
        if a.ndim == 1 and b.ndim == 2:
            out = _node(a @ b, (self, other))
            if out.requires_grad:

                def bwd(g):
                    if self.requires_grad:
                        self._accumulate(b @ g)
                    if other.requires_grad:
                        other._accumulate(np.outer(a, g))

                out._backward = bwd
            return out
        raise UnsupportedPrimitive(f"matmul on shapes {a.shape} @ {b.shape}")

    def __rmatmul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other.__matmul__(self)

    def __getitem__(self, idx):
        out = _node(self.data[idx], (self,))
        if out.requires_grad:

            def bwd(g):
                full = np.zeros_like(self.data)
                np.add.at(full, idx, g)
                self._accumulate(full)

            out._backward = bwd
        return out

    # -- elementwise functions ----------------------------------------------

    def exp(self):
        val = np.exp(self.data)
        out = _node(val, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * val)
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def tanh(self):
        val = np.tanh(self.data)
        out = _node(val, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * (1.0 - val * val))
        return out

    def sqrt(self):
        """Square root with the input floored at SQRT_FLOOR."""
        floored = np.maximum(self.data, SQRT_FLOOR)
        val = np.sqrt(floored)
        out = _node(val, (self,))
        if out.requires_grad:
            mask = self.data > SQRT_FLOOR
            out._backward = lambda g: self._accumulate(g * mask * 0.5 / val)
        return out

    def clip_min(self, low: float):
        out = _node(np.maximum(self.data, low), (self,))
        if out.requires_grad:
            mask = self.data > low
            out._backward = lambda g: self._accumulate(g * mask)
        return out

    # -- shape ops ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            shape = self.data.shape

            def bwd(g):
                if axis is None:
                    self._accumulate(np.broadcast_to(g, shape))
                    return
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                axes = tuple(a % len(shape) for a in axes)
                if not keepdims:
                    for a in sorted(axes):
                        g = np.expand_dims(g, a)
                self._accumulate(np.broadcast_to(g, shape))

            out._backward = bwd
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        if out.requires_grad:
            orig = self.data.shape
            out._backward = lambda g: self._accumulate(g.reshape(orig))
        return out

    def expand_dims(self, axis: int):
        out = _node(np.expand_dims(self.data, axis), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(np.squeeze(g, axis=axis))
        return out

    def transpose(self):
        if self.data.ndim != 2:
            raise UnsupportedPrimitive("transpose supports 2-D tensors")
        out = _node(self.data.T, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.T)
        return out

    @property
    def T(self):
        return self.transpose()


def _coerce(x):
    if isinstance(x, Tensor):
        return x
    if isinstance(x, _COERCIBLE):
        return Tensor(x)
    return NotImplemented


def _node(data: np.ndarray, parents: tuple) -> Tensor:
    tracked = tuple(p for p in parents if p.requires_grad)
    out = Tensor(data, requires_grad=bool(tracked))
    out._parents = tracked
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient ``g`` back down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- composite positive-definite ops ------------------------------------------


def posdef_solve(c, b, base_jitter: float = 0.0):
    """Differentiable solve of ``C x = b`` for symmetric positive-definite C.

    Works for vector or matrix right-hand sides.  The forward pass factors
    C through the jittered Cholesky; the jitter actually used is treated as
    a constant in the backward pass.
    """
    if not isinstance(c, Tensor) and not isinstance(b, Tensor):
        factor = linalg.cholesky_jittered(np.asarray(c, dtype=np.float64), base_jitter)
        return factor.solve(np.asarray(b, dtype=np.float64))
    ct = c if isinstance(c, Tensor) else Tensor(c)
    bt = b if isinstance(b, Tensor) else Tensor(b)
    factor = linalg.cholesky_jittered(ct.data, base_jitter)
    sol = factor.solve(bt.data)
    out = _node(sol, (ct, bt))
    if out.requires_grad:

        def bwd(g):
            gb = cho_solve((factor.lower, True), g)
            if bt.requires_grad:
                bt._accumulate(gb)
            if ct.requires_grad:
                if sol.ndim == 1:
                    ct._accumulate(-np.outer(gb, sol))
                else:
                    ct._accumulate(-gb @ sol.T)

        out._backward = bwd
    return out


def mvn_logpdf_zero(x, c, base_jitter: float = 0.0):
    """Differentiable log N(x | 0, C) for symmetric positive-definite C.

    Forward matches :func:`pidkl.linalg.gaussian_logpdf_zero_mean` on the
    jittered factor; gradients are the closed forms
    d/dx = -C^{-1}x and d/dC = (alpha alpha^T - C^{-1})/2.
    """
    if not isinstance(x, Tensor) and not isinstance(c, Tensor):
        factor = linalg.cholesky_jittered(np.asarray(c, dtype=np.float64), base_jitter)
        return linalg.gaussian_logpdf_zero_mean(np.asarray(x, dtype=np.float64), factor)
    xt = x if isinstance(x, Tensor) else Tensor(x)
    ct = c if isinstance(c, Tensor) else Tensor(c)
    factor = linalg.cholesky_jittered(ct.data, base_jitter)
    val = linalg.gaussian_logpdf_zero_mean(xt.data, factor)
    out = _node(np.asarray(val), (xt, ct))
    if out.requires_grad:
        alpha = factor.solve(xt.data)

        def bwd(g):
            g = float(g)
            if xt.requires_grad:
                xt._accumulate(-g * alpha)
            if ct.requires_grad:
                cinv = cho_solve((factor.lower, True), np.eye(factor.dim))
                ct._accumulate(0.5 * g * (np.outer(alpha, alpha) - cinv))

        out._backward = bwd
    return out
