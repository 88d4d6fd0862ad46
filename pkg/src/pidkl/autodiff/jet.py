"""Forward-mode Taylor jets of order two.

A ``Jet2`` carries a value together with its first and second partial
derivatives with respect to a small number of input coordinates (d <= 3
in practice).  Components may be plain numpy arrays or reverse-mode
``Tensor`` nodes, so input derivatives remain differentiable with respect
to model parameters: the jet rules are written once in terms of whatever
arithmetic the components support.

Exact zeros are represented by the float ``0.0`` and skipped in the
arithmetic, which keeps linear pipelines (standardization, matmul by
constants) from materializing zero arrays.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, UnsupportedPrimitive
from .tensor import SQRT_FLOOR, Tensor


def _is_zero(c) -> bool:
    return isinstance(c, float) and c == 0.0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return a + b


def _sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return -b
    return a - b


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return a * b


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


class Jet2:
    """Value with first/second input derivatives along d coordinates."""

    __slots__ = ("value", "grads", "hess", "dim", "track_hess")

    __array_ufunc__ = None

    def __init__(self, value, grads, hess, dim, track_hess):
        self.value = value
        self.grads = tuple(grads)
        self.hess = dict(hess)
        self.dim = dim
        self.track_hess = track_hess
        if len(self.grads) != dim:
            raise DimensionMismatch("grads length must equal dim")

    # -- construction --------------------------------------------------------

    @staticmethod
    def seed(x, track_hess: bool = True) -> "Jet2":
        """Identity jet for a coordinate matrix of shape (..., d).

        grads[j] is the constant one-hot mask selecting column j, so the jet
        of any downstream scalar holds its derivatives in raw coordinates.
        """
        x = np.asarray(x, dtype=np.float64)
        d = x.shape[-1]
        grads = []
        for j in range(d):
            g = np.zeros_like(x)
            g[..., j] = 1.0
            grads.append(g)
        return Jet2(x, grads, {}, d, track_hess)

    @staticmethod
    def constant(value, like: "Jet2") -> "Jet2":
        return Jet2(value, (0.0,) * like.dim, {}, like.dim, like.track_hess)

    def h(self, i: int, j: int):
        """Second partial wrt coordinates i and j (0.0 when untracked/zero)."""
        key = (i, j) if i <= j else (j, i)
        return self.hess.get(key, 0.0)

    def _pairs(self):
        return [(i, j) for i in range(self.dim) for j in range(i, self.dim)]

    # -- numpy-facing views ----------------------------------------------------

    @property
    def grad(self) -> np.ndarray:
        """First derivatives stacked along a trailing axis (numpy view)."""
        return np.stack(
            [np.broadcast_to(_data(g), np.shape(_data(self.value))) for g in self.grads],
            axis=-1,
        )

    def hess_matrix(self) -> np.ndarray:
        """Full symmetric d x d Hessian for a scalar-valued jet."""
        m = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                m[i, j] = m[j, i] = float(_data(self.h(i, j)))
        return m

    def __float__(self):
        raise UnsupportedPrimitive("Jet2 cannot be coerced to float")

    def __bool__(self):
        raise UnsupportedPrimitive("Jet2 has no truth value")

    def __repr__(self):
        return f"Jet2(dim={self.dim}, track_hess={self.track_hess})"

    # -- linear ops -------------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet2):
            if other.dim != self.dim:
                raise DimensionMismatch("jets have different input dims")
            return other
        if isinstance(other, (Tensor, np.ndarray, int, float, np.integer, np.floating)):
            return Jet2.constant(other, like=self)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        track = self.track_hess and o.track_hess
        hess = {}
        if track:
            for key in set(self.hess) | set(o.hess):
                hess[key] = _add(self.hess.get(key, 0.0), o.hess.get(key, 0.0))
        return Jet2(
            self.value + o.value,
            [_add(a, b) for a, b in zip(self.grads, o.grads)],
            hess,
            self.dim,
            track,
        )

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        track = self.track_hess and o.track_hess
        hess = {}
        if track:
            for key in set(self.hess) | set(o.hess):
                hess[key] = _sub(self.hess.get(key, 0.0), o.hess.get(key, 0.0))
        return Jet2(
            self.value - o.value,
            [_sub(a, b) for a, b in zip(self.grads, o.grads)],
            hess,
            self.dim,
            track,
        )

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o.__sub__(self)

    def __neg__(self):
        return Jet2(
            -self.value,
            [0.0 if _is_zero(g) else -g for g in self.grads],
            {k: -v for k, v in self.hess.items()},
            self.dim,
            self.track_hess,
        )

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        track = self.track_hess and o.track_hess
        grads = [
            _add(_mul(ga, o.value), _mul(self.value, gb))
            for ga, gb in zip(self.grads, o.grads)
        ]
        hess = {}
        if track:
            for i, j in self._pairs():
                term = _add(
                    _add(_mul(self.h(i, j), o.value), _mul(self.value, o.h(i, j))),
                    _add(
                        _mul(self.grads[i], o.grads[j]),
                        _mul(self.grads[j], o.grads[i]),
                    ),
                )
                if not _is_zero(term):
                    hess[(i, j)] = term
        return Jet2(self.value * o.value, grads, hess, self.dim, track)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * other._reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o * self._reciprocal()

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float, np.integer, np.floating)):
            raise UnsupportedPrimitive("jet power supports constant exponents only")
        e = float(exponent)
        v = self.value
        return self._unary(v**e, e * v ** (e - 1.0), e * (e - 1.0) * v ** (e - 2.0))

    def __matmul__(self, other):
        """Matrix product with a jet-constant right operand (linear map)."""
        if isinstance(other, Jet2):
            raise UnsupportedPrimitive("jet @ jet is not supported; use * and sum")
        return self._map_linear(lambda c: c @ other)

    def __rmatmul__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        return self._map_linear(lambda c: other @ c)

    def __getitem__(self, idx):
        return self._map_linear(lambda c: c[idx])

    def _map_linear(self, f):
        """Apply a linear component map (keeps exact zeros zero)."""
        return Jet2(
            f(self.value),
            [0.0 if _is_zero(g) else f(g) for g in self.grads],
            {k: f(v) for k, v in self.hess.items()},
            self.dim,
            self.track_hess,
        )

    def sum(self, axis=None, keepdims: bool = False):
        return self._map_linear(lambda c: c.sum(axis=axis, keepdims=keepdims))

    def expand_dims(self, axis: int):
        def f(c):
            if isinstance(c, Tensor):
                return c.expand_dims(axis)
            return np.expand_dims(c, axis)

        return self._map_linear(f)

    def transpose(self):
        return self._map_linear(lambda c: c.T)

    @property
    def T(self):
        return self.transpose()

    # -- smooth primitives -------------------------------------------------------

    def _unary(self, f0, f1, f2) -> "Jet2":
        """Chain rule through an elementwise function with given derivatives."""
        grads = [_mul(f1, g) for g in self.grads]
        hess = {}
        if self.track_hess:
            for i, j in self._pairs():
                term = _add(
                    _mul(f2, _mul(self.grads[i], self.grads[j])),
                    _mul(f1, self.h(i, j)),
                )
                if not _is_zero(term):
                    hess[(i, j)] = term
        return Jet2(f0, grads, hess, self.dim, self.track_hess)

    def exp(self):
        from . import ops

        e = ops.exp(self.value)
        return self._unary(e, e, e)

    def log(self):
        from . import ops

        v = self.value
        return self._unary(ops.log(v), 1.0 / v, -((1.0 / v) ** 2))

    def tanh(self):
        from . import ops

        t = ops.tanh(self.value)
        one_minus_t2 = 1.0 - t * t
        return self._unary(t, one_minus_t2, -2.0 * t * one_minus_t2)

    def sqrt(self):
        """Floored square root: derivatives vanish where the floor binds."""
        clipped = self.clip_min(SQRT_FLOOR)
        v = clipped.value
        s = v.sqrt() if isinstance(v, Tensor) else np.sqrt(v)
        return clipped._unary(s, 0.5 / s, -0.25 / (s * v))

    def _reciprocal(self):
        v = self.value
        inv = 1.0 / v
        return self._unary(inv, -(inv * inv), 2.0 * inv * inv * inv)

    def clip_min(self, low: float):
        mask = (_data(self.value) > low).astype(np.float64)
        v = self.value
        clipped = v.clip_min(low) if isinstance(v, Tensor) else np.maximum(v, low)
        return Jet2(
            clipped,
            [_mul(mask, g) for g in self.grads],
            {k: _mul(mask, h) for k, h in self.hess.items()},
            self.dim,
            self.track_hess,
        )
