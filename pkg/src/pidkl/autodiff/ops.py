"""Backend-dispatched math used by the model code.

Every function here accepts a ``Jet2``, a ``Tensor``, or plain numpy
input and routes to the matching implementation, so kernel and posterior
formulas are written once and evaluated with whichever derivative
information the caller needs.
"""

from __future__ import annotations

import numpy as np

from ..errors import UnsupportedPrimitive
from .jet import Jet2
from .tensor import SQRT_FLOOR, Tensor
from .tensor import mvn_logpdf_zero as _mvn_logpdf_zero_tensor
from .tensor import posdef_solve as _posdef_solve_tensor

__all__ = [
    "exp",
    "log",
    "tanh",
    "sqrt",
    "power",
    "clip_min",
    "asum",
    "dot",
    "matmul",
    "expand_dims",
    "transpose",
    "posdef_solve",
    "mvn_logpdf_zero",
    "value_of",
]


def value_of(x) -> np.ndarray:
    """Plain numpy value of a Jet2 / Tensor / array."""
    if isinstance(x, Jet2):
        return value_of(x.value)
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x)


def exp(x):
    if isinstance(x, (Jet2, Tensor)):
        return x.exp()
    return np.exp(x)


def log(x):
    if isinstance(x, (Jet2, Tensor)):
        return x.log()
    return np.log(x)


def tanh(x):
    if isinstance(x, (Jet2, Tensor)):
        return x.tanh()
    return np.tanh(x)


def sqrt(x):
    """Square root with inputs floored at SQRT_FLOOR (all backends)."""
    if isinstance(x, (Jet2, Tensor)):
        return x.sqrt()
    return np.sqrt(np.maximum(x, SQRT_FLOOR))


def power(x, e):
    if isinstance(x, (Jet2, Tensor)):
        return x**e
    return np.asarray(x) ** e


def clip_min(x, low: float):
    if isinstance(x, (Jet2, Tensor)):
        return x.clip_min(low)
    return np.maximum(x, low)


def asum(x, axis=None, keepdims: bool = False):
    if isinstance(x, (Jet2, Tensor)):
        return x.sum(axis=axis, keepdims=keepdims)
    return np.asarray(x).sum(axis=axis, keepdims=keepdims)


def dot(a, b):
    """Inner product of two 1-D quantities."""
    return asum(a * b)


def matmul(a, b):
    return a @ b


def expand_dims(x, axis: int):
    if isinstance(x, (Jet2, Tensor)):
        return x.expand_dims(axis)
    return np.expand_dims(x, axis)


def transpose(x):
    if isinstance(x, (Jet2, Tensor)):
        return x.T
    return np.asarray(x).T


def posdef_solve(c, b, base_jitter: float = 0.0):
    """Solve C x = b; C must be jet-constant, b may be any backend."""
    if isinstance(c, Jet2):
        raise UnsupportedPrimitive("posdef_solve matrix must not depend on jet inputs")
    if isinstance(b, Jet2):
        return b._map_linear(lambda comp: _posdef_solve_tensor(c, comp, base_jitter))
    return _posdef_solve_tensor(c, b, base_jitter)


def mvn_logpdf_zero(x, c, base_jitter: float = 0.0):
    if isinstance(x, Jet2) or isinstance(c, Jet2):
        raise UnsupportedPrimitive("mvn_logpdf_zero does not accept jets")
    return _mvn_logpdf_zero_tensor(x, c, base_jitter)
