"""Automatic differentiation: reverse-mode tape plus order-2 input jets."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteGradient, NonFiniteIntermediate
from .jet import Jet2
from .tensor import SQRT_FLOOR, Tensor
from . import ops

__all__ = [
    "Tensor",
    "Jet2",
    "ops",
    "SQRT_FLOOR",
    "jet_eval",
    "value_and_grad",
    "collect_gradients",
]


def jet_eval(fn, x) -> Jet2:
    """Evaluate ``fn`` at ``x`` with full first and second input derivatives.

    ``fn`` receives a Jet2 whose value is the input vector; it must be
    composed of the supported smooth primitives (see :mod:`.ops`).  The
    returned jet is scalar-valued: ``.value``, ``.grad`` (length d) and
    ``.hess_matrix()`` (d x d) hold the value, gradient and Hessian.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise NonFiniteIntermediate("jet_eval expects a 1-D input point")
    out = fn(Jet2.seed(x, track_hess=True))
    if not isinstance(out, Jet2):
        out = Jet2.constant(out, like=Jet2.seed(x))
    val = ops.value_of(out)
    if not np.all(np.isfinite(val)):
        raise NonFiniteIntermediate("jet evaluation produced non-finite value")
    if not np.all(np.isfinite(out.grad)) or not np.all(np.isfinite(out.hess_matrix())):
        raise NonFiniteIntermediate("jet evaluation produced non-finite derivatives")
    return out


def collect_gradients(root, leaves) -> list:
    """Run backward from ``root`` and return one gradient array per leaf.

    ``root`` may be a plain scalar (every leaf untouched); leaves the loss
    never reached get exact zeros.  Raises NonFiniteGradient on NaN/inf.
    """
    if isinstance(root, Tensor):
        if root.data.size != 1:
            raise NonFiniteGradient("loss must be scalar")
        if not np.isfinite(float(root.data)):
            raise NonFiniteIntermediate("loss is non-finite")
        root.backward()
    grads = []
    for leaf in leaves:
        g = leaf.grad
        if g is None:
            g = np.zeros_like(leaf.data)
        g = np.asarray(g, dtype=np.float64).reshape(leaf.data.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient is non-finite")
        grads.append(g)
    return grads


def value_and_grad(fn, arrays):
    """Loss value and gradients with respect to a list of leaf arrays.

    ``fn`` receives one leaf Tensor per input array (same order) and must
    return a scalar Tensor.  Returns ``(float, [ndarray gradients])`` with
    zero gradients for leaves the loss never touches.
    """
    leaves = [Tensor.leaf(a) for a in arrays]
    out = fn(*leaves)
    value = float(np.asarray(out.data if isinstance(out, Tensor) else out))
    grads = collect_gradients(out, leaves)
    return value, [g.reshape(np.shape(a)) for g, a in zip(grads, arrays)]
