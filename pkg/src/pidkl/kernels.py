"""Kernel functions: RBF, SE-ARD, and the neural-network deep kernel.

All hyperparameters live in log space so positivity holds by construction.
Every function is written against the backend-dispatch layer in
:mod:`pidkl.autodiff.ops`, so the same code evaluates with plain numpy,
with reverse-mode tensors (parameter gradients), or with input jets
(derivatives of the posterior at arbitrary points).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .errors import DimensionMismatch
from .linalg import mirror_symmetric

DEFAULT_MLP_WIDTHS = (20, 20, 20, 20, 20)


@dataclass
class RbfParams:
    """k(a, b) = sv * exp(-|a - b|^2 / lengthscale)."""

    log_lengthscale: object = 0.0
    log_signal_variance: object = 0.0


@dataclass
class ArdParams:
    """Squared exponential with one lengthscale per input dimension."""

    log_lengthscales: object
    log_signal_variance: object = 0.0

    @property
    def dim(self) -> int:
        return int(np.shape(ops.value_of(self.log_lengthscales))[0])


@dataclass
class MlpParams:
    """Fully connected tanh network; ``layers`` is a list of (W, b)."""

    layers: list = field(default_factory=list)

    @property
    def widths(self):
        return tuple(np.shape(ops.value_of(w))[1] for w, _ in self.layers)

    @property
    def input_dim(self) -> int:
        return int(np.shape(ops.value_of(self.layers[0][0]))[0])

    @property
    def output_dim(self) -> int:
        return self.widths[-1]


def init_mlp(input_dim: int, widths, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases; one rng draw per layer, in order."""
    layers = []
    fan_in = input_dim
    for fan_out in widths:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
        fan_in = fan_out
    return MlpParams(layers=layers)


def mlp_forward(x, p: MlpParams):
    """Feature map: tanh(x W + b) through every layer (output included)."""
    in_dim = np.shape(ops.value_of(x))[-1]
    if in_dim != p.input_dim:
        raise DimensionMismatch(
            f"input has dim {in_dim}, network expects {p.input_dim}"
        )
    h = x
    for w, b in p.layers:
        h = ops.tanh(h @ w + b)
    return h


def _check_pair(xi, xj):
    if np.shape(ops.value_of(xi)) != np.shape(ops.value_of(xj)):
        raise DimensionMismatch(
            f"kernel arguments have shapes {np.shape(ops.value_of(xi))} "
            f"vs {np.shape(ops.value_of(xj))}"
        )


def rbf_eval(xi, xj, p: RbfParams):
    _check_pair(xi, xj)
    diff = xi - xj
    d2 = ops.asum(diff * diff)
    return ops.exp(p.log_signal_variance) * ops.exp(-(d2 / ops.exp(p.log_lengthscale)))


def ard_eval(xi, xj, p: ArdParams):
    _check_pair(xi, xj)
    diff = xi - xj
    d2 = ops.asum(diff * diff / ops.exp(p.log_lengthscales))
    return ops.exp(p.log_signal_variance) * ops.exp(-d2)


def deep_kernel_eval(xi, xj, mlp: MlpParams, base: RbfParams):
    return rbf_eval(mlp_forward(xi, mlp), mlp_forward(xj, mlp), base)


def gram_matrix(x: np.ndarray, kernel) -> np.ndarray:
    """N x N kernel matrix from a pairwise closure, assembled once and mirrored."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 1:
        raise DimensionMismatch("gram_matrix needs at least one row")
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            out[i, j] = float(ops.value_of(kernel(x[i], x[j])))
    return mirror_symmetric(out)


# -- vectorized forms used by inference ----------------------------------------


def pairwise_sqdist(a, b):
    """(n, k) squared distances; exactly symmetric when ``a is b``.

    Uses the broadcasted-difference form rather than the matmul identity so
    the diagonal is exactly zero and symmetry is bitwise.
    """
    diff = ops.expand_dims(a, 1) - ops.expand_dims(b, 0)
    return ops.asum(diff * diff, axis=-1)


def rbf_gram(features_a, features_b, p: RbfParams):
    d2 = pairwise_sqdist(features_a, features_b)
    return ops.exp(p.log_signal_variance) * ops.exp(-(d2 / ops.exp(p.log_lengthscale)))


def ard_gram(xa, xb, p: ArdParams):
    diff = ops.expand_dims(xa, 1) - ops.expand_dims(xb, 0)
    d2 = ops.asum(diff * diff / ops.exp(p.log_lengthscales), axis=-1)
    return ops.exp(p.log_signal_variance) * ops.exp(-d2)
