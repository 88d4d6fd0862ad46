"""Dense linear algebra for exact GP inference.

Symmetric matrices are plain float64 ``numpy`` arrays; ``check_symmetric``
validates the contract and ``mirror_symmetric`` builds one from a lower
triangle so both halves are bitwise equal.  Factorizations go through
``cholesky_jittered``, which escalates a diagonal jitter until the matrix
factors (deep kernels routinely produce near-singular Gram matrices).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, FactorizationFailure

LOG_2PI = float(np.log(2.0 * np.pi))

# Jitter schedule: start at 1e-8 * mean(diag), escalate x10, cap at
# 1e-2 * mean(diag).
JITTER_START_REL = 1e-8
JITTER_CAP_REL = 1e-2


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular Cholesky factor of a (possibly jittered) matrix."""

    lower: np.ndarray
    jitter_used: float

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def logdet(self) -> float:
        """log|A + jitter I| from the factor diagonal."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve (A + jitter I) x = b."""
        if b.shape[0] != self.dim:
            raise DimensionMismatch(
                f"rhs has leading dim {b.shape[0]}, factor has dim {self.dim}"
            )
        return cho_solve((self.lower, True), b)


def check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 1:
        raise DimensionMismatch(f"{name} must have dim >= 1")
    if not np.array_equal(a, a.T):
        raise DimensionMismatch(f"{name} is not exactly symmetric")
    return a


def mirror_symmetric(lower_filled: np.ndarray) -> np.ndarray:
    """Mirror the strict lower triangle onto the upper one."""
    a = np.array(lower_filled, dtype=np.float64)
    il, jl = np.tril_indices(a.shape[0], -1)
    a[jl, il] = a[il, jl]
    return a


def cholesky_jittered(a: np.ndarray, base_jitter: float = 0.0) -> CholFactor:
    """Factor ``a + jitter I`` with an escalating jitter schedule.

    The first attempt uses ``base_jitter`` itself (0 means no jitter); on
    failure the jitter starts at ``1e-8 * mean(diag)`` and grows tenfold
    until ``1e-2 * mean(diag)``.

    Raises
    ------
    FactorizationFailure
        If even the maximal jitter does not produce a positive-definite
        matrix (badly scaled or corrupt input).
    """
    a = check_symmetric(a)
    if base_jitter < 0:
        raise DimensionMismatch("base_jitter must be nonnegative")
    n = a.shape[0]
    mean_diag = float(np.mean(np.diag(a)))
    cap = JITTER_CAP_REL * mean_diag

    jitter = float(base_jitter)
    eye = np.eye(n)
    while True:
        try:
            lower = np.linalg.cholesky(a + jitter * eye if jitter > 0 else a)
            return CholFactor(lower=lower, jitter_used=jitter)
        except np.linalg.LinAlgError:
            if jitter <= 0:
                jitter = max(base_jitter, JITTER_START_REL * mean_diag)
            else:
                jitter *= 10.0
            if jitter <= 0 or jitter > cap or not np.isfinite(jitter):
                raise FactorizationFailure(
                    f"cholesky failed at jitter cap {cap:.3e} "
                    f"(mean diagonal {mean_diag:.3e})"
                ) from None


def gaussian_logpdf_zero_mean(x: np.ndarray, cov_chol: CholFactor) -> float:
    """log N(x | 0, C) given the Cholesky factor of C.

    Uses one triangular solve; never forms an explicit inverse.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != cov_chol.dim:
        raise DimensionMismatch(
            f"x has shape {x.shape}, factor has dim {cov_chol.dim}"
        )
    z = solve_triangular(cov_chol.lower, x, lower=True)
    n = x.shape[0]
    return float(-0.5 * z @ z - 0.5 * cov_chol.logdet() - 0.5 * n * LOG_2PI)
