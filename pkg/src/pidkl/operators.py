"""Differential-operator DSL and the generative (virtual-observation) term.

An operator is a sum of coefficient-weighted products of partial
derivatives of the target function, plus an optional constant:

    psi[f] = sum_t c_t * prod_k D^{order_k}_{var_k} f  +  constant

Coefficients reference named entries of ``ModelParams.eq_coeffs`` or are
fixed numbers.  Orders up to 2 per variable are supported; products give
nonlinear forms such as f * df/dx.

Applied to the posterior function draw mu + eps*sqrt(v), the operator
yields the latent-source values h at a batch of virtual inputs, which are
scored against a zero-mean Gaussian with the source-kernel Gram matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import gp, kernels
from .autodiff import Jet2, ops
from .datasets import Standardizer
from .errors import DimensionMismatch, NonFiniteIntermediate, ParseError

SIGMA_JITTER_REL = 1e-6  # relative diagonal jitter on the source Gram matrix


@dataclass(frozen=True)
class PartialDerivative:
    var: int
    order: int  # 0, 1, or 2

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ParseError(f"derivative order must be 0, 1 or 2, got {self.order}")
        if self.var < 0:
            raise ParseError(f"variable index must be nonnegative, got {self.var}")


@dataclass(frozen=True)
class Coeff:
    """Named reference into eq_coeffs, or a fixed constant."""

    name: str | None = None
    const: float | None = None
    negate: bool = False

    def __post_init__(self):
        if (self.name is None) == (self.const is None):
            raise ParseError("coefficient needs exactly one of 'name' or 'const'")

    def resolve(self, params: gp.ModelParams):
        value = self.const if self.name is None else params.coeff_value(self.name)
        return -value if self.negate else value

    def to_dict(self) -> dict:
        out: dict = {"name": self.name} if self.name is not None else {"const": self.const}
        if self.negate:
            out["negate"] = True
        return out

    @staticmethod
    def from_dict(d: dict) -> "Coeff":
        extra = set(d) - {"name", "const", "negate"}
        if extra:
            raise ParseError(f"unknown coefficient keys {sorted(extra)}")
        return Coeff(
            name=d.get("name"),
            const=None if d.get("const") is None else float(d["const"]),
            negate=bool(d.get("negate", False)),
        )


@dataclass(frozen=True)
class Term:
    coeff: Coeff
    factors: tuple  # of PartialDerivative

    def to_dict(self) -> dict:
        return {
            "coeff": self.coeff.to_dict(),
            "factors": [{"var": f.var, "order": f.order} for f in self.factors],
        }

    @staticmethod
    def from_dict(d: dict) -> "Term":
        extra = set(d) - {"coeff", "factors"}
        if extra:
            raise ParseError(f"unknown term keys {sorted(extra)}")
        try:
            factors = tuple(
                PartialDerivative(int(f["var"]), int(f["order"])) for f in d["factors"]
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad factor spec: {exc}") from exc
        return Term(coeff=Coeff.from_dict(d["coeff"]), factors=factors)


@dataclass(frozen=True)
class OperatorSpec:
    terms: tuple = ()
    constant: Coeff | None = None

    def max_order(self) -> int:
        return max((f.order for t in self.terms for f in t.factors), default=0)

    def max_var(self) -> int:
        return max((f.var for t in self.terms for f in t.factors), default=-1)

    def coeff_names(self) -> set:
        names = {t.coeff.name for t in self.terms if t.coeff.name is not None}
        if self.constant is not None and self.constant.name is not None:
            names.add(self.constant.name)
        return names

    def validate(self, dim: int, params: gp.ModelParams | None = None) -> None:
        if self.max_var() >= dim:
            raise DimensionMismatch(
                f"operator references variable {self.max_var()}, input dim is {dim}"
            )
        if params is not None:
            missing = self.coeff_names() - set(params.eq_coeffs)
            if missing:
                raise DimensionMismatch(
                    f"operator coefficients {sorted(missing)} missing from params"
                )

    def apply(self, f_jet: Jet2, params: gp.ModelParams):
        """psi[f] from the jet of the target function (batched over points)."""
        m = np.shape(ops.value_of(f_jet))[0]
        acc = np.zeros(m)
        for term in self.terms:
            piece = term.coeff.resolve(params)
            for fac in term.factors:
                piece = piece * _component(f_jet, fac)
            acc = acc + piece
        if self.constant is not None:
            acc = acc + self.constant.resolve(params) * np.ones(m)
        return acc

    # -- JSON wire format ---------------------------------------------------

    def to_dict(self) -> dict:
        out: dict = {"terms": [t.to_dict() for t in self.terms]}
        if self.constant is not None:
            out["constant"] = self.constant.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "OperatorSpec":
        extra = set(d) - {"terms", "constant"}
        if extra:
            raise ParseError(f"unknown operator keys {sorted(extra)}")
        if "terms" not in d or not isinstance(d["terms"], list):
            raise ParseError("operator spec needs a 'terms' list")
        terms = tuple(Term.from_dict(t) for t in d["terms"])
        constant = Coeff.from_dict(d["constant"]) if "constant" in d else None
        return OperatorSpec(terms=terms, constant=constant)

    @staticmethod
    def from_json(text: str) -> "OperatorSpec":
        try:
            return OperatorSpec.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad operator JSON: {exc}") from exc


def _component(f_jet: Jet2, fac: PartialDerivative):
    if fac.order == 0:
        return f_jet.value
    if fac.order == 1:
        return f_jet.grads[fac.var]
    if not f_jet.track_hess:
        raise DimensionMismatch("order-2 factor applied to a first-order jet")
    return f_jet.h(fac.var, fac.var)


# -- virtual inputs ---------------------------------------------------------------


@dataclass
class VirtualInputSampler:
    """p(Z): uniform over the raw domain box, or standard normal in model
    coordinates (mapped back to raw)."""

    kind: str  # "uniform" | "normal"
    m: int
    bounds: np.ndarray | None = None  # (d, 2), required for "uniform"
    dim: int | None = None  # required for "normal"

    def __post_init__(self):
        if self.m < 1:
            raise DimensionMismatch("sampler needs m >= 1")
        if self.kind == "uniform":
            if self.bounds is None:
                raise DimensionMismatch("uniform sampler needs bounds")
            self.bounds = np.asarray(self.bounds, dtype=np.float64)
            if not np.all(np.isfinite(self.bounds)):
                raise DimensionMismatch("uniform sampler bounds must be finite")
            self.dim = self.bounds.shape[0]
        elif self.kind == "normal":
            if self.dim is None:
                raise DimensionMismatch("normal sampler needs dim")
        else:
            raise DimensionMismatch(f"unknown sampler kind '{self.kind}'")


def sample_virtual_inputs(
    sampler: VirtualInputSampler,
    rng: np.random.Generator,
    standardizer: Standardizer | None = None,
) -> np.ndarray:
    """Draw m raw-coordinate virtual input rows, deterministic given rng state."""
    if sampler.kind == "uniform":
        lo, hi = sampler.bounds[:, 0], sampler.bounds[:, 1]
        return rng.uniform(size=(sampler.m, sampler.dim)) * (hi - lo) + lo
    z = rng.standard_normal(size=(sampler.m, sampler.dim))
    if standardizer is not None:
        return standardizer.inverse(z)
    return z


# -- generative term ---------------------------------------------------------------


def eval_h(
    z: np.ndarray,
    eps: float,
    op: OperatorSpec,
    post: gp.GpPosterior,
    params: gp.ModelParams,
):
    """Latent-source values h_j = psi[mu + eps*sqrt(v)](z_j).

    One scalar eps is shared across all rows (one draw defines one
    function); derivatives are taken in raw coordinates, so the
    standardization chain rule is applied automatically by the jets.
    """
    post.check_fresh(params)
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    op.validate(z.shape[1], params)
    x_jet = Jet2.seed(z, track_hess=op.max_order() >= 2)
    f_jet = gp.posterior_surrogate(x_jet, eps, post, params)
    h = op.apply(f_jet, params)
    if not np.all(np.isfinite(ops.value_of(h))):
        raise NonFiniteIntermediate("operator evaluation produced non-finite values")
    return h


def source_cov(z: np.ndarray, post: gp.GpPosterior, params: gp.ModelParams):
    """Source-kernel Gram on the virtual inputs, with relative jitter."""
    if params.source is None:
        raise DimensionMismatch("params carry no source kernel")
    z_std = post.standardizer.transform(np.atleast_2d(z))
    sigma = kernels.ard_gram(z_std, z_std, params.source)
    jitter = SIGMA_JITTER_REL * ops.exp(params.source.log_signal_variance)
    return sigma + jitter * np.eye(z_std.shape[0])


def generative_log_term(
    z: np.ndarray,
    eps: float,
    op: OperatorSpec,
    post: gp.GpPosterior,
    params: gp.ModelParams,
):
    """log N(h(Z, eps) | 0, Sigma): the virtual observations are zeros."""
    h = eval_h(z, eps, op, post, params)
    sigma = source_cov(z, post, params)
    return ops.mvn_logpdf_zero(h, sigma)
