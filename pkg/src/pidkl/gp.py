"""Exact Gaussian-process regression with deep or SE-ARD kernels.

The same formulas run in three modes depending on what the caller passes:
plain numpy (prediction), reverse-mode tensors (parameter gradients of
the training objective), or input jets (derivatives of the posterior
surrogate at arbitrary points, used by the differential-operator layer).

Outputs are centered by their training mean before fitting and the center
is added back at prediction.  Inputs are mapped to model coordinates by a
:class:`~pidkl.datasets.Standardizer` fitted from the domain bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .autodiff import Jet2, Tensor, ops
from .autodiff import collect_gradients
from .datasets import Dataset, Standardizer
from .errors import CacheInvalid, DimensionMismatch
from .linalg import CholFactor, cholesky_jittered

VAR_FLOOR = 1e-10


@dataclass
class CoeffParam:
    """One unknown equation coefficient; stored in log space if positive."""

    value: object
    positive: bool = False

    def external(self):
        return ops.exp(self.value) if self.positive else self.value


@dataclass
class ModelParams:
    """All trainable quantities.

    Canonical flattening order (used by gradients, ADAM and checkpoints):

    1. feature network layers in order, weights then bias per layer
       (deep kind only);
    2. base kernel: ``log_lengthscale, log_signal_variance`` (deep) or
       ``log_lengthscales, log_signal_variance`` (ard);
    3. source kernel, if present: ``log_lengthscales, log_signal_variance``;
    4. ``log_tau``;
    5. equation coefficients in sorted name order.
    """

    kind: str  # "deep" | "ard"
    mlp: kernels.MlpParams | None
    base: object  # RbfParams (deep) or ArdParams (ard)
    source: kernels.ArdParams | None
    log_tau: object
    eq_coeffs: dict = field(default_factory=dict)
    version: int = 0

    # -- constructors -----------------------------------------------------

    @staticmethod
    def init_deep(
        input_dim: int,
        rng: np.random.Generator,
        widths=kernels.DEFAULT_MLP_WIDTHS,
        log_tau: float = float(np.log(100.0)),
        source_dim: int | None = None,
        coeffs: dict | None = None,
    ) -> "ModelParams":
        mlp = kernels.init_mlp(input_dim, widths, rng)
        source = None
        if source_dim is not None:
            source = kernels.ArdParams(log_lengthscales=np.zeros(source_dim))
        return ModelParams(
            kind="deep",
            mlp=mlp,
            base=kernels.RbfParams(),
            source=source,
            log_tau=float(log_tau),
            eq_coeffs=_init_coeffs(coeffs),
        )

    @staticmethod
    def init_ard(
        input_dim: int,
        log_tau: float = float(np.log(100.0)),
        source_dim: int | None = None,
        coeffs: dict | None = None,
    ) -> "ModelParams":
        source = None
        if source_dim is not None:
            source = kernels.ArdParams(log_lengthscales=np.zeros(source_dim))
        return ModelParams(
            kind="ard",
            mlp=None,
            base=kernels.ArdParams(log_lengthscales=np.zeros(input_dim)),
            source=source,
            log_tau=float(log_tau),
            eq_coeffs=_init_coeffs(coeffs),
        )

    # -- flattening ---------------------------------------------------------

    def named_leaves(self) -> list:
        """(name, leaf) pairs in the canonical order."""
        out = []
        if self.kind == "deep":
            for i, (w, b) in enumerate(self.mlp.layers):
                out.append((f"mlp.w{i}", w))
                out.append((f"mlp.b{i}", b))
            out.append(("base.log_lengthscale", self.base.log_lengthscale))
            out.append(("base.log_signal_variance", self.base.log_signal_variance))
        else:
            out.append(("base.log_lengthscales", self.base.log_lengthscales))
            out.append(("base.log_signal_variance", self.base.log_signal_variance))
        if self.source is not None:
            out.append(("source.log_lengthscales", self.source.log_lengthscales))
            out.append(("source.log_signal_variance", self.source.log_signal_variance))
        out.append(("log_tau", self.log_tau))
        for name in sorted(self.eq_coeffs):
            out.append((f"eq.{name}", self.eq_coeffs[name].value))
        return out

    def layout(self) -> list:
        """(name, shape, size) triples describing the flat vector."""
        out = []
        for name, leaf in self.named_leaves():
            arr = np.asarray(ops.value_of(leaf))
            out.append((name, arr.shape, int(arr.size)))
        return out

    def flatten(self) -> np.ndarray:
        parts = [np.asarray(ops.value_of(leaf)).ravel() for _, leaf in self.named_leaves()]
        return np.concatenate(parts) if parts else np.zeros(0)

    @property
    def n_params(self) -> int:
        return int(self.flatten().size)

    def update_from_flat(self, vec: np.ndarray) -> None:
        """Write a flat vector back into the leaves; bumps the version."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise DimensionMismatch(
                f"flat vector has shape {vec.shape}, expected ({self.n_params},)"
            )
        values = []
        offset = 0
        for _, shape, size in self.layout():
            values.append(vec[offset : offset + size].reshape(shape))
            offset += size
        self._set_leaves(values)
        self.version += 1

    def _set_leaves(self, values: list) -> None:
        it = iter(values)

        def scalar(v):
            return float(np.asarray(v))

        if self.kind == "deep":
            layers = []
            for _ in self.mlp.layers:
                w = next(it)
                b = next(it)
                layers.append((np.asarray(w), np.asarray(b)))
            self.mlp = kernels.MlpParams(layers=layers)
            self.base = kernels.RbfParams(scalar(next(it)), scalar(next(it)))
        else:
            self.base = kernels.ArdParams(np.asarray(next(it)), scalar(next(it)))
        if self.source is not None:
            self.source = kernels.ArdParams(np.asarray(next(it)), scalar(next(it)))
        self.log_tau = scalar(next(it))
        for name in sorted(self.eq_coeffs):
            self.eq_coeffs[name] = CoeffParam(
                scalar(next(it)), self.eq_coeffs[name].positive
            )

    def as_tensors(self) -> tuple["ModelParams", list]:
        """Tensorized copy plus the leaf list in canonical order."""
        leaves = [Tensor.leaf(ops.value_of(v)) for _, v in self.named_leaves()]
        view = replace(self)
        it = iter(leaves)
        if self.kind == "deep":
            layers = [(next(it), next(it)) for _ in self.mlp.layers]
            view.mlp = kernels.MlpParams(layers=layers)
            view.base = kernels.RbfParams(next(it), next(it))
        else:
            view.base = kernels.ArdParams(next(it), next(it))
        if self.source is not None:
            view.source = kernels.ArdParams(next(it), next(it))
        view.log_tau = next(it)
        view.eq_coeffs = {
            name: CoeffParam(next(it), self.eq_coeffs[name].positive)
            for name in sorted(self.eq_coeffs)
        }
        return view, leaves

    def coeff_value(self, name: str):
        try:
            return self.eq_coeffs[name].external()
        except KeyError:
            raise DimensionMismatch(f"unknown equation coefficient '{name}'") from None


def _init_coeffs(spec: dict | None) -> dict:
    """``{name: positive_flag}`` or ``{name: (init, positive)}`` to params.

    Initial external value defaults to 1.0 (stored as log 1 = 0 when the
    coefficient is sign-constrained).
    """
    out = {}
    for name, v in (spec or {}).items():
        if isinstance(v, bool):
            init, positive = 1.0, v
        else:
            init, positive = v
        value = float(np.log(init)) if positive else float(init)
        out[name] = CoeffParam(value=value, positive=positive)
    return out


# -- covariance assembly ---------------------------------------------------------


def features(x_std, params: ModelParams):
    """Model-space representation fed to the base kernel."""
    if params.kind == "deep":
        return kernels.mlp_forward(x_std, params.mlp)
    return x_std


def cross_cov(feat_a, feat_b, params: ModelParams):
    if params.kind == "deep":
        return kernels.rbf_gram(feat_a, feat_b, params.base)
    return kernels.ard_gram(feat_a, feat_b, params.base)


def signal_variance(params: ModelParams):
    return ops.exp(params.base.log_signal_variance)


def train_cov(x_std, params: ModelParams):
    """K + tau^-1 I on the (standardized) training inputs."""
    feats = features(x_std, params)
    k = cross_cov(feats, feats, params)
    n = np.shape(ops.value_of(x_std))[0]
    return k + ops.exp(-params.log_tau) * np.eye(n), feats


# -- posterior -------------------------------------------------------------------


@dataclass
class GpPosterior:
    """Cached solve state for Eq-style predictions.

    ``cov`` is K + tau^-1 I; ``chol`` its factor (numpy mode only);
    ``alpha`` solves cov @ alpha = y - y_mean.  Empty training data is the
    GP prior: ``cov`` and ``alpha`` are None and predictions fall back to
    (0 + y_mean, signal variance).
    """

    x_std: np.ndarray
    feats: object
    cov: object
    chol: CholFactor | None
    alpha: object
    y_mean: float
    standardizer: Standardizer
    params_version: int

    @property
    def n(self) -> int:
        return int(np.shape(ops.value_of(self.x_std))[0])

    def check_fresh(self, params: ModelParams) -> None:
        if self.params_version != params.version:
            raise CacheInvalid(
                f"posterior built for params version {self.params_version}, "
                f"current version is {params.version}"
            )


def build_posterior(
    data: Dataset | None,
    params: ModelParams,
    standardizer: Standardizer | None = None,
    base_jitter: float = 0.0,
) -> GpPosterior:
    """Factor the training covariance and solve for alpha.

    Pass ``data=None`` for the prior.  When ``params`` carries Tensor
    leaves the posterior pieces stay in the reverse-mode graph.
    """
    if data is None:
        if standardizer is None:
            raise DimensionMismatch("prior posterior needs an explicit standardizer")
        dim = standardizer.center.shape[0]
        return GpPosterior(
            x_std=np.zeros((0, dim)),
            feats=np.zeros((0, 0)),
            cov=None,
            chol=None,
            alpha=None,
            y_mean=0.0,
            standardizer=standardizer,
            params_version=params.version,
        )
    if standardizer is None:
        standardizer = Standardizer.from_bounds(data.domain_bounds)
    x_std = standardizer.transform(data.x)
    cov, feats = train_cov(x_std, params)
    y_mean = float(np.mean(data.y))
    yc = data.y - y_mean
    if isinstance(cov, Tensor):
        alpha = ops.posdef_solve(cov, yc, base_jitter)
        chol = None
    else:
        chol = cholesky_jittered(cov, base_jitter)
        alpha = chol.solve(yc)
    return GpPosterior(
        x_std=x_std,
        feats=feats,
        cov=cov,
        chol=chol,
        alpha=alpha,
        y_mean=y_mean,
        standardizer=standardizer,
        params_version=params.version,
    )


def _solve_cov(post: GpPosterior, rhs):
    if isinstance(rhs, Jet2):
        return rhs._map_linear(lambda c: _solve_cov(post, c))
    if post.chol is not None and not isinstance(rhs, Tensor):
        return post.chol.solve(rhs)
    return ops.posdef_solve(post.cov, rhs)


def _posterior_mean_var(x_batch, post: GpPosterior, params: ModelParams):
    """Batched posterior mean/variance in raw coordinates.

    ``x_batch``: (m, d) array, Tensor, or Jet2.  Returns (mu, var) of the
    noise-free function; var is not floored here.
    """
    xs = (x_batch - post.standardizer.center) / post.standardizer.scale
    feats_q = features(xs, params)
    sv = signal_variance(params)
    if post.n == 0:
        m = np.shape(ops.value_of(x_batch))[0]
        mu = np.zeros(m) + post.y_mean
        if isinstance(x_batch, Jet2):
            mu = Jet2.constant(mu, like=x_batch)
            var = Jet2.constant(sv * np.ones(m), like=x_batch)
        else:
            var = sv * np.ones(m)
        return mu, var
    ks = cross_cov(feats_q, post.feats, params)  # (m, n)
    mu = ks @ post.alpha + post.y_mean
    t = _solve_cov(post, ops.transpose(ks))  # (n, m)
    q = ops.asum(ks * ops.transpose(t), axis=-1)  # (m,)
    var = sv - q
    return mu, var


def posterior_predict(x_star, post: GpPosterior, params: ModelParams):
    """Posterior mean and variance at one raw-coordinate point.

    Variance is floored at VAR_FLOOR so downstream square roots stay
    finite.
    """
    post.check_fresh(params)
    x_star = np.asarray(x_star, dtype=np.float64).reshape(1, -1)
    mu, var = _posterior_mean_var(x_star, post, params)
    return float(ops.value_of(mu)[0]), float(max(ops.value_of(var)[0], VAR_FLOOR))


def predict_batch(x, post: GpPosterior, params: ModelParams):
    """Vectorized posterior_predict; returns (mu, var) arrays."""
    post.check_fresh(params)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mu, var = _posterior_mean_var(x, post, params)
    return ops.value_of(mu), np.maximum(ops.value_of(var), VAR_FLOOR)


def posterior_surrogate(x, eps: float, post: GpPosterior, params: ModelParams):
    """One draw of the posterior function: mu(x) + eps * sqrt(v(x)).

    ``x`` may be a raw point (d,), a batch (m, d), or a Jet2 seeded on raw
    coordinates, in which case the result carries input derivatives.  The
    variance is floored inside the square root (see autodiff.SQRT_FLOOR).
    """
    post.check_fresh(params)
    single = False
    if not isinstance(x, (Jet2, Tensor)):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
            single = True
    mu, var = _posterior_mean_var(x, post, params)
    out = mu + float(eps) * ops.sqrt(var)
    if single:
        return out[0] if isinstance(out, np.ndarray) else out
    return out


# -- objective and gradients -----------------------------------------------------


def log_marginal_likelihood(
    data: Dataset,
    params: ModelParams,
    standardizer: Standardizer | None = None,
    base_jitter: float = 0.0,
):
    """log N(y_c | 0, K + tau^-1 I) with y centered by its mean."""
    if standardizer is None:
        standardizer = Standardizer.from_bounds(data.domain_bounds)
    x_std = standardizer.transform(data.x)
    cov, _ = train_cov(x_std, params)
    yc = data.y - float(np.mean(data.y))
    return ops.mvn_logpdf_zero(yc, cov, base_jitter)


def param_gradient(loss, params: ModelParams):
    """Loss value and flat gradient with respect to every parameter.

    ``loss`` receives a tensorized ModelParams view and must return a
    scalar.  The gradient vector follows the canonical flattening order;
    parameters the loss ignores get exact zeros.
    """
    view, leaves = params.as_tensors()
    root = loss(view)
    value = float(ops.value_of(root))
    grads = collect_gradients(root, leaves)
    flat = np.concatenate([g.ravel() for g in grads]) if grads else np.zeros(0)
    return value, flat
