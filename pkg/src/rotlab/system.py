"""A single normalized linear layer driven by i.i.d. data, used as a
desk-scale testbed for weight-norm equilibrium.

The map is f(X) = gamma_out * N(W (gamma_in * X)) where N normalizes each
output feature across the batch (batch norm without affine parameters). Only
W trains; the gains are fixed at init and exist to give every input and
output channel its own variance. Inputs are standard normal. In random-walk
mode the output gradients are sampled i.i.d. normal too, which makes each
row of dL/dW an isotropic random vector orthogonal to the row of W (the
normalization guarantees orthogonality). In synthetic mode the output
gradients instead come from a mean-squared error against fixed random
targets, which leaves a persistent radial gradient component for
effective-decay experiments.

Batch norm backward is implemented in the exact eps-inclusive form

    dL/dx = (u - mean(u) - x_hat * mean(u * x_hat)) / sqrt(var + eps)

obtained by differentiating through the batch mean and variance. Two exact
consequences, for any eps: <dL/dx, 1> = 0, and <dL/dx, x_hat> vanishes
proportionally to eps/(var + eps). Finite-difference checks therefore hold
at any eps, while the orthogonality and scale-invariance identities are
exact only as eps -> 0.

Rows of W are the natural units: each output feature is normalized
separately, so scaling one row leaves f(X) unchanged (at eps=0) and scales
that row's gradient down by the same factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .core import RngStream

# RngStream substream keys, fixed so that every consumer of a seed draws
# from a disjoint stream (in particular the X sequence is identical between
# random-walk and synthetic runs of the same seed).
KEY_INIT = 0
KEY_INPUTS = 1
KEY_OUT_GRADS = 2
KEY_TARGETS = 3

DEFAULT_EPS_BN = 1e-5


@dataclass
class BatchNormCache:
    """Per-feature statistics retained from the forward pass: mean, biased
    variance, and normalized activations."""

    mu: np.ndarray
    var: np.ndarray
    x_hat: np.ndarray
    eps: float


@dataclass
class SimpleSystem:
    W: np.ndarray  # (K, C), rows are neurons
    gamma_in: np.ndarray  # (C,)
    gamma_out: np.ndarray  # (K,)
    B: int
    eps_bn: float
    loss_scale: float
    rng_inputs: RngStream
    rng_out_grads: RngStream
    targets: Optional[np.ndarray] = None  # (K, B), synthetic mode only

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @property
    def C(self) -> int:
        return self.W.shape[1]


def init_system(
    B: int,
    C: int,
    K: int,
    loss_scale: float,
    seed: int,
    eps_bn: float = DEFAULT_EPS_BN,
    synthetic_targets: bool = False,
) -> SimpleSystem:
    """Build the layer: W entries uniform on [-1/sqrt(C), 1/sqrt(C)], gains
    standard normal, all deterministic in seed. With synthetic_targets, a
    fixed K x B standard-normal target matrix is drawn for the MSE mode."""
    if B < 1 or C < 1 or K < 1:
        raise ValueError(f"B, C, K must all be >= 1, got B={B}, C={C}, K={K}")
    if loss_scale <= 0:
        raise ValueError(f"loss_scale must be > 0, got {loss_scale}")
    if eps_bn < 0:
        raise ValueError(f"eps_bn must be >= 0, got {eps_bn}")
    init_rng = RngStream(seed, KEY_INIT)
    bound = 1.0 / np.sqrt(C)
    W = init_rng.uniform(-bound, bound, (K, C))
    gamma_in = init_rng.standard_normal((C,))
    gamma_out = init_rng.standard_normal((K,))
    targets = None
    if synthetic_targets:
        targets = RngStream(seed, KEY_TARGETS).standard_normal((K, B))
    return SimpleSystem(
        W=W,
        gamma_in=gamma_in,
        gamma_out=gamma_out,
        B=B,
        eps_bn=eps_bn,
        loss_scale=loss_scale,
        rng_inputs=RngStream(seed, KEY_INPUTS),
        rng_out_grads=RngStream(seed, KEY_OUT_GRADS),
        targets=targets,
    )


def _bn_forward_rows(z: np.ndarray, eps: float) -> Tuple[np.ndarray, BatchNormCache]:
    """Normalize each row of z across its columns (features x batch)."""
    mu = np.mean(z, axis=-1, keepdims=True)
    centered = z - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    if eps == 0.0 and np.any(var == 0.0):
        raise ValueError("batch variance is zero with eps=0; normalization is undefined")
    x_hat = centered / np.sqrt(var + eps)
    return x_hat, BatchNormCache(mu=mu, var=var, x_hat=x_hat, eps=eps)


def _bn_backward_rows(cache: BatchNormCache, upstream: np.ndarray) -> np.ndarray:
    """Exact gradient through per-row normalization (see module docstring)."""
    if upstream.shape != cache.x_hat.shape:
        raise ValueError(
            f"upstream shape {upstream.shape} != cached activation shape {cache.x_hat.shape}"
        )
    mean_u = np.mean(upstream, axis=-1, keepdims=True)
    mean_ux = np.mean(upstream * cache.x_hat, axis=-1, keepdims=True)
    return (upstream - mean_u - cache.x_hat * mean_ux) / np.sqrt(cache.var + cache.eps)


def bn_forward(x: np.ndarray, eps: float) -> Tuple[np.ndarray, BatchNormCache]:
    """Normalize a single feature's batch vector: (x - mean) / sqrt(var + eps).
    Raises when eps=0 and the batch variance is zero."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"bn_forward expects a 1-d batch vector, got shape {x.shape}")
    out, cache = _bn_forward_rows(x[None, :], eps)
    return out[0], cache


def bn_backward(cache: BatchNormCache, upstream: np.ndarray) -> np.ndarray:
    """Gradient of <upstream, bn_forward(x)> with respect to x, using the
    cached forward statistics."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.ndim != 1:
        raise ValueError(f"bn_backward expects a 1-d upstream vector, got shape {upstream.shape}")
    return _bn_backward_rows(cache, upstream[None, :])[0]


@dataclass
class ForwardContext:
    """Everything the backward pass needs from one forward evaluation."""

    a: np.ndarray  # gamma_in * X, shape (C, B)
    bn: BatchNormCache


def forward(sys: SimpleSystem, X: np.ndarray) -> Tuple[np.ndarray, ForwardContext]:
    """Evaluate f(X) for a (C, B) input batch. Returns the (K, B) output and
    the context for backward."""
    a = sys.gamma_in[:, None] * X
    z = sys.W @ a
    x_hat, bn = _bn_forward_rows(z, sys.eps_bn)
    return sys.gamma_out[:, None] * x_hat, ForwardContext(a=a, bn=bn)


def backward(sys: SimpleSystem, ctx: ForwardContext, out_grad: np.ndarray) -> np.ndarray:
    """Backpropagate dL/df through the output gains, the per-feature
    normalization, and the linear map; returns dL/dW of shape (K, C)."""
    u = sys.gamma_out[:, None] * out_grad
    dz = _bn_backward_rows(ctx.bn, u)
    return dz @ ctx.a.T


@dataclass
class StepData:
    """One sampled forward/backward pass."""

    grad: np.ndarray  # dL/dW, (K, C)
    output: np.ndarray  # f(X), (K, B)
    out_grad: np.ndarray  # dL/df, (K, B)


def sample_inputs(sys: SimpleSystem) -> np.ndarray:
    return sys.rng_inputs.standard_normal((sys.C, sys.B))


def forward_backward(sys: SimpleSystem) -> StepData:
    """Random-walk step: fresh standard-normal inputs, output gradients
    i.i.d. normal with std loss_scale/(K*B)."""
    X = sample_inputs(sys)
    y, ctx = forward(sys, X)
    std = sys.loss_scale / (sys.K * sys.B)
    G = std * sys.rng_out_grads.standard_normal((sys.K, sys.B))
    return StepData(grad=backward(sys, ctx, G), output=y, out_grad=G)


def forward_backward_synthetic(sys: SimpleSystem) -> StepData:
    """Synthetic-loss step: fresh inputs, output gradients from the MSE
    loss L = loss_scale/(2*K*B) * sum((f(X) - targets)^2), whose scale
    matches the random-walk gradients at loss_scale=1."""
    if sys.targets is None:
        raise ValueError("synthetic mode needs targets; init the system with synthetic_targets=True")
    X = sample_inputs(sys)
    y, ctx = forward(sys, X)
    G = sys.loss_scale / (sys.K * sys.B) * (y - sys.targets)
    return StepData(grad=backward(sys, ctx, G), output=y, out_grad=G)


def synthetic_probe_loss(sys: SimpleSystem, X: np.ndarray) -> float:
    """Scalar loss matching forward_backward_synthetic's gradients, for
    finite-difference checks."""
    if sys.targets is None:
        raise ValueError("synthetic mode needs targets; init the system with synthetic_targets=True")
    y, _ = forward(sys, X)
    diff = y - sys.targets
    return float(sys.loss_scale / (2.0 * sys.K * sys.B) * np.sum(diff * diff))
