"""Causal softmax attention with additive relative bias, forward and backward.

The reference path is float64 throughout.  Shapes follow (H, L, d_h) for a
single sequence; any leading batch dimensions broadcast, e.g. (B, H, L, d_h).

The additive bias enters the logits; masked positions (j > i) become -inf
before the row softmax so their post-softmax weight is exactly zero.  The
multiplicative formulation — exp(logits) times exp(bias), renormalized —
is mathematically identical and check_multiplicative_equivalence measures
the numerical gap between the two routes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fusion as F
from .biasmat import BiasPack
from .errors import ConfigError, NumericsError, PreconditionError


@dataclass
class AttentionOutput:
    """Attention values and the row-stochastic post-softmax weights."""

    out: np.ndarray
    post_softmax: np.ndarray


@dataclass
class AttentionGrads:
    """Gradients from attention_backward.

    d_distance_bias[h, d] collects d(loss)/d(bias at distance d) summed over
    every (i, j) pair with i - j = d (and over any batch dims).  weight_grads
    and param_grads chain further into each head's fusion spec when the pack
    retains one; param_grads[h] holds one dict per fusion component.
    """

    d_q: np.ndarray
    d_k: np.ndarray
    d_v: np.ndarray
    d_distance_bias: np.ndarray
    weight_grads: list[np.ndarray] | None = None
    param_grads: list[tuple[dict[str, float], ...]] | None = None


def _check_shapes(q, k, v, pack: BiasPack) -> tuple[int, int, int]:
    if q.shape != k.shape or q.shape != v.shape:
        raise ConfigError(f"Q/K/V shapes differ: {q.shape}, {k.shape}, {v.shape}")
    if q.ndim < 3:
        raise ConfigError(f"expected (..., H, L, d_h) tensors, got shape {q.shape}")
    heads, length, d_h = q.shape[-3:]
    if heads != pack.heads:
        raise ConfigError(f"tensors have {heads} heads, bias pack has {pack.heads}")
    if length > pack.length:
        raise ConfigError(f"sequence length {length} exceeds bias pack length {pack.length}")
    return heads, length, d_h


def attention_forward(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    pack: BiasPack,
    scale: float | None = None,
    check_finite: bool = True,
) -> AttentionOutput:
    """Row-softmax attention over scale*QK^T + bias with a causal mask.

    scale defaults to 1/sqrt(d_h).  Rows are max-subtracted before exp for
    stability; masked entries come out exactly 0 and each unmasked row sums
    to 1.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    heads, length, d_h = _check_shapes(q, k, v, pack)
    if scale is None:
        scale = 1.0 / np.sqrt(d_h)
    if check_finite and not (
        np.isfinite(q).all() and np.isfinite(k).all() and np.isfinite(v).all()
    ):
        raise NumericsError("non-finite values in Q/K/V")

    logits = scale * (q @ np.swapaxes(k, -1, -2)) + pack.additive_stack(length)
    if check_finite and not np.isfinite(logits).all():
        bad = np.argwhere(~np.isfinite(logits))[0]
        raise NumericsError(f"non-finite logits at head {bad[-3]}, row {bad[-2]}")
    idx = np.arange(length)
    mask = idx[None, :] <= idx[:, None]
    logits = np.where(mask, logits, -np.inf)

    shifted = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    post = weights / weights.sum(axis=-1, keepdims=True)
    return AttentionOutput(out=post @ v, post_softmax=post)


def check_multiplicative_equivalence(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    pack: BiasPack,
    scale: float | None = None,
) -> float:
    """Max |post_softmax| gap between the additive-logit and multiplicative routes.

    The second route evaluates exp(scale*QK^T) and exp(bias) separately in
    linear space and renormalizes, so it is only usable where that cannot
    overflow: L <= 1024 and |logits| <= 40 are required preconditions.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    heads, length, d_h = _check_shapes(q, k, v, pack)
    if scale is None:
        scale = 1.0 / np.sqrt(d_h)
    if length > 1024:
        raise PreconditionError(f"linear-space route needs L <= 1024, got {length}")
    qk = scale * (q @ np.swapaxes(k, -1, -2))
    if np.abs(qk).max() > 40:
        raise PreconditionError(
            f"linear-space route needs |logits| <= 40, got {np.abs(qk).max():.3g}"
        )

    additive = attention_forward(q, k, v, pack, scale=scale).post_softmax

    idx = np.arange(length)
    mask = idx[None, :] <= idx[:, None]
    mult_kernel = np.where(
        mask, np.exp(pack.distance_bias[:, np.abs(idx[:, None] - idx[None, :])]), 0.0
    )
    unnorm = np.exp(qk) * mult_kernel
    multiplicative = unnorm / unnorm.sum(axis=-1, keepdims=True)
    return float(np.abs(additive - multiplicative).max())


def attention_backward(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    pack: BiasPack,
    output: AttentionOutput,
    d_out: np.ndarray,
    scale: float | None = None,
    bias_grads: bool = True,
) -> AttentionGrads:
    """Exact reverse-mode gradients through attention_forward.

    Needs the forward's AttentionOutput (its post_softmax is reused).  The
    Toeplitz broadcast means the bias gradient at distance d is the sum of
    the logit gradients over every pair at that distance; those chain into
    fusion weights and kernel parameters via grad_fusion when the pack
    carries its fusion specs.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    heads, length, d_h = _check_shapes(q, k, v, pack)
    if scale is None:
        scale = 1.0 / np.sqrt(d_h)
    post = output.post_softmax
    if post.shape != q.shape[:-1] + (length,):
        raise ConfigError(
            f"retained post_softmax shape {post.shape} does not match inputs"
        )
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != q.shape:
        raise ConfigError(f"upstream gradient shape {d_out.shape} != {q.shape}")

    d_v = np.swapaxes(post, -1, -2) @ d_out
    d_post = d_out @ np.swapaxes(v, -1, -2)
    d_logits = post * (d_post - (d_post * post).sum(axis=-1, keepdims=True))
    d_q = scale * (d_logits @ k)
    d_k = scale * (np.swapaxes(d_logits, -1, -2) @ q)

    # Sum the logit gradient along each diagonal (= distance), batch included.
    summed = d_logits.reshape((-1, heads, length, length)).sum(axis=0)
    idx = np.arange(length)
    dist = (idx[:, None] - idx[None, :]).ravel()
    keep = dist >= 0
    d_distance = np.stack(
        [
            np.bincount(dist[keep], weights=summed[h].ravel()[keep], minlength=length)
            for h in range(heads)
        ]
    )

    weight_grads = None
    param_grads = None
    if bias_grads and pack.specs is not None:
        d_vec = np.arange(length)
        weight_grads = []
        param_grads = []
        for h in range(heads):
            g = F.grad_fusion(pack.specs[h], d_vec)
            weight_grads.append(g.weight_partials @ d_distance[h])
            param_grads.append(
                tuple(
                    {name: float(arr @ d_distance[h]) for name, arr in comp.items()}
                    for comp in g.param_partials
                )
            )
    return AttentionGrads(d_q, d_k, d_v, d_distance, weight_grads, param_grads)
