"""Distance kernels k(d) with k(0) = 1, decaying as the token offset grows.

Each kernel is used multiplicatively on post-softmax attention scores; its
log is the additive bias added to attention logits.  The log form is always
computed in closed form so it stays finite long after exp underflows (a
Gaussian at slope 1/64 is below the double-precision floor by d ~ 220).

All evaluation functions accept a scalar distance or an ndarray of
distances and vectorize over it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, KernelOverflowError


def _require_positive(name: str, value: float) -> None:
    if not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive finite real, got {value!r}")


@dataclass(frozen=True)
class Exponential:
    """k(d) = exp(-slope * d)."""

    slope: float

    def __post_init__(self) -> None:
        _require_positive("slope", self.slope)


@dataclass(frozen=True)
class Gaussian:
    """k(d) = exp(-slope * d**2)."""

    slope: float

    def __post_init__(self) -> None:
        _require_positive("slope", self.slope)


@dataclass(frozen=True)
class KerpleLog:
    """k(d) = (1 + r2*d) ** (-r1), the polynomial-decay kernel.

    Both parameters are positive scalars and are the only kernel parameters
    this library treats as learnable alongside the T5 bucket table.
    """

    r1: float
    r2: float

    def __post_init__(self) -> None:
        _require_positive("r1", self.r1)
        _require_positive("r2", self.r2)


@dataclass(frozen=True)
class SandwichSinusoidal:
    """k(d) = exp(scale * (p_i . p_j - dim/2)) for sinusoidal position vectors.

    p_i . p_j depends only on d = |i - j| and peaks at dim/2 when d = 0, so
    subtracting dim/2 pins k(0) = 1.  `scale` tunes the decay rate per head.
    Unlike the other kernels the inner product oscillates, so k is not
    monotone in d.
    """

    dim: int
    scale: float

    def __post_init__(self) -> None:
        if self.dim <= 0 or self.dim % 2 != 0:
            raise ConfigError(f"dim must be a positive even integer, got {self.dim!r}")
        _require_positive("scale", self.scale)

    def frequencies(self) -> np.ndarray:
        half = self.dim // 2
        return 10000.0 ** (-2.0 * np.arange(half) / self.dim)


@dataclass(frozen=True)
class T5Bucket:
    """k(d) = exp(table[min(d, K)] - table[0]), the clamped bucket bias.

    The table holds K+1 values; distances at or beyond K share the last
    bucket.  Subtracting table[0] pins k(0) = 1.  k stays within (0, 1]
    whenever the table does not rise above table[0] (always true for the
    zero-initialized default).
    """

    num_buckets: int
    table: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.num_buckets < 1:
            raise ConfigError(f"num_buckets must be >= 1, got {self.num_buckets!r}")
        table = tuple(float(t) for t in self.table)
        if len(table) != self.num_buckets + 1:
            raise ConfigError(
                f"table must hold num_buckets+1 = {self.num_buckets + 1} values, "
                f"got {len(table)}"
            )
        if not np.all(np.isfinite(table)):
            raise ConfigError("table entries must be finite")
        object.__setattr__(self, "table", table)


KernelKind = Exponential | Gaussian | KerpleLog | SandwichSinusoidal | T5Bucket


def _as_distance(d):
    arr = np.asarray(d, dtype=np.float64)
    if np.any(arr < 0):
        raise ConfigError("distances must be non-negative")
    return arr


def eval_log_kernel(kind: KernelKind, d) -> np.ndarray | float:
    """log k(d), in closed form per variant.  Always finite for valid params."""
    dist = _as_distance(d)
    if isinstance(kind, Exponential):
        out = -kind.slope * dist
    elif isinstance(kind, Gaussian):
        out = -kind.slope * dist * dist
    elif isinstance(kind, KerpleLog):
        out = -kind.r1 * np.log1p(kind.r2 * dist)
    elif isinstance(kind, SandwichSinusoidal):
        inner = np.cos(np.multiply.outer(dist, kind.frequencies())).sum(axis=-1)
        out = kind.scale * (inner - kind.dim / 2)
    elif isinstance(kind, T5Bucket):
        table = np.asarray(kind.table)
        idx = np.minimum(dist, kind.num_buckets).astype(np.int64)
        out = table[idx] - table[0]
    else:
        raise TypeError(f"unknown kernel kind: {kind!r}")
    return out if np.ndim(d) else float(out)


def eval_kernel(kind: KernelKind, d) -> np.ndarray | float:
    """k(d) itself.  May underflow to 0.0 for steep kernels at large d."""
    log_k = eval_log_kernel(kind, d)
    with np.errstate(over="ignore"):
        out = np.exp(log_k)
    if not np.all(np.isfinite(out)):
        bad = np.asarray(d)[~np.isfinite(np.atleast_1d(out))] if np.ndim(d) else d
        raise KernelOverflowError(f"kernel {kind!r} overflowed at distance {bad}")
    return out


def grad_log_kernel_params(kind: KernelKind, d) -> dict[str, np.ndarray | float]:
    """d(log k)/d(theta) per learnable parameter; {} for fixed-parameter kinds.

    The log-derivatives are bounded even where k itself underflows, which is
    what the fusion gradients need.
    """
    dist = _as_distance(d)
    if isinstance(kind, KerpleLog):
        grads = {
            "r1": -np.log1p(kind.r2 * dist),
            "r2": -kind.r1 * dist / (1.0 + kind.r2 * dist),
        }
    elif isinstance(kind, T5Bucket):
        idx = np.minimum(dist, kind.num_buckets).astype(np.int64)
        grads = {}
        for b in range(kind.num_buckets + 1):
            g = (idx == b).astype(np.float64)
            if b == 0:
                g = g - 1.0
            grads[f"table[{b}]"] = g
    else:
        return {}
    if not np.ndim(d):
        grads = {name: float(g) for name, g in grads.items()}
    return grads


def grad_kernel_params(kind: KernelKind, d) -> dict[str, np.ndarray | float]:
    """Analytic dk/d(theta) at distance d for each learnable parameter.

    KerpleLog exposes r1 and r2; T5Bucket exposes every table entry (keys
    "table[0]" .. "table[K]").  Kinds with no learnable parameters return an
    empty map.
    """
    log_grads = grad_log_kernel_params(kind, d)
    if not log_grads:
        return {}
    k = eval_kernel(kind, d)
    return {name: g * k for name, g in log_grads.items()}


def param_names(kind: KernelKind) -> tuple[str, ...]:
    """Names of the learnable parameters of this kind, in grad order."""
    if isinstance(kind, KerpleLog):
        return ("r1", "r2")
    if isinstance(kind, T5Bucket):
        return tuple(f"table[{b}]" for b in range(kind.num_buckets + 1))
    return ()
