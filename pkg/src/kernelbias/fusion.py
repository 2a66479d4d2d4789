"""Weighted fusion of distance kernels in probability space.

A fused kernel is sum_i w_i * k_i(d) with non-negative weights; its log is
the additive attention bias.  Fusion always happens on the kernel values,
never by averaging log-biases, and the log is taken through a max-shifted
log-sum-exp so it stays finite even when every component underflows
linearly.

Presets wire the standard combinations: the parameter-free mix (exponential
+ half-slope exponential + Gaussian at weights 1/3), the parametric mix
(polynomial KerpleLog + Gaussian at weights 1/2), and the single-kernel
baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from . import slopes as S
from .errors import ConfigError


@dataclass(frozen=True)
class FusionSpec:
    """An ordered list of (weight, kernel) pairs.

    With normalize=True the weights are rescaled to sum to 1 before use;
    post-softmax attention is invariant to that rescaling either way.
    """

    components: tuple[tuple[float, K.KernelKind], ...]
    normalize: bool = True

    def __post_init__(self) -> None:
        comps = tuple((float(w), kind) for w, kind in self.components)
        if not comps:
            raise ConfigError("fusion needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ConfigError("fusion weights must be non-negative finite reals")
        if not np.any(weights > 0):
            raise ConfigError("at least one fusion weight must be positive")
        object.__setattr__(self, "components", comps)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def kinds(self) -> tuple[K.KernelKind, ...]:
        return tuple(kind for _, kind in self.components)


def _logsumexp(a: np.ndarray, axis: int = 0) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


def _component_log_terms(spec: FusionSpec, d) -> np.ndarray:
    """log(w_i) + log(k_i(d)) stacked over components, zero weights dropped."""
    terms = [
        np.log(w) + np.asarray(K.eval_log_kernel(kind, d), dtype=np.float64)
        for w, kind in spec.components
        if w > 0
    ]
    return np.stack(terms, axis=0)


def fused_log_bias(spec: FusionSpec, d) -> np.ndarray | float:
    """log(sum_i w_i k_i(d)), finite for any distance.

    With normalize=True the d = 0 value is exactly 0.0 (the normalizer is
    subtracted in log space, and every kernel's log is exactly 0 at d = 0).
    """
    lse = _logsumexp(_component_log_terms(spec, d))
    if spec.normalize:
        positive = np.log(spec.weights[spec.weights > 0])
        lse = lse - _logsumexp(positive)
    return lse if np.ndim(d) else float(lse)


def fused_kernel(spec: FusionSpec, d) -> np.ndarray | float:
    """sum_i w_i k_i(d) (weights normalized first when requested).

    Computed as exp of the log-space fusion so that d = 0 gives exactly 1.0
    for normalized weights.  May underflow to 0.0 at extreme distances.
    """
    return np.exp(fused_log_bias(spec, d))


@dataclass
class FusionGrad:
    """Gradients of the un-normalized log fusion log(sum_i w_i k_i(d)).

    weight_partials[i] = k_i(d) / sum_j w_j k_j(d), taken with respect to the
    raw weights (no renormalization term; rescaling all weights only shifts
    the bias by a constant, which softmax ignores).  param_partials[i] maps
    each learnable parameter of component i to d(log-fusion)/d(theta).
    """

    weight_partials: np.ndarray
    param_partials: tuple[dict[str, np.ndarray | float], ...]


def grad_fusion(spec: FusionSpec, d) -> FusionGrad:
    """Analytic weight and kernel-parameter gradients of fused_log_bias.

    Evaluated in log space: each ratio is exp(log-numerator - log-denominator)
    with the denominator's log-sum-exp shared, so the partials stay finite
    even when individual kernels underflow.
    """
    dist = np.asarray(d, dtype=np.float64)
    weights = spec.weights
    log_k = np.stack(
        [np.asarray(K.eval_log_kernel(kind, dist)) for _, kind in spec.components]
    )
    with np.errstate(divide="ignore"):
        log_w = np.log(weights).reshape((-1,) + (1,) * dist.ndim)
    lse = _logsumexp(np.where(np.isneginf(log_w), -np.inf, log_w + log_k))

    weight_partials = np.exp(log_k - lse)
    param_partials = []
    for i, (w, kind) in enumerate(spec.components):
        log_grads = K.grad_log_kernel_params(kind, dist)
        if not log_grads or w == 0:
            param_partials.append({name: np.zeros_like(dist) for name in log_grads})
            continue
        share = np.exp(np.log(w) + log_k[i] - lse)
        param_partials.append({name: g * share for name, g in log_grads.items()})

    if not np.ndim(d):
        weight_partials = weight_partials.reshape(-1)
        param_partials = [
            {name: float(g) for name, g in pp.items()} for pp in param_partials
        ]
    return FusionGrad(weight_partials, tuple(param_partials))


# ---------------------------------------------------------------------------
# Presets


@dataclass(frozen=True)
class MepParamFree:
    """Exponential + half-slope exponential + Gaussian, weights 1/3 each."""

    slopes: tuple[float, ...]

    @property
    def num_heads(self) -> int:
        return len(self.slopes)


@dataclass(frozen=True)
class MepParametric:
    """KerpleLog(r1, r2) + Gaussian, weights 1/2 each; r1, r2 learnable."""

    slopes: tuple[float, ...]
    r1: tuple[float, ...]
    r2: tuple[float, ...]

    def __post_init__(self) -> None:
        if not len(self.slopes) == len(self.r1) == len(self.r2):
            raise ConfigError("slopes, r1, r2 must all have one entry per head")

    @property
    def num_heads(self) -> int:
        return len(self.slopes)


@dataclass(frozen=True)
class SingleKernel:
    """A one-kernel baseline: one KernelKind per head, weight 1."""

    label: str
    kinds: tuple[K.KernelKind, ...]

    @property
    def num_heads(self) -> int:
        return len(self.kinds)


FusionPreset = MepParamFree | MepParametric | SingleKernel

PRESET_NAMES = ("alibi", "gaussian", "kerple-log", "sandwich", "t5", "mep-free", "mep-param")

# Presets whose kernels are non-increasing in distance out of the box; the
# sandwich kernel's sinusoidal inner product oscillates and is excluded from
# monotonicity guarantees.
MONOTONE_PRESET_NAMES = ("alibi", "gaussian", "kerple-log", "t5", "mep-free", "mep-param")

DEFAULT_SANDWICH_DIM = 128
DEFAULT_T5_BUCKETS = 32


def make_preset(preset: FusionPreset, head: int) -> FusionSpec:
    """The FusionSpec for one head of a preset."""
    if head < 0 or head >= preset.num_heads:
        raise ConfigError(f"head {head} out of range for {preset.num_heads} heads")
    if isinstance(preset, MepParamFree):
        m = preset.slopes[head]
        return FusionSpec(
            (
                (1.0 / 3.0, K.Exponential(m)),
                (1.0 / 3.0, K.Exponential(0.5 * m)),
                (1.0 / 3.0, K.Gaussian(m)),
            )
        )
    if isinstance(preset, MepParametric):
        return FusionSpec(
            (
                (0.5, K.KerpleLog(preset.r1[head], preset.r2[head])),
                (0.5, K.Gaussian(preset.slopes[head])),
            )
        )
    if isinstance(preset, SingleKernel):
        return FusionSpec(((1.0, preset.kinds[head]),))
    raise TypeError(f"unknown preset: {preset!r}")


def preset_label(preset: FusionPreset) -> str:
    if isinstance(preset, MepParamFree):
        return "mep-free"
    if isinstance(preset, MepParametric):
        return "mep-param"
    return preset.label


def resolve_preset(
    name: str,
    heads: int,
    schedule: S.SlopeSchedule | None = None,
    *,
    r1: np.ndarray | None = None,
    r2: np.ndarray | None = None,
    sandwich_dim: int = DEFAULT_SANDWICH_DIM,
    t5_buckets: int = DEFAULT_T5_BUCKETS,
    t5_tables: np.ndarray | None = None,
) -> FusionPreset:
    """Build a named preset with default parameters.

    Slopes come from the schedule (geometric by default); KerpleLog r1/r2
    default to 1 per head; the sandwich scale per head reuses the slope
    schedule; T5 tables start at zero (a flat, bias-free kernel).
    """
    schedule = schedule if schedule is not None else S.Geometric(heads)
    if S.num_heads(schedule) != heads:
        raise ConfigError(
            f"schedule is for {S.num_heads(schedule)} heads, model has {heads}"
        )
    slopes = tuple(S.slopes_for_heads(schedule))
    ones = tuple(np.ones(heads))
    r1 = ones if r1 is None else tuple(np.asarray(r1, dtype=float))
    r2 = ones if r2 is None else tuple(np.asarray(r2, dtype=float))

    if name == "alibi":
        return SingleKernel("alibi", tuple(K.Exponential(m) for m in slopes))
    if name == "gaussian":
        return SingleKernel("gaussian", tuple(K.Gaussian(m) for m in slopes))
    if name == "kerple-log":
        return SingleKernel("kerple-log", tuple(K.KerpleLog(a, b) for a, b in zip(r1, r2)))
    if name == "sandwich":
        return SingleKernel(
            "sandwich", tuple(K.SandwichSinusoidal(sandwich_dim, m) for m in slopes)
        )
    if name == "t5":
        if t5_tables is None:
            t5_tables = np.zeros((heads, t5_buckets + 1))
        return SingleKernel(
            "t5",
            tuple(K.T5Bucket(t5_buckets, tuple(t5_tables[h])) for h in range(heads)),
        )
    if name == "mep-free":
        return MepParamFree(slopes)
    if name == "mep-param":
        return MepParametric(slopes, r1, r2)
    raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")
