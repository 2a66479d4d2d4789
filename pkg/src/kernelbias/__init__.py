"""Distance-kernel relative positional biases for softmax attention.

The library covers the full path from scalar distance kernels to trained
models: a kernel zoo with analytic parameter gradients, weighted kernel
fusion in probability space, per-head causal bias matrices, biased
attention with an exact backward pass, figure-style analysis utilities,
and a small deterministic language model for train-short/test-long
perplexity comparisons.
"""

from .analysis import (
    CurveSeries,
    SmoothnessReport,
    decay_curves,
    derivative_crossover_scan,
    heatmap_export,
    smoothness_metric,
)
from .attention import (
    AttentionGrads,
    AttentionOutput,
    attention_backward,
    attention_forward,
    check_multiplicative_equivalence,
)
from .biasmat import (
    BiasPack,
    build_bias,
    dump_csv,
    load_cache,
    load_csv,
    multiplicative_view,
    save_cache,
)
from .errors import (
    ConfigError,
    KernelBiasError,
    KernelOverflowError,
    NumericsError,
    PreconditionError,
    ResourceLimitError,
)
from .fusion import (
    FusionGrad,
    FusionSpec,
    MepParamFree,
    MepParametric,
    MONOTONE_PRESET_NAMES,
    PRESET_NAMES,
    SingleKernel,
    fused_kernel,
    fused_log_bias,
    grad_fusion,
    make_preset,
    preset_label,
    resolve_preset,
)
from .kernels import (
    Exponential,
    Gaussian,
    KerpleLog,
    SandwichSinusoidal,
    T5Bucket,
    eval_kernel,
    eval_log_kernel,
    grad_kernel_params,
)
from .lm import (
    EvalReport,
    EvalRow,
    MarkovChar,
    ModelConfig,
    RepeatCopy,
    TrainConfig,
    TrainResult,
    compare_presets,
    evaluate_perplexity,
    generate_corpus,
    train,
)
from .slopes import (
    Geometric,
    Replaced,
    UniformExponent,
    parse_schedule_spec,
    scale_slopes,
    slopes_for_heads,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
