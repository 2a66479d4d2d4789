"""A small trainable causal language model for length-extrapolation checks.

Architecture (fixed for determinism): token embedding, N pre-norm residual
blocks of biased multi-head attention plus a tanh feed-forward layer, a
final layer norm, and an untied vocabulary projection.  There are no
absolute position embeddings; all position information enters through the
distance-bias pack, so the model evaluates at any sequence length.

The forward and backward passes are written by hand on float64 numpy
arrays; the backward is exact reverse-mode and is validated against finite
differences in the test suite.  Training is deterministic given the config
seeds: parameter init, data order, and synthetic corpora each draw from
their own seeded generators.

Learnable bias parameters exist for the kerple-log and mep-param presets:
per-layer, per-head r1/r2 stored as log-values so positivity is structural.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import attention as A
from . import biasmat as B
from . import fusion as F
from . import slopes as S
from .biasmat import _atomic_write
from .errors import ConfigError, NumericsError

LN_EPS = 1e-5
LEARNABLE_BIAS_PRESETS = ("kerple-log", "mep-param")


# ---------------------------------------------------------------------------
# Configs and tasks


@dataclass(frozen=True)
class ModelConfig:
    vocab: int = 64
    d_model: int = 64
    heads: int = 8
    layers: int = 2
    d_ff: int = 128
    train_len: int = 64
    preset: str = "alibi"
    seed: int = 0
    schedule: S.SlopeSchedule | None = None

    def __post_init__(self) -> None:
        if self.vocab < 2:
            raise ConfigError(f"vocab must be >= 2, got {self.vocab}")
        if self.train_len < 8:
            raise ConfigError(f"train_len must be >= 8, got {self.train_len}")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by heads {self.heads}"
            )
        if self.layers < 1 or self.d_ff < 1:
            raise ConfigError("layers and d_ff must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch: int = 16
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float | None = None

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if not 0 < self.lr < 1:
            raise ConfigError(f"lr must lie in (0, 1), got {self.lr}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd|adam, got {self.optimizer!r}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be positive, got {self.grad_clip}")


@dataclass(frozen=True)
class RepeatCopy:
    """A random block of `period` tokens tiled to corpus length."""

    period: int
    corpus_tokens: int = 65536
    seed: int = 0

    def __post_init__(self) -> None:
        if self.period < 2:
            raise ConfigError(f"period must be >= 2, got {self.period}")
        if self.corpus_tokens < self.period:
            raise ConfigError("corpus_tokens must cover at least one period")


@dataclass(frozen=True)
class MarkovChar:
    """An order-k Markov chain with a fixed random transition table."""

    order: int
    corpus_tokens: int = 65536
    seed: int = 0

    def __post_init__(self) -> None:
        if self.order not in (1, 2):
            raise ConfigError(f"order must be 1 or 2, got {self.order}")
        if self.corpus_tokens < self.order + 1:
            raise ConfigError("corpus_tokens too small for the chain order")


TaskSpec = RepeatCopy | MarkovChar


def markov_transition_table(task: MarkovChar, vocab: int) -> np.ndarray:
    """The generating conditional table, shape (vocab,)*order + (vocab,)."""
    rng = np.random.default_rng(task.seed)
    rows = rng.dirichlet(np.full(vocab, 0.5), size=vocab**task.order)
    return rows.reshape((vocab,) * task.order + (vocab,))


def generate_corpus(task: TaskSpec, vocab: int) -> np.ndarray:
    """Deterministic synthetic token stream for a task spec."""
    rng = np.random.default_rng(task.seed)
    if isinstance(task, RepeatCopy):
        block = rng.integers(0, vocab, task.period)
        reps = -(-task.corpus_tokens // task.period)
        return np.tile(block, reps)[: task.corpus_tokens]
    if isinstance(task, MarkovChar):
        table = markov_transition_table(task, vocab).reshape(-1, vocab)
        cdf = np.cumsum(table, axis=1)
        out = np.empty(task.corpus_tokens, dtype=np.int64)
        out[: task.order] = rng.integers(0, vocab, task.order)
        draws = rng.random(task.corpus_tokens)
        for t in range(task.order, task.corpus_tokens):
            ctx = out[t - 1] if task.order == 1 else out[t - 2] * vocab + out[t - 1]
            out[t] = np.searchsorted(cdf[ctx], draws[t], side="right")
        return np.minimum(out, vocab - 1)
    raise TypeError(f"unknown task: {task!r}")


def split_corpus(corpus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(train, held-out) split; the last 20% is never used for training."""
    cut = int(len(corpus) * 0.8)
    return corpus[:cut], corpus[cut:]


# ---------------------------------------------------------------------------
# Parameters


def init_params(model: ModelConfig) -> dict[str, np.ndarray]:
    """Initial parameter dict.

    Weight matrices are N(0, 0.02^2); gains 1, biases 0.  The draw order is
    fixed and independent of the preset, so two models that differ only in
    preset share identical non-bias initialization for the same seed.
    Learnable bias parameters rho1/rho2 (r = exp(rho)) start at 0, i.e.
    r1 = r2 = 1.
    """
    init_seq, _ = np.random.SeedSequence(model.seed).spawn(2)
    rng = np.random.default_rng(init_seq)
    std = 0.02
    D, Fd, V = model.d_model, model.d_ff, model.vocab
    params: dict[str, np.ndarray] = {"embed": rng.normal(0.0, std, (V, D))}
    for i in range(model.layers):
        p = f"blk{i}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + name] = rng.normal(0.0, std, (D, D))
        params[p + "ff.w1"] = rng.normal(0.0, std, (D, Fd))
        params[p + "ff.w2"] = rng.normal(0.0, std, (Fd, D))
        params[p + "ln1.g"] = np.ones(D)
        params[p + "ln1.b"] = np.zeros(D)
        params[p + "ln2.g"] = np.ones(D)
        params[p + "ln2.b"] = np.zeros(D)
        params[p + "ff.b1"] = np.zeros(Fd)
        params[p + "ff.b2"] = np.zeros(D)
    params["out.w"] = rng.normal(0.0, std, (D, V))
    params["ln_f.g"] = np.ones(D)
    params["ln_f.b"] = np.zeros(D)
    if model.preset in LEARNABLE_BIAS_PRESETS:
        for i in range(model.layers):
            params[f"blk{i}.attn.rho1"] = np.zeros(model.heads)
            params[f"blk{i}.attn.rho2"] = np.zeros(model.heads)
    return params


def _layer_preset(model: ModelConfig, params: dict, layer: int) -> F.FusionPreset:
    schedule = model.schedule if model.schedule is not None else S.Geometric(model.heads)
    if model.preset in LEARNABLE_BIAS_PRESETS:
        r1 = np.exp(params[f"blk{layer}.attn.rho1"])
        r2 = np.exp(params[f"blk{layer}.attn.rho2"])
        return F.resolve_preset(model.preset, model.heads, schedule, r1=r1, r2=r2)
    return F.resolve_preset(model.preset, model.heads, schedule)


def _packs(
    model: ModelConfig,
    params: dict,
    length: int,
    static_cache: dict[int, B.BiasPack] | None = None,
) -> list[B.BiasPack]:
    """One bias pack per layer for this sequence length.

    Static presets share a single pack across layers (cacheable by length);
    learnable presets rebuild from the current r-parameters every call.
    """
    if model.preset not in LEARNABLE_BIAS_PRESETS:
        if static_cache is not None and length in static_cache:
            pack = static_cache[length]
        else:
            pack = B.build_bias(
                _layer_preset(model, params, 0),
                model.heads,
                length,
                schedule=model.schedule,
            )
            if static_cache is not None:
                static_cache[length] = pack
        return [pack] * model.layers
    return [
        B.build_bias(
            _layer_preset(model, params, i), model.heads, length, schedule=model.schedule
        )
        for i in range(model.layers)
    ]


# ---------------------------------------------------------------------------
# Layers


def _ln_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv)


def _ln_backward(dy: np.ndarray, g: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, t, d = x.shape
    return np.swapaxes(x.reshape(b, t, heads, d // heads), 1, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, dh = x.shape
    return np.swapaxes(x, 1, 2).reshape(b, t, h * dh)


def forward(
    params: dict,
    model: ModelConfig,
    inputs: np.ndarray,
    packs: list[B.BiasPack] | None = None,
    want_cache: bool = False,
):
    """Logits (B, T, vocab) for token inputs (B, T); optionally keep caches."""
    inputs = np.atleast_2d(np.asarray(inputs))
    bsz, T = inputs.shape
    if packs is None:
        packs = _packs(model, params, T)
    x = params["embed"][inputs]
    caches = []
    for i in range(model.layers):
        p = f"blk{i}."
        h1, ln1_cache = _ln_forward(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = _split_heads(h1 @ params[p + "attn.wq"], model.heads)
        k = _split_heads(h1 @ params[p + "attn.wk"], model.heads)
        v = _split_heads(h1 @ params[p + "attn.wv"], model.heads)
        attn = A.attention_forward(q, k, v, packs[i], check_finite=False)
        merged = _merge_heads(attn.out)
        x1 = x + merged @ params[p + "attn.wo"]
        h2, ln2_cache = _ln_forward(x1, params[p + "ln2.g"], params[p + "ln2.b"])
        hid = np.tanh(h2 @ params[p + "ff.w1"] + params[p + "ff.b1"])
        x2 = x1 + hid @ params[p + "ff.w2"] + params[p + "ff.b2"]
        if want_cache:
            caches.append((x, h1, ln1_cache, q, k, v, attn, merged, x1, h2, ln2_cache, hid))
        x = x2
    hf, lnf_cache = _ln_forward(x, params["ln_f.g"], params["ln_f.b"])
    logits = hf @ params["out.w"]
    if want_cache:
        return logits, (inputs, caches, x, hf, lnf_cache, packs)
    return logits


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mean_nll(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean next-token negative log-likelihood (natural log)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    logZ = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, targets[..., None], axis=-1)[..., 0]
    return float((logZ - picked).mean())


def loss_only(params: dict, model: ModelConfig, inputs, targets) -> float:
    logits = forward(params, model, np.atleast_2d(inputs))
    return mean_nll(logits, np.atleast_2d(targets))


def loss_and_grads(
    params: dict, model: ModelConfig, inputs, targets, packs=None
) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy loss and exact gradients for every parameter."""
    inputs = np.atleast_2d(np.asarray(inputs))
    targets = np.atleast_2d(np.asarray(targets))
    logits, cache = forward(params, model, inputs, packs=packs, want_cache=True)
    _, caches, x_final, hf, lnf_cache, packs = cache
    bsz, T = inputs.shape
    loss = mean_nll(logits, targets)

    grads = {name: np.zeros_like(p) for name, p in params.items()}
    probs = _softmax_rows(logits)
    np.put_along_axis(
        probs, targets[..., None], np.take_along_axis(probs, targets[..., None], -1) - 1.0, -1
    )
    dlogits = probs / (bsz * T)

    grads["out.w"] = hf.reshape(-1, model.d_model).T @ dlogits.reshape(-1, model.vocab)
    dhf = dlogits @ params["out.w"].T
    dx, dg, db = _ln_backward(dhf, params["ln_f.g"], lnf_cache)
    grads["ln_f.g"], grads["ln_f.b"] = dg, db

    learnable = model.preset in LEARNABLE_BIAS_PRESETS
    for i in reversed(range(model.layers)):
        p = f"blk{i}."
        x_in, h1, ln1_cache, q, k, v, attn, merged, x1, h2, ln2_cache, hid = caches[i]
        D = model.d_model

        # feed-forward branch: x2 = x1 + tanh(h2 w1 + b1) w2 + b2
        dff = dx
        grads[p + "ff.w2"] = hid.reshape(-1, model.d_ff).T @ dff.reshape(-1, D)
        grads[p + "ff.b2"] = dff.reshape(-1, D).sum(axis=0)
        dhid = dff @ params[p + "ff.w2"].T
        dpre = dhid * (1.0 - hid * hid)
        grads[p + "ff.w1"] = h2.reshape(-1, D).T @ dpre.reshape(-1, model.d_ff)
        grads[p + "ff.b1"] = dpre.reshape(-1, model.d_ff).sum(axis=0)
        dh2 = dpre @ params[p + "ff.w1"].T
        dx1, dg2, db2 = _ln_backward(dh2, params[p + "ln2.g"], ln2_cache)
        grads[p + "ln2.g"], grads[p + "ln2.b"] = dg2, db2
        dx1 = dx1 + dx

        # attention branch: x1 = x_in + merge(attn(q, k, v)) wo
        grads[p + "attn.wo"] = merged.reshape(-1, D).T @ dx1.reshape(-1, D)
        dmerged = dx1 @ params[p + "attn.wo"].T
        d_attn_out = _split_heads(dmerged, model.heads)
        ag = A.attention_backward(
            q, k, v, packs[i], attn, d_attn_out, bias_grads=learnable
        )
        dh1 = (
            _merge_heads(ag.d_q) @ params[p + "attn.wq"].T
            + _merge_heads(ag.d_k) @ params[p + "attn.wk"].T
            + _merge_heads(ag.d_v) @ params[p + "attn.wv"].T
        )
        h1_flat = h1.reshape(-1, D)
        grads[p + "attn.wq"] = h1_flat.T @ _merge_heads(ag.d_q).reshape(-1, D)
        grads[p + "attn.wk"] = h1_flat.T @ _merge_heads(ag.d_k).reshape(-1, D)
        grads[p + "attn.wv"] = h1_flat.T @ _merge_heads(ag.d_v).reshape(-1, D)
        if learnable:
            r1 = np.exp(params[p + "attn.rho1"])
            r2 = np.exp(params[p + "attn.rho2"])
            dr1 = np.zeros(model.heads)
            dr2 = np.zeros(model.heads)
            for h in range(model.heads):
                for comp in ag.param_grads[h]:
                    dr1[h] += comp.get("r1", 0.0)
                    dr2[h] += comp.get("r2", 0.0)
            grads[p + "attn.rho1"] = dr1 * r1
            grads[p + "attn.rho2"] = dr2 * r2
        dxi, dg1, db1 = _ln_backward(dh1, params[p + "ln1.g"], ln1_cache)
        grads[p + "ln1.g"], grads[p + "ln1.b"] = dg1, db1
        dx = dx1 + dxi

    d_embed = grads["embed"]
    np.add.at(d_embed, inputs, dx)
    return loss, grads


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    losses: np.ndarray
    loss_non_decreasing: bool
    model: ModelConfig


def _clip_grads(grads: dict, max_norm: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def train(model: ModelConfig, cfg: TrainConfig, task: TaskSpec) -> TrainResult:
    """Next-token training on train_len windows of the synthetic corpus.

    Deterministic given (model.seed, task.seed): init and data order use
    separate seeded streams.  Windows are sampled from the first 80% of the
    corpus; the last 20% is held out for evaluation.
    """
    if isinstance(task, RepeatCopy) and task.period > model.train_len // 2:
        raise ConfigError(
            f"period {task.period} exceeds train_len/2 = {model.train_len // 2}"
        )
    params = init_params(model)
    losses = np.zeros(cfg.steps)
    if cfg.steps == 0:
        return TrainResult(params, losses, False, model)

    _, data_seq = np.random.SeedSequence(model.seed).spawn(2)
    data_rng = np.random.default_rng(data_seq)
    train_tokens, _ = split_corpus(generate_corpus(task, model.vocab))
    T = model.train_len
    max_start = len(train_tokens) - (T + 1)
    if max_start < 0:
        raise ConfigError(
            f"corpus too small: training needs at least {int((T + 1) / 0.8) + 1} tokens"
        )

    adam_m = {n: np.zeros_like(p) for n, p in params.items()}
    adam_v = {n: np.zeros_like(p) for n, p in params.items()}
    static_cache: dict[int, B.BiasPack] = {}
    offsets = np.arange(T + 1)
    for step in range(cfg.steps):
        starts = data_rng.integers(0, max_start + 1, cfg.batch)
        window = train_tokens[starts[:, None] + offsets]
        packs = _packs(model, params, T, static_cache)
        loss, grads = loss_and_grads(params, model, window[:, :-1], window[:, 1:], packs)
        if not np.isfinite(loss):
            raise NumericsError(f"loss became non-finite at step {step}")
        losses[step] = loss
        if cfg.grad_clip is not None:
            _clip_grads(grads, cfg.grad_clip)
        if cfg.optimizer == "sgd":
            for name in params:
                params[name] -= cfg.lr * grads[name]
        else:
            t = step + 1
            corr1 = 1.0 - cfg.beta1**t
            corr2 = 1.0 - cfg.beta2**t
            for name in params:
                g = grads[name]
                adam_m[name] = cfg.beta1 * adam_m[name] + (1 - cfg.beta1) * g
                adam_v[name] = cfg.beta2 * adam_v[name] + (1 - cfg.beta2) * g * g
                params[name] -= (
                    cfg.lr
                    * (adam_m[name] / corr1)
                    / (np.sqrt(adam_v[name] / corr2) + cfg.eps)
                )

    chunk = max(1, cfg.steps // 10)
    non_decreasing = losses[-chunk:].mean() >= losses[:chunk].mean()
    return TrainResult(params, losses, bool(non_decreasing), model)


# ---------------------------------------------------------------------------
# Evaluation and comparison


@dataclass(frozen=True)
class EvalRow:
    preset: str
    eval_len: int
    seed: int
    nll: float
    ppl: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def to_csv(self, path: str | os.PathLike) -> None:
        lines = ["preset,eval_len,seed,nll,ppl"]
        for r in self.rows:
            lines.append(f"{r.preset},{r.eval_len},{r.seed},{r.nll!r},{r.ppl!r}")
        _atomic_write(path, ("\n".join(lines) + "\n").encode())

    def to_json(self, path: str | os.PathLike) -> None:
        doc = {"rows": [dataclasses.asdict(r) for r in self.rows]}
        _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True).encode() + b"\n")

    def ppl(self, preset: str, eval_len: int) -> list[float]:
        return [r.ppl for r in self.rows if r.preset == preset and r.eval_len == eval_len]

    def median_ppl(self, preset: str, eval_len: int) -> float:
        vals = self.ppl(preset, eval_len)
        if not vals:
            raise ConfigError(f"no rows for ({preset}, {eval_len})")
        return float(np.median(vals))

    def summary_rows(self) -> list[dict]:
        cells = sorted({(r.preset, r.eval_len) for r in self.rows})
        out = []
        for preset, eval_len in cells:
            vals = self.ppl(preset, eval_len)
            out.append(
                {
                    "preset": preset,
                    "eval_len": eval_len,
                    "median_ppl": float(np.median(vals)),
                    "min_ppl": float(np.min(vals)),
                    "max_ppl": float(np.max(vals)),
                    "runs": len(vals),
                }
            )
        return out

    def summary_to_csv(self, path: str | os.PathLike) -> None:
        lines = ["preset,eval_len,median_ppl,min_ppl,max_ppl,runs"]
        for s in self.summary_rows():
            lines.append(
                f"{s['preset']},{s['eval_len']},{s['median_ppl']!r},"
                f"{s['min_ppl']!r},{s['max_ppl']!r},{s['runs']}"
            )
        _atomic_write(path, ("\n".join(lines) + "\n").encode())


def evaluate_perplexity(
    params: dict,
    model: ModelConfig,
    task: TaskSpec,
    eval_lens,
    corpus: np.ndarray | None = None,
    min_windows: int = 20,
) -> EvalReport:
    """Held-out perplexity over non-overlapping windows of each eval length.

    Every eval length must be >= the training length; the bias pack is
    rebuilt at each length (kernels extend to any distance by construction).
    """
    if corpus is None:
        corpus = generate_corpus(task, model.vocab)
    _, held = split_corpus(corpus)
    label = model.preset if isinstance(model.preset, str) else F.preset_label(model.preset)
    report = EvalReport()
    for eval_len in eval_lens:
        eval_len = int(eval_len)
        if eval_len < model.train_len:
            raise ConfigError(
                f"eval_len {eval_len} is below train_len {model.train_len}"
            )
        stride = eval_len + 1
        n_win = len(held) // stride
        if n_win < min_windows:
            need = int(np.ceil(min_windows * stride / 0.2))
            raise ConfigError(
                f"held-out split has {n_win} windows of length {eval_len}; "
                f"need >= {min_windows}.  Increase corpus_tokens to >= {need}."
            )
        windows = held[: n_win * stride].reshape(n_win, stride)
        packs = _packs(model, params, eval_len)
        # Chunk windows so the (chunk, H, L, L) attention tensor stays small.
        chunk = max(1, int(6e6 // (model.heads * eval_len * eval_len)))
        nll_total = 0.0
        for lo in range(0, n_win, chunk):
            part = windows[lo : lo + chunk]
            logits = forward(params, model, part[:, :-1], packs=packs)
            nll_total += mean_nll(logits, part[:, 1:]) * len(part)
        nll = nll_total / n_win
        report.rows.append(
            EvalRow(label, eval_len, model.seed, nll, float(np.exp(nll)))
        )
    return report


def _run_one(args) -> list[EvalRow]:
    preset, seed, model, cfg, task, eval_lens = args
    run_model = dataclasses.replace(model, preset=preset, seed=seed)
    result = train(run_model, cfg, task)
    return evaluate_perplexity(result.params, run_model, task, eval_lens).rows


def default_jobs() -> int:
    return max(1, int(os.environ.get("PE_LAB_THREADS", "1")))


def compare_presets(
    presets,
    model: ModelConfig,
    cfg: TrainConfig,
    task: TaskSpec,
    eval_lens,
    seeds,
    jobs: int | None = None,
) -> EvalReport:
    """Train one model per (preset, seed) and evaluate at every length.

    Non-bias initialization is shared across presets for a given seed, so
    rows differ only through the positional bias.  Runs are independent and
    may execute in parallel (capped by PE_LAB_THREADS); row order is fixed
    regardless of scheduling.
    """
    presets = list(presets)
    seeds = list(seeds)
    if not presets or not seeds:
        raise ConfigError("compare needs at least one preset and one seed")
    runs = [(p, s, model, cfg, task, tuple(eval_lens)) for p in presets for s in seeds]
    jobs = default_jobs() if jobs is None else max(1, jobs)
    report = EvalReport()
    if jobs == 1 or len(runs) == 1:
        for run in runs:
            report.rows.extend(_run_one(run))
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(runs))) as pool:
            for rows in pool.map(_run_one, runs):
                report.rows.extend(rows)
    return report
