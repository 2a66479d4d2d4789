"""JSON experiment configs for training and comparison runs.

A config document has up to eight sections; unknown keys anywhere are
rejected.  Every omitted key takes the default listed here:

  model      vocab 64, d_model 64, heads 8, layers 2, d_ff 128, train_len 64
  train      steps 2000, batch 16, lr 1e-3, optimizer "adam"
             (beta1 0.9, beta2 0.999, eps 1e-8), grad_clip null
  task       {"kind": "repeat-copy", "period": 16, "corpus_tokens": 65536,
              "seed": 0}; or {"kind": "markov", "order": 1, ...}
  presets    ["alibi"]
  slopes     {"type": "geometric"}  (head count follows the model)
  eval_lens  [64, 128, 256, 512]
  seeds      [1, 2, 3]
  output_dir "out"
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from . import fusion as F
from . import slopes as S
from .errors import ConfigError
from .lm import MarkovChar, ModelConfig, RepeatCopy, TaskSpec, TrainConfig

DEFAULT_EVAL_LENS = (64, 128, 256, 512)
DEFAULT_SEEDS = (1, 2, 3)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    train: TrainConfig
    task: TaskSpec
    presets: tuple[str, ...]
    eval_lens: tuple[int, ...]
    seeds: tuple[int, ...]
    output_dir: str


def _check_keys(section: str, doc: dict, allowed: set[str]) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{section} must be a JSON object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")


def _task_from_json(doc: dict) -> TaskSpec:
    _check_keys("task", doc, {"kind", "period", "order", "corpus_tokens", "seed"})
    kind = doc.get("kind", "repeat-copy")
    common = {
        "corpus_tokens": int(doc.get("corpus_tokens", 65536)),
        "seed": int(doc.get("seed", 0)),
    }
    if kind == "repeat-copy":
        if "order" in doc:
            raise ConfigError('"order" only applies to markov tasks')
        return RepeatCopy(period=int(doc.get("period", 16)), **common)
    if kind == "markov":
        if "period" in doc:
            raise ConfigError('"period" only applies to repeat-copy tasks')
        return MarkovChar(order=int(doc.get("order", 1)), **common)
    raise ConfigError(f"unknown task kind {kind!r}; expected repeat-copy|markov")


def parse_experiment_config(doc: dict) -> ExperimentConfig:
    _check_keys(
        "config",
        doc,
        {"model", "train", "task", "presets", "slopes", "eval_lens", "seeds", "output_dir"},
    )
    model_doc = doc.get("model", {})
    _check_keys(
        "model",
        model_doc,
        {"vocab", "d_model", "heads", "layers", "d_ff", "train_len"},
    )
    heads = int(model_doc.get("heads", 8))
    schedule = S.schedule_from_json(doc.get("slopes", {"type": "geometric"}), heads)
    model = ModelConfig(
        vocab=int(model_doc.get("vocab", 64)),
        d_model=int(model_doc.get("d_model", 64)),
        heads=heads,
        layers=int(model_doc.get("layers", 2)),
        d_ff=int(model_doc.get("d_ff", 128)),
        train_len=int(model_doc.get("train_len", 64)),
        schedule=schedule,
    )

    train_doc = doc.get("train", {})
    _check_keys(
        "train",
        train_doc,
        {"steps", "batch", "lr", "optimizer", "beta1", "beta2", "eps", "grad_clip"},
    )
    clip = train_doc.get("grad_clip")
    train = TrainConfig(
        steps=int(train_doc.get("steps", 2000)),
        batch=int(train_doc.get("batch", 16)),
        lr=float(train_doc.get("lr", 1e-3)),
        optimizer=str(train_doc.get("optimizer", "adam")),
        beta1=float(train_doc.get("beta1", 0.9)),
        beta2=float(train_doc.get("beta2", 0.999)),
        eps=float(train_doc.get("eps", 1e-8)),
        grad_clip=None if clip is None else float(clip),
    )

    task = _task_from_json(doc.get("task", {}))

    presets = tuple(doc.get("presets", ["alibi"]))
    for name in presets:
        if name not in F.PRESET_NAMES:
            raise ConfigError(
                f"unknown preset {name!r}; valid presets: {', '.join(F.PRESET_NAMES)}"
            )
    eval_lens = tuple(int(x) for x in doc.get("eval_lens", DEFAULT_EVAL_LENS))
    seeds = tuple(int(x) for x in doc.get("seeds", DEFAULT_SEEDS))
    if not eval_lens or not seeds or not presets:
        raise ConfigError("presets, eval_lens, and seeds must be non-empty")
    return ExperimentConfig(
        model=model,
        train=train,
        task=task,
        presets=presets,
        eval_lens=eval_lens,
        seeds=seeds,
        output_dir=str(doc.get("output_dir", "out")),
    )


def load_experiment_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{os.fspath(path)!r} is not valid JSON: {exc}") from exc
    return parse_experiment_config(doc)
