"""Per-head slope schedules for distance kernels.

The default geometric schedule assigns head n (1-based) the slope
2**(-8n/H), so an 8-head model gets 1/2, 1/4, ..., 1/256.  Ablation
schedules either force one exponent onto every head or replace individual
heads' exponents; the replacement grammar "8t2" means "the head whose
default exponent is 8 gets exponent 2".

Head indices are 0-based everywhere in code; the CLI and report strings use
1-based head numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Geometric:
    """slope_n = 2**(-8n/H) for n = 1..H."""

    num_heads: int

    def __post_init__(self) -> None:
        if self.num_heads < 1:
            raise ConfigError(f"num_heads must be >= 1, got {self.num_heads!r}")


@dataclass(frozen=True)
class UniformExponent:
    """Every head gets slope 2**(-h).  h may exceed H."""

    h: float
    num_heads: int

    def __post_init__(self) -> None:
        if self.num_heads < 1:
            raise ConfigError(f"num_heads must be >= 1, got {self.num_heads!r}")
        if not np.isfinite(self.h) or self.h <= 0:
            raise ConfigError(f"exponent h must be positive, got {self.h!r}")


@dataclass(frozen=True)
class Replaced:
    """A base schedule with individual heads' exponents overridden.

    overrides maps 0-based head index -> new exponent (slope = 2**-exponent).
    """

    base: "SlopeSchedule"
    overrides: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        items = tuple(sorted((int(i), float(e)) for i, e in dict(self.overrides).items()))
        for idx, exponent in items:
            if not np.isfinite(exponent) or exponent <= 0:
                raise ConfigError(f"override exponent must be positive, got {exponent!r}")
            if idx < 0 or idx >= num_heads(self.base):
                raise ConfigError(
                    f"override head index {idx} out of range for "
                    f"{num_heads(self.base)} heads"
                )
        object.__setattr__(self, "overrides", items)


SlopeSchedule = Geometric | UniformExponent | Replaced


def num_heads(schedule: SlopeSchedule) -> int:
    if isinstance(schedule, Replaced):
        return num_heads(schedule.base)
    return schedule.num_heads


def slopes_for_heads(schedule: SlopeSchedule) -> np.ndarray:
    """The per-head slope vector (H,) produced by a schedule."""
    if isinstance(schedule, Geometric):
        n = np.arange(1, schedule.num_heads + 1, dtype=np.float64)
        return np.exp2(-8.0 * n / schedule.num_heads)
    if isinstance(schedule, UniformExponent):
        return np.full(schedule.num_heads, 2.0 ** (-schedule.h))
    if isinstance(schedule, Replaced):
        out = slopes_for_heads(schedule.base).copy()
        for idx, exponent in schedule.overrides:
            out[idx] = 2.0 ** (-exponent)
        return out
    raise TypeError(f"unknown schedule: {schedule!r}")


def scale_slopes(slopes: np.ndarray, factor: float) -> np.ndarray:
    """Elementwise slope rescaling (e.g. the half-slope exponential component)."""
    if not np.isfinite(factor) or factor <= 0:
        raise ConfigError(f"factor must be positive, got {factor!r}")
    return np.asarray(slopes, dtype=np.float64) * factor


def parse_schedule_spec(text: str, heads: int) -> SlopeSchedule:
    """Parse a CLI schedule spec.

    Grammar:
      "geometric"            -> Geometric(heads)
      "h=<exponent>"         -> UniformExponent (same slope on every head)
      "<from>t<to>[,...]"    -> Replaced over the geometric base; <from> is the
                                1-based head number (= its default exponent) and
                                <to> the new exponent, e.g. "8t2" or "6t9,8t9".
    """
    text = text.strip()
    if text == "geometric":
        return Geometric(heads)
    if text.startswith("h="):
        try:
            h = float(text[2:])
        except ValueError:
            raise ConfigError(f"bad uniform schedule {text!r}; expected h=<exponent>") from None
        return UniformExponent(h, heads)
    overrides: dict[int, float] = {}
    for token in text.split(","):
        token = token.strip()
        left, sep, right = token.partition("t")
        if not sep or not left or not right:
            raise ConfigError(
                f"bad replacement token {token!r}; grammar is <fromHead>t<toExponent>, "
                f'e.g. "8t2", comma-separable'
            )
        try:
            src = int(left)
            dst = float(right)
        except ValueError:
            raise ConfigError(
                f"bad replacement token {token!r}; grammar is <fromHead>t<toExponent>"
            ) from None
        if src < 1 or src > heads:
            raise ConfigError(f"replacement head {src} out of range 1..{heads}")
        overrides[src - 1] = dst
    return Replaced(Geometric(heads), tuple(overrides.items()))


def schedule_from_json(doc: dict, heads: int) -> SlopeSchedule:
    """Build a schedule from its JSON form, e.g. {"type": "geometric"}.

    Forms: {"type":"geometric"}, {"type":"uniform","h":2},
    {"type":"replaced","overrides":{"8":2}} (keys are 1-based head numbers).
    A "heads" key may restate the head count but must then match.
    """
    if not isinstance(doc, dict):
        raise ConfigError(f"slopes section must be an object, got {type(doc).__name__}")
    known = {"type", "heads", "h", "overrides"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown slopes keys: {sorted(unknown)}")
    if "heads" in doc and int(doc["heads"]) != heads:
        raise ConfigError(
            f"slopes.heads = {doc['heads']} disagrees with model heads = {heads}"
        )
    kind = doc.get("type", "geometric")
    if kind == "geometric":
        return Geometric(heads)
    if kind == "uniform":
        if "h" not in doc:
            raise ConfigError('uniform slopes require an "h" exponent')
        return UniformExponent(float(doc["h"]), heads)
    if kind == "replaced":
        raw = doc.get("overrides")
        if not isinstance(raw, dict) or not raw:
            raise ConfigError('replaced slopes require a non-empty "overrides" object')
        overrides = {}
        for key, exponent in raw.items():
            src = int(key)
            if src < 1 or src > heads:
                raise ConfigError(f"replacement head {src} out of range 1..{heads}")
            overrides[src - 1] = float(exponent)
        return Replaced(Geometric(heads), tuple(overrides.items()))
    raise ConfigError(f"unknown slopes type {kind!r}; expected geometric|uniform|replaced")


def describe(schedule: SlopeSchedule) -> str:
    """Human-readable schedule description used in report metadata."""
    if isinstance(schedule, Geometric):
        return f"geometric(H={schedule.num_heads})"
    if isinstance(schedule, UniformExponent):
        return f"uniform(h={schedule.h:g},H={schedule.num_heads})"
    if isinstance(schedule, Replaced):
        parts = ",".join(f"head{idx + 1}->2^-{exp:g}" for idx, exp in schedule.overrides)
        return f"{describe(schedule.base)}[{parts}]"
    raise TypeError(f"unknown schedule: {schedule!r}")
