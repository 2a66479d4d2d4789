"""Decay curves, smoothness metrics, and the derivative-dominance scan.

The scan compares closed-form derivatives of an equal-weight mixture of a
Gaussian kernel exp(-x^2 / (2*sigma1^2)) and an exponential kernel
exp(-|x| / sigma2) against the exponential's own derivative, and reports
the threshold x0 beyond which the mixture is everywhere flatter:
|k_mix'(x)| < |k_exp'(x)| for all scanned x in (x0, x_max].

Note the sigma parameterization here differs from the slope form used by
the kernel zoo; the mapping is slope_exp = 1/sigma2 and
slope_gauss = 1/(2*sigma1^2).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import fusion as F
from . import slopes as S
from .biasmat import BiasPack, _atomic_write, render_csv
from .errors import ConfigError


@dataclass
class CurveSeries:
    """Kernel values sampled at integer distances 0..L-1."""

    label: str
    d: np.ndarray
    values: np.ndarray


@dataclass
class SmoothnessReport:
    """max_step: per-label max |k(d+1) - k(d)|; crossover: scan threshold x0.

    crossover is None when the dominance inequality never holds on the
    scanned range.
    """

    max_step: dict[str, float]
    crossover: float | None = None
    x_max: float | None = None


def _resolve_presets(presets, heads: int, schedule) -> list[F.FusionPreset]:
    out = []
    for p in presets:
        out.append(F.resolve_preset(p, heads, schedule) if isinstance(p, str) else p)
    return out


def decay_curves(
    presets,
    head: int,
    length: int,
    heads: int = 8,
    schedule: S.SlopeSchedule | None = None,
) -> list[CurveSeries]:
    """One fused-kernel decay curve per preset, sampled at d = 0..length-1."""
    if length < 2:
        raise ConfigError(f"need length >= 2, got {length}")
    d = np.arange(length)
    series = []
    for preset in _resolve_presets(presets, heads, schedule):
        spec = F.make_preset(preset, head)
        series.append(CurveSeries(F.preset_label(preset), d, F.fused_kernel(spec, d)))
    return series


def smoothness_metric(
    presets,
    head: int,
    length: int,
    heads: int = 8,
    schedule: S.SlopeSchedule | None = None,
) -> SmoothnessReport:
    """Per-preset max |k(d+1) - k(d)| over d = 0..length-2."""
    curves = decay_curves(presets, head, length, heads, schedule)
    return SmoothnessReport(
        max_step={c.label: float(np.abs(np.diff(c.values)).max()) for c in curves}
    )


def exponential_abs_derivative(x, sigma2: float):
    """|d/dx exp(-|x|/sigma2)| = (1/sigma2) exp(-|x|/sigma2)."""
    return (1.0 / sigma2) * np.exp(-np.abs(x) / sigma2)


def gaussian_abs_derivative(x, sigma1: float):
    """|d/dx exp(-x^2/(2 sigma1^2))| = (|x|/sigma1^2) exp(-x^2/(2 sigma1^2))."""
    return (np.abs(x) / sigma1**2) * np.exp(-(x**2) / (2.0 * sigma1**2))


def mixture_abs_derivative(x, sigma1: float, sigma2: float):
    """|0.5 k_gauss'(x) + 0.5 k_exp'(x)|; both terms share sign(x)."""
    return 0.5 * gaussian_abs_derivative(x, sigma1) + 0.5 * exponential_abs_derivative(
        x, sigma2
    )


def derivative_crossover_scan(
    sigma1: float = 1.0,
    sigma2: float = 1.0,
    x_max: float = 50.0,
    step: float = 0.005,
) -> SmoothnessReport:
    """Scan (0, x_max] for where the mixture's derivative dips below the exponential's.

    Returns the smallest scanned x0 such that |k_mix'| < |k_exp'| for every
    scanned x in (x0, x_max]; crossover is None if the inequality fails at
    x_max itself.  x = 0 is skipped (sign(0) makes both derivatives vanish).
    """
    for name, val in (("sigma1", sigma1), ("sigma2", sigma2), ("x_max", x_max)):
        if not np.isfinite(val) or val <= 0:
            raise ConfigError(f"{name} must be positive, got {val!r}")
    if step <= 0 or step > 0.01:
        raise ConfigError(f"step must be in (0, 0.01], got {step!r}")
    xs = np.arange(1, int(np.floor(x_max / step)) + 1) * step
    holds = mixture_abs_derivative(xs, sigma1, sigma2) < exponential_abs_derivative(
        xs, sigma2
    )
    max_step = {
        "exponential": float(exponential_abs_derivative(xs, sigma2).max()),
        "gaussian": float(gaussian_abs_derivative(xs, sigma1).max()),
        "mixture": float(mixture_abs_derivative(xs, sigma1, sigma2).max()),
    }
    failing = np.where(~holds)[0]
    if len(failing) == 0:
        # Holds on the whole grid; x0 is the first scanned point.
        return SmoothnessReport(max_step, crossover=float(xs[0]), x_max=x_max)
    if failing[-1] == len(xs) - 1:
        return SmoothnessReport(max_step, crossover=None, x_max=x_max)
    return SmoothnessReport(max_step, crossover=float(xs[failing[-1]]), x_max=x_max)


def heatmap_export(
    pack: BiasPack, head: int, path: str | os.PathLike, scale: float = 100.0
) -> None:
    """Write one head's multiplicative matrix scaled for display (default x100)."""
    if scale <= 0 or not np.isfinite(scale):
        raise ConfigError(f"scale must be positive, got {scale!r}")
    text = render_csv(pack, head, "multiplicative", scale=scale)
    try:
        _atomic_write(path, text.encode())
    except OSError as exc:
        raise OSError(f"writing heatmap CSV to {os.fspath(path)!r} failed: {exc}") from exc


def write_curves_csv(series: list[CurveSeries], path: str | os.PathLike) -> None:
    """Write curves as one CSV: column d, then one value column per series."""
    if not series:
        raise ConfigError("no series to write")
    lengths = {len(s.d) for s in series}
    if len(lengths) != 1:
        raise ConfigError("all series must share the same distance grid")
    lines = ["d," + ",".join(s.label for s in series)]
    for i, d in enumerate(series[0].d):
        lines.append(f"{int(d)}," + ",".join(repr(float(s.values[i])) for s in series))
    try:
        _atomic_write(path, ("\n".join(lines) + "\n").encode())
    except OSError as exc:
        raise OSError(f"writing curves CSV to {os.fspath(path)!r} failed: {exc}") from exc
