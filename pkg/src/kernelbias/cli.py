"""Command-line interface.

Subcommands:
  bias             export one head's bias matrix as CSV
  curves           export kernel decay curves for several presets
  verify-appendix  scan where the kernel mixture's derivative dips below
                   the exponential's
  train            train one model from a JSON config and report perplexity
  compare          train every (preset, seed) pair from a config
  ablate-slopes    run compare under an alternate slope schedule

Exit codes: 0 success, 1 negative result (e.g. the scanned inequality never
holds), 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import functools
import os
import sys

from . import analysis, biasmat, lm
from . import fusion as F
from . import slopes as S
from .config import load_experiment_config
from .errors import ConfigError, KernelBiasError

_SCHEDULE_GRAMMAR = (
    'schedule grammar: "geometric", "h=<exponent>" (same slope on every head), '
    'or replacements "<fromHead>t<toExponent>[,...]" such as "8t2" or "6t9,8t9"'
)

_EPILOG = f"presets: {', '.join(F.PRESET_NAMES)}\n{_SCHEDULE_GRAMMAR}"

_formatter = functools.partial(argparse.RawDescriptionHelpFormatter, width=96)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelbias",
        description="Distance-kernel positional biases: export, analyze, train.",
        epilog=_EPILOG,
        formatter_class=_formatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bias = sub.add_parser(
        "bias",
        help="export one head's bias matrix as CSV",
        epilog=_EPILOG,
        formatter_class=_formatter,
    )
    p_bias.add_argument("preset", help=f"one of: {', '.join(F.PRESET_NAMES)}")
    p_bias.add_argument("--heads", type=int, default=8)
    p_bias.add_argument("--len", type=int, default=512, dest="length")
    p_bias.add_argument("--head", type=int, default=1, help="1-based head number")
    p_bias.add_argument(
        "--form", choices=("additive", "mult"), default="additive", help="matrix form"
    )
    p_bias.add_argument("--schedule", default="geometric", help=_SCHEDULE_GRAMMAR)
    p_bias.add_argument("--out", required=True, help="output CSV path")

    p_curves = sub.add_parser(
        "curves",
        help="export per-preset kernel decay curves as CSV",
        epilog=_EPILOG,
        formatter_class=_formatter,
    )
    p_curves.add_argument("presets", nargs="+", help="preset names")
    p_curves.add_argument("--heads", type=int, default=8)
    p_curves.add_argument("--head", type=int, default=1, help="1-based head number")
    p_curves.add_argument("--len", type=int, default=512, dest="length")
    p_curves.add_argument("--schedule", default="geometric", help=_SCHEDULE_GRAMMAR)
    p_curves.add_argument("--out", required=True, help="output CSV path")

    p_verify = sub.add_parser(
        "verify-appendix",
        help="scan |k_mix'(x)| < |k_exp'(x)| and print the threshold x0",
        formatter_class=_formatter,
    )
    p_verify.add_argument("--sigma1", type=float, default=1.0, help="Gaussian width")
    p_verify.add_argument("--sigma2", type=float, default=1.0, help="exponential width")
    p_verify.add_argument("--xmax", type=float, default=50.0)
    p_verify.add_argument("--step", type=float, default=0.005)

    for name, help_text in (
        ("train", "train the first configured preset/seed and report perplexity"),
        ("compare", "train every (preset, seed) pair and aggregate medians"),
    ):
        p = sub.add_parser(name, help=help_text, formatter_class=_formatter)
        p.add_argument("config", help="JSON experiment config path")
        p.add_argument("--jobs", type=int, default=None, help="parallel runs (compare)")

    p_ablate = sub.add_parser(
        "ablate-slopes",
        help="run compare under an alternate slope schedule",
        epilog=_EPILOG,
        formatter_class=_formatter,
    )
    p_ablate.add_argument("config", help="JSON experiment config path")
    p_ablate.add_argument("--schedule", required=True, help=_SCHEDULE_GRAMMAR)
    p_ablate.add_argument("--jobs", type=int, default=None)
    return parser


def _head_index(head: int, heads: int) -> int:
    if head < 1 or head > heads:
        raise ConfigError(f"head {head} out of range 1..{heads}")
    return head - 1


def _cmd_bias(args) -> int:
    schedule = S.parse_schedule_spec(args.schedule, args.heads)
    pack = biasmat.build_bias(args.preset, args.heads, args.length, schedule=schedule)
    form = "multiplicative" if args.form == "mult" else "additive"
    biasmat.dump_csv(pack, _head_index(args.head, args.heads), form, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_curves(args) -> int:
    schedule = S.parse_schedule_spec(args.schedule, args.heads)
    series = analysis.decay_curves(
        args.presets,
        _head_index(args.head, args.heads),
        args.length,
        heads=args.heads,
        schedule=schedule,
    )
    analysis.write_curves_csv(series, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_verify(args) -> int:
    report = analysis.derivative_crossover_scan(
        args.sigma1, args.sigma2, args.xmax, args.step
    )
    if report.crossover is None:
        print(
            f"inequality |k_mix'| < |k_exp'| does not hold through x_max={args.xmax:g} "
            f"for sigma1={args.sigma1:g}, sigma2={args.sigma2:g}"
        )
        return 1
    print(
        f"x0 = {report.crossover!r}: |k_mix'| < |k_exp'| holds on "
        f"(x0, {args.xmax:g}] for sigma1={args.sigma1:g}, sigma2={args.sigma2:g}"
    )
    return 0


def _write_reports(report: lm.EvalReport, out_dir: str, stem: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    report.to_csv(os.path.join(out_dir, f"{stem}.csv"))
    report.to_json(os.path.join(out_dir, f"{stem}.json"))
    report.summary_to_csv(os.path.join(out_dir, f"{stem}_summary.csv"))


def _cmd_train(args) -> int:
    cfg = load_experiment_config(args.config)
    model = dataclasses.replace(
        cfg.model, preset=cfg.presets[0], seed=cfg.seeds[0]
    )
    result = lm.train(model, cfg.train, cfg.task)
    os.makedirs(cfg.output_dir, exist_ok=True)
    curve_path = os.path.join(cfg.output_dir, "loss_curve.csv")
    lines = ["step,loss"] + [
        f"{i},{loss!r}" for i, loss in enumerate(result.losses.tolist())
    ]
    biasmat._atomic_write(curve_path, ("\n".join(lines) + "\n").encode())
    report = lm.evaluate_perplexity(result.params, model, cfg.task, cfg.eval_lens)
    _write_reports(report, cfg.output_dir, "report")
    if result.loss_non_decreasing:
        print("warning: training loss did not decrease over the run")
    for row in report.rows:
        print(f"{row.preset} len={row.eval_len} seed={row.seed} ppl={row.ppl:.4f}")
    print(f"wrote {cfg.output_dir}/report.csv")
    return 0


def _cmd_compare(args, schedule_spec: str | None = None) -> int:
    cfg = load_experiment_config(args.config)
    model = cfg.model
    stem = "report"
    if schedule_spec is not None:
        schedule = S.parse_schedule_spec(schedule_spec, model.heads)
        model = dataclasses.replace(model, schedule=schedule)
        stem = "report_" + "".join(
            c if c.isalnum() else "_" for c in schedule_spec.strip()
        )
    report = lm.compare_presets(
        cfg.presets, model, cfg.train, cfg.task, cfg.eval_lens, cfg.seeds, jobs=args.jobs
    )
    _write_reports(report, cfg.output_dir, stem)
    for s in report.summary_rows():
        print(
            f"{s['preset']} len={s['eval_len']} median_ppl={s['median_ppl']:.4f} "
            f"({s['runs']} runs)"
        )
    print(f"wrote {cfg.output_dir}/{stem}.csv")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bias":
            return _cmd_bias(args)
        if args.command == "curves":
            return _cmd_curves(args)
        if args.command == "verify-appendix":
            return _cmd_verify(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "ablate-slopes":
            return _cmd_compare(args, schedule_spec=args.schedule)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except KernelBiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
