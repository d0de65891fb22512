"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 a check
(``gradcheck``) ran and failed.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

from . import __version__, data, harness, subband
from .errors import ConfigError, DataError
from .qnum import RoundingSchedule

EXIT_CONFIG, EXIT_DATA, EXIT_CHECK = 1, 2, 3


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(t) for t in text.split(",") if t.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def _global_flags(after_command=False):
    """Global options, accepted before or after the subcommand.

    The copy attached to each subcommand must not reset values already given
    before it, so its defaults are suppressed and its ``--set`` list is kept
    apart and appended later.
    """
    unset = argparse.SUPPRESS if after_command else None
    off = argparse.SUPPRESS if after_command else False
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=unset, help="key = value config file (keys match experiment fields)")
    g.add_argument("--seed", type=int, default=unset, help="base seed (overrides the config)")
    g.add_argument("--out", default=unset, help="output directory (overrides output_dir)")
    g.add_argument("--threads", type=int, default=unset, help="BLAS thread count (fix it for reproducible runs)")
    g.add_argument("--full", action="store_true", default=off,
                   help="use the full CIFAR-10 training set instead of the desk subset")
    g.add_argument("--set", action="append", default=[], dest="set_late" if after_command else "set",
                   metavar="KEY=VALUE", help="override one config key; repeatable")
    g.add_argument("-v", "--verbose", action="store_true", default=off, help="log progress per epoch")
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="subbandnet",
        description="Low-precision LeNet training on Laplacian/Gaussian subbands with softmax fusion.",
        epilog="Datasets are read from data_dir (default data/<dataset>). Expected files:\n"
               + data.expected_files_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[_global_flags()],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[_global_flags(after_command=True)], help="train one experiment config")

    p = sub.add_parser("sweep-precision", parents=[_global_flags(after_command=True)], help="word-length x rounding-schedule table")
    p.add_argument("--bits", type=_csv_list(int), default=(32, 16, 8, 4))
    p.add_argument("--schedules", type=_csv_list(str), default=("final", "every"))
    p.add_argument("--reuse", action="store_true", help="keep cells already saved by an identical config")

    p = sub.add_parser("sweep-lr", parents=[_global_flags(after_command=True)], help="learning-rate stability study")
    p.add_argument("--rates", type=_csv_list(float), default=(0.1, 0.01, 0.001))
    p.add_argument("--window", type=int, default=10, help="epochs in the stability window")
    p.add_argument("--reuse", action="store_true")

    p = sub.add_parser("decompose", parents=[_global_flags(after_command=True)], help="write L0/G1 bands as SBND float32 files")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--limit", type=int, default=0, help="first N images only (0: all)")

    p = sub.add_parser("params", parents=[_global_flags(after_command=True)], help="parameter and storage accounting")
    p.add_argument("--vs-hidden", type=int, help="compare against this hidden width")
    p.add_argument("--vs-bits", type=int, help="compare against this word length")

    p = sub.add_parser("gradcheck", parents=[_global_flags(after_command=True)], help="finite-difference check of backprop")
    p.add_argument("--networks", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def resolve_config(args):
    config = harness.ExperimentConfig()
    if args.config:
        config = harness.load_config(args.config)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        known = {f for f in harness.ExperimentConfig.__dataclass_fields__}
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out:
        overrides["output_dir"] = args.out
    if args.full:
        overrides["train_subset"] = "0"
    if overrides:
        config = harness.config_from_strings(overrides, base=config)
    return config


def _out_dir(config, default):
    d = Path(config.output_dir or default)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_train(args, config):
    out = _out_dir(config, "runs/train")
    config = config.replace(output_dir=str(out))
    lg = harness.run_experiment(config)
    harness.emit_plot_data(lg, out / "fig3.csv")
    for s in lg.summary:
        print(f"{s.variant:9s} final test error {100 * s.final_test_error:6.2f}%  params {s.param_count}")
    return 0


def cmd_sweep_precision(args, config):
    out = _out_dir(config, "runs/precision")
    sweep = harness.precision_sweep(config.replace(output_dir=str(out)), args.bits,
                                    [RoundingSchedule.parse(s) for s in args.schedules], reuse=args.reuse)
    for s in sweep.schedules:
        table = sweep.table(s)
        print(f"rounding {s.value}:  " + "  ".join(f"{b:>5d}bit" for b in sweep.word_bits))
        for v in harness.VARIANTS:
            if v in table:
                print(f"  {v:9s} " + "  ".join(f"{100 * table[v][b]:7.2f}%" for b in sweep.word_bits))
    for key, lg in sweep.cells.items():
        harness.emit_plot_data(lg, out / f"curves_{key[0].value}_{key[1]}bit.csv")
    return 0


def cmd_sweep_lr(args, config):
    out = _out_dir(config, "runs/lr")
    explicit = any(s.split("=", 1)[0].strip() == "hidden_units" for s in args.set)
    if not explicit and not (args.config and "hidden_units" in Path(args.config).read_text()):
        config = config.replace(hidden_units=1000)
    logs = harness.lr_sweep(config.replace(output_dir=str(out)), args.rates, reuse=args.reuse)
    for rate, lg in logs.items():
        parts = []
        for v in ("original", "fusion"):
            if v in lg.variants():
                try:
                    parts.append(f"{v} stability {harness.stability(lg, v, args.window):.4f}")
                except harness.InsufficientEpochs as exc:
                    parts.append(f"{v}: {exc}")
                parts.append(f"final {100 * lg.final(v):.2f}%")
        print(f"lr {rate}: " + ", ".join(parts))
    return 0


def cmd_decompose(args, config):
    out = _out_dir(config, "runs/bands")
    ds = data.load_dataset(config.dataset, config.data_dir, args.split).head(args.limit or None)
    bands = data.decompose_dataset(ds)
    subband.write_band(out / f"{config.dataset}-{args.split}-l0.sbnd", bands.l0)
    subband.write_band(out / f"{config.dataset}-{args.split}-g1.sbnd", bands.g1)
    print(f"{len(ds)} images: l0 {bands.l0.shape[1:]}, g1 {bands.g1.shape[1:]} -> {out}")
    return 0


def cmd_params(args, config):
    rep = harness.param_report(config)
    print(f"{config.dataset}, conv {config.conv_channels}, hidden {config.hidden_units}, {config.word_bits}-bit")
    for v, n in rep.counts.items():
        print(f"  {v:9s} {n:>10d} params  {rep.storage_bits[v]:>12d} bits")
    if args.vs_hidden or args.vs_bits:
        other = harness.param_report(config.replace(hidden_units=args.vs_hidden or config.hidden_units,
                                                    word_bits=args.vs_bits or config.word_bits))
        p, b = rep.ratio(other)
        print(f"fusion pair vs hidden {args.vs_hidden or config.hidden_units}, {other.word_bits}-bit: "
              f"{other.counts['fusion']} params; ratio {p:.3f}x params, {b:.3f}x storage bits")
    return 0


def cmd_gradcheck(args, config):
    worst = 0.0
    for i in range(args.networks):
        rep = harness.gradcheck_network(config.seed + i, args.tolerance)
        worst = max(worst, rep.max_rel_error)
        status = "ok" if rep.passed else "FAIL"
        print(f"network {i:2d}: max rel error {rep.max_rel_error:.3e} {status}")
    ok = worst < args.tolerance
    print(f"worst {worst:.3e} vs tolerance {args.tolerance:g}: {'pass' if ok else 'fail'}")
    return 0 if ok else EXIT_CHECK


COMMANDS = {
    "train": cmd_train,
    "sweep-precision": cmd_sweep_precision,
    "sweep-lr": cmd_sweep_lr,
    "decompose": cmd_decompose,
    "params": cmd_params,
    "gradcheck": cmd_gradcheck,
}


def _thread_limit(n):
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def parse_args(argv=None):
    args = build_parser().parse_args(argv)
    args.set += args.set_late
    return args


def main(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        config = resolve_config(args)
        with _thread_limit(args.threads):
            return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
