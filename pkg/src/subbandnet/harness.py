"""Experiment orchestration: per-variant training, per-epoch fusion metrics,
precision and learning-rate sweeps, stability, parameter accounting and
CSV output.

Variants:

``original``  LeNet on the unaltered image
``laplace``   LeNet on the L0 (edge) band, full resolution
``gblur``     LeNet on the G1 (texture) band, half resolution
``fusion``    not a network: the averaged softmax of laplace and gblur
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import inspect
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels_py, cnn, data, fusion, qnum, subband
from .errors import ConfigConflict, ConfigError, InsufficientEpochs
from .qnum import WORD_LENGTHS, RoundingSchedule, apply_schedule

log = logging.getLogger(__name__)

VARIANTS = ("original", "gblur", "laplace", "fusion")
TRAINED = ("original", "gblur", "laplace")
METRICS_COLUMNS = ("epoch", "variant", "train_error", "test_error", "wall_seconds")
SUMMARY_COLUMNS = ("variant", "final_test_error", "param_count", "word_bits")
CIFAR_DESK_SUBSET = 10000
DEFAULT_EPOCHS = {"mnist": 30, "cifar10": 50}
INPUT_SHAPES = {"mnist": (1, 28, 28), "cifar10": (3, 32, 32)}


@dataclass
class ExperimentConfig:
    dataset: str = "mnist"
    variants: tuple = VARIANTS
    word_bits: int = 32
    rounding_schedule: RoundingSchedule = RoundingSchedule.NONE
    learning_rate: float = 0.1
    epochs: int | None = None  # None: dataset default
    batch_size: int = 64
    hidden_units: int = 500
    conv_channels: tuple = (20, 50)
    seed: int = 0
    output_dir: str | None = None
    data_dir: str | None = None  # None: data/<dataset>
    train_subset: int | None = -1  # -1: dataset default, 0/None: everything
    test_subset: int | None = 0

    def __post_init__(self):
        if self.dataset not in INPUT_SHAPES:
            raise ConfigError(f"dataset must be one of {sorted(INPUT_SHAPES)}, got {self.dataset!r}")
        if isinstance(self.variants, str):
            self.variants = tuple(v.strip() for v in self.variants.split(",") if v.strip())
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ConfigError(f"unknown variants {sorted(unknown)}; choose from {VARIANTS}")
        self.variants = tuple(v for v in VARIANTS if v in set(self.variants))
        try:
            self.rounding_schedule = RoundingSchedule.parse(self.rounding_schedule)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.epochs is None:
            self.epochs = DEFAULT_EPOCHS[self.dataset]
        if self.train_subset == -1:
            self.train_subset = CIFAR_DESK_SUBSET if self.dataset == "cifar10" else 0
        if self.data_dir is None:
            self.data_dir = str(Path("data") / self.dataset)
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        self.validate()

    def validate(self):
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not self.variants:
            raise ConfigError(f"variants must be a non-empty subset of {VARIANTS}")
        if "fusion" in self.variants and not {"laplace", "gblur"} <= set(self.variants):
            raise ConfigConflict("fusion needs both laplace and gblur trained in the same run")
        if self.word_bits not in WORD_LENGTHS:
            raise ConfigError(f"word_bits must be one of {WORD_LENGTHS}")
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0 or self.hidden_units < 1:
            raise ConfigError("learning_rate >= 0, batch_size >= 1, epochs >= 0, hidden_units >= 1 required")
        if len(self.conv_channels) != 2 or min(self.conv_channels) < 1:
            raise ConfigError("conv_channels must be two positive integers")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format_value(value):
    if isinstance(value, RoundingSchedule):
        return value.value
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return ""
    return str(value)


_INT_KEYS = {"word_bits", "epochs", "batch_size", "hidden_units", "seed", "train_subset", "test_subset"}


def parse_config_text(text, base=None):
    """Parse ``key = value`` lines (``#`` comments) into an :class:`ExperimentConfig`."""
    values = {}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = value
    return config_from_strings(values, base)


def config_from_strings(values, base=None):
    kwargs = {}
    if base is not None:
        kwargs = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
        if "dataset" in values and values["dataset"] != base.dataset:
            # dataset-dependent defaults must be re-resolved
            for key in ("epochs", "data_dir"):
                kwargs[key] = None
            kwargs["train_subset"] = -1
    try:
        for key, value in values.items():
            if key in _INT_KEYS:
                kwargs[key] = int(value) if value != "" else None
            elif key == "learning_rate":
                kwargs[key] = float(value)
            elif key == "conv_channels":
                kwargs[key] = tuple(int(v) for v in value.split(","))
            elif key in ("output_dir", "data_dir"):
                kwargs[key] = value or None
            else:
                kwargs[key] = value
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, base=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base)


# -- metrics -----------------------------------------------------------------

@dataclass
class MetricsRow:
    epoch: int
    variant: str
    train_error: float
    test_error: float
    wall_seconds: float


@dataclass
class SummaryRow:
    variant: str
    final_test_error: float
    param_count: int
    word_bits: int


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    config: ExperimentConfig | None = None

    def add(self, row: MetricsRow):
        if any(r.epoch == row.epoch and r.variant == row.variant for r in self.rows):
            raise ValueError(f"duplicate row for epoch {row.epoch}, variant {row.variant}")
        for err in (row.train_error, row.test_error):
            if not 0.0 <= err <= 1.0:
                raise ValueError(f"error {err} outside [0, 1]")
        self.rows.append(row)

    def variants(self):
        seen = [r.variant for r in self.rows] + [s.variant for s in self.summary]
        return [v for v in VARIANTS if v in seen]

    def series(self, variant, column="test_error"):
        return [getattr(r, column) for r in sorted(self.rows, key=lambda r: r.epoch) if r.variant == variant]

    def final(self, variant):
        for s in self.summary:
            if s.variant == variant:
                return s.final_test_error
        raise KeyError(variant)


def emit_metrics_csv(log_: MetricsLog, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in log_.rows:
            w.writerow([r.epoch, r.variant, repr(r.train_error), repr(r.test_error), repr(r.wall_seconds)])


def emit_summary_csv(log_: MetricsLog, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in log_.summary:
            w.writerow([s.variant, repr(s.final_test_error), s.param_count, s.word_bits])


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return MetricsLog(rows=[
            MetricsRow(int(r["epoch"]), r["variant"], float(r["train_error"]),
                       float(r["test_error"]), float(r["wall_seconds"]))
            for r in reader
        ])


def read_summary_csv(path):
    with open(path, newline="") as fh:
        return [SummaryRow(r["variant"], float(r["final_test_error"]), int(r["param_count"]), int(r["word_bits"]))
                for r in csv.DictReader(fh)]


def emit_plot_data(log_: MetricsLog, path, label=None):
    """Wide per-epoch test-error table: ``epoch,<variant>,...`` (one curve per column)."""
    variants = log_.variants()
    epochs = sorted({r.epoch for r in log_.rows})
    cell = {(r.epoch, r.variant): r.test_error for r in log_.rows}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch"] + [f"{label}_{v}" if label else v for v in variants])
        for e in epochs:
            w.writerow([e] + [repr(cell[(e, v)]) if (e, v) in cell else "" for v in variants])


def save_log(log_: MetricsLog, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    emit_metrics_csv(log_, d / "metrics.csv")
    emit_summary_csv(log_, d / "summary.csv")
    if log_.config is not None:
        (d / "config.txt").write_text(_stamped(log_.config), encoding="utf-8")


def code_fingerprint():
    """Hash of everything that shapes a training trajectory; stale saved runs are not reused."""
    h = hashlib.blake2b(digest_size=8)
    for mod in (cnn, qnum, subband, data, fusion, _kernels_py):
        h.update(inspect.getsource(mod).encode())
    for fn in _TRAJECTORY_CODE:
        h.update(inspect.getsource(fn).encode())
    return h.hexdigest()


def _stamped(config):
    return f"# subbandnet {__version__} code {code_fingerprint()}\n" + config.to_text()


def load_log(directory, config=None):
    """Read a saved log; with ``config`` given, return None unless it was produced by that config."""
    d = Path(directory)
    paths = [d / "metrics.csv", d / "summary.csv", d / "config.txt"]
    if not all(p.exists() for p in paths):
        return None
    text = paths[2].read_text(encoding="utf-8")
    if config is not None and text != _stamped(config):
        return None
    out = read_metrics_csv(paths[0])
    out.summary = read_summary_csv(paths[1])
    out.config = config if config is not None else parse_config_text(text)
    return out


# -- running -----------------------------------------------------------------

def variant_seed(seed, variant):
    """``seed`` XOR a stable 64-bit hash of the variant name."""
    h = int.from_bytes(hashlib.blake2b(variant.encode(), digest_size=8).digest(), "little")
    return (int(seed) & (2**64 - 1)) ^ h


def variant_streams(seed, variant):
    """Independent (init, shuffle, rounding) generators for one variant."""
    ss = np.random.SeedSequence(variant_seed(seed, variant))
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def _load_data(config):
    train = data.load_dataset(config.dataset, config.data_dir, "train").head(config.train_subset or None)
    test = data.load_dataset(config.dataset, config.data_dir, "test").head(config.test_subset or None)
    return train, test


def _variant_inputs(config, train, test):
    trained = [v for v in TRAINED if v in config.variants]
    inputs = {}
    if "original" in trained:
        inputs["original"] = (train, test)
    if {"laplace", "gblur"} & set(trained):
        sub_tr, sub_te = data.decompose_dataset(train), data.decompose_dataset(test)
        inputs["laplace"] = (sub_tr.band("l0"), sub_te.band("l0"))
        inputs["gblur"] = (sub_tr.band("g1"), sub_te.band("g1"))
    return {v: inputs[v] for v in trained}


@dataclass
class _VariantState:
    net: cnn.Network
    shuffle_rng: np.random.Generator
    round_rng: np.random.Generator


def _evaluate_epoch(config, states, inputs, bits, epoch, train_out, target, total_epochs):
    """Apply the rounding schedule, evaluate on the test set, append rows to ``target``."""
    test_probs = {}
    for v, st in states.items():
        t0 = time.perf_counter()
        if epoch >= 1:
            apply_schedule(st.net, config.rounding_schedule, epoch - 1, total_epochs, bits, st.round_rng)
        test = inputs[v][1]
        test_probs[v] = cnn.predict_proba(st.net, test.images)
        err = cnn.error_rate(test_probs[v], test.labels)
        if epoch >= 1:
            train_err, wall, _ = train_out[v]
            target.add(MetricsRow(epoch, v, train_err, err, round(wall + time.perf_counter() - t0, 3)))
        else:
            target.summary.append(SummaryRow(v, err, cnn.param_count(st.net), bits))
    if "fusion" in config.variants:
        t0 = time.perf_counter()
        labels = inputs["laplace"][1].labels
        fused_test = fusion.predict_fused(test_probs["laplace"], test_probs["gblur"])
        test_err = float(np.count_nonzero(fused_test != labels)) / len(labels)
        if epoch >= 1:
            train_fused = fusion.predict_fused(train_out["laplace"][2], train_out["gblur"][2])
            train_labels = inputs["laplace"][0].labels
            train_err = float(np.count_nonzero(train_fused != train_labels)) / len(train_labels)
            target.add(MetricsRow(epoch, "fusion", train_err, test_err, round(time.perf_counter() - t0, 3)))
            bound = min(target.series("laplace")[-1], target.series("gblur")[-1]) + 0.05
            if test_err > bound:
                log.warning("epoch %d: fusion error %.4f exceeds min(laplace, gblur) + 5 points", epoch, test_err)
        else:
            n_params = sum(cnn.param_count(states[v].net) for v in ("laplace", "gblur"))
            target.summary.append(SummaryRow("fusion", test_err, n_params, bits))


def _finalize_summary(config, states, target, bits):
    if config.epochs == 0:
        return
    for v in config.variants:
        last = target.series(v)[-1]
        n = (cnn.param_count(states[v].net) if v != "fusion"
             else sum(cnn.param_count(states[u].net) for u in ("laplace", "gblur")))
        target.summary.append(SummaryRow(v, last, n, bits))


def _run(config: ExperimentConfig, branch_bits=None, datasets=None):
    """Train once; return ``{word_bits: MetricsLog}``.

    With the end-only schedule the trajectory before the last rounding does
    not depend on the word length (rounding draws from its own stream), so
    several word lengths can branch off the same run at the final epoch.
    Each branch is bitwise identical to a standalone run at that length.
    """
    config.validate()
    branch_bits = list(branch_bits or [config.word_bits])
    if len(branch_bits) > 1 and config.rounding_schedule is not RoundingSchedule.AFTER_FINAL_EPOCH:
        raise ValueError("only the end-only schedule can branch over word lengths")
    train, test = datasets if datasets is not None else _load_data(config)
    inputs = _variant_inputs(config, train, test)
    states = {}
    for v, (tr, _) in inputs.items():
        init_rng, shuffle_rng, round_rng = variant_streams(config.seed, v)
        net = cnn.build_lenet(tr.shape, config.conv_channels, config.hidden_units, rng=init_rng)
        states[v] = _VariantState(net, shuffle_rng, round_rng)
    logs = {b: MetricsLog(config=config.replace(word_bits=b)) for b in branch_bits}
    tc = cnn.TrainConfig(learning_rate=config.learning_rate, epochs=config.epochs,
                         batch_size=config.batch_size, hidden_units=config.hidden_units,
                         seed=config.seed, word_bits=config.word_bits, schedule=config.rounding_schedule)
    need_train_probs = "fusion" in config.variants

    if config.epochs == 0:
        for b in branch_bits:
            _evaluate_epoch(logs[b].config, states, inputs, b, 0, None, logs[b], 0)
        return logs

    for epoch in range(1, config.epochs + 1):
        train_out = {}
        for v, st in states.items():
            t0 = time.perf_counter()
            tr = inputs[v][0]
            probs = np.empty((len(tr), cnn.NUM_CLASSES), dtype=st.net.dtype) if (
                need_train_probs and v in ("laplace", "gblur")) else None
            _, err = cnn.train_epoch(st.net, tr, tc, st.shuffle_rng, probs_out=probs)
            train_out[v] = (err, time.perf_counter() - t0, probs)
        last = epoch == config.epochs
        if last and len(branch_bits) > 1:
            for b in branch_bits:
                branch = {v: _VariantState(st.net.copy(), st.shuffle_rng, copy.deepcopy(st.round_rng))
                          for v, st in states.items()}
                _evaluate_epoch(logs[b].config, branch, inputs, b, epoch, train_out, logs[b], config.epochs)
                _finalize_summary(config, branch, logs[b], b)
        else:
            b = branch_bits[0]
            _evaluate_epoch(config, states, inputs, b, epoch, train_out, logs[b], config.epochs)
            if last:
                _finalize_summary(config, states, logs[b], b)
            # before the last epoch no branch has rounded yet, so they all share these rows
            for other in branch_bits[1:]:
                for r in logs[b].rows:
                    if r.epoch == epoch:
                        logs[other].add(dataclasses.replace(r))
        msg = ", ".join(f"{r.variant} {r.test_error:.4f}" for r in logs[branch_bits[0]].rows if r.epoch == epoch)
        log.info("epoch %d/%d test error: %s", epoch, config.epochs, msg)
    return logs


def run_experiment(config: ExperimentConfig, datasets=None):
    """Train every requested variant and return its :class:`MetricsLog`.

    Writes metrics.csv, summary.csv and config.txt to ``config.output_dir`` when set.
    ``datasets`` optionally supplies preloaded ``(train, test)``.
    """
    result = _run(config, datasets=datasets)[config.word_bits]
    if config.output_dir:
        save_log(result, config.output_dir)
    return result


def cached_run(config: ExperimentConfig, datasets=None):
    """Like :func:`run_experiment`, but reuse a log already saved in ``config.output_dir``
    by the same config and code."""
    if config.output_dir:
        saved = load_log(config.output_dir, config.replace(output_dir=None))
        if saved is not None:
            return saved
    result = _run(config, datasets=datasets)[config.word_bits]
    result.config = config.replace(output_dir=None)
    if config.output_dir:
        save_log(result, config.output_dir)
    return result


# functions whose source is part of the code fingerprint
_TRAJECTORY_CODE = (_run, _evaluate_epoch, _finalize_summary, _variant_inputs, _load_data,
                    variant_streams, variant_seed)


# -- sweeps ------------------------------------------------------------------

@dataclass
class PrecisionSweep:
    cells: dict  # (schedule, word_bits) -> MetricsLog
    word_bits: tuple
    schedules: tuple

    def table(self, schedule):
        """``{variant: {bits: final_test_error}}``."""
        schedule = RoundingSchedule.parse(schedule)
        out = {}
        for bits in self.word_bits:
            lg = self.cells[(schedule, bits)]
            for s in lg.summary:
                out.setdefault(s.variant, {})[bits] = s.final_test_error
        return out


def _cell_dir(base_dir, schedule, bits):
    return Path(base_dir) / f"{schedule.value}_{bits}bit"


def precision_sweep(base: ExperimentConfig, word_bits_list=(32, 16, 8, 4),
                    schedules=(RoundingSchedule.AFTER_FINAL_EPOCH, RoundingSchedule.AFTER_EVERY_EPOCH),
                    reuse=False, datasets=None):
    """One cell per (schedule, word length).

    The end-only cells and the per-epoch 32-bit cell all follow one training
    trajectory (32-bit rounding is a no-op), so that trajectory is trained
    once and branched at the final epoch. Every other per-epoch cell is its
    own run. With ``reuse``, cells already saved under ``base.output_dir`` by
    an identical config are read back instead of retrained.
    """
    final, every = RoundingSchedule.AFTER_FINAL_EPOCH, RoundingSchedule.AFTER_EVERY_EPOCH
    schedules = tuple(RoundingSchedule.parse(s) for s in schedules)
    if any(s not in (final, every) for s in schedules):
        raise ConfigError("precision sweeps take the 'final' and 'every' schedules only")
    word_bits_list = tuple(word_bits_list)
    out_dir = base.output_dir
    cells = {}

    def cfg(schedule, bits):
        return base.replace(rounding_schedule=schedule, word_bits=bits, output_dir=None)

    def cached(schedule, bits):
        if reuse and out_dir:
            return load_log(_cell_dir(out_dir, schedule, bits), cfg(schedule, bits))
        return None

    def store(schedule, bits, lg):
        lg.config = cfg(schedule, bits)
        cells[(schedule, bits)] = lg
        if out_dir:
            save_log(lg, _cell_dir(out_dir, schedule, bits))

    shared = [(s, b) for s in schedules for b in word_bits_list if s is final or b == 32]
    separate = [(s, b) for s in schedules for b in word_bits_list if (s, b) not in shared]

    hits = {c: cached(*c) for c in shared}
    if all(h is not None for h in hits.values()):
        cells.update(hits)
    else:
        bits = sorted({b for _, b in shared}, reverse=True)
        branches = _run(cfg(final, bits[0]), branch_bits=bits, datasets=datasets)
        for s, b in shared:
            store(s, b, copy.deepcopy(branches[b]))
    for s, b in separate:
        lg = cached(s, b)
        if lg is None:
            store(s, b, _run(cfg(s, b), datasets=datasets)[b])
        else:
            cells[(s, b)] = lg

    sweep = PrecisionSweep(cells, word_bits_list, schedules)
    if out_dir:
        names = {final: "fig4_final.csv", every: "fig4_every.csv"}
        for s in schedules:
            write_fig4(sweep, s, Path(out_dir) / names[s])
        low = min(word_bits_list)
        if every in schedules and 32 in word_bits_list and low < 32:
            write_fig9(cells[(every, 32)], cells[(every, low)], low, Path(out_dir) / "fig9.csv")
    return sweep


def write_fig4(sweep: PrecisionSweep, schedule, path):
    """Rows Original/GBlur/Laplace/Fusion, columns per word length, values in percent."""
    table = sweep.table(schedule)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant"] + [f"{b}bit" for b in sweep.word_bits])
        for v in VARIANTS:
            if v in table:
                w.writerow([v] + [f"{100 * table[v][b]:.2f}" for b in sweep.word_bits])


def write_fig9(full_log, low_log, low_bits, path):
    """Per-epoch test error of the 32-bit original against the low-precision fusion."""
    a = full_log.series("original")
    b = low_log.series("fusion")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "original_32bit", f"fusion_{low_bits}bit"])
        for i in range(max(len(a), len(b))):
            w.writerow([i + 1, repr(a[i]) if i < len(a) else "", repr(b[i]) if i < len(b) else ""])


def lr_sweep(base: ExperimentConfig, rates=(0.1, 0.01, 0.001), reuse=False, datasets=None):
    """One run per learning rate; returns ``{rate: MetricsLog}`` and writes fig6.csv."""
    logs = {}
    for rate in rates:
        sub = Path(base.output_dir) / f"lr_{rate}" if base.output_dir else None
        cfg = base.replace(learning_rate=float(rate), output_dir=None)
        lg = load_log(sub, cfg) if (reuse and sub) else None
        if lg is None:
            lg = _run(cfg, datasets=datasets)[cfg.word_bits]
            if sub:
                save_log(lg, sub)
        logs[rate] = lg
    if base.output_dir:
        write_fig6(logs, Path(base.output_dir) / "fig6.csv")
    return logs


def write_fig6(logs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["learning_rate", "epoch", "variant", "test_error"])
        for rate, lg in logs.items():
            for r in lg.rows:
                if r.variant in ("original", "fusion"):
                    w.writerow([rate, r.epoch, r.variant, repr(r.test_error)])


def stability(log_: MetricsLog, variant, window=10):
    """Sample standard deviation of the test error over the last ``window`` epochs."""
    series = log_.series(variant)
    if window < 2 or len(series) < window:
        raise InsufficientEpochs(f"{variant}: need {window} epochs (>= 2), have {len(series)}")
    return statistics.stdev(series[-window:])


# -- parameter accounting ----------------------------------------------------

@dataclass
class ParamReport:
    counts: dict       # variant -> parameter count
    word_bits: int

    @property
    def storage_bits(self):
        return {v: n * self.word_bits for v, n in self.counts.items()}

    def ratio(self, other: "ParamReport", variant="fusion"):
        """(parameter ratio, storage-bit ratio) of ``self`` over ``other``."""
        return (self.counts[variant] / other.counts[variant],
                self.storage_bits[variant] / other.storage_bits[variant])


def variant_input_shape(dataset, variant):
    c, h, w = INPUT_SHAPES[dataset]
    if variant == "gblur":
        return (c, (h + 1) // 2, (w + 1) // 2)
    return (c, h, w)


def param_report(config: ExperimentConfig) -> ParamReport:
    counts = {}
    for v in TRAINED:
        net = cnn.build_lenet(variant_input_shape(config.dataset, v), config.conv_channels,
                              config.hidden_units, rng=np.random.default_rng(0))
        counts[v] = cnn.param_count(net)
    counts["fusion"] = counts["laplace"] + counts["gblur"]
    return ParamReport(counts, config.word_bits)


# -- gradient checking on small random networks ------------------------------

def gradcheck_network(seed, tolerance=1e-4, max_draws=50):
    """Gradient-check one small random single-channel LeNet (13x13 or 16x16).

    Biases are drawn from U(-0.5, 0.5) so no ReLU input sits exactly on its
    kink, and the sample is redrawn until no finite-difference perturbation
    crosses a ReLU or pooling decision boundary.
    """
    rng = np.random.default_rng(seed)
    side = int(rng.choice((13, 16)))
    channels = 1
    net = cnn.build_lenet((channels, side, side), (2, 3), 5, rng=rng, dtype=np.float64)
    for layer in net.trainable_layers():
        layer.bias[...] = rng.uniform(-0.5, 0.5, size=layer.bias.shape)
    report = None
    for _ in range(max_draws):
        n = int(rng.integers(1, 3))
        images = rng.uniform(-1.0, 1.0, size=(n, channels, side, side))
        labels = rng.integers(0, 10, size=n)
        report = cnn.gradient_check(net, (images, labels), tolerance)
        if report.kink_crossings == 0:
            break
    return report
