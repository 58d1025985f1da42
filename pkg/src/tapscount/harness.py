"""Run orchestration: generate / train / eval / compare, reports and curves.

Everything a run produces is a pure function of (config, seed): dataset
bytes, per-epoch CSV rows and the retained best-validation checkpoint are
bit-identical across repeated runs. Reports are CSV plus plain text, with
optional SVG renderings of the convergence curves and confusion matrix.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    Dataset,
    GenerationConfig,
    Split,
    build_dataset,
    dataset_tx,
    generation_config,
    load_dataset,
    rebuild_channel,
    save_dataset,
    split_dataset,
)
from .errors import ConfigError, ShapeMismatchError
from .network import (
    AdamState,
    PlateauScheduler,
    build_network,
    checkpoint_bytes,
    evaluate,
    load_checkpoint,
    train_epoch,
)
from .signals import defeaturize
from .sparse import convolution_dictionary, iht_count_taps, spectral_step
from .swiss import SwissConfig, swiss_identify

CURVE_COLUMNS = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc", "lr")

_SPLIT_KEY = 10
_INIT_KEY = 11
_EPOCH_KEY = 12


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """One experiment: dataset source, architecture, optimizer, outputs."""

    dataset_path: str = "dataset.taps"
    classes: tuple = tuple(range(1, 11))
    n_per_class: int = 200
    generation: GenerationConfig = GenerationConfig()
    ratios: tuple = (0.70, 0.15, 0.15)
    width: int = 300
    depth: int = 2
    alpha: float = 0.1
    dropout: float = 0.2
    lr: float = 1e-3
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    sched_factor: float = 0.8
    sched_patience: int = 18
    sched_min_delta: float = 1e-4
    epochs: int = 200
    seed: int = 0
    out_dir: str = "runs/out"
    plot: bool = False
    iht_significance: float = 0.05
    iht_max_iters: int = 200
    iht_tol: float = 1e-7
    swiss: SwissConfig = SwissConfig()


_CONFIG_GROUPS = {
    "dataset": {
        "path", "classes", "n_per_class", "n_tx", "cir_length", "max_delay",
        "sample_rate", "pdp_decay", "tx_scheme", "include_tx",
    },
    "split": {"ratios"},
    "architecture": {"width", "depth", "alpha", "dropout"},
    "optimizer": {"lr", "batch_size", "beta1", "beta2"},
    "scheduler": {"factor", "patience", "min_delta"},
    "iht": {"significance", "max_iters", "tol"},
    "swiss": {
        "eta", "n_pilots", "pilot_energy", "modulation", "n_subcarriers",
        "n_ofdm_symbols", "newton_init", "newton_iters", "newton_tol",
        "power_budget", "l_max",
    },
}
_TOP_KEYS = {"epochs", "seed", "out_dir", "plot"}


def config_from_dict(raw: dict) -> RunConfig:
    """Build a RunConfig from the documented JSON layout; reject unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for key, value in raw.items():
        if key in _CONFIG_GROUPS:
            unknown = set(value) - _CONFIG_GROUPS[key]
            if unknown:
                raise ConfigError(f"unknown keys in config group {key!r}: {sorted(unknown)}")
        elif key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")

    def group(name):
        return raw.get(name, {})

    ds = group("dataset")
    gen_kwargs = {
        k: ds[k]
        for k in ("n_tx", "cir_length", "max_delay", "sample_rate", "pdp_decay",
                  "tx_scheme", "include_tx")
        if k in ds
    }
    kwargs = {}
    if "path" in ds:
        kwargs["dataset_path"] = ds["path"]
    if "classes" in ds:
        kwargs["classes"] = tuple(ds["classes"])
    if "n_per_class" in ds:
        value = ds["n_per_class"]
        kwargs["n_per_class"] = tuple(value) if isinstance(value, list) else int(value)
    kwargs["generation"] = GenerationConfig(**gen_kwargs)
    if "ratios" in group("split"):
        kwargs["ratios"] = tuple(group("split")["ratios"])
    arch = group("architecture")
    for k in ("width", "depth", "alpha", "dropout"):
        if k in arch:
            kwargs[k] = arch[k]
    opt = group("optimizer")
    for k in ("lr", "batch_size", "beta1", "beta2"):
        if k in opt:
            kwargs[k] = opt[k]
    sched = group("scheduler")
    for src, dst in (("factor", "sched_factor"), ("patience", "sched_patience"),
                     ("min_delta", "sched_min_delta")):
        if src in sched:
            kwargs[dst] = sched[src]
    iht = group("iht")
    for src, dst in (("significance", "iht_significance"), ("max_iters", "iht_max_iters"),
                     ("tol", "iht_tol")):
        if src in iht:
            kwargs[dst] = iht[src]
    if "swiss" in raw:
        kwargs["swiss"] = SwissConfig(**group("swiss"))
    for k in _TOP_KEYS:
        if k in raw:
            kwargs[k] = raw[k]
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def _run_seed(config: RunConfig, key: int, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(config.seed, spawn_key=(key, *extra))


# ---------------------------------------------------------------------------
# dataset plumbing
# ---------------------------------------------------------------------------

def _build_from_config(config: RunConfig) -> Dataset:
    counts = (
        list(config.n_per_class)
        if isinstance(config.n_per_class, tuple)
        else config.n_per_class
    )
    return build_dataset(counts, config.classes, config.generation, config.seed)


def obtain_dataset(config: RunConfig, allow_generate: bool = True) -> Dataset:
    """Load the configured dataset, generating and saving it if absent."""
    path = Path(config.dataset_path)
    if path.exists():
        return load_dataset(path)
    if not allow_generate:
        raise FileNotFoundError(f"dataset not found: {path}")
    ds = _build_from_config(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, path)
    return ds


def cmd_generate(config: RunConfig) -> Path:
    """Generate the configured dataset and write it to dataset_path."""
    path = Path(config.dataset_path)
    ds = _build_from_config(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, path)
    return path


def run_split(config: RunConfig, ds: Dataset) -> Split:
    return split_dataset(ds, config.ratios, seed=_run_seed(config, _SPLIT_KEY))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint_path: Path
    curve_path: Path
    epochs_run: int
    best_val_acc: float
    final_lr: float
    wall_seconds: float


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows):
    lines = [",".join(columns)]
    lines += [",".join(_format(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train(config: RunConfig) -> TrainResult:
    """Train the classifier; retain the best-validation checkpoint.

    Writes out_dir/curve.csv with columns epoch, train_loss, val_loss,
    train_acc, val_acc, lr and out_dir/checkpoint.tapn.
    """
    started = time.perf_counter()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = obtain_dataset(config)
    if config.width < ds.n_classes:
        raise ConfigError(
            f"width {config.width} below class count {ds.n_classes}"
        )
    split = run_split(config, ds)

    net = build_network(
        ds.feature_dim,
        ds.n_classes,
        width=config.width,
        depth=config.depth,
        alpha=config.alpha,
        dropout_rate=config.dropout,
        seed=_run_seed(config, _INIT_KEY),
    )
    adam = AdamState.for_params(net.params(), beta1=config.beta1, beta2=config.beta2)
    sched = PlateauScheduler(
        lr=config.lr,
        factor=config.sched_factor,
        patience=config.sched_patience,
        min_delta=config.sched_min_delta,
    )

    x_train = ds.features[split.train]
    y_train = ds.labels[split.train]
    x_val = ds.features[split.validation]
    y_val = ds.labels[split.validation]

    rows = []
    best_val_acc = -1.0
    best_blob = checkpoint_bytes(net)
    for epoch in range(1, config.epochs + 1):
        lr_epoch = sched.lr
        train_loss, train_acc = train_epoch(
            net, x_train, y_train, config.batch_size,
            _run_seed(config, _EPOCH_KEY, epoch), adam, lr_epoch,
        )
        val_loss, val_acc, _ = evaluate(net, x_val, y_val)
        rows.append((epoch, train_loss, val_loss, train_acc, val_acc, lr_epoch))
        if val_acc > best_val_acc:
            best_val_acc = val_acc
            best_blob = checkpoint_bytes(net)
        sched.step(train_acc)

    curve_path = out_dir / "curve.csv"
    _write_csv(curve_path, CURVE_COLUMNS, rows)
    checkpoint_path = out_dir / "checkpoint.tapn"
    checkpoint_path.write_bytes(best_blob)
    if config.plot:
        _plot_curves(rows, out_dir / "convergence.svg")
    return TrainResult(
        checkpoint_path=checkpoint_path,
        curve_path=curve_path,
        epochs_run=config.epochs,
        best_val_acc=max(best_val_acc, 0.0),
        final_lr=sched.lr,
        wall_seconds=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray                 # row-normalized, rows = true class
    tolerance_accuracy: dict[int, float]  # k -> fraction |L_hat - L| <= k
    n_samples: int


def evaluation_report(true_classes, predicted_classes, class_map) -> EvalReport:
    """Accuracy, row-normalized confusion and tolerance curve on tap counts."""
    true_classes = np.asarray(true_classes)
    predicted_classes = np.asarray(predicted_classes)
    n_classes = len(class_map)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(true_classes, predicted_classes):
        counts[t, p] += 1
    row_sums = counts.sum(axis=1, keepdims=True)
    confusion = np.divide(
        counts, row_sums, out=np.zeros(counts.shape, dtype=np.float64),
        where=row_sums > 0,
    )
    per_class = np.divide(
        np.diag(counts), row_sums[:, 0],
        out=np.zeros(n_classes, dtype=np.float64), where=row_sums[:, 0] > 0,
    )
    lut = np.array([class_map[j] for j in range(n_classes)])
    true_taps = lut[true_classes]
    predicted_taps = lut[predicted_classes]
    deviation = np.abs(predicted_taps - true_taps)
    tolerance = {
        k: float((deviation <= k).mean()) for k in range(int(lut.max()) + 1)
    }
    return EvalReport(
        accuracy=float((true_classes == predicted_classes).mean()),
        per_class_accuracy=per_class,
        confusion=confusion,
        tolerance_accuracy=tolerance,
        n_samples=len(true_classes),
    )


def _split_part(split: Split, name: str) -> np.ndarray:
    try:
        return getattr(split, name)
    except AttributeError as exc:
        raise ConfigError(f"unknown split part {name!r}") from exc


def cmd_eval(config: RunConfig, checkpoint_path=None, split_part: str = "test") -> EvalReport:
    """Evaluate a checkpoint on one split part; write report files."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = Path(checkpoint_path or out_dir / "checkpoint.tapn")
    if not checkpoint_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint_path}")
    net = load_checkpoint(checkpoint_path)
    ds = obtain_dataset(config, allow_generate=False)
    if net.input_dim != ds.feature_dim:
        raise ShapeMismatchError(
            f"checkpoint expects {net.input_dim} features, dataset has {ds.feature_dim}"
        )
    if net.n_classes != ds.n_classes:
        raise ShapeMismatchError(
            f"checkpoint has {net.n_classes} classes, dataset has {ds.n_classes}"
        )
    indices = _split_part(run_split(config, ds), split_part)
    _, _, preds = evaluate(net, ds.features[indices], ds.labels[indices])
    report = evaluation_report(ds.labels[indices], preds, ds.class_map)
    write_eval_report(report, ds, out_dir, prefix=split_part)
    if config.plot:
        _plot_confusion(report.confusion, ds, out_dir / f"{split_part}_confusion.svg")
    return report


def write_eval_report(report: EvalReport, ds: Dataset, out_dir: Path, prefix: str = "test"):
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out_dir / f"{prefix}_confusion.csv",
        [str(ds.class_map[j]) for j in range(ds.n_classes)],
        [tuple(float(v) for v in row) for row in report.confusion],
    )
    _write_csv(
        out_dir / f"{prefix}_tolerance.csv",
        ("k", "fraction"),
        sorted(report.tolerance_accuracy.items()),
    )
    lines = [
        f"samples: {report.n_samples}",
        f"accuracy: {report.accuracy:.6f}",
        "per-class accuracy:",
    ]
    for j in range(ds.n_classes):
        lines.append(f"  L={ds.class_map[j]}: {report.per_class_accuracy[j]:.6f}")
    (out_dir / f"{prefix}_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# baselines and the three-way comparison
# ---------------------------------------------------------------------------

@dataclass
class MethodResult:
    name: str
    accuracy: float
    tolerance1: float
    mean_runtime_s: float
    n_samples: int


@dataclass
class CompareReport:
    methods: dict[str, MethodResult]
    test_indices: np.ndarray


def _tap_predictions_to_classes(predicted_taps, class_map) -> np.ndarray:
    """Snap raw tap-count estimates to the nearest class (ties to lower L)."""
    lut = np.array([class_map[j] for j in range(len(class_map))])
    predicted_taps = np.asarray(predicted_taps)
    diffs = np.abs(predicted_taps[:, None] - lut[None, :])
    return diffs.argmin(axis=1)


def eval_dnn(config: RunConfig, ds: Dataset, indices, checkpoint_path) -> MethodResult:
    net = load_checkpoint(checkpoint_path)
    started = time.perf_counter()
    _, _, preds = evaluate(net, ds.features[indices], ds.labels[indices])
    elapsed = time.perf_counter() - started
    report = evaluation_report(ds.labels[indices], preds, ds.class_map)
    return MethodResult(
        "dnn", report.accuracy, report.tolerance_accuracy.get(1, report.accuracy),
        elapsed / max(len(indices), 1), len(indices),
    )


def eval_swiss(config: RunConfig, ds: Dataset, indices) -> MethodResult:
    predicted = np.zeros(len(indices), dtype=np.int64)
    elapsed = 0.0
    for pos, index in enumerate(indices):
        cir = rebuild_channel(ds, int(index))
        started = time.perf_counter()
        predicted[pos] = swiss_identify(cir, config.swiss).identified_paths
        elapsed += time.perf_counter() - started
    pred_classes = _tap_predictions_to_classes(predicted, ds.class_map)
    report = evaluation_report(ds.labels[indices], pred_classes, ds.class_map)
    return MethodResult(
        "swiss", report.accuracy, report.tolerance_accuracy.get(1, report.accuracy),
        elapsed / max(len(indices), 1), len(indices),
    )


def rx_from_features(ds: Dataset, row: int) -> np.ndarray:
    """Recover the complex received block from a stored feature row."""
    gen = generation_config(ds)
    features = ds.features[row].astype(np.float64)
    if gen.include_tx:
        features = features[2 * gen.n_tx :]
    return defeaturize(features)


def eval_iht(config: RunConfig, ds: Dataset, indices) -> MethodResult:
    gen = generation_config(ds)
    master_seed = int(ds.metadata["master_seed"])
    tx = dataset_tx(gen, master_seed)
    step = spectral_step(convolution_dictionary(tx, gen.cir_length))
    predicted = np.zeros(len(indices), dtype=np.int64)
    elapsed = 0.0
    for pos, index in enumerate(indices):
        rx = rx_from_features(ds, int(index))
        started = time.perf_counter()
        predicted[pos] = iht_count_taps(
            tx, rx, gen.cir_length,
            significance=config.iht_significance,
            step=step,
            max_iters=config.iht_max_iters,
            tol=config.iht_tol,
        )
        elapsed += time.perf_counter() - started
    pred_classes = _tap_predictions_to_classes(predicted, ds.class_map)
    report = evaluation_report(ds.labels[indices], pred_classes, ds.class_map)
    return MethodResult(
        "iht", report.accuracy, report.tolerance_accuracy.get(1, report.accuracy),
        elapsed / max(len(indices), 1), len(indices),
    )


def cmd_compare(config: RunConfig, checkpoint_path=None) -> CompareReport:
    """Evaluate DNN, SWISS and IHT on the identical test split."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = Path(checkpoint_path or out_dir / "checkpoint.tapn")
    if not checkpoint_path.exists():
        raise FileNotFoundError(
            f"compare needs a trained checkpoint; none at {checkpoint_path}"
        )
    ds = obtain_dataset(config, allow_generate=False)
    indices = run_split(config, ds).test
    methods = {
        "dnn": eval_dnn(config, ds, indices, checkpoint_path),
        "swiss": eval_swiss(config, ds, indices),
        "iht": eval_iht(config, ds, indices),
    }
    report = CompareReport(methods=methods, test_indices=np.asarray(indices))
    write_compare_report(report, out_dir)
    return report


def write_compare_report(report: CompareReport, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        (m.name, m.accuracy, m.tolerance1, m.mean_runtime_s, m.n_samples)
        for m in report.methods.values()
    ]
    _write_csv(
        out_dir / "compare.csv",
        ("method", "accuracy", "tolerance_at_1", "mean_runtime_s", "n_samples"),
        rows,
    )
    _write_csv(out_dir / "compare_test_indices.csv", ("index",),
               [(int(i),) for i in report.test_indices])
    width = 12
    lines = [
        f"{'method':<8}{'accuracy':>{width}}{'tol@1':>{width}}{'s/sample':>{width}}",
    ]
    for m in report.methods.values():
        lines.append(
            f"{m.name:<8}{m.accuracy:>{width}.4f}{m.tolerance1:>{width}.4f}"
            f"{m.mean_runtime_s:>{width}.6f}"
        )
    (out_dir / "compare.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_baseline(config: RunConfig, method: str) -> MethodResult:
    """Run a single baseline (swiss or iht) on the test split."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = obtain_dataset(config, allow_generate=False)
    indices = run_split(config, ds).test
    if method == "swiss":
        result = eval_swiss(config, ds, indices)
    elif method == "iht":
        result = eval_iht(config, ds, indices)
    else:
        raise ConfigError(f"unknown baseline {method!r}")
    _write_csv(
        out_dir / f"{method}.csv",
        ("method", "accuracy", "tolerance_at_1", "mean_runtime_s", "n_samples"),
        [(result.name, result.accuracy, result.tolerance1,
          result.mean_runtime_s, result.n_samples)],
    )
    return result


# ---------------------------------------------------------------------------
# optional SVG rendering
# ---------------------------------------------------------------------------

def _plot_curves(rows, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.array([[float(v) for v in row] for row in rows])
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(9, 3.5))
    if data.size:
        epochs = data[:, 0]
        ax_acc.plot(epochs, data[:, 3], label="train")
        ax_acc.plot(epochs, data[:, 4], label="validation")
        ax_loss.plot(epochs, data[:, 1], label="train")
        ax_loss.plot(epochs, data[:, 2], label="validation")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.legend()
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("cross-entropy loss")
    ax_loss.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _plot_confusion(confusion: np.ndarray, ds: Dataset, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(confusion, cmap="viridis", vmin=0.0, vmax=1.0)
    labels = [str(ds.class_map[j]) for j in range(ds.n_classes)]
    ax.set_xticks(range(ds.n_classes), labels)
    ax.set_yticks(range(ds.n_classes), labels)
    ax.set_xlabel("predicted taps")
    ax.set_ylabel("true taps")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
