"""Labeled (features, tap-count) corpora: generation, splitting, persistence.

Every sample is generated from a seed derived from (master_seed, class,
within-class index), so a dataset is a pure function of its configuration
and the layout order does not matter. Features are stored as float32 in a
little-endian binary file (magic "TAPS") with a UTF-8 key-value sidecar
carrying the generation parameters; that sidecar is enough to regenerate
the underlying channels, which the baseline evaluators rely on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .channel import ChannelClassSpec, discretize_cir, sample_channel
from .errors import FileFormatError
from .signals import generate_tx, make_frame

DATASET_MAGIC = b"TAPS"
DATASET_VERSION = 1

_PILOT_KEY = 0
_SAMPLE_KEY = 1


@dataclass(frozen=True)
class GenerationConfig:
    """Channel + signal parameters shared by every sample of a dataset."""

    n_tx: int = 1000             # transmit block length
    cir_length: int = 500        # impulse-response grid length K; rx = n_tx + K - 1
    max_delay: float = 500.0     # seconds; delay grid = floor(max_delay * sample_rate)
    sample_rate: float = 1.0
    pdp_decay: float = 0.0
    tx_scheme: str = "qpsk"
    include_tx: bool = False

    def __post_init__(self):
        grid = int(np.floor(self.max_delay * self.sample_rate))
        if grid > self.cir_length:
            raise ValueError(
                f"delay grid {grid} does not fit the impulse-response length {self.cir_length}"
            )

    def feature_dim(self) -> int:
        n_rx = self.n_tx + self.cir_length - 1
        return 2 * (n_rx + self.n_tx) if self.include_tx else 2 * n_rx

    def class_spec(self, n_taps: int) -> ChannelClassSpec:
        return ChannelClassSpec(
            n_taps=n_taps,
            max_delay=self.max_delay,
            pdp_decay=self.pdp_decay,
            sample_rate=self.sample_rate,
        )


@dataclass
class Dataset:
    features: np.ndarray                 # (n_samples, feature_dim) float32
    labels: np.ndarray                   # (n_samples,) class indices
    class_map: dict[int, int]            # class index -> tap count
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_map)

    def tap_counts(self) -> np.ndarray:
        """Ground-truth tap count per sample."""
        lut = np.array([self.class_map[j] for j in range(self.n_classes)])
        return lut[self.labels]


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def pilot_seed(master_seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(_PILOT_KEY,))


def sample_seed(master_seed: int, class_index: int, within_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(_SAMPLE_KEY, class_index, within_index))


def dataset_tx(gen: GenerationConfig, master_seed: int) -> np.ndarray:
    """The fixed per-dataset transmit block (one pilot for every sample)."""
    return generate_tx(gen.n_tx, pilot_seed(master_seed), gen.tx_scheme)


def build_dataset(
    n_per_class,
    classes,
    gen: GenerationConfig,
    master_seed: int,
) -> Dataset:
    """Generate a balanced (or per-class-count) labeled corpus.

    n_per_class may be a single int or one count per class. Samples are laid
    out class-major; each one is channel -> discretize -> convolve with the
    dataset pilot -> featurize.
    """
    classes = list(classes)
    if len(set(classes)) != len(classes) or not classes:
        raise ValueError("classes must be nonempty and distinct")
    if isinstance(n_per_class, int):
        counts = [n_per_class] * len(classes)
    else:
        counts = list(n_per_class)
        if len(counts) != len(classes):
            raise ValueError("one count per class required")

    tx = dataset_tx(gen, master_seed)
    total = sum(counts)
    features = np.zeros((total, gen.feature_dim()), dtype=np.float32)
    labels = np.zeros(total, dtype=np.int64)

    row = 0
    for class_index, (n_taps, count) in enumerate(zip(classes, counts)):
        spec = gen.class_spec(n_taps)
        for within in range(count):
            ch = sample_channel(spec, sample_seed(master_seed, class_index, within))
            h = discretize_cir(ch, gen.cir_length)
            frame = make_frame(tx, h, include_tx=gen.include_tx)
            features[row] = frame.features.astype(np.float32)
            labels[row] = class_index
            row += 1

    metadata = {
        "master_seed": str(master_seed),
        "classes": ",".join(str(c) for c in classes),
        "counts": ",".join(str(c) for c in counts),
        "precision": "float32",
        **{k: str(v) for k, v in asdict(gen).items()},
    }
    class_map = {j: c for j, c in enumerate(classes)}
    return Dataset(features=features, labels=labels, class_map=class_map, metadata=metadata)


def generation_config(ds: Dataset) -> GenerationConfig:
    """Rebuild the GenerationConfig recorded in a dataset's metadata."""
    meta = ds.metadata
    return GenerationConfig(
        n_tx=int(meta["n_tx"]),
        cir_length=int(meta["cir_length"]),
        max_delay=float(meta["max_delay"]),
        sample_rate=float(meta["sample_rate"]),
        pdp_decay=float(meta["pdp_decay"]),
        tx_scheme=meta["tx_scheme"],
        include_tx=meta["include_tx"] == "True",
    )


def rebuild_channel(ds: Dataset, index: int) -> np.ndarray:
    """Regenerate the discretized impulse response behind sample `index`.

    Works for any row order: the within-class index is the number of earlier
    rows with the same label, matching the generation seeds.
    """
    gen = generation_config(ds)
    master_seed = int(ds.metadata["master_seed"])
    class_index = int(ds.labels[index])
    within = int(np.count_nonzero(ds.labels[:index] == class_index))
    spec = gen.class_spec(ds.class_map[class_index])
    ch = sample_channel(spec, sample_seed(master_seed, class_index, within))
    return discretize_cir(ch, gen.cir_length)


# ---------------------------------------------------------------------------
# stratified splitting
# ---------------------------------------------------------------------------

def _largest_remainder(n: int, ratios) -> list[int]:
    """Integer allocation of n by ratios; ties go to the earlier ratio."""
    exact = [r * n for r in ratios]
    counts = [int(np.floor(e)) for e in exact]
    leftover = n - sum(counts)
    by_fraction = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in by_fraction[:leftover]:
        counts[i] += 1
    return counts


def split_dataset(ds: Dataset, ratios=(0.70, 0.15, 0.15), seed=0) -> Split:
    """Stratified train/validation/test split, deterministic per seed.

    Per-class allocation uses the largest-remainder rule, so every class
    lands within one sample of the requested proportions.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for class_index in range(ds.n_classes):
        rows = np.flatnonzero(ds.labels == class_index)
        if rows.size < 3:
            raise ValueError(
                f"class {class_index} has {rows.size} samples; need >= 3 to split"
            )
        rows = rng.permutation(rows)
        n_train, n_val, _ = _largest_remainder(rows.size, ratios)
        parts[0].append(rows[:n_train])
        parts[1].append(rows[n_train : n_train + n_val])
        parts[2].append(rows[n_train + n_val :])
    train, val, test = (np.concatenate(p) for p in parts)
    return Split(train=train, validation=val, test=test)


# ---------------------------------------------------------------------------
# persistence (magic "TAPS", little-endian; UTF-8 key-value sidecar)
# ---------------------------------------------------------------------------

def _meta_path(path) -> Path:
    return Path(str(path) + ".meta")


def save_dataset(ds: Dataset, path):
    """Write the binary dataset file and its metadata sidecar."""
    n, d = ds.features.shape
    out = bytearray()
    out += DATASET_MAGIC
    out += struct.pack("<IIII", DATASET_VERSION, n, d, ds.n_classes)
    for j in range(ds.n_classes):
        out += struct.pack("<I", ds.class_map[j])
    for i in range(n):
        out += np.ascontiguousarray(ds.features[i], dtype="<f4").tobytes()
        out += struct.pack("<H", int(ds.labels[i]))
    with open(path, "wb") as fh:
        fh.write(bytes(out))
    lines = [f"{key} = {value}" for key, value in sorted(ds.metadata.items())]
    _meta_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path) -> Dataset:
    """Read a TAPS file back; lossless against save_dataset."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != DATASET_MAGIC:
        raise FileFormatError("bad dataset magic")
    if len(data) < 20:
        raise FileFormatError("truncated dataset header")
    version, n, d, n_classes = struct.unpack_from("<IIII", data, 4)
    if version != DATASET_VERSION:
        raise FileFormatError(f"unsupported dataset version {version}")
    pos = 20
    if len(data) < pos + 4 * n_classes:
        raise FileFormatError("truncated class map")
    class_map = {}
    for j in range(n_classes):
        (class_map[j],) = struct.unpack_from("<I", data, pos)
        pos += 4
    record = 4 * d + 2
    if len(data) != pos + record * n:
        raise FileFormatError("truncated dataset body")
    features = np.zeros((n, d), dtype=np.float32)
    labels = np.zeros(n, dtype=np.int64)
    for i in range(n):
        features[i] = np.frombuffer(data, dtype="<f4", count=d, offset=pos)
        pos += 4 * d
        (labels[i],) = struct.unpack_from("<H", data, pos)
        pos += 2
    metadata = {}
    meta_file = _meta_path(path)
    if meta_file.exists():
        for line in meta_file.read_text(encoding="utf-8").splitlines():
            if " = " in line:
                key, value = line.split(" = ", 1)
                metadata[key] = value
    return Dataset(features=features, labels=labels, class_map=class_map, metadata=metadata)
