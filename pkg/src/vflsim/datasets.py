"""Dataset containers, file formats, and vertical partitioning.

A Table is a float64 feature matrix with optional integer labels. Vertical
partitioning assigns each feature column to exactly one node; helpers cover
equal contiguous slices (images split by pixel-column groups, flat tables by
column ranges) and named splits for the credit-default layout.

File formats: the IDX binary format for image/label tensors (big-endian
dimension header, uint8 payload) and plain CSV with a header row for
tabular data.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DataFormatError, DimensionError
from .seeding import rng_for

# Column names of the credit-default table, in file order. The first 13 are
# held by the insurance node, the remaining 10 by the bank node (which also
# hosts the coordinating server).
INSURANCE_FEATURES = (
    "LIMIT_BAL",
    "SEX",
    "EDUCATION",
    "MARRIAGE",
    "AGE",
    "PAY_0",
    "PAY_2",
    "PAY_3",
    "PAY_4",
    "PAY_5",
    "PAY_6",
    "BILL_AMT1",
    "BILL_AMT2",
)
BANK_FEATURES = (
    "BILL_AMT3",
    "BILL_AMT4",
    "BILL_AMT5",
    "BILL_AMT6",
    "PAY_AMT1",
    "PAY_AMT2",
    "PAY_AMT3",
    "PAY_AMT4",
    "PAY_AMT5",
    "PAY_AMT6",
)
CREDIT_FEATURES = INSURANCE_FEATURES + BANK_FEATURES
CREDIT_LABEL = "default payment next month"


@dataclass
class Table:
    """Feature matrix (N, d) with optional labels (N,) of class indices."""

    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()
    class_count: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DimensionError(f"features must be 2-D, got {self.features.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise DimensionError(
                    f"labels shape {self.labels.shape} does not match "
                    f"{self.features.shape[0]} rows"
                )
            if self.class_count == 0:
                self.class_count = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.feature_names and len(self.feature_names) != self.features.shape[1]:
            raise DimensionError("feature_names length does not match column count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, rows: np.ndarray) -> "Table":
        return Table(
            self.features[rows],
            self.labels[rows] if self.labels is not None else None,
            self.feature_names,
            self.class_count,
        )


@dataclass
class VerticalSplit:
    """Assignment of feature columns to nodes.

    `columns[k]` lists the column indices of node k within the full table.
    Together the lists must cover every column exactly once.
    """

    columns: list[np.ndarray]

    def __post_init__(self):
        self.columns = [np.asarray(c, dtype=np.int64) for c in self.columns]
        if not self.columns:
            raise ContractError("a vertical split needs at least one node")
        merged = np.concatenate([c for c in self.columns]) if self.columns else np.empty(0)
        total = merged.size
        if np.unique(merged).size != total:
            raise ContractError("vertical split assigns a column to two nodes")

    @property
    def party_count(self) -> int:
        return len(self.columns)

    def dims(self) -> list[int]:
        return [c.size for c in self.columns]

    def validate_cover(self, dim: int) -> None:
        covered = np.sort(np.concatenate(self.columns))
        if covered.size != dim or not np.array_equal(covered, np.arange(dim)):
            raise ContractError(
                f"vertical split covers {covered.size} of {dim} columns"
            )

    def node_view(self, table: Table, node: int) -> np.ndarray:
        return table.features[:, self.columns[node]]


def equal_column_slices(dim: int, parties: int) -> VerticalSplit:
    """Contiguous near-equal column ranges, leftmost nodes get the extras."""
    if parties < 1 or parties > dim:
        raise ContractError(f"cannot split {dim} columns across {parties} nodes")
    bounds = np.linspace(0, dim, parties + 1).round().astype(int)
    return VerticalSplit([np.arange(bounds[k], bounds[k + 1]) for k in range(parties)])


def image_column_slices(height: int, width: int, parties: int) -> VerticalSplit:
    """Split flattened (height x width) images into vertical pixel-column bands.

    Band k holds pixel columns [w_k, w_{k+1}) of every row, matching how an
    image is cut into side-by-side strips.
    """
    bounds = np.linspace(0, width, parties + 1).round().astype(int)
    cols = []
    for k in range(parties):
        band = [
            r * width + c for r in range(height) for c in range(bounds[k], bounds[k + 1])
        ]
        cols.append(np.asarray(band, dtype=np.int64))
    return VerticalSplit(cols)


def credit_feature_split(feature_names: tuple[str, ...]) -> VerticalSplit:
    """Two-node split of the credit table: insurance features, then bank features."""
    name_to_idx = {name: i for i, name in enumerate(feature_names)}
    missing = [n for n in CREDIT_FEATURES if n not in name_to_idx]
    if missing:
        raise DataFormatError(f"credit table missing columns: {missing}")
    return VerticalSplit(
        [
            np.asarray([name_to_idx[n] for n in INSURANCE_FEATURES], dtype=np.int64),
            np.asarray([name_to_idx[n] for n in BANK_FEATURES], dtype=np.int64),
        ]
    )


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode an IDX tensor (uint8 payload) into a numpy array."""
    if len(raw) < 4:
        raise DataFormatError("IDX data shorter than its magic number")
    zero1, zero2, dtype, ndim = raw[0], raw[1], raw[2], raw[3]
    if zero1 != 0 or zero2 != 0:
        raise DataFormatError("bad IDX magic: first two bytes must be zero")
    if dtype != 0x08:
        raise DataFormatError(f"unsupported IDX element type 0x{dtype:02x}")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DataFormatError("IDX data truncated inside the dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    expected = int(np.prod(dims)) if dims else 0
    payload = raw[header_end:]
    if len(payload) != expected:
        raise DataFormatError(
            f"IDX payload holds {len(payload)} bytes, header promises {expected}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(array: np.ndarray, path: Path) -> None:
    """Encode a uint8 tensor in the IDX format."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim]) + struct.pack(
        f">{array.ndim}I", *array.shape
    )
    Path(path).write_bytes(header + array.tobytes())


def load_idx_pair(images_path: Path, labels_path: Path) -> Table:
    """Read an images + labels IDX pair into a flat Table scaled to [0, 1]."""
    images = parse_idx(Path(images_path).read_bytes())
    labels = parse_idx(Path(labels_path).read_bytes())
    if images.ndim != 3:
        raise DataFormatError(f"expected 3-D image tensor, got {images.ndim}-D")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise DataFormatError("image and label counts disagree")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Table(flat, labels.astype(np.int64))


def load_csv(path: Path, label_column: str, drop_columns: tuple[str, ...] = ("ID",)) -> Table:
    """Read a headered CSV into a Table, coercing every kept column to float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path} is empty")
        rows = list(reader)
    if label_column not in header:
        raise DataFormatError(f"{path} has no column named {label_column!r}")
    keep = [
        i
        for i, name in enumerate(header)
        if name != label_column and name not in drop_columns
    ]
    label_idx = header.index(label_column)
    try:
        features = np.asarray(
            [[float(row[i]) for i in keep] for row in rows], dtype=np.float64
        )
        labels = np.asarray([int(float(row[label_idx])) for row in rows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"malformed row in {path}: {exc}") from exc
    return Table(features, labels, tuple(header[i] for i in keep))


def write_csv(table: Table, path: Path, label_column: str) -> None:
    """Write a labeled Table as a headered CSV with an ID column."""
    if table.labels is None or not table.feature_names:
        raise ContractError("write_csv needs labels and feature names")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ID", *table.feature_names, label_column])
        for i in range(table.n):
            row = [i + 1]
            row.extend(format(v, "g") for v in table.features[i])
            row.append(int(table.labels[i]))
            writer.writerow(row)


def train_test_split(
    table: Table, test_fraction: float, seed_parts: tuple
) -> tuple[Table, Table]:
    """Deterministic stratified split: per class, a seeded shuffle then a cut.

    Each class contributes round(test_fraction * class_size) rows to the test
    side, so class proportions carry over as closely as rounding allows.
    """
    if table.labels is None:
        raise ContractError("stratified split requires labels")
    if not (0.0 < test_fraction < 1.0):
        raise ContractError("test_fraction must be in (0, 1)")
    rng = rng_for(*seed_parts)
    test_rows: list[np.ndarray] = []
    train_rows: list[np.ndarray] = []
    for cls in np.unique(table.labels):
        rows = np.flatnonzero(table.labels == cls)
        rows = rows[rng.permutation(rows.size)]
        cut = int(round(test_fraction * rows.size))
        test_rows.append(rows[:cut])
        train_rows.append(rows[cut:])
    train_idx = np.sort(np.concatenate(train_rows))
    test_idx = np.sort(np.concatenate(test_rows))
    return table.take(train_idx), table.take(test_idx)


def subsample(table: Table, n: int, seed_parts: tuple) -> Table:
    """Seeded stratified subsample of approximately n rows (exact when divisible)."""
    if n >= table.n:
        return table
    if table.labels is None:
        rng = rng_for(*seed_parts)
        rows = np.sort(rng.permutation(table.n)[:n])
        return table.take(rows)
    rng = rng_for(*seed_parts)
    frac = n / table.n
    picked: list[np.ndarray] = []
    for cls in np.unique(table.labels):
        rows = np.flatnonzero(table.labels == cls)
        rows = rows[rng.permutation(rows.size)]
        picked.append(rows[: int(round(frac * rows.size))])
    return table.take(np.sort(np.concatenate(picked)))


@dataclass
class Standardizer:
    """Per-column z-score transform with statistics frozen from training data."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def fit_standardizer(x: np.ndarray) -> Standardizer:
    """Column means and stds from `x`.

    Stds are floored at 0.1% of the largest column std (or at 1.0 when every
    column is constant), so near-constant columns are centered without their
    noise being blown up.
    """
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    top = float(std.max()) if std.size else 0.0
    floor = 1e-3 * top if top > 0.0 else 1.0
    std = np.maximum(std, floor)
    return Standardizer(mean=mean, std=std)


@dataclass
class BlobSpec:
    """Gaussian-blob classification problem for fast synthetic checks."""

    n: int = 600
    dim: int = 12
    classes: int = 4
    separation: float = 4.0
    noise: float = 1.0


def synth_blobs(spec: BlobSpec, seed_parts: tuple) -> Table:
    """Isotropic Gaussian clusters with centers rescaled to a set separation."""
    rng = rng_for(*seed_parts)
    centers = rng.normal(size=(spec.classes, spec.dim))
    dists = [
        np.linalg.norm(centers[i] - centers[j])
        for i in range(spec.classes)
        for j in range(i + 1, spec.classes)
    ]
    if dists:
        centers *= spec.separation / max(min(dists), 1e-9)
    labels = np.arange(spec.n) % spec.classes
    rng.shuffle(labels)
    features = centers[labels] + spec.noise * rng.normal(size=(spec.n, spec.dim))
    return Table(features, labels, class_count=spec.classes)
