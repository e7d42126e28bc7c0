"""Datasets: CSV and IDX loaders plus seeded synthetic generators.

Every loader returns a :class:`Dataset` whose example ids are the row indices
``0..n-1``. Features are float64 throughout.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ContractViolation

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Example:
    id: int
    features: np.ndarray
    true_label: int


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int
    provenance: str = ""
    label_names: tuple = field(default=(), compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise ContractViolation(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ContractViolation("label vector length does not match number of rows")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ContractViolation(f"labels must lie in [0, {self.num_classes})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self))

    def example(self, i: int) -> Example:
        return Example(int(i), self.X[i], int(self.y[i]))

    def examples(self) -> list[Example]:
        return [self.example(i) for i in range(len(self))]


def load_csv(path, label_column: str, feature_columns=None) -> Dataset:
    """Read a comma-delimited file with a header row.

    Labels are remapped densely to ``0..C-1`` in order of first occurrence.
    ``feature_columns`` defaults to every column except the label column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractViolation(f"{path}: empty file, header row required") from None
        if label_column not in header:
            raise ContractViolation(f"{path}: unknown label column {label_column!r}")
        label_idx = header.index(label_column)
        if feature_columns is None:
            feat_idx = [i for i, name in enumerate(header) if i != label_idx]
        else:
            missing = [c for c in feature_columns if c not in header]
            if missing:
                raise ContractViolation(f"{path}: unknown feature columns {missing}")
            feat_idx = [header.index(c) for c in feature_columns]

        rows, labels, mapping = [], [], {}
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ContractViolation(
                    f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}")
            try:
                rows.append([float(row[i]) for i in feat_idx])
            except ValueError as exc:
                raise ContractViolation(f"{path}: row {row_no}: {exc}") from None
            labels.append(mapping.setdefault(row[label_idx], len(mapping)))

    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_idx))
    return Dataset(X, np.array(labels, dtype=np.int64), max(len(mapping), 1),
                   provenance=f"csv:{path}", label_names=tuple(mapping))


def write_csv(dataset: Dataset, path, label_column="label", feature_names=None):
    """Write ``dataset`` in the format :func:`load_csv` reads (floats round-trip exactly)."""
    f = dataset.feature_dim
    names = list(feature_names) if feature_names else [f"x{j}" for j in range(f)]
    labels = dataset.label_names or tuple(str(c) for c in range(dataset.num_classes))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [label_column])
        for xi, yi in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in xi] + [labels[yi]])


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair (the classic handwritten-digit container)."""
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()
    if len(img) < 16:
        raise ContractViolation(f"{images_path}: header truncated at offset {len(img)}")
    magic, n, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ContractViolation(f"{images_path}: bad magic 0x{magic:08x} at offset 0")
    expected = 16 + n * rows * cols
    if len(img) != expected:
        raise ContractViolation(
            f"{images_path}: payload length {len(img)} != {expected} (truncated at offset {len(img)})")
    if len(lab) < 8:
        raise ContractViolation(f"{labels_path}: header truncated at offset {len(lab)}")
    lmagic, ln = struct.unpack(">II", lab[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise ContractViolation(f"{labels_path}: bad magic 0x{lmagic:08x} at offset 0")
    if len(lab) != 8 + ln:
        raise ContractViolation(
            f"{labels_path}: payload length {len(lab)} != {8 + ln} (truncated at offset {len(lab)})")
    if ln != n:
        raise ContractViolation(f"count mismatch: {n} images at offset 4 vs {ln} labels at offset 4")
    X = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(n, rows * cols) / 255.0
    y = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64)
    C = int(y.max()) + 1 if n else 1
    return Dataset(X, y, C, provenance=f"idx:{images_path}")


def gen_blobs(num_classes: int, per_class: int, centers=None, spread: float = 1.0,
              seed: int = 0) -> Dataset:
    """Isotropic Gaussian clusters, ``per_class`` points each, rows grouped by class.

    ``centers`` defaults to ``num_classes`` points evenly spaced on a circle of
    radius 3 in the plane.
    """
    if centers is None:
        ang = 2 * math.pi * np.arange(num_classes) / num_classes
        centers = 3.0 * np.column_stack([np.cos(ang), np.sin(ang)])
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape[0] != num_classes:
        raise ContractViolation("need one center per class")
    rng = np.random.default_rng(seed)
    X = np.repeat(centers, per_class, axis=0)
    X = X + spread * rng.standard_normal(X.shape)
    y = np.repeat(np.arange(num_classes), per_class)
    return Dataset(X, y, num_classes,
                   provenance=f"blobs(C={num_classes},per_class={per_class},spread={spread},seed={seed})")


def gen_two_moons(n: int, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved unit half-circles; class 0 gets ``n // 2`` points."""
    n0 = n // 2
    n1 = n - n0
    rng = np.random.default_rng(seed)
    t0 = np.linspace(0.0, math.pi, n0)
    t1 = np.linspace(0.0, math.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([upper, lower])
    if noise:
        X = X + noise * rng.standard_normal(X.shape)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return Dataset(X, y, 2, provenance=f"two_moons(n={n},noise={noise},seed={seed})")


_BUILDERS = {
    "blobs": (gen_blobs, {"num_classes", "per_class", "centers", "spread", "seed"}),
    "two_moons": (gen_two_moons, {"n", "noise", "seed"}),
    "csv": (load_csv, {"path", "label_column", "feature_columns"}),
    "idx": (load_idx, {"images_path", "labels_path"}),
}


def build_dataset(config: dict) -> Dataset:
    """Build a dataset from a ``{"kind": ..., **arguments}`` mapping."""
    config = dict(config)
    kind = config.pop("kind", None)
    if kind not in _BUILDERS:
        raise ContractViolation(f"dataset.kind must be one of {sorted(_BUILDERS)}, got {kind!r}")
    fn, allowed = _BUILDERS[kind]
    unknown = sorted(set(config) - allowed)
    if unknown:
        raise ContractViolation(f"dataset: unknown keys {unknown} for kind {kind!r}")
    return fn(**config)
