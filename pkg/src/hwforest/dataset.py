"""Dataset container, IDX/CSV ingestion and seeded splits."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BadMagic,
    ClassWithSingleInstance,
    CountMismatch,
    InvalidDataset,
    NonNumericCell,
    RaggedRow,
    TruncatedFile,
    UnknownLabelColumn,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix with integer labels in ``0..n_classes-1``.

    ``label_names[i]`` is the original label that was remapped to class ``i``.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    image_shape: tuple[int, int] | None = None
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, order="C", copy=True)
        y = np.array(self.labels, dtype=np.int64, copy=True)
        if X.ndim != 2:
            raise InvalidDataset(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise InvalidDataset(f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} instances")
        if self.n_classes < 1:
            raise InvalidDataset("n_classes must be positive")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise InvalidDataset(f"labels must lie in [0, {self.n_classes - 1}]")
        if not np.all(np.isfinite(X)):
            raise InvalidDataset("features contain NaN or infinite values")
        shape = self.image_shape
        if shape is not None:
            shape = (int(shape[0]), int(shape[1]))
            if shape[0] * shape[1] != X.shape[1]:
                raise InvalidDataset(f"image_shape {shape} does not match {X.shape[1]} features")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_classes", int(self.n_classes))
        object.__setattr__(self, "image_shape", shape)
        if self.label_names is not None:
            object.__setattr__(self, "label_names", tuple(str(s) for s in self.label_names))

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def images(self) -> np.ndarray:
        """Features viewed as ``(n, height, width)``."""
        if self.image_shape is None:
            raise InvalidDataset("dataset has no image_shape")
        return self.features.reshape(self.n_instances, *self.image_shape)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.features[index], self.labels[index], self.n_classes,
                       self.image_shape, self.label_names)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0
    stratified: bool = True


def _read_exact(buf: bytes, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(buf):
        raise TruncatedFile(f"{what}: need {offset + n} bytes, file has {len(buf)}")
    return buf[offset:offset + n]


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label file pair (MNIST layout), scaling pixels to [0, 1]."""
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()

    magic, n_img, rows, cols = struct.unpack(">IIII", _read_exact(img, 0, 16, "image header"))
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagic(f"image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")
    magic_l, n_lab = struct.unpack(">II", _read_exact(lab, 0, 8, "label header"))
    if magic_l != IDX_LABELS_MAGIC:
        raise BadMagic(f"label file magic {magic_l:#010x}, expected {IDX_LABELS_MAGIC:#010x}")
    if n_img != n_lab:
        raise CountMismatch(f"{n_img} images but {n_lab} labels")

    pixels = np.frombuffer(_read_exact(img, 16, n_img * rows * cols, "image data"), dtype=np.uint8)
    labels = np.frombuffer(_read_exact(lab, 8, n_lab, "label data"), dtype=np.uint8).astype(np.int64)
    X = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    n_classes = int(labels.max()) + 1 if labels.size else 1
    return Dataset(X, labels, n_classes, (rows, cols))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images ``(n, rows, cols)`` and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: str | int = -1, *, header: bool | None = None,
             encode: Mapping[str | int, str] | None = None) -> Dataset:
    """Load a comma-separated table.

    ``label_column`` is a header name or a (possibly negative) column index.
    ``header=None`` assumes a header row exactly when ``label_column`` is a name.
    ``encode`` maps feature columns (name or index) to ``"ordinal"`` or
    ``"onehot"``; categories are coded in first-appearance order.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if header is None:
        header = isinstance(label_column, str)
    names: list[str] | None = None
    if header:
        if not rows:
            raise RaggedRow("empty file")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(names) if names is not None else (len(rows[0]) if rows else 0)
    for i, r in enumerate(rows):
        if len(r) != width or any(c.strip() == "" for c in r):
            raise RaggedRow(f"row {i + 1 + int(bool(header))} has a missing or extra cell")

    def resolve(col) -> int:
        if isinstance(col, str):
            if names is None or col not in names:
                raise UnknownLabelColumn(col)
            return names.index(col)
        idx = int(col)
        if not -width <= idx < width:
            raise UnknownLabelColumn(col)
        return idx % width

    label_idx = resolve(label_column)
    encoding = {resolve(k): v for k, v in (encode or {}).items()}
    for v in encoding.values():
        if v not in ("ordinal", "onehot"):
            raise ValueError(f"unknown encoding {v!r}")

    label_names: list[str] = []
    label_code: dict[str, int] = {}
    labels = []
    for r in rows:
        key = r[label_idx].strip()
        if key not in label_code:
            label_code[key] = len(label_names)
            label_names.append(key)
        labels.append(label_code[key])

    columns = []
    for j in range(width):
        if j == label_idx:
            continue
        cells = [r[j].strip() for r in rows]
        mode = encoding.get(j)
        if mode is None:
            try:
                columns.append(np.array([float(c) for c in cells], dtype=np.float64)[:, None])
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise NonNumericCell(f"column {names[j] if names else j}: {bad!r}") from None
            continue
        codes: dict[str, int] = {}
        coded = np.array([codes.setdefault(c, len(codes)) for c in cells], dtype=np.int64)
        if mode == "ordinal":
            columns.append(coded.astype(np.float64)[:, None])
        else:
            columns.append(np.eye(len(codes), dtype=np.float64)[coded])
    X = np.hstack(columns) if columns else np.zeros((len(rows), 0))
    return Dataset(X, np.array(labels, dtype=np.int64), max(len(label_names), 1),
                   None, tuple(label_names))


def write_csv(d: Dataset, path, *, header: bool = True) -> None:
    """Write features then the label column; floats use round-trip repr."""
    names = d.label_names or tuple(str(i) for i in range(d.n_classes))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"f{j}" for j in range(d.n_features)] + ["label"])
        for x, y in zip(d.features, d.labels):
            w.writerow([repr(float(v)) for v in x] + [names[y]])


def _apportion(counts: np.ndarray, fraction: float, total: int) -> np.ndarray:
    # largest-remainder: per-class quotas summing to `total`
    exact = counts * fraction
    quota = np.floor(exact).astype(np.int64)
    short = total - int(quota.sum())
    if short > 0:
        order = np.lexsort((np.arange(len(counts)), -(exact - quota)))
        quota[order[:short]] += 1
    elif short < 0:
        order = np.lexsort((np.arange(len(counts)), exact - quota))
        quota[order[:-short]] -= 1
    return quota


def split_indices(labels: np.ndarray, s: SplitSpec, n_classes: int | None = None):
    """Return sorted ``(train_idx, test_idx)`` for ``labels`` under ``s``."""
    if not 0.0 < s.train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {s.train_fraction}")
    labels = np.asarray(labels)
    n = labels.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence(int(s.seed)))
    n_train = int(round(s.train_fraction * n))
    if not s.stratified:
        perm = rng.permutation(n)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    n_classes = n_classes or (int(labels.max()) + 1 if n else 0)
    counts = np.bincount(labels, minlength=n_classes)
    if np.any(counts == 1):
        raise ClassWithSingleInstance(f"classes {np.flatnonzero(counts == 1).tolist()} have one instance")
    quota = _apportion(counts, s.train_fraction, n_train)
    train = []
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        train.append(members[rng.permutation(members.size)[:quota[c]]])
    train_idx = np.sort(np.concatenate(train)) if train else np.zeros(0, np.int64)
    mask = np.ones(n, dtype=bool)
    mask[train_idx] = False
    return train_idx, np.flatnonzero(mask)


def split(d: Dataset, s: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(d.labels, s, d.n_classes)
    return d.subset(train_idx), d.subset(test_idx)


def concat(parts: Sequence[Dataset]) -> Dataset:
    first = parts[0]
    return Dataset(np.vstack([p.features for p in parts]),
                   np.concatenate([p.labels for p in parts]),
                   max(p.n_classes for p in parts), first.image_shape, first.label_names)
