"""Multi-grained scanning with per-grain hash screening of window locations."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Dataset
from .errors import AllLocationsEliminated, ShapeMismatch, WindowLargerThanImage
from .forest import ForestModel, derive_seed, fit_forest
from .hash_screen import HashThresholdResult, LocationGroup, hashing_threshold, keep_all


@dataclass(frozen=True)
class GrainConfig:
    window: int
    stride: int = 1
    n_trees_per_forest: int = 30
    hash_screen: bool = True
    patch_fraction: float = 1.0

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ValueError("window and stride must be positive")
        if not 0.0 < self.patch_fraction <= 1.0:
            raise ValueError("patch_fraction must be in (0, 1]")


def grid(image_shape: tuple[int, int], g: GrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Top-left corners of every window position, row-major."""
    H, W = image_shape
    if g.window > H or g.window > W:
        raise WindowLargerThanImage(f"{g.window}x{g.window} window on a {H}x{W} image")
    rows = np.arange(0, H - g.window + 1, g.stride)
    cols = np.arange(0, W - g.window + 1, g.stride)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return rr.ravel().astype(np.int64), cc.ravel().astype(np.int64)


def extract_patches(image, g: GrainConfig) -> np.ndarray:
    """All window patches of one ``(H, W)`` image as rows of length ``window**2``."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeMismatch("expected a 2-D image")
    rows, cols = grid(image.shape, g)
    h = g.window
    return np.stack([image[r:r + h, c:c + h].ravel() for r, c in zip(rows, cols)])


def location_groups(images: np.ndarray, g: GrainConfig) -> list[LocationGroup]:
    rows, cols = grid(images.shape[1:], g)
    counts = _kernels.hash_bit_counts(np.ascontiguousarray(images), rows, cols, g.window, g.window)
    n = images.shape[0]
    return [LocationGroup.from_counts(r, counts[r], n) for r in range(rows.size)]


@dataclass(frozen=True, eq=False)
class GrainModel:
    config: GrainConfig
    image_shape: tuple[int, int]
    n_classes: int
    threshold: HashThresholdResult
    retained_locations: np.ndarray
    forests: tuple[ForestModel, ForestModel]

    @property
    def total_locations(self) -> int:
        return self.threshold.n_locations

    @property
    def output_width(self) -> int:
        return self.retained_locations.size * len(self.forests) * self.n_classes


def fit_grain(train: Dataset, g: GrainConfig, seed: int) -> GrainModel:
    if train.image_shape is None:
        raise ShapeMismatch("multi-grained scanning needs image-shaped data")
    images = np.ascontiguousarray(train.images())
    rows, cols = grid(train.image_shape, g)
    groups = location_groups(images, g)
    result = hashing_threshold(groups) if g.hash_screen else keep_all(groups)
    retained = np.array(sorted(result.keep), dtype=np.int64)
    if retained.size == 0:
        raise AllLocationsEliminated(f"grain {g.window}: no location survived screening")

    n = train.n_instances
    total = n * retained.size
    pair = np.arange(total, dtype=np.int64)
    if g.patch_fraction < 1.0:
        rng = np.random.default_rng(derive_seed(seed, g.window, 0x5CA))
        take = max(1, math.ceil(g.patch_fraction * total))
        pair = np.sort(rng.choice(total, size=take, replace=False))
    inst = pair // retained.size
    loc = retained[pair % retained.size]
    patches = _kernels.gather_patches(images, inst, loc, rows, cols, g.window, g.window)
    y = train.labels[inst]
    forests = tuple(
        fit_forest(patches, y, train.n_classes, kind, g.n_trees_per_forest,
                   derive_seed(seed, g.window, i))
        for i, kind in enumerate(("random", "completely_random")))
    return GrainModel(g, train.image_shape, train.n_classes, result, retained, forests)


def transform(m: GrainModel, d: Dataset) -> np.ndarray:
    """Class-vector features, columns ordered (location, forest, class)."""
    if d.image_shape != m.image_shape:
        raise ShapeMismatch(f"model expects images {m.image_shape}, got {d.image_shape}")
    images = np.ascontiguousarray(d.images())
    rows, cols = grid(m.image_shape, m.config)
    rows, cols = rows[m.retained_locations], cols[m.retained_locations]
    h = m.config.window
    blocks = [
        _kernels.predict_patches(images, rows, cols, h, h, f.feature, f.threshold, f.left,
                                 f.right, f.value, f.offsets)
        for f in m.forests
    ]
    out = np.stack(blocks, axis=2)  # (n, L, forest, K)
    return out.reshape(d.n_instances, -1)
