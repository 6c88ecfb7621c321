"""Versioned model container: a ``.npz`` archive of tree arrays plus a JSON header."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .cascade import CascadeLevel, CascadeModel
from .errors import ModelFormatError
from .forest import ForestModel
from .hash_screen import HashThresholdResult
from .scanning import GrainConfig, GrainModel

FORMAT = "hwforest-model"
VERSION = 1
_ARRAYS = ("feature", "threshold", "left", "right", "value", "count", "offsets")


def _forest_meta(f: ForestModel, key: str, arrays: dict) -> dict:
    for name, arr in f.arrays().items():
        arrays[f"{key}.{name}"] = arr
    return {"key": key, "kind": f.kind, "n_classes": f.n_classes,
            "n_features": f.n_features, "seed": int(f.seed)}


def _forest_load(meta: dict, z) -> ForestModel:
    key = meta["key"]
    arrs = {name: z[f"{key}.{name}"] for name in _ARRAYS}
    return ForestModel(meta["kind"], meta["n_classes"], meta["n_features"], meta["seed"], **arrs)


def _threshold_meta(r: HashThresholdResult) -> dict:
    return {"order": list(r.order), "distances": list(r.distances), "total_mass": r.total_mass,
            "n_table": {str(k): v for k, v in r.n_table.items()}, "p": r.p, "ht": r.ht,
            "keep": sorted(r.keep)}


def _threshold_load(m: dict) -> HashThresholdResult:
    return HashThresholdResult(tuple(m["order"]), tuple(m["distances"]), m["total_mass"],
                               {int(k): v for k, v in m["n_table"].items()}, m["p"], m["ht"],
                               frozenset(m["keep"]))


def _write_atomic(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header_array(header: dict) -> np.ndarray:
    return np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)


def _read(path) -> tuple[dict, object]:
    try:
        z = np.load(path, allow_pickle=False)
        header = json.loads(bytes(z["__header__"]).decode("utf-8"))
    except (OSError, KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: not a model file ({exc})") from None
    if header.get("format") != FORMAT:
        raise ModelFormatError(f"{path}: unexpected format {header.get('format')!r}")
    if header.get("version") != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {header.get('version')}")
    return header, z


def save_forest(f: ForestModel, path) -> None:
    arrays: dict = {}
    header = {"format": FORMAT, "version": VERSION, "type": "forest",
              "forest": _forest_meta(f, "f", arrays)}
    _write_atomic(Path(path), {"__header__": _header_array(header), **arrays})


def load_forest(path) -> ForestModel:
    header, z = _read(path)
    if header.get("type") != "forest":
        raise ModelFormatError(f"{path}: not a forest file")
    return _forest_load(header["forest"], z)


def save_model(m: CascadeModel, path, config: dict | None = None) -> None:
    arrays: dict = {}
    levels = []
    for t, lv in enumerate(m.levels):
        levels.append({
            "level_index": lv.level_index, "wt": lv.wt, "ta": lv.ta,
            "oof_accuracy": lv.oof_accuracy, "n_entering": lv.n_entering,
            "n_retired": lv.n_retired, "val_accuracy": lv.val_accuracy, "n_high": lv.n_high,
            "forests": [_forest_meta(f, f"L{t}F{i}", arrays) for i, f in enumerate(lv.forests)],
        })
    grains = []
    for g, gm in enumerate(m.grain_models):
        arrays[f"G{g}.retained"] = gm.retained_locations
        c = gm.config
        grains.append({
            "config": {"window": c.window, "stride": c.stride,
                       "n_trees_per_forest": c.n_trees_per_forest,
                       "hash_screen": c.hash_screen, "patch_fraction": c.patch_fraction},
            "image_shape": list(gm.image_shape), "n_classes": gm.n_classes,
            "threshold": _threshold_meta(gm.threshold),
            "forests": [_forest_meta(f, f"G{g}F{i}", arrays) for i, f in enumerate(gm.forests)],
        })
    header = {
        "format": FORMAT, "version": VERSION, "type": "cascade",
        "n_classes": m.n_classes, "base_width": m.base_width, "raw_width": m.raw_width,
        "image_shape": list(m.image_shape) if m.image_shape else None,
        "levels": levels, "grains": grains, "config": config,
    }
    _write_atomic(Path(path), {"__header__": _header_array(header), **arrays})


def load_model(path) -> CascadeModel:
    header, z = _read(path)
    if header.get("type") != "cascade":
        raise ModelFormatError(f"{path}: not a cascade model file")
    levels = [
        CascadeLevel(lv["level_index"], tuple(_forest_load(f, z) for f in lv["forests"]),
                     lv["wt"], lv["ta"], lv["oof_accuracy"], lv["n_entering"],
                     lv["n_retired"], lv["val_accuracy"], lv.get("n_high", -1))
        for lv in header["levels"]
    ]
    grains = [
        GrainModel(GrainConfig(**g["config"]), tuple(g["image_shape"]), g["n_classes"],
                   _threshold_load(g["threshold"]), z[f"G{i}.retained"],
                   tuple(_forest_load(f, z) for f in g["forests"]))
        for i, g in enumerate(header["grains"])
    ]
    shape = tuple(header["image_shape"]) if header["image_shape"] else None
    return CascadeModel(header["n_classes"], header["base_width"], levels, grains, shape,
                        header["raw_width"])


def read_header(path) -> dict:
    return _read(path)[0]
