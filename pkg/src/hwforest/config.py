"""Cascade configuration, named presets and the flat ``key = value`` config format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

SCREENINGS = ("window", "binning", "none")


@dataclass(frozen=True)
class CascadeConfig:
    forests: tuple[str, ...] = ("random", "completely_random")
    trees_per_forest: int = 50
    cv_folds: int = 5
    max_levels: int = 10
    screening: str = "window"
    bins: int = 100
    error_factor: float = 0.5      # TA halves the level's OOF error rate
    validation_fraction: float = 0.1
    grains: tuple[int, ...] = (4, 6, 8)
    stride: int = 1
    scan_trees: int = 30
    hash_screen: bool = True
    patch_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_levels < 1:
            raise ConfigError("max_levels must be >= 1")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if self.screening not in SCREENINGS:
            raise ConfigError(f"screening must be one of {SCREENINGS}, got {self.screening!r}")
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if not 0.0 < self.error_factor <= 1.0:
            raise ConfigError("error_factor must be in (0, 1]")
        if not self.forests:
            raise ConfigError("a level needs at least one forest")
        if not 0.0 < self.patch_fraction <= 1.0:
            raise ConfigError("patch_fraction must be in (0, 1]")

    def replace(self, **kw) -> "CascadeConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}


PRESETS: dict[str, CascadeConfig] = {
    # forest sizes, folds and window sizes of the reference setup
    "full": CascadeConfig(),
    # desk scale: fewer trees and folds, sparse patch sampling for grain forests
    "desk": CascadeConfig(trees_per_forest=30, cv_folds=3, scan_trees=20, patch_fraction=0.05),
}

# flat config keys -> CascadeConfig field
_CASCADE_KEYS = {
    "seed": "seed",
    "screening": "screening",
    "bins": "bins",
    "levels": "max_levels",
    "cv_folds": "cv_folds",
    "cascade.trees": "trees_per_forest",
    "cascade.forests": "forests",
    "ta.error_factor": "error_factor",
    "validation_fraction": "validation_fraction",
    "grains": "grains",
    "stride": "stride",
    "scan.trees": "scan_trees",
    "scan.hash_screen": "hash_screen",
    "scan.patch_fraction": "patch_fraction",
}

_RUN_KEYS = {
    "preset", "threads", "out", "subsample", "test_fraction", "model",
    "data.train_images", "data.train_labels", "data.test_images", "data.test_labels",
    "data.train_csv", "data.test_csv", "data.label_column", "data.header",
    "bench.arms", "bench.folds", "stats.input", "stats.ranks", "stats.q_alpha",
}


def parse_bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("on", "true", "yes", "1"):
        return True
    if s in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"expected on/off, got {v!r}")


def parse_list(v: str) -> list[str]:
    s = str(v).strip()
    if s.startswith("[") and s.endswith("]"):
        s = s[1:-1]
    return [p.strip() for p in s.split(",") if p.strip()]


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{n}: empty key")
        out[key] = value
    return out


def check_keys(raw: dict[str, str]) -> None:
    for key in raw:
        if key in _CASCADE_KEYS or key in _RUN_KEYS or key.startswith("encode."):
            continue
        raise ConfigError(f"unknown config key {key!r}")


def cascade_config(raw: dict[str, str], base: CascadeConfig | None = None) -> CascadeConfig:
    """Overlay flat keys on ``base`` (or the preset named by ``preset``)."""
    check_keys(raw)
    if base is None:
        name = raw.get("preset", "full")
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[name]
    kw: dict[str, Any] = {}
    try:
        for key, attr in _CASCADE_KEYS.items():
            if key not in raw:
                continue
            v = raw[key]
            if attr in ("grains",):
                kw[attr] = tuple(int(x) for x in parse_list(v))
            elif attr == "forests":
                kw[attr] = tuple(parse_list(v))
            elif attr == "hash_screen":
                kw[attr] = parse_bool(v)
            elif attr == "screening":
                kw[attr] = v.strip()
            elif attr in ("error_factor", "validation_fraction", "patch_fraction"):
                kw[attr] = float(v)
            else:
                kw[attr] = int(v)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return base.replace(**kw)


def encoding_map(raw: dict[str, str]) -> dict[str | int, str]:
    enc: dict[str | int, str] = {}
    for key, v in raw.items():
        if key.startswith("encode."):
            col = key[len("encode."):]
            if v not in ("ordinal", "onehot"):
                raise ConfigError(f"{key}: expected ordinal|onehot, got {v!r}")
            enc[int(col) if col.lstrip("-").isdigit() else col] = v
    return enc
