"""Level-wise cascade with confidence screening and validation-based stopping."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import conf_screen
from .config import CascadeConfig
from .dataset import Dataset, SplitSpec, split_indices
from .errors import DimensionMismatch, EmptyTrainingSet
from .forest import ForestModel, derive_seed, fit_forest, make_fold_plan, oof_predict
from .scanning import GrainConfig, GrainModel, fit_grain, transform

log = logging.getLogger(__name__)

ALL_PASS = conf_screen.ALL_PASS
NO_PASS = 2.0
"""Threshold above every confidence: nothing is finalized (screening disabled)."""

_FOLD_SALT = 0xF0
_FULL_SALT = 0xFF


@dataclass(frozen=True, eq=False)
class CascadeLevel:
    level_index: int
    forests: tuple[ForestModel, ...]
    wt: float
    ta: float
    oof_accuracy: float
    n_entering: int
    n_retired: int
    val_accuracy: float
    n_high: int = -1    # screening's high-confidence count, before last-level finalization

    @property
    def train_accuracy(self) -> float:
        return self.oof_accuracy


@dataclass(eq=False)
class CascadeModel:
    n_classes: int
    base_width: int
    levels: list[CascadeLevel]
    grain_models: list[GrainModel] = field(default_factory=list)
    image_shape: tuple[int, int] | None = None
    raw_width: int | None = None

    def level_width(self, t: int) -> int:
        """Input width of level ``t`` (0-based)."""
        if t == 0:
            return self.base_width
        return self.base_width + len(self.levels[t - 1].forests) * self.n_classes


def base_features(grain_models: list[GrainModel], d: Dataset) -> np.ndarray:
    if not grain_models:
        return d.features
    return np.hstack([transform(g, d) for g in grain_models])


def _level_proba(forests, X, rows=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-forest distributions ``(n, F*K)`` and their average ``(n, K)``."""
    per = [f.predict_proba(X, rows) for f in forests]
    return np.hstack(per), np.mean(per, axis=0)


def _screen(cfg: CascadeConfig, proba: np.ndarray, labels: np.ndarray, ta: float):
    if cfg.screening == "none":
        return NO_PASS, None
    ranked = conf_screen.rank(conf_screen.records_from_arrays(proba, labels))
    if cfg.screening == "window":
        part = conf_screen.window_threshold(ranked, ta)
    else:
        part = conf_screen.binning_threshold(ranked, min(cfg.bins, len(ranked)), ta)
    return part.threshold, part


def _exits(proba: np.ndarray, wt: float) -> np.ndarray:
    return proba.max(axis=1) > wt


def fit_levels(base_train: np.ndarray, y_train: np.ndarray, base_val: np.ndarray,
               y_val: np.ndarray, n_classes: int, cfg: CascadeConfig) -> list[CascadeLevel]:
    if base_train.shape[0] == 0:
        raise EmptyTrainingSet("no training instances")
    if base_val.shape[1] != base_train.shape[1]:
        raise DimensionMismatch("training and validation widths differ")
    K = n_classes
    surv = np.arange(base_train.shape[0])
    aug_train = None
    val_active = np.arange(base_val.shape[0])
    aug_val = None
    val_correct_retired = 0
    levels: list[CascadeLevel] = []
    prev_acc = None

    for t in range(1, cfg.max_levels + 1):
        y_t = y_train[surv]
        if aug_train is None:
            X_t, rows = base_train, surv
        else:
            X_t = np.hstack([base_train[surv], aug_train])
            rows = np.arange(surv.size)
        m = surv.size
        folds = min(cfg.cv_folds, m)
        plan = make_fold_plan(m, folds, derive_seed(cfg.seed, t, _FOLD_SALT))
        yy = y_train if aug_train is None else y_t
        oof = [oof_predict(X_t, yy, K, kind, cfg.trees_per_forest, plan,
                           derive_seed(cfg.seed, t, i), rows=rows)
               for i, kind in enumerate(cfg.forests)]
        oof_avg = np.mean(oof, axis=0)
        oof_acc = float(np.mean(oof_avg.argmax(axis=1) == y_t))
        ta = 1.0 - (1.0 - oof_acc) * cfg.error_factor
        wt, _ = _screen(cfg, oof_avg, y_t, ta)
        forests = tuple(fit_forest(X_t, yy, K, kind, cfg.trees_per_forest,
                                   derive_seed(cfg.seed, t, i, _FULL_SALT), rows=rows)
                        for i, kind in enumerate(cfg.forests))
        high = _exits(oof_avg, wt)

        # validation accuracy of the model truncated at this level
        Xv = base_val[val_active] if aug_val is None else np.hstack([base_val[val_active], aug_val])
        v_cat, v_avg = _level_proba(forests, Xv)
        v_pred = v_avg.argmax(axis=1)
        v_hit = v_pred == y_val[val_active]
        val_acc = (val_correct_retired + int(v_hit.sum())) / max(len(y_val), 1)
        log.info("level %d: entering=%d oof_acc=%.4f ta=%.4f wt=%.6f high=%d val_acc=%.4f",
                 t, m, oof_acc, ta, wt, int(high.sum()), val_acc)

        if prev_acc is not None and val_acc <= prev_acc:
            log.info("level %d discarded: validation accuracy did not improve", t)
            break
        levels.append(CascadeLevel(t, forests, float(wt), float(ta), oof_acc, int(m),
                                   int(high.sum()), float(val_acc), int(high.sum())))
        prev_acc = val_acc
        low = ~high
        if low.sum() < 2:
            # nothing (or too little to cross-validate) left for another level
            break
        v_exit = _exits(v_avg, wt)
        val_correct_retired += int(v_hit[v_exit].sum())
        aug_val = v_cat[~v_exit]
        val_active = val_active[~v_exit]
        aug_train = np.hstack(oof)[low]
        surv = surv[low]

    # the last level finalizes everything still active
    levels[-1] = dataclasses.replace(levels[-1], n_retired=levels[-1].n_entering)
    return levels


def fit_grains(train: Dataset, cfg: CascadeConfig) -> list[GrainModel]:
    """One scanning model per configured window size; empty for tabular data."""
    if train.image_shape is None:
        return []
    return [fit_grain(train, GrainConfig(w, cfg.stride, cfg.scan_trees, cfg.hash_screen,
                                         cfg.patch_fraction), derive_seed(cfg.seed, 0x5C, w))
            for w in cfg.grains]


def fit(train: Dataset, validation: Dataset, cfg: CascadeConfig) -> CascadeModel:
    if train.n_instances == 0:
        raise EmptyTrainingSet("no training instances")
    if train.n_features != validation.n_features or train.n_classes != validation.n_classes:
        raise DimensionMismatch("training and validation sets disagree on shape or classes")
    grains = fit_grains(train, cfg)
    base_train = base_features(grains, train)
    base_val = base_features(grains, validation)
    levels = fit_levels(base_train, train.labels, base_val, validation.labels,
                        train.n_classes, cfg)
    return CascadeModel(train.n_classes, base_train.shape[1], levels, grains,
                        train.image_shape, train.n_features)


@dataclass(frozen=True)
class Prediction:
    proba: np.ndarray
    exit_level: np.ndarray          # 1-based level that produced each prediction
    evaluations: tuple[int, ...]    # instances evaluated at each level


def predict_base(m: CascadeModel, base: np.ndarray) -> Prediction:
    if base.shape[1] != m.base_width:
        raise DimensionMismatch(f"expected base width {m.base_width}, got {base.shape[1]}")
    n = base.shape[0]
    out = np.zeros((n, m.n_classes))
    exit_level = np.zeros(n, np.int64)
    active = np.arange(n)
    aug = None
    evaluations = []
    for t, level in enumerate(m.levels):
        if active.size == 0:
            evaluations.append(0)
            continue
        X = base[active] if aug is None else np.hstack([base[active], aug])
        cat, avg = _level_proba(level.forests, X)
        evaluations.append(int(active.size))
        done = np.ones(active.size, bool) if t == len(m.levels) - 1 else _exits(avg, level.wt)
        out[active[done]] = avg[done]
        exit_level[active[done]] = t + 1
        active = active[~done]
        aug = cat[~done]
    return Prediction(out, exit_level, tuple(evaluations))


def predict_batch(m: CascadeModel, d: Dataset | np.ndarray) -> Prediction:
    if isinstance(d, Dataset):
        if m.raw_width is not None and d.n_features != m.raw_width:
            raise DimensionMismatch(f"expected {m.raw_width} raw features, got {d.n_features}")
        base = base_features(m.grain_models, d)
    else:
        X = np.atleast_2d(np.asarray(d, dtype=np.float64))
        if m.raw_width is not None and X.shape[1] != m.raw_width:
            raise DimensionMismatch(f"expected {m.raw_width} raw features, got {X.shape[1]}")
        if m.grain_models:
            base = base_features(m.grain_models, Dataset(X, np.zeros(X.shape[0], np.int64),
                                                         m.n_classes, m.image_shape))
        else:
            base = X
    return predict_base(m, base)


def predict(m: CascadeModel, x) -> np.ndarray:
    """Final class distribution for one raw instance."""
    return predict_batch(m, np.asarray(x, dtype=np.float64)[None, :]).proba[0]


def _validation_split(train: Dataset, cfg: CascadeConfig) -> tuple[Dataset, Dataset]:
    spec = SplitSpec(1.0 - cfg.validation_fraction, derive_seed(cfg.seed, 0x7A1), True)
    tr, va = split_indices(train.labels, spec, train.n_classes)
    return train.subset(tr), train.subset(va)


def fit_eval(train: Dataset, test: Dataset, cfg: CascadeConfig,
             validation: Dataset | None = None) -> tuple[CascadeModel, dict]:
    """Fit (carving a validation split from ``train`` if none is given) and score ``test``."""
    start = time.perf_counter()
    if validation is None:
        train, validation = _validation_split(train, cfg)
    model = fit(train, validation, cfg)
    pred = predict_batch(model, test)
    wall = time.perf_counter() - start
    acc = float(np.mean(pred.proba.argmax(axis=1) == test.labels)) if test.n_instances else 0.0
    return model, build_report(model, cfg, acc, pred, wall)


def build_report(model: CascadeModel, cfg: CascadeConfig, accuracy: float, pred: Prediction,
                 wall_time: float) -> dict:
    exits = np.bincount(pred.exit_level, minlength=len(model.levels) + 1)[1:]
    return {
        "accuracy": accuracy,
        "levels": [
            {"wt": lv.wt, "ta": lv.ta, "entering": lv.n_entering, "retired": lv.n_retired,
             "screened_high": lv.n_high, "oof_accuracy": lv.oof_accuracy,
             "val_accuracy": lv.val_accuracy, "test_exits": int(exits[i])}
            for i, lv in enumerate(model.levels)
        ],
        "grains": [
            {"window": g.config.window, "total_locations": g.total_locations,
             "retained": int(g.retained_locations.size)}
            for g in model.grain_models
        ],
        "n_test": int(pred.proba.shape[0]),
        "config": cfg.to_dict(),
        "wall_time_seconds": wall_time,
    }
