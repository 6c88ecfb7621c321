import json

import numpy as np
import pytest

from hwforest.cascade import (
    NO_PASS, CascadeModel, _level_proba, fit, fit_eval, predict, predict_batch,
)
from hwforest.config import CascadeConfig
from hwforest.dataset import Dataset, SplitSpec, split
from hwforest.errors import DimensionMismatch, EmptyTrainingSet

SMALL = CascadeConfig(trees_per_forest=8, cv_folds=3, max_levels=4, seed=1)


def noisy(n=300, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 3
    X = rng.normal(size=(n, 6))
    X[:, 0] += y * 1.2
    X[:, 1] += (y == 2) * 1.5
    return Dataset(X, y, 3)


def separable(n=80):
    rng = np.random.default_rng(3)
    y = np.arange(n) % 2
    X = rng.random((n, 3))
    X[:, 0] += 2.0 * y
    return Dataset(X, y, 2)


def tiny_images(n=60, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    imgs = rng.random((n, 6, 6)) * 0.3
    imgs[:, :2, :] = 0.0
    imgs[y == 1, 3:5, 2:4] += 0.7
    return Dataset(imgs.reshape(n, 36), y, 2, (6, 6))


@pytest.fixture(scope="module")
def noisy_run():
    tr, te = split(noisy(), SplitSpec(0.7, seed=0))
    model, report = fit_eval(tr, te, SMALL)
    return tr, te, model, report


class TestFit:
    def test_separable(self):
        tr, va = split(separable(), SplitSpec(0.75, seed=0))
        m = fit(tr, va, SMALL.replace(max_levels=3))
        assert len(m.levels) >= 1
        assert m.levels[-1].val_accuracy == 1.0

    def test_no_screening_keeps_everyone(self):
        tr, va = split(noisy(), SplitSpec(0.8, seed=1))
        m = fit(tr, va, SMALL.replace(screening="none"))
        assert {lv.n_entering for lv in m.levels} == {tr.n_instances}
        assert all(lv.wt == NO_PASS for lv in m.levels)

    def test_level_cap(self):
        tr, va = split(noisy(), SplitSpec(0.8, seed=1))
        assert len(fit(tr, va, SMALL.replace(max_levels=1)).levels) == 1

    def test_errors(self):
        d = noisy()
        with pytest.raises(EmptyTrainingSet):
            fit(d.subset(np.zeros(0, int)), d, SMALL)
        with pytest.raises(DimensionMismatch):
            fit(d, Dataset(np.zeros((3, 2)), [0, 1, 2], 3), SMALL)

    def test_invariants(self, noisy_run):
        tr, te, model, report = noisy_run
        levels = model.levels
        assert len(levels) >= 2, "fixture should exercise more than one level"
        n_fit = tr.n_instances - round(SMALL.validation_fraction * tr.n_instances)
        assert levels[0].n_entering == n_fit
        # conservation: each training instance retires exactly once
        assert sum(lv.n_retired for lv in levels) == n_fit
        for a, b in zip(levels, levels[1:]):
            assert b.n_entering == a.n_entering - a.n_retired
            assert b.n_entering <= a.n_entering
            assert b.val_accuracy > a.val_accuracy
        assert sum(lv["test_exits"] for lv in report["levels"]) == te.n_instances
        for t in range(1, len(levels)):
            X = np.zeros((1, model.level_width(t)))
            assert levels[t].forests[0].n_features == X.shape[1]

    def test_report_fields(self, noisy_run):
        report = noisy_run[3]
        assert list(report) == ["accuracy", "levels", "grains", "n_test", "config",
                                "wall_time_seconds"]
        assert {"wt", "ta", "entering", "retired", "oof_accuracy"} <= set(report["levels"][0])
        for lv in report["levels"]:
            assert lv["ta"] == pytest.approx(1 - (1 - lv["oof_accuracy"]) / 2)
        assert report["accuracy"] > 0.6


class TestPredict:
    def test_single_level(self):
        tr, va = split(noisy(), SplitSpec(0.8, seed=1))
        m = fit(tr, va, SMALL.replace(max_levels=1))
        _, avg = _level_proba(m.levels[0].forests, va.features)
        assert np.array_equal(predict_batch(m, va).proba, avg)

    def test_batch_equals_single(self, noisy_run):
        _, te, model, _ = noisy_run
        batch = predict_batch(model, te).proba
        for i in range(0, te.n_instances, 7):
            assert np.array_equal(predict(model, te.features[i]), batch[i])

    def test_early_exit_counter(self, noisy_run):
        _, te, model, _ = noisy_run
        p = predict_batch(model, te)
        assert p.evaluations[0] == te.n_instances
        for t in range(1, len(model.levels)):
            assert p.evaluations[t] == int(np.sum(p.exit_level > t))
        confident = np.flatnonzero(p.exit_level == 1)
        if confident.size:
            one = predict_batch(model, te.features[confident[:1]])
            assert one.evaluations[1:] == (0,) * (len(model.levels) - 1)

    def test_distributions(self, noisy_run):
        _, te, model, _ = noisy_run
        p = predict_batch(model, te).proba
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_dimension_mismatch(self, noisy_run):
        model = noisy_run[2]
        with pytest.raises(DimensionMismatch):
            predict(model, np.zeros(5))


class TestFitEval:
    def test_window_vs_none(self):
        tr, te = split(noisy(seed=2), SplitSpec(0.7, seed=0))
        _, w = fit_eval(tr, te, SMALL.replace(max_levels=3))
        _, n = fit_eval(tr, te, SMALL.replace(max_levels=3, screening="none"))
        assert w["n_test"] == n["n_test"] == te.n_instances
        assert sum(lv["test_exits"] for lv in w["levels"]) == te.n_instances
        assert sum(lv["test_exits"] for lv in n["levels"]) == te.n_instances
        if len(n["levels"]) > 1:
            assert n["levels"][0]["test_exits"] == 0

    def test_determinism(self):
        tr, te = split(noisy(seed=4), SplitSpec(0.7, seed=0))
        reports = []
        for _ in range(2):
            _, r = fit_eval(tr, te, SMALL)
            r.pop("wall_time_seconds")
            reports.append(json.dumps(r))
        assert reports[0] == reports[1]

    def test_images_with_and_without_hashing(self):
        tr, te = split(tiny_images(), SplitSpec(0.7, seed=0))
        cfg = SMALL.replace(grains=(2, 3), scan_trees=4, max_levels=2)
        m_on, on = fit_eval(tr, te, cfg)
        m_off, off = fit_eval(tr, te, cfg.replace(hash_screen=False))
        for a, b in zip(on["grains"], off["grains"]):
            assert a["retained"] <= b["retained"] == b["total_locations"]
        assert on["grains"][0]["retained"] < off["grains"][0]["retained"]
        assert m_on.base_width < m_off.base_width
        assert predict(m_on, te.features[0]).shape == (2,)
