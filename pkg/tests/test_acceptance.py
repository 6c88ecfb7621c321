"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary).
Criteria 5-7 train on real data: MNIST sample and LETTER from ``data/``
(``python3 scripts/fetch_data.py``). They take roughly half an hour together.
"""
import re
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import DATA, REPO
from hwforest.cascade import (
    CascadeModel, base_features, fit_eval, fit_grains, fit_levels, predict_base,
)
from hwforest.conf_screen import ConfidenceRecord, binning_threshold, window_threshold
from hwforest.config import PRESETS
from hwforest.dataset import SplitSpec, load_csv, load_idx, split
from hwforest.evalstats import RankTable, friedman, nemenyi_cd, restore_rank_grid
from hwforest.hash_screen import LocationGroup, hashing_threshold

CORRECT_RANKS = {1, 2, 4, 5, 6, 7, 8, 11}
SEEDS = (0, 1, 2)


def sixteen_ranked():
    conf = np.linspace(0.99, 0.6, 16)
    return [ConfidenceRecord(i, (), float(c), 0, 0 if i + 1 in CORRECT_RANKS else 1)
            for i, c in enumerate(conf)]


def test_criterion_1_hashing_example(acceptance):
    bits = [[[0, 1], [0, 1]], [[1, 1], [1, 1]], [[1, 0], [0, 1]], [[0, 1], [1, 0]]]
    groups = [LocationGroup.from_bits(r, np.array(b)) for r, b in enumerate(bits)]
    res = hashing_threshold(groups)
    got = {
        "distances": tuple(g.distance for g in groups),
        "D": res.total_mass,
        "N(100..51)": {res.n_table[g] for g in range(51, 101)},
        "N(50..1)": {res.n_table[g] for g in range(1, 51)},
        "p": res.p,
        "HT": res.ht,
        "keep": {res.order.index(r) + 1 for r in res.keep},  # as w-indices
    }
    want = {"distances": (0.0, 0.0, 0.5, 0.5), "D": 1.0, "N(100..51)": {2}, "N(50..1)": {1},
            "p": 100, "HT": 0.5, "keep": {1, 2}}
    assert acceptance(1, got == want, f"got {got}")


def test_criterion_2_window_example(acceptance):
    ranked = sixteen_ranked()
    part = window_threshold(ranked, 0.70)
    it = iter(part.accuracies)
    ordered = all(any(a == b for b in it) for a in (0.875, 0.625, 0.75, 0.50, 1.0, 0.50))
    ok = part.threshold == ranked[7].confidence and ordered
    assert acceptance(2, ok, f"WT rank {part.threshold_rank}, trace {part.accuracies}")


def test_criterion_3_binning_example(acceptance):
    ranked = sixteen_ranked()
    k8 = binning_threshold(ranked, 8, 0.70).threshold_rank
    k4 = binning_threshold(ranked, 4, 0.70).threshold_rank
    assert acceptance(3, (k8, k4) == (2, 8), f"k=8 -> instance {k8}, k=4 -> instance {k4}")


def test_criterion_4_statistics(acceptance):
    printed = (5.89, 5.33, 3, 5.11, 1.61, 5.44, 1.61)
    # two-decimal ranks restored to the 1/(2N) grid that N=9 average ranks live on
    ranks = restore_rank_grid(printed, 9)
    f = friedman(RankTable(ranks, 9))
    f_literal = friedman(RankTable(printed, 9))
    cd = nemenyi_cd(7, 9, 2.693)
    ok = abs(f - 24.371) <= 0.05 and abs(cd - 2.742) <= 0.001
    assert acceptance(4, ok, f"Friedman {f:.3f} (unrestored {f_literal:.3f}), CD {cd:.4f}")


def _mnist():
    ip, lp = DATA / "mnist5k-images-idx3-ubyte", DATA / "mnist5k-labels-idx1-ubyte"
    if not ip.exists():
        pytest.skip("MNIST sample not fetched (python3 scripts/fetch_data.py)")
    d = load_idx(ip, lp)
    train, rest = split(d, SplitSpec(0.6, seed=0))       # 3000
    val, test = split(rest, SplitSpec(0.5, seed=0))       # 1000 / 1000
    return train, val, test


def _scan_and_cascade(train, val, test, cfg, alt_screening=None):
    """fit + predict with timing; optionally refit the cascade on the same scanned features."""
    start = time.perf_counter()
    grains = fit_grains(train, cfg)
    b_tr, b_va, b_te = (base_features(grains, d) for d in (train, val, test))
    levels = fit_levels(b_tr, train.labels, b_va, val.labels, train.n_classes, cfg)
    model = CascadeModel(train.n_classes, b_tr.shape[1], levels, grains, train.image_shape,
                         train.n_features)
    pred = predict_base(model, b_te)
    out = {
        "wall": time.perf_counter() - start,
        "accuracy": float(np.mean(pred.proba.argmax(axis=1) == test.labels)),
        "retained": sum(int(g.retained_locations.size) for g in grains),
        "survivors": [lv.n_entering - lv.n_high for lv in levels],
        "levels": len(levels),
    }
    if alt_screening is not None:
        alt = fit_levels(b_tr, train.labels, b_va, val.labels, train.n_classes,
                         cfg.replace(screening=alt_screening))
        out["alt_survivors"] = [lv.n_entering - lv.n_high for lv in alt]
    return out


@pytest.fixture(scope="module")
def mnist_runs():
    train, val, test = _mnist()
    runs = {}
    for seed in SEEDS:
        cfg = PRESETS["desk"].replace(seed=seed)
        runs[seed] = {
            "on": _scan_and_cascade(train, val, test, cfg, alt_screening="binning"),
            "off": _scan_and_cascade(train, val, test, cfg.replace(hash_screen=False)),
        }
        for arm in ("on", "off"):
            r = runs[seed][arm]
            print(f"seed {seed} hash {arm}: acc {r['accuracy']:.4f} wall {r['wall']:.0f}s "
                  f"retained {r['retained']} survivors {r['survivors']}")
    return runs


@pytest.mark.slow
def test_criterion_5_hash_screening_ablation(acceptance, mnist_runs):
    on = [mnist_runs[s]["on"] for s in SEEDS]
    off = [mnist_runs[s]["off"] for s in SEEDS]
    fewer = all(a["retained"] < b["retained"] for a, b in zip(on, off))
    faster = all(a["wall"] < b["wall"] for a, b in zip(on, off))
    diff = 100 * (np.mean([a["accuracy"] for a in on]) - np.mean([b["accuracy"] for b in off]))
    budget = max(r["wall"] for r in on + off) <= 20 * 60
    ok = fewer and faster and abs(diff) <= 1.0 and budget
    detail = (f"(a) retained {[a['retained'] for a in on]} vs {[b['retained'] for b in off]}; "
              f"(b) wall {[round(a['wall']) for a in on]}s vs {[round(b['wall']) for b in off]}s; "
              f"(c) mean accuracy ON-OFF {diff:+.2f} pt "
              f"(ON {[a['accuracy'] for a in on]}, OFF {[b['accuracy'] for b in off]})")
    assert acceptance(5, ok, detail)


@pytest.mark.slow
def test_criterion_6_window_vs_binning(acceptance, mnist_runs):
    wins = 0
    rows = []
    for s in SEEDS:
        w, b = mnist_runs[s]["on"]["survivors"], mnist_runs[s]["on"]["alt_survivors"]
        common = min(len(w), len(b))
        wins += all(x <= y for x, y in zip(w[:common], b[:common]))
        rows.append(f"seed {s}: window {w} binning {b}")
    assert acceptance(6, wins >= 2, f"{wins}/3 seeds; " + "; ".join(rows))


@pytest.mark.slow
def test_criterion_7_letter(acceptance):
    path = DATA / "letter.csv"
    if not path.exists():
        pytest.skip("LETTER not fetched (python3 scripts/fetch_data.py)")
    d = load_csv(path, "letter")
    train, test = split(d, SplitSpec(0.8, seed=0))
    assert (train.n_instances, test.n_instances) == (16000, 4000)
    _, report = fit_eval(train, test, PRESETS["full"].replace(seed=0))
    acc, wall = report["accuracy"], report["wall_time_seconds"]
    ok = acc >= 0.955 and wall <= 15 * 60
    assert acceptance(7, ok, f"accuracy {100 * acc:.2f}% in {wall:.0f}s, "
                             f"{len(report['levels'])} levels")


def test_criterion_8_property_suites(acceptance):
    suites = ["test_dataset.py", "test_forest.py", "test_hash_screen.py", "test_scanning.py",
              "test_conf_screen.py", "test_cascade.py", "test_evalstats.py", "test_cli.py",
              "test_serialize.py", "test_config.py"]
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
         "--hypothesis-show-statistics", *(str(REPO / "tests" / s) for s in suites)],
        capture_output=True, text=True, cwd=REPO)
    elapsed = time.perf_counter() - start
    stats = {}
    for name in ("test_matches_brute_force", "test_matches_simulator"):
        block = proc.stdout.split(f"::{name}:", 1)
        m = re.search(r"(\d+) passing examples", block[1]) if len(block) > 1 else None
        stats[name] = int(m.group(1)) if m else 0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    ok = proc.returncode == 0 and elapsed < 120 and min(stats.values()) >= 500
    assert acceptance(8, ok, f"{summary}; {elapsed:.0f}s; oracle cases {stats}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
