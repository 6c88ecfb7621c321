"""Confidence screening of instances at a cascade level.

Two ways to pick the threshold WT above which an instance is finalized at the
current level: the self-adaptive halving window search, and the fixed-bin
(DBC) baseline. Ranks are 1-based throughout, matching the ranked listing.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BinCountExceedsInstances, InvalidBounds

ALL_PASS = -1.0
"""Threshold below every confidence: the whole level is finalized."""


@dataclass(frozen=True)
class ConfidenceRecord:
    instance_id: int
    distribution: tuple[float, ...]
    confidence: float
    predicted: int
    label: int

    @property
    def correct(self) -> bool:
        return self.predicted == self.label


def make_record(instance_id: int, distribution, label: int) -> ConfidenceRecord:
    dist = np.asarray(distribution, dtype=np.float64)
    pred = int(np.argmax(dist))  # first max = lowest class on ties
    return ConfidenceRecord(int(instance_id), tuple(dist.tolist()), float(dist[pred]), pred, int(label))


def records_from_arrays(proba: np.ndarray, labels: np.ndarray, ids=None) -> list[ConfidenceRecord]:
    ids = np.arange(len(labels)) if ids is None else ids
    return [make_record(i, p, y) for i, p, y in zip(ids, proba, labels)]


@dataclass(frozen=True)
class WindowState:
    c: int
    u: int
    l: int


@dataclass(frozen=True)
class ScreenPartition:
    threshold: float
    high: tuple[int, ...]
    low: tuple[int, ...]
    threshold_rank: int | None = None
    trace: tuple[tuple[WindowState, float], ...] = field(default=(), repr=False)

    @property
    def accuracies(self) -> list[float]:
        return [acc for _, acc in self.trace]


def rank(records: Sequence[ConfidenceRecord]) -> list[ConfidenceRecord]:
    """Descending confidence, ties by ascending instance id."""
    return sorted(records, key=lambda r: (-r.confidence, r.instance_id))


def window_accuracy(ranked: Sequence[ConfidenceRecord], u: int, l: int) -> float:
    if not 1 <= u <= l <= len(ranked):
        raise InvalidBounds(f"window [{u}, {l}] outside 1..{len(ranked)}")
    hits = sum(r.correct for r in ranked[u - 1:l])
    return hits / (l - u + 1)


def partition(ranked: Sequence[ConfidenceRecord], wt: float, *, threshold_rank=None,
              trace=()) -> ScreenPartition:
    """Strictly above ``wt`` goes high, everything else low."""
    high = tuple(r.instance_id for r in ranked if r.confidence > wt)
    low = tuple(r.instance_id for r in ranked if not r.confidence > wt)
    return ScreenPartition(float(wt), high, low, threshold_rank, tuple(trace))


def window_threshold(ranked: Sequence[ConfidenceRecord], ta: float) -> ScreenPartition:
    """Self-adaptive window search for WT.

    Start with a window of half the instances at the top of the ranking.
    Slide it one rank at a time while its accuracy stays at or above ``ta``;
    when it drops below, halve the window in place. A failing window of size
    two or less fixes WT at the confidence of its first instance. A window
    that reaches the last rank without failing finalizes every instance.
    """
    m = len(ranked)
    if m < 2:
        wt = ranked[0].confidence if m else 1.0
        return partition(ranked, wt)
    if not 0.0 < ta <= 1.0:
        raise ValueError(f"target accuracy must be in (0, 1], got {ta}")
    # prefix[i] = correct predictions among ranks 1..i
    prefix = np.concatenate([[0], np.cumsum([r.correct for r in ranked])])
    c = m // 2
    u, l = 1, c
    trace = []
    while True:
        acc = (prefix[l] - prefix[u - 1]) / (l - u + 1)
        trace.append((WindowState(c, u, l), float(acc)))
        if acc >= ta:
            if l == m:
                return partition(ranked, ALL_PASS, trace=trace)
            u += 1
            l += 1
        elif c <= 2:
            return partition(ranked, ranked[u - 1].confidence, threshold_rank=u, trace=trace)
        else:
            c //= 2
            l = u + c - 1


def bin_bounds(m: int, k: int) -> list[tuple[int, int]]:
    """1-based inclusive rank ranges of the k bins; the last bin takes any remainder."""
    if k < 1:
        raise ValueError("bin count must be positive")
    if k > m:
        raise BinCountExceedsInstances(f"{k} bins for {m} instances")
    size = m // k
    bounds = [((t - 1) * size + 1, t * size) for t in range(1, k + 1)]
    bounds[-1] = (bounds[-1][0], m)
    return bounds


def binning_threshold(ranked: Sequence[ConfidenceRecord], k: int, ta: float) -> ScreenPartition:
    """DBC baseline: WT is the last instance of the bin before the first bin under ``ta``."""
    m = len(ranked)
    bounds = bin_bounds(m, k)
    trace = []
    for t, (lo, hi) in enumerate(bounds, start=1):
        acc = window_accuracy(ranked, lo, hi)
        trace.append((WindowState(hi - lo + 1, lo, hi), acc))
        if acc < ta:
            if t == 1:
                return partition(ranked, ranked[0].confidence, threshold_rank=0, trace=trace)
            last = bounds[t - 2][1]
            return partition(ranked, ranked[last - 1].confidence, threshold_rank=last, trace=trace)
    return partition(ranked, ALL_PASS, trace=trace)


def write_diagnostics(path, ranked: Sequence[ConfidenceRecord], part: ScreenPartition) -> None:
    high = set(part.high)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "confidence", "correct", "side"])
        for i, r in enumerate(ranked, start=1):
            w.writerow([i, repr(r.confidence), int(r.correct),
                        "high" if r.instance_id in high else "low"])
