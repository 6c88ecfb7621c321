"""Accuracy, paired t statistic, Friedman statistic and Nemenyi critical difference."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateTable, LengthMismatch, ZeroVariance

# Tabulated critical values for the comparisons this package reproduces.
T_CRITICAL = {(0.05, 4): 2.13}
Q_CRITICAL = {(0.1, 7): 2.693}


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise LengthMismatch(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    if predictions.size == 0:
        raise LengthMismatch("no predictions")
    return float(np.mean(predictions == labels))


@dataclass(frozen=True)
class PairedSample:
    diffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.diffs) < 2:
            raise ValueError("a paired sample needs at least two differences")


def paired_t(s: PairedSample | Sequence[float]) -> float:
    """|sqrt(k) * mean / sd| with the k-1 standard deviation."""
    diffs = np.asarray(s.diffs if isinstance(s, PairedSample) else s, dtype=np.float64)
    if diffs.size < 2:
        raise ValueError("a paired sample needs at least two differences")
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        raise ZeroVariance("all paired differences are equal")
    return abs(math.sqrt(diffs.size) * float(np.mean(diffs)) / sd)


@dataclass(frozen=True)
class RankTable:
    mean_ranks: tuple[float, ...]
    n_datasets: int

    @property
    def n_models(self) -> int:
        return len(self.mean_ranks)

    def __post_init__(self):
        k = len(self.mean_ranks)
        if any(not 1.0 - 1e-9 <= r <= k + 1e-9 for r in self.mean_ranks):
            raise DegenerateTable(f"mean ranks must lie in [1, {k}]")


def rank_table(accuracies, higher_is_better: bool = True) -> RankTable:
    """Mean ranks from an ``(N datasets, k models)`` score matrix; ties share the average rank."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.ndim != 2 or acc.shape[0] < 1 or acc.shape[1] < 2:
        raise DegenerateTable(f"need an N x k table with k >= 2, got shape {acc.shape}")
    ranks = np.array([rankdata(-row if higher_is_better else row) for row in acc])
    return RankTable(tuple(float(r) for r in ranks.mean(axis=0)), acc.shape[0])


def restore_rank_grid(mean_ranks: Sequence[float], n_datasets: int,
                      decimals: int = 2) -> tuple[float, ...]:
    """Undo decimal rounding of reported mean ranks.

    Average ranks are half-integers, so a mean over N datasets is a multiple
    of 1/(2N). Each value is moved to the nearest such multiple when that
    multiple is within the rounding half-width; other values are left alone.
    """
    step = 1.0 / (2 * n_datasets)
    half = 0.5 * 10.0 ** -decimals + 1e-12
    out = []
    for r in mean_ranks:
        snapped = round(r / step) * step
        out.append(snapped if abs(snapped - r) <= half else float(r))
    return tuple(out)


def friedman(rt: RankTable) -> float:
    """Iman-Davenport F form of the Friedman statistic."""
    N, k = rt.n_datasets, rt.n_models
    if N < 2 or k < 2:
        raise DegenerateTable(f"need N >= 2 datasets and k >= 2 models, got N={N}, k={k}")
    r = np.asarray(rt.mean_ranks, dtype=np.float64)
    chi2 = 12.0 * N * (float(np.sum(r * r)) - k * (k + 1) ** 2 / 4.0) / (k * (k + 1))
    denom = N * (k - 1) - chi2
    if denom <= 0:
        raise DegenerateTable("ranks are perfectly consistent; F statistic is unbounded")
    return (N - 1) * chi2 / denom


def nemenyi_cd(k: int, n_datasets: int, q_alpha: float) -> float:
    if k < 2 or n_datasets < 1 or q_alpha < 0:
        raise ValueError("need k >= 2, N >= 1 and q_alpha >= 0")
    return q_alpha * math.sqrt(k * (k + 1) / (6.0 * n_datasets))
