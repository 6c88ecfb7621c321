"""Average-hash signatures of window patches and location-level redundancy screening.

Each sliding-window location is a group holding one patch per instance. A
location whose signature bits barely vary across instances carries little
information; locations whose folded bit-mean distance falls below a
prefix-mass threshold are dropped.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._kernels import patch_mean
from .errors import EmptyVector, OutOfRange, ZeroTotalMass


def signature(v) -> np.ndarray:
    """Bit j is set iff ``v[j]`` is strictly above the mean of ``v``."""
    v = np.ascontiguousarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyVector("cannot hash an empty vector")
    return (v > patch_mean(v)).astype(np.uint8)


def fold_bit_mean(ones_fraction: float) -> float:
    if not 0.0 <= ones_fraction <= 1.0:
        raise OutOfRange(f"fraction {ones_fraction} outside [0, 1]")
    return ones_fraction if ones_fraction < 0.5 else 1.0 - ones_fraction


@dataclass(frozen=True)
class LocationGroup:
    location: int
    bit_means: np.ndarray
    folded: np.ndarray
    distance: float

    @classmethod
    def from_bits(cls, location: int, bits) -> "LocationGroup":
        """``bits`` is ``(n_instances, c)``: every instance's signature at this location."""
        bits = np.asarray(bits, dtype=np.float64)
        return cls.from_counts(location, bits.sum(axis=0), bits.shape[0])

    @classmethod
    def from_counts(cls, location: int, ones, n_instances: int) -> "LocationGroup":
        means = np.asarray(ones, dtype=np.float64) / n_instances
        folded = np.minimum(means, 1.0 - means)
        return cls(location, means, folded, group_distance(folded))


def group_distance(g) -> float:
    """Mean of the folded bit means; accepts a LocationGroup or the folded vector."""
    folded = g.folded if isinstance(g, LocationGroup) else np.asarray(g, dtype=np.float64)
    return float(np.mean(folded))


def n_of(g: int, e: Sequence[float], total: float | None = None) -> int:
    """Smallest prefix length of the descending distances ``e`` holding ``g``% of the mass."""
    return _prefix_counts([Fraction(x) for x in e], [g], total)[0]


def _prefix_counts(e: list[Fraction], gs, total=None) -> list[int]:
    D = sum(e, Fraction(0)) if total is None else Fraction(total)
    if D <= 0:
        raise ZeroTotalMass("all group distances are zero")
    prefix = []
    acc = Fraction(0)
    for x in e:
        acc += x
        prefix.append(acc)
    out = []
    m = 0
    for g in sorted(gs):
        target = D * g / 100
        while prefix[m] < target:
            m += 1
        out.append(m + 1)
    by_g = dict(zip(sorted(gs), out))
    return [by_g[g] for g in gs]


@dataclass(frozen=True)
class HashThresholdResult:
    order: tuple[int, ...]            # locations, descending distance
    distances: tuple[float, ...]      # sorted distances e_1 >= e_2 >= ...
    total_mass: float
    n_table: dict[int, int]           # g -> N(g), g = 1..100 (empty if degenerate)
    p: int | None
    ht: float
    keep: frozenset[int]

    @property
    def n_locations(self) -> int:
        return len(self.order)


def hashing_threshold(groups: Sequence[LocationGroup]) -> HashThresholdResult:
    """Pick HT from the first 1%-mass slice (scanning down from 100%) holding at most r/50 groups."""
    if not groups:
        raise ValueError("need at least one location group")
    r = len(groups)
    locs = np.array([g.location for g in groups])
    dist = np.array([g.distance for g in groups], dtype=np.float64)
    order = np.lexsort((locs, -dist))  # stable by location on ties
    e = [float(dist[i]) for i in order]
    sorted_locs = tuple(int(locs[i]) for i in order)
    all_locs = frozenset(int(x) for x in locs)
    fe = [Fraction(x) for x in e]
    D = sum(fe, Fraction(0))
    if D == 0:
        return HashThresholdResult(sorted_locs, tuple(e), 0.0, {}, None, 0.0, all_locs)
    gs = list(range(1, 101))
    n_table = dict(zip(gs, _prefix_counts(fe, gs, D)))
    limit = Fraction(r, 50)
    p = next((u for u in range(100, 1, -1) if n_table[u] - n_table[u - 1] <= limit), None)
    if p is None:
        return HashThresholdResult(sorted_locs, tuple(e), float(D), n_table, None, 0.0, all_locs)
    ht = e[n_table[p] - 1]
    keep = frozenset(int(g.location) for g in groups if g.distance >= ht)
    return HashThresholdResult(sorted_locs, tuple(e), float(D), n_table, p, ht, keep)


def keep_all(groups: Sequence[LocationGroup]) -> HashThresholdResult:
    """Result that retains every location (screening disabled)."""
    locs = tuple(g.location for g in groups)
    return HashThresholdResult(locs, tuple(g.distance for g in groups),
                               float(sum(g.distance for g in groups)), {}, None, 0.0,
                               frozenset(locs))


def screen(groups_bits: Sequence[np.ndarray]) -> tuple[HashThresholdResult, list[int]]:
    """Screen patches grouped by location.

    ``groups_bits[r]`` is the ``(n_instances, c)`` matrix of raw patches at
    location ``r``. Returns the threshold result and the retained locations in
    original order.
    """
    groups = [LocationGroup.from_bits(r, np.array([signature(p) for p in patches]))
              for r, patches in enumerate(groups_bits)]
    res = hashing_threshold(groups)
    return res, sorted(res.keep)


def write_diagnostics(path, groups: Sequence[LocationGroup], res: HashThresholdResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location", "distance", "kept"])
        for g in groups:
            w.writerow([g.location, repr(g.distance), int(g.location in res.keep)])
