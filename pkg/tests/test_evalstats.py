import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hwforest.errors import DegenerateTable, LengthMismatch, ZeroVariance
from hwforest.evalstats import (
    Q_CRITICAL, T_CRITICAL, PairedSample, RankTable, accuracy, friedman, nemenyi_cd, paired_t,
    rank_table, restore_rank_grid,
)

REFERENCE_RANKS = (5.89, 5.33, 3, 5.11, 1.61, 5.44, 1.61)


def load_table(name):
    text = (resources.files("hwforest") / "data" / name).read_text()
    rows = [line.split(",") for line in text.strip().splitlines()]
    return rows[0], rows[1:]


class TestAccuracy:
    def test_values(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
        assert accuracy([0, 0], [1, 1]) == 0.0
        assert accuracy([1] * 7 + [0], [1] * 8) == 0.875

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            accuracy([1, 2], [1])


class TestPairedT:
    def test_arithmetic(self):
        assert paired_t([1, 2, 3, 4, 5]) == pytest.approx(math.sqrt(5) * 3 / math.sqrt(2.5))
        assert paired_t(PairedSample((1.0, 2.0, 3.0, 4.0, 5.0))) == pytest.approx(4.242640687)

    def test_zero_mean(self):
        assert paired_t([-1, 1]) == 0.0

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            paired_t([2, 2, 2])

    def test_needs_two(self):
        with pytest.raises(ValueError):
            PairedSample((1.0,))

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=10))
    def test_sign_invariance(self, diffs):
        try:
            a = paired_t(diffs)
        except ZeroVariance:
            with pytest.raises(ZeroVariance):
                paired_t([-d for d in diffs])
            return
        assert paired_t([-d for d in diffs]) == pytest.approx(a)

    def test_critical_constants(self):
        assert T_CRITICAL[(0.05, 4)] == 2.13 and Q_CRITICAL[(0.1, 7)] == 2.693


class TestFriedman:
    def test_reference_ranks(self):
        # the printed ranks are rounded to two decimals; on the 1/(2N) grid they reproduce 24.371
        rt = RankTable(restore_rank_grid(REFERENCE_RANKS, 9), 9)
        assert friedman(rt) == pytest.approx(24.371, abs=0.05)

    def test_rounded_ranks_drift(self):
        # taken literally, the two-decimal ranks land outside the tolerance
        assert abs(friedman(RankTable(REFERENCE_RANKS, 9)) - 24.371) > 0.05

    def test_restore_grid(self):
        restored = restore_rank_grid(REFERENCE_RANKS, 9)
        assert restored[0] == pytest.approx(53 / 9)
        assert restored[2] == 3.0
        assert sum(restored) == pytest.approx(28.0)

    def test_no_effect(self):
        assert friedman(RankTable((4.0,) * 7, 9)) == 0.0

    def test_two_models_closed_form(self):
        N, k = 10, 2
        # ranks (1, 2): chi2 = 12*10*(5 - 4.5)/6 = 10 = N(k-1), so the F form divides by zero
        assert 12 * N * (1 + 4 - k * (k + 1) ** 2 / 4) / (k * (k + 1)) == N * (k - 1)
        with pytest.raises(DegenerateTable):
            friedman(RankTable((1.0, 2.0), N))
        # ranks (1.2, 1.8): chi2 = 120*(1.44 + 3.24 - 4.5)/6 = 3.6; F = 9*3.6/(10 - 3.6)
        assert friedman(RankTable((1.2, 1.8), N)) == pytest.approx(9 * 3.6 / 6.4)

    def test_degenerate(self):
        with pytest.raises(DegenerateTable):
            friedman(RankTable((1.0, 2.0), 1))
        with pytest.raises(DegenerateTable):
            RankTable((0.5, 2.0), 3)

    @given(st.integers(2, 8), st.integers(2, 12), st.integers(0, 2**32 - 1))
    def test_model_permutation_invariance(self, k, N, seed):
        rng = np.random.default_rng(seed)
        acc = rng.random((N, k))
        rt = rank_table(acc)
        perm = rng.permutation(k)
        rt2 = rank_table(acc[:, perm])
        assert sum(rt.mean_ranks) == pytest.approx(k * (k + 1) / 2)
        try:
            f = friedman(rt)
        except DegenerateTable:
            return
        assert friedman(rt2) == pytest.approx(f)

    def test_ties_share_average_rank(self):
        rt = rank_table([[0.9, 0.9, 0.5]])
        assert rt.mean_ranks == (1.5, 1.5, 3.0)

    def test_bundled_accuracy_table(self):
        header, rows = load_table("benchmark_accuracy.csv")
        acc = np.array([[float(c) for c in r[1:]] for r in rows])
        assert acc.shape == (9, 7)
        rt = rank_table(acc)
        # ranks recomputed from the per-dataset accuracy means
        assert friedman(rt) == pytest.approx(23.665, abs=0.01)

    def test_bundled_ranks(self):
        header, rows = load_table("benchmark_mean_ranks.csv")
        assert tuple(float(r[1]) for r in rows) == REFERENCE_RANKS


class TestNemenyi:
    def test_reference_value(self):
        assert nemenyi_cd(7, 9, 2.693) == pytest.approx(2.742, abs=0.001)

    def test_values(self):
        assert nemenyi_cd(7, 9, 0.0) == 0.0
        assert nemenyi_cd(2, 6, 1.0) == pytest.approx(0.40825, abs=1e-5)

    @given(st.integers(2, 20), st.integers(1, 50), st.floats(0.1, 5.0))
    def test_monotone(self, k, N, q):
        cd = nemenyi_cd(k, N, q)
        assert nemenyi_cd(k, N + 1, q) < cd
        assert nemenyi_cd(k + 1, N, q) > cd
        assert nemenyi_cd(k, N, q * 1.5) > cd
