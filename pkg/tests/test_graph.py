import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st

from netma.errors import DataError, InvalidFoldCountError, InvalidIndexError, InvalidSizeError
from netma.graph import (
    AdjacencyView,
    EdgePartition,
    PairSet,
    assign_folds,
    egocentric_split,
    enumerate_pairs,
    mask,
    split_pairs,
)


def complete_graph(n):
    return AdjacencyView(np.ones((n, n)) - np.eye(n))


def random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, 1).astype(float)
    return AdjacencyView(upper + upper.T)


class TestPairSet:
    def test_from_pairs_normalises_orientation_and_order(self):
        ps = PairSet.from_pairs(4, [(3, 1), (0, 2), (1, 3)])
        assert ps.to_list() == [(0, 2), (1, 3)]
        assert ps.to_list(one_based=True) == [(1, 3), (2, 4)]

    def test_rejects_self_pair(self):
        with pytest.raises(DataError):
            PairSet.from_pairs(3, [(1, 1)])

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidIndexError):
            PairSet.from_pairs(3, [(0, 3)])

    def test_rejects_unsorted_raw_construction(self):
        with pytest.raises(DataError):
            PairSet(4, [1, 0], [2, 3])

    def test_membership_is_orientation_free(self):
        ps = PairSet.from_pairs(5, [(1, 4)])
        assert (4, 1) in ps and (1, 4) in ps
        assert (0, 1) not in ps

    def test_set_algebra(self):
        a = PairSet.from_pairs(5, [(0, 1), (1, 2), (2, 3)])
        b = PairSet.from_pairs(5, [(1, 2), (3, 4)])
        assert a.union(b).to_list() == [(0, 1), (1, 2), (2, 3), (3, 4)]
        assert a.difference(b).to_list() == [(0, 1), (2, 3)]
        assert a.intersection(b).to_list() == [(1, 2)]
        with pytest.raises(DataError):
            a.union(PairSet.empty(6))

    def test_values_reads_matrix_in_set_order(self):
        m = np.arange(16.0).reshape(4, 4)
        ps = PairSet.from_pairs(4, [(2, 3), (0, 1)])
        np.testing.assert_array_equal(ps.values(m), [1.0, 11.0])

    def test_equality_and_hash(self):
        a = PairSet.from_pairs(4, [(0, 1), (2, 3)])
        b = PairSet.from_pairs(4, [(3, 2), (1, 0)])
        assert a == b and hash(a) == hash(b)
        assert a != PairSet.from_pairs(5, [(0, 1), (2, 3)])


class TestAdjacencyView:
    def test_validation(self):
        with pytest.raises(DataError):
            AdjacencyView(np.array([[0, 1], [0, 0]]))
        with pytest.raises(DataError):
            AdjacencyView(np.array([[1, 0], [0, 0]]))
        with pytest.raises(DataError):
            AdjacencyView(np.array([[0, 2], [2, 0]]))
        with pytest.raises(DataError):
            AdjacencyView(np.zeros((2, 3)))

    def test_entries_are_read_only(self):
        a = complete_graph(3)
        with pytest.raises(ValueError):
            a.entries[0, 1] = 0

    def test_edges_round_trip(self):
        a = random_graph(12, 0.3, 1)
        assert AdjacencyView.from_edges(12, a.edges()) == a


class TestEnumeratePairs:
    def test_three_nodes(self):
        assert enumerate_pairs(3).to_list(one_based=True) == [(1, 2), (1, 3), (2, 3)]

    def test_two_nodes(self):
        assert enumerate_pairs(2).to_list(one_based=True) == [(1, 2)]

    def test_count_matches_double_loop(self):
        n = 10
        brute = [(i, j) for i in range(n) for j in range(n) if i < j]
        assert len(enumerate_pairs(n)) == len(brute) == 45
        assert enumerate_pairs(n).to_list() == brute

    def test_too_small(self):
        with pytest.raises(InvalidSizeError):
            enumerate_pairs(1)


class TestSplitPairs:
    def test_full_observation(self):
        part = split_pairs(enumerate_pairs(6), (1, 0), 3)
        assert len(part.psi2) == 0
        assert part.p == 1

    def test_ten_nodes(self):
        part = split_pairs(enumerate_pairs(10), (7, 3), 0)
        assert len(part.psi1) == 32  # 45 * 0.7 = 31.5 rounds up
        assert part.p == Fraction(32, 45)
        assert set(part.psi1.to_list()) | set(part.psi2.to_list()) == set(enumerate_pairs(10).to_list())
        assert not set(part.psi1.to_list()) & set(part.psi2.to_list())

    def test_default_harness_size(self):
        part = split_pairs(enumerate_pairs(200), (7, 3), 5)
        assert len(part.psi1) == 13930 and len(part.psi2) == 5970

    def test_same_seed_same_split(self):
        a = split_pairs(enumerate_pairs(30), (7, 3), 11)
        b = split_pairs(enumerate_pairs(30), (7, 3), 11)
        c = split_pairs(enumerate_pairs(30), (7, 3), 12)
        assert a.psi1 == b.psi1 and a.psi2 == b.psi2
        assert a.psi1 != c.psi1
        assert a.seed == 11

    def test_bad_ratio(self):
        with pytest.raises(DataError):
            split_pairs(enumerate_pairs(5), (0, 0), 1)

    def test_partition_validation(self):
        allp = enumerate_pairs(4)
        with pytest.raises(DataError):
            EdgePartition(allp, allp.subset([0]))


class TestAssignFolds:
    def test_leave_one_out(self):
        psi1 = enumerate_pairs(5)
        folds = assign_folds(psi1, 10, 0)
        np.testing.assert_array_equal(folds.sizes(), np.ones(10))

    def test_balanced_sizes(self):
        folds = assign_folds(enumerate_pairs(10), 10, 4)
        assert sorted(folds.sizes().tolist()) == [4] * 5 + [5] * 5

    def test_folds_cover_psi1(self):
        psi1 = split_pairs(enumerate_pairs(15), (7, 3), 2).psi1
        folds = assign_folds(psi1, 4, 9)
        merged = PairSet.empty(15)
        for k in range(4):
            merged = merged.union(folds.fold(k))
        assert merged == psi1
        pair = psi1.to_list()[7]
        assert pair in folds.fold(folds.fold_of(pair))

    def test_invalid_k(self):
        with pytest.raises(InvalidFoldCountError):
            assign_folds(enumerate_pairs(3), 1, 0)
        with pytest.raises(InvalidFoldCountError):
            assign_folds(enumerate_pairs(3), 4, 0)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(3, 25), k=st.integers(2, 12), seed=st.integers(0, 2**32 - 1))
    def test_sizes_differ_by_at_most_one(self, n, k, seed):
        psi1 = enumerate_pairs(n)
        k = min(k, len(psi1))
        sizes = assign_folds(psi1, k, seed).sizes()
        assert sizes.sum() == len(psi1)
        assert sizes.max() - sizes.min() <= 1


class TestMask:
    def test_identity(self):
        a = random_graph(8, 0.4, 3)
        m = mask(a, PairSet.empty(8))
        np.testing.assert_array_equal(m.dense, a.entries)
        assert m.tau == 1.0

    def test_three_node_example(self):
        m = mask(complete_graph(3), PairSet.from_pairs(3, [(0, 1)]))
        assert m.dense[0, 1] == 0 and m.dense[1, 0] == 0
        assert m.dense.sum() == 4
        assert m.tau == pytest.approx(2 / 3, abs=1e-15)
        m.as_view()  # still a valid adjacency

    def test_node_count_mismatch(self):
        with pytest.raises(InvalidIndexError):
            mask(complete_graph(3), PairSet.empty(4))

    def test_expected_masked_matrix_is_p_times_p(self):
        # Monte Carlo over both the network draw and the split
        n, reps = 6, 10_000
        rng = np.random.default_rng(42)
        p_mat = rng.uniform(0.1, 0.9, (n, n))
        p_mat = np.triu(p_mat, 1) + np.triu(p_mat, 1).T
        allp = enumerate_pairs(n)
        acc = np.zeros((n, n))
        acc2 = np.zeros((n, n))
        for _ in range(reps):
            up = np.triu(rng.random((n, n)) < p_mat, 1).astype(float)
            a = AdjacencyView(up + up.T)
            part = split_pairs(allp, (7, 3), rng)
            d = mask(a, part.psi2).dense
            acc += d
            acc2 += d * d
        mean = acc / reps
        se = np.sqrt((acc2 / reps - mean ** 2) / reps)
        frac = (len(allp) * 7 // 10 + 1) / len(allp)  # 15 pairs: 10.5 rounds up to 11
        off = ~np.eye(n, dtype=bool)
        assert np.all(np.abs(mean - frac * p_mat)[off] <= 3 * se[off] + 1e-12)


class TestEgocentricSplit:
    def test_everyone_sampled(self):
        part = egocentric_split(7, 1.0, 0)
        assert len(part.psi2) == 0

    def test_single_unsampled_node_hides_nothing(self):
        part = egocentric_split(4, 0.75, 1)
        assert len(part.psi2) == 0

    def test_hidden_block_is_unsampled_square(self):
        n = 20
        part = egocentric_split(n, 0.6, 8)
        hidden_nodes = {v for pair in part.psi2 for v in pair}
        assert len(hidden_nodes) == n - 12
        expected = {(i, j) for i in hidden_nodes for j in hidden_nodes if i < j}
        assert set(part.psi2.to_list()) == expected

    def test_fraction_bounds(self):
        with pytest.raises(DataError):
            egocentric_split(5, 0.0, 0)
