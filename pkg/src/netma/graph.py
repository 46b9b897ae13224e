"""Symmetric binary networks, node-pair sets and edge splits.

Pairs are stored 0-based with ``i < j`` and kept sorted by the linear code
``i * n + j``. Only unordered off-diagonal pairs exist: a network on ``n``
nodes has ``n * (n - 1) / 2`` of them. File formats use 1-based indices;
conversion happens in :mod:`netma.io`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DataError,
    InvalidFoldCountError,
    InvalidIndexError,
    InvalidSizeError,
)
from .rng import as_generator


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PairSet:
    """Unordered node pairs ``(i, j)`` with ``i < j``, sorted and unique."""

    n: int
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        rows = _frozen(self.rows, np.int64).reshape(-1)
        cols = _frozen(self.cols, np.int64).reshape(-1)
        if rows.shape != cols.shape:
            raise DataError("rows and cols must have equal length")
        if rows.size:
            if np.any(rows >= cols):
                raise DataError("pairs must satisfy i < j")
            if rows.min() < 0 or cols.max() >= self.n:
                raise InvalidIndexError(f"pair index out of range for n={self.n}")
            codes = rows * self.n + cols
            if np.any(np.diff(codes) <= 0):
                raise DataError("pairs must be sorted and unique")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Sequence[int]]) -> "PairSet":
        """Build from 0-based ``(i, j)`` pairs in any order or orientation.

        Repeated pairs are collapsed; self-pairs are rejected.
        """
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        if arr.size and np.any(arr[:, 0] == arr[:, 1]):
            raise DataError("self-pairs (i, i) are not allowed")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise InvalidIndexError(f"pair index out of range for n={n}")
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        return cls.from_codes(n, lo * n + hi)

    @classmethod
    def from_codes(cls, n: int, codes) -> "PairSet":
        codes = np.unique(np.asarray(codes, dtype=np.int64))
        return cls(n, codes // n, codes % n)

    @classmethod
    def empty(cls, n: int) -> "PairSet":
        return cls(n, np.empty(0, np.int64), np.empty(0, np.int64))

    @cached_property
    def codes(self) -> np.ndarray:
        c = self.rows * self.n + self.cols
        c.setflags(write=False)
        return c

    def __len__(self):
        return int(self.rows.size)

    def __iter__(self):
        return zip(self.rows.tolist(), self.cols.tolist())

    def __contains__(self, pair):
        i, j = sorted(pair)
        code = i * self.n + j
        k = np.searchsorted(self.codes, code)
        return bool(k < len(self) and self.codes[k] == code)

    def __eq__(self, other):
        if not isinstance(other, PairSet):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.codes, other.codes)

    def __hash__(self):
        return hash((self.n, self.codes.tobytes()))

    def __repr__(self):
        return f"PairSet(n={self.n}, size={len(self)})"

    def _check_same_n(self, other):
        if other.n != self.n:
            raise DataError(f"pair sets over different node counts ({self.n}, {other.n})")

    def union(self, other: "PairSet") -> "PairSet":
        self._check_same_n(other)
        return PairSet.from_codes(self.n, np.union1d(self.codes, other.codes))

    def difference(self, other: "PairSet") -> "PairSet":
        self._check_same_n(other)
        return PairSet.from_codes(self.n, np.setdiff1d(self.codes, other.codes, assume_unique=True))

    def intersection(self, other: "PairSet") -> "PairSet":
        self._check_same_n(other)
        return PairSet.from_codes(self.n, np.intersect1d(self.codes, other.codes, assume_unique=True))

    def subset(self, positions) -> "PairSet":
        """Pairs at the given positions of this (sorted) set."""
        positions = np.sort(np.asarray(positions, dtype=np.int64))
        return PairSet(self.n, self.rows[positions], self.cols[positions])

    def values(self, matrix: np.ndarray) -> np.ndarray:
        """Entries of ``matrix`` at these pairs, in set order."""
        return np.asarray(matrix)[self.rows, self.cols]

    def to_list(self, one_based=False):
        off = 1 if one_based else 0
        return [(i + off, j + off) for i, j in self]


@dataclass(frozen=True, eq=False)
class AdjacencyView:
    """Symmetric 0/1 adjacency matrix with an empty diagonal."""

    entries: np.ndarray
    layer_id: Optional[int] = None

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataError(f"adjacency must be square, got shape {a.shape}")
        if a.shape[0] < 1:
            raise InvalidSizeError("adjacency must have at least one node")
        if not np.all((a == 0) | (a == 1)):
            raise DataError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0):
            raise DataError("adjacency diagonal must be 0")
        if not np.array_equal(a, a.T):
            raise DataError("adjacency must be symmetric")
        object.__setattr__(self, "entries", _frozen(a, np.float64))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges: PairSet, layer_id=None) -> "AdjacencyView":
        a = np.zeros((n, n))
        a[edges.rows, edges.cols] = 1.0
        a[edges.cols, edges.rows] = 1.0
        return cls(a, layer_id)

    def edges(self) -> PairSet:
        i, j = np.nonzero(np.triu(self.entries, 1))
        return PairSet(self.n, i, j)

    def __eq__(self, other):
        if not isinstance(other, AdjacencyView):
            return NotImplemented
        return self.layer_id == other.layer_id and np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class EdgePartition:
    """Observed pairs ``psi1`` and held-out pairs ``psi2`` covering all pairs."""

    psi1: PairSet
    psi2: PairSet
    seed: Optional[int] = None

    def __post_init__(self):
        n = self.psi1.n
        if self.psi2.n != n:
            raise DataError("psi1 and psi2 disagree on node count")
        total = n * (n - 1) // 2
        if len(self.psi1) + len(self.psi2) != total or len(self.psi1.intersection(self.psi2)):
            raise DataError("psi1 and psi2 must partition all node pairs")

    @property
    def n(self) -> int:
        return self.psi1.n

    @property
    def p(self) -> Fraction:
        return Fraction(len(self.psi1), self.n * (self.n - 1) // 2)


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Fold label (0-based) for every pair of ``psi1``, aligned with its order."""

    psi1: PairSet
    labels: np.ndarray
    k_folds: int

    def __post_init__(self):
        labels = _frozen(self.labels, np.int64).reshape(-1)
        if labels.size != len(self.psi1):
            raise DataError("one fold label per pair of psi1 is required")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k_folds):
            raise InvalidFoldCountError("fold label out of range")
        object.__setattr__(self, "labels", labels)

    def positions(self, k: int) -> np.ndarray:
        """Positions within ``psi1`` of the pairs in fold ``k``."""
        return np.flatnonzero(self.labels == k)

    def fold(self, k: int) -> PairSet:
        return self.psi1.subset(self.positions(k))

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k_folds)

    def fold_of(self, pair) -> int:
        i, j = sorted(pair)
        k = np.searchsorted(self.psi1.codes, i * self.psi1.n + j)
        if k >= len(self.psi1) or self.psi1.codes[k] != i * self.psi1.n + j:
            raise KeyError(pair)
        return int(self.labels[k])


@dataclass(frozen=True, eq=False)
class MaskedAdjacency:
    """Adjacency with a set of pairs forced to zero.

    Only the zeroed set is stored; the dense matrix is built on first use.
    """

    base: AdjacencyView
    zeroed: PairSet

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def tau(self) -> float:
        """Fraction of node pairs that are not zeroed."""
        total = self.n * (self.n - 1) // 2
        return 1.0 - len(self.zeroed) / total

    @cached_property
    def dense(self) -> np.ndarray:
        a = self.base.entries.copy()
        a[self.zeroed.rows, self.zeroed.cols] = 0.0
        a[self.zeroed.cols, self.zeroed.rows] = 0.0
        a.setflags(write=False)
        return a

    def as_view(self) -> AdjacencyView:
        return AdjacencyView(self.dense, self.base.layer_id)

    def __eq__(self, other):
        if not isinstance(other, MaskedAdjacency):
            return NotImplemented
        return np.array_equal(self.dense, other.dense) and self.zeroed == other.zeroed

    __hash__ = None


def enumerate_pairs(n: int) -> PairSet:
    if n < 2:
        raise InvalidSizeError(f"need at least 2 nodes, got {n}")
    i, j = np.triu_indices(n, 1)
    return PairSet(n, i, j)


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def split_pairs(pairs: PairSet, ratio=(7, 3), rng=None) -> EdgePartition:
    """Random split of ``pairs`` into observed and held-out parts.

    ``ratio=(a, b)`` keeps ``round(|pairs| * a / (a + b))`` pairs observed.
    ``pairs`` must be the full pair set of its network, since the result is
    a partition of all pairs.
    """
    a, b = (int(r) for r in ratio)
    if a < 0 or b < 0 or a + b <= 0:
        raise DataError(f"invalid split ratio {ratio!r}")
    if len(pairs) == 0:
        raise DataError("cannot split an empty pair set")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = as_generator(rng)
    n1 = _round_half_up(Fraction(len(pairs) * a, a + b))
    if n1 == 0:
        raise DataError("split leaves no observed pairs")
    perm = gen.permutation(len(pairs))
    psi1 = pairs.subset(perm[:n1])
    psi2 = pairs.subset(perm[n1:])
    return EdgePartition(psi1, psi2, seed)


def assign_folds(psi1: PairSet, k_folds: int, rng=None) -> FoldAssignment:
    """Shuffle ``psi1`` once and deal it round-robin into ``k_folds`` folds."""
    if not 2 <= k_folds <= len(psi1):
        raise InvalidFoldCountError(f"K={k_folds} outside [2, {len(psi1)}]")
    gen = as_generator(rng)
    perm = gen.permutation(len(psi1))
    labels = np.empty(len(psi1), dtype=np.int64)
    labels[perm] = np.arange(len(psi1)) % k_folds
    return FoldAssignment(psi1, labels, k_folds)


def mask(base: AdjacencyView, zeroed: PairSet) -> MaskedAdjacency:
    if zeroed.n != base.n:
        raise InvalidIndexError(f"pair set is over {zeroed.n} nodes, adjacency has {base.n}")
    return MaskedAdjacency(base, zeroed)


def egocentric_split(n: int, sampled_fraction: float, rng=None) -> EdgePartition:
    """Hold out every pair whose two endpoints were both left unsampled.

    ``ceil(sampled_fraction * n)`` nodes are drawn without replacement; pairs
    touching at least one of them are observed.
    """
    if not 0 < sampled_fraction <= 1:
        raise DataError(f"sampled fraction must lie in (0, 1], got {sampled_fraction}")
    n_sampled = math.ceil(round(sampled_fraction * n, 9))
    if n_sampled < 2:
        raise DataError("egocentric sampling needs at least 2 sampled nodes")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = as_generator(rng)
    sampled = np.zeros(n, dtype=bool)
    sampled[gen.choice(n, size=n_sampled, replace=False)] = True
    allp = enumerate_pairs(n)
    observed = sampled[allp.rows] | sampled[allp.cols]
    return EdgePartition(
        PairSet(n, allp.rows[observed], allp.cols[observed]),
        PairSet(n, allp.rows[~observed], allp.cols[~observed]),
        seed,
    )

