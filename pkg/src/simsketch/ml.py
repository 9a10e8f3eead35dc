"""Clustering and classification over packed bit payloads and value vectors.

The algorithms here are deliberately deterministic: seeded initialization,
fixed tie-breaking rules, and a fixed empty-cluster policy, so that a run on
plaintext records and a run on keyed sketches of the same records can be
compared assignment for assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bitvec import (
    Tie,
    _padded_nbytes,
    and_count_rows,
    hamming_rows,
    majority_from_unpacked,
    majority_rows,
)
from .sketch import IndexPermutation, SimilarityMeasure

# Unpacked bit matrices above this many cells are not cached between
# iterations; the majority recomputation unpacks per cluster instead.
_CACHE_CELLS = 1 << 28


@dataclass(frozen=True)
class Partition:
    """Cluster assignment keyed by record index value (not row position)."""

    indexes: np.ndarray
    assignments: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indexes, dtype=np.int64)
        asg = np.asarray(self.assignments, dtype=np.int64)
        if idx.ndim != 1 or asg.ndim != 1 or idx.size != asg.size:
            raise ValueError("indexes and assignments must be 1-d and equal length")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate record index in partition")
        if asg.size and asg.min() < 0:
            raise ValueError("cluster ids must be non-negative")
        idx.setflags(write=False)
        asg.setflags(write=False)
        object.__setattr__(self, "indexes", idx)
        object.__setattr__(self, "assignments", asg)

    def __len__(self) -> int:
        return int(self.indexes.size)

    def as_dict(self) -> dict:
        return {int(i): int(a) for i, a in zip(self.indexes, self.assignments)}

    def cluster_of(self, index: int) -> int:
        pos = np.searchsorted(self._order_values(), index)
        values = self._order_values()
        if pos >= values.size or values[pos] != index:
            raise KeyError(index)
        return int(self.assignments[self._order()[pos]])

    def _order(self) -> np.ndarray:
        return np.argsort(self.indexes, kind="stable")

    def _order_values(self) -> np.ndarray:
        return self.indexes[self._order()]

    @staticmethod
    def from_labels(indexes, labels) -> "Partition":
        return Partition(np.asarray(indexes), np.asarray(labels))


def rand_index(a: Partition, b: Partition) -> float:
    """Rand index of two partitions of the same record set, in [0, 1].

    Exact integer counting over the contingency table. A single-record
    partition has no pairs; it is defined here as 1.0.
    """
    oa = a._order()
    ob = b._order()
    if not np.array_equal(a.indexes[oa], b.indexes[ob]):
        raise ValueError("partitions cover different record sets")
    n = len(a)
    if n < 2:
        return 1.0
    la = a.assignments[oa]
    lb = b.assignments[ob]
    # contingency counts via a joint relabeling
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    joint = ia.astype(np.int64) * (ib.max() + 1) + ib
    nij = np.bincount(joint)
    ai = np.bincount(ia)
    bj = np.bincount(ib)

    def _pairs(counts):
        c = counts.astype(object)
        return int(np.sum(c * (c - 1) // 2))

    total = n * (n - 1) // 2
    same_same = _pairs(nij)
    same_a = _pairs(ai)
    same_b = _pairs(bj)
    agree = total + 2 * same_same - same_a - same_b
    return agree / total


@dataclass(frozen=True)
class KModesConfig:
    k: int
    iterations: int = 20
    seed: int = 0
    measure: SimilarityMeasure = SimilarityMeasure.HAMMING_SIMILARITY
    empty_policy: str = "reseed-farthest"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.measure not in (
            SimilarityMeasure.HAMMING_SIMILARITY,
            SimilarityMeasure.AND_COUNT,
        ):
            raise ValueError("k-modes runs on bit payloads only")
        if self.empty_policy != "reseed-farthest":
            raise ValueError("unknown empty-cluster policy")


@dataclass
class KModesResult:
    assignments: np.ndarray
    centers: np.ndarray
    nbits: int
    objective_history: list
    n_iter: int
    converged: bool

    def partition(self, indexes=None) -> Partition:
        if indexes is None:
            indexes = np.arange(self.assignments.size)
        return Partition(np.asarray(indexes), self.assignments)


def _init_centers(payloads: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Pick k seed rows, preferring byte-distinct records."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(payloads.shape[0])
    chosen = []
    seen = set()
    for i in order:
        row = payloads[i].tobytes()
        if row not in seen:
            seen.add(row)
            chosen.append(i)
            if len(chosen) == k:
                break
    for i in order:  # not enough distinct records; allow duplicates
        if len(chosen) == k:
            break
        chosen.append(i)
    return payloads[np.array(chosen[:k])].copy()


def _scores_to_centers(payloads, centers, nbits, measure):
    """(k, count) matrix; entry [j, i] scores record i against center j."""
    k = centers.shape[0]
    out = np.empty((k, payloads.shape[0]), dtype=np.int64)
    for j in range(k):
        if measure is SimilarityMeasure.HAMMING_SIMILARITY:
            out[j] = hamming_rows(payloads, centers[j])
        else:
            out[j] = and_count_rows(payloads, centers[j])
    return out


def kmodes(payloads: np.ndarray, nbits: int, cfg: KModesConfig) -> KModesResult:
    """Lloyd-style k-modes on a packed (count, nbytes) bit payload matrix.

    Assignment is by best similarity (ties go to the lowest cluster id),
    the center update is the per-position majority (ties to 0), and an empty
    cluster is reseeded with the record farthest from its assigned center.
    Under Hamming similarity the recorded objective (total Hamming distance
    to assigned centers) never increases between iterations.
    """
    count = payloads.shape[0]
    if cfg.k > count:
        raise ValueError("more clusters than records")
    if payloads.shape[1] != _padded_nbytes(nbits):
        raise ValueError(
            "payload matrix must be kernel width; see matrix_from_payloads"
        )
    centers = _init_centers(payloads, cfg.k, cfg.seed)
    use_hamming = cfg.measure is SimilarityMeasure.HAMMING_SIMILARITY

    cache_unpacked = count * nbits <= _CACHE_CELLS
    unpacked = np.unpackbits(payloads, axis=1, count=nbits) if cache_unpacked else None

    prev = None
    history = []
    converged = False
    n_iter = 0
    for _ in range(cfg.iterations):
        n_iter += 1
        scores = _scores_to_centers(payloads, centers, nbits, cfg.measure)
        if use_hamming:
            assign = np.argmin(scores, axis=0)
        else:
            assign = np.argmax(scores, axis=0)

        # reseed empty clusters with the farthest (worst-scoring) record
        sizes = np.bincount(assign, minlength=cfg.k)
        reserved = []
        for j in range(cfg.k):
            if sizes[j] > 0:
                continue
            per_record = scores[assign, np.arange(count)].copy()
            if not use_hamming:
                per_record = -per_record
            for i in reserved:
                per_record[i] = np.iinfo(np.int64).min  # pinned by earlier reseed
            far = int(np.argmax(per_record))
            centers[j] = payloads[far]
            old = assign[far]
            assign[far] = j
            sizes[j] += 1
            sizes[old] -= 1
            reserved.append(far)
            scores[j] = (hamming_rows if use_hamming else and_count_rows)(
                payloads, centers[j]
            )

        per_record = scores[assign, np.arange(count)]
        objective = int(per_record.sum()) if use_hamming else -int(per_record.sum())
        history.append(objective)

        if prev is not None and np.array_equal(assign, prev):
            converged = True
            break
        prev = assign

        for j in range(cfg.k):
            members = np.flatnonzero(assign == j)
            if members.size == 0:
                # a reseed can empty an earlier cluster; keep its center
                continue
            if unpacked is not None:
                centers[j] = majority_from_unpacked(unpacked[members], tie=Tie.ZERO).buffer
            else:
                centers[j] = majority_rows(payloads[members], nbits, tie=Tie.ZERO).buffer

    return KModesResult(
        assignments=assign,
        centers=centers,
        nbits=nbits,
        objective_history=history,
        n_iter=n_iter,
        converged=converged,
    )


def cluster_records(payloads, nbits, cfg: KModesConfig, indexes=None):
    """Run k-modes and wrap the assignments as a Partition."""
    result = kmodes(payloads, nbits, cfg)
    return result.partition(indexes), result


# -- nearest neighbours ------------------------------------------------------


def _similarity_to_rows(measure, mat, query, nbits):
    if measure is SimilarityMeasure.HAMMING_SIMILARITY:
        return (nbits - hamming_rows(mat, query)).astype(np.float64)
    if measure is SimilarityMeasure.AND_COUNT:
        return and_count_rows(mat, query).astype(np.float64)
    rows = mat.astype(np.float64)
    q = query.astype(np.float64)
    if measure is SimilarityMeasure.EUCLIDEAN:
        return -np.sqrt(((rows - q) ** 2).sum(axis=1))
    norms = np.linalg.norm(rows, axis=1)
    qn = np.linalg.norm(q)
    if qn == 0.0 or np.any(norms == 0.0):
        raise ValueError("cosine similarity undefined for the zero vector")
    return np.clip((rows @ q) / (norms * qn), -1.0, 1.0)


def knn(train, labels, query, k, measure, nbits=None):
    """Majority vote over the k most similar training rows.

    Deterministic tie handling: neighbours are ranked by (similarity,
    lower row position); among tied vote counts the class with the larger
    summed similarity wins, then the lower class id.
    """
    labels = np.asarray(labels)
    if train.shape[0] != labels.size:
        raise ValueError("one label per training row required")
    if not 1 <= k <= train.shape[0]:
        raise ValueError("k must lie in [1, count]")
    bitwise = measure in (
        SimilarityMeasure.HAMMING_SIMILARITY,
        SimilarityMeasure.AND_COUNT,
    )
    if bitwise and nbits is None:
        raise ValueError("bit measures need nbits")
    sims = _similarity_to_rows(measure, train, query, nbits)
    order = np.lexsort((np.arange(sims.size), -sims))[:k]
    best_label = -1
    best_key = None
    for cls in np.unique(labels[order]):
        members = order[labels[order] == cls]
        key = (members.size, float(sims[members].sum()))
        if best_key is None or key > best_key:
            best_key = key
            best_label = int(cls)
    return best_label


def knn_batch(train, labels, queries, k, measure, nbits=None):
    """Row-per-query wrapper around :func:`knn`."""
    return np.array(
        [knn(train, labels, q, k, measure, nbits=nbits) for q in queries],
        dtype=np.int64,
    )


# -- result transposition ----------------------------------------------------


def transpose_partition(partition: Partition, perms, class_members) -> Partition:
    """Rewrite a partition of permuted records back to original positions.

    ``perms`` maps class id to the keyed IndexPermutation used at protection
    time; ``class_members`` maps class id to that class's record index values
    in ascending order. Protection stores the record at in-class position i
    at position perm.apply(i), so the original record at index L[i] receives
    the cluster of protected index L[perm.apply(i)].
    """
    covered = sorted(
        int(v) for members in class_members.values() for v in np.asarray(members)
    )
    order = partition._order()
    sorted_idx = partition.indexes[order]
    if covered != [int(v) for v in sorted_idx]:
        raise ValueError("class members do not cover the partition's record set")

    new_indexes = []
    new_assign = []
    for cls, members in class_members.items():
        members = np.asarray(members, dtype=np.int64)
        if np.any(np.diff(members) <= 0):
            raise ValueError("class member indexes must be strictly ascending")
        perm = perms[cls]
        if len(perm) != members.size:
            raise ValueError("permutation length does not match class size")
        source = members[perm.mapping]  # protected index holding record i
        pos = np.searchsorted(sorted_idx, source)
        new_indexes.append(members)
        new_assign.append(partition.assignments[order[pos]])
    return Partition(np.concatenate(new_indexes), np.concatenate(new_assign))
