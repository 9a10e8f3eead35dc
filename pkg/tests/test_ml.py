"""Clustering, classification and partition plumbing vs naive oracles."""

import itertools
import math

import numpy as np
import pytest

from simsketch.bitvec import matrix_from_payloads
from simsketch.keys import KEY_BYTES, SecretKey
from simsketch.ml import (
    KModesConfig,
    Partition,
    cluster_records,
    kmodes,
    knn,
    knn_batch,
    rand_index,
    transpose_partition,
)
from simsketch.sketch import SimilarityMeasure, derive_permutation

KEY = SecretKey(b"\x11" * KEY_BYTES)
HAM = SimilarityMeasure.HAMMING_SIMILARITY
AND = SimilarityMeasure.AND_COUNT


# -- naive reference implementations -------------------------------------------
#
# Pure-Python reimplementations of the documented rules, kept deliberately
# dumb so they can serve as independent oracles for the vectorized versions.


def naive_rand_index(la, lb):
    n = len(la)
    if n < 2:
        return 1.0
    agree = total = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += 1
            agree += (la[i] == la[j]) == (lb[i] == lb[j])
    return agree / total


def set_partitions(n):
    """All partitions of range(n) as restricted-growth label strings."""

    def rec(prefix, maxlabel):
        if len(prefix) == n:
            yield list(prefix)
            return
        for lab in range(maxlabel + 2):
            yield from rec(prefix + [lab], max(maxlabel, lab))

    yield from rec([0], 0)


def naive_kmodes(bits, k, iterations, seed, measure):
    """Reference k-modes mirroring every documented tie and reseed rule."""
    count, nbits = len(bits), len(bits[0])

    def ham(c, x):
        return sum(a != b for a, b in zip(c, x))

    def andc(c, x):
        return sum(a & b for a, b in zip(c, x))

    score = ham if measure is HAM else andc
    use_hamming = measure is HAM

    order = np.random.default_rng(seed).permutation(count)
    chosen, seen = [], set()
    for i in order:
        key = tuple(bits[i])
        if key not in seen:
            seen.add(key)
            chosen.append(int(i))
            if len(chosen) == k:
                break
    for i in order:
        if len(chosen) == k:
            break
        chosen.append(int(i))
    centers = [list(bits[i]) for i in chosen[:k]]

    prev = None
    history = []
    converged = False
    n_iter = 0
    for _ in range(iterations):
        n_iter += 1
        scores = [[score(centers[j], bits[i]) for i in range(count)] for j in range(k)]

        assign = []
        for i in range(count):
            best = 0
            for j in range(1, k):
                if use_hamming:
                    if scores[j][i] < scores[best][i]:
                        best = j
                else:
                    if scores[j][i] > scores[best][i]:
                        best = j
            assign.append(best)

        sizes = [assign.count(j) for j in range(k)]
        reserved = []
        for j in range(k):
            if sizes[j] > 0:
                continue
            per = [scores[assign[i]][i] for i in range(count)]
            if not use_hamming:
                per = [-v for v in per]
            for r in reserved:
                per[r] = -(10**18)
            far = 0
            for i in range(1, count):
                if per[i] > per[far]:
                    far = i
            centers[j] = list(bits[far])
            sizes[j] += 1
            sizes[assign[far]] -= 1
            assign[far] = j
            reserved.append(far)
            scores[j] = [score(centers[j], bits[i]) for i in range(count)]

        per = [scores[assign[i]][i] for i in range(count)]
        obj = sum(per) if use_hamming else -sum(per)
        history.append(obj)

        if prev is not None and assign == prev:
            converged = True
            break
        prev = list(assign)

        for j in range(k):
            members = [i for i in range(count) if assign[i] == j]
            if not members:
                continue  # emptied by a reseed; keeps its previous center
            for b in range(nbits):
                ones = sum(bits[i][b] for i in members)
                centers[j][b] = 1 if 2 * ones > len(members) else 0

    return assign, history, n_iter, converged


def naive_knn(train_rows, labels, query, k, measure, nbits=None):
    n = len(train_rows)
    sims = []
    for row in train_rows:
        if measure is HAM:
            sims.append(float(nbits - sum(a != b for a, b in zip(row, query))))
        elif measure is AND:
            sims.append(float(sum(a & b for a, b in zip(row, query))))
        elif measure is SimilarityMeasure.EUCLIDEAN:
            sims.append(-math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(row, query))))
        else:
            dot = sum(float(a) * float(b) for a, b in zip(row, query))
            na = math.sqrt(sum(float(a) ** 2 for a in row))
            nb = math.sqrt(sum(float(b) ** 2 for b in query))
            sims.append(dot / (na * nb))
    order = sorted(range(n), key=lambda i: (-sims[i], i))[:k]
    best_label, best_key = -1, None
    for cls in sorted(set(labels[i] for i in order)):
        members = [i for i in order if labels[i] == cls]
        cand = (len(members), sum(sims[i] for i in members))
        if best_key is None or cand > best_key:
            best_key = cand
            best_label = cls
    return best_label


# -- Partition -----------------------------------------------------------------


def test_partition_basics():
    p = Partition(np.array([5, 3, 9]), np.array([1, 0, 1]))
    assert len(p) == 3
    assert p.as_dict() == {5: 1, 3: 0, 9: 1}
    assert p.cluster_of(3) == 0
    assert p.cluster_of(9) == 1
    with pytest.raises(KeyError):
        p.cluster_of(4)


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition(np.array([1, 1]), np.array([0, 1]))  # duplicate index
    with pytest.raises(ValueError):
        Partition(np.array([1, 2]), np.array([0]))
    with pytest.raises(ValueError):
        Partition(np.array([1, 2]), np.array([0, -1]))
    with pytest.raises(ValueError):
        Partition(np.array([[1, 2]]), np.array([[0, 1]]))


def test_partition_from_labels():
    p = Partition.from_labels([10, 20], [1, 2])
    assert p.as_dict() == {10: 1, 20: 2}


# -- rand index ------------------------------------------------------------------


def test_rand_index_hand_example():
    # {{1,2},{3}} vs {{1},{2,3}}: of the 3 pairs only (1,3) is treated alike
    a = Partition(np.array([1, 2, 3]), np.array([0, 0, 1]))
    b = Partition(np.array([1, 2, 3]), np.array([0, 1, 1]))
    assert rand_index(a, b) == pytest.approx(1 / 3)


def test_rand_index_identity_and_relabel():
    idx = np.arange(6)
    a = Partition(idx, np.array([0, 0, 1, 1, 2, 2]))
    b = Partition(idx, np.array([5, 5, 0, 0, 9, 9]))  # same shape, new names
    assert rand_index(a, a) == 1.0
    assert rand_index(a, b) == 1.0


def test_rand_index_trivial_sizes():
    one = Partition(np.array([7]), np.array([0]))
    assert rand_index(one, one) == 1.0
    a = Partition(np.array([0, 1]), np.array([0, 0]))
    b = Partition(np.array([0, 1]), np.array([0, 1]))
    assert rand_index(a, b) == 0.0


def test_rand_index_alignment_by_index_value():
    # same logical partition presented in different row orders
    a = Partition(np.array([3, 1, 2]), np.array([0, 1, 0]))
    b = Partition(np.array([1, 2, 3]), np.array([1, 0, 0]))
    assert rand_index(a, b) == 1.0


def test_rand_index_mismatched_records():
    a = Partition(np.array([1, 2]), np.array([0, 1]))
    b = Partition(np.array([1, 3]), np.array([0, 1]))
    with pytest.raises(ValueError):
        rand_index(a, b)


def test_rand_index_exhaustive_small():
    """Every partition pair of up to 5 records matches the naive count."""
    for n in (2, 3, 4, 5):
        idx = np.arange(n)
        parts = list(set_partitions(n))
        for la, lb in itertools.product(parts, repeat=2):
            got = rand_index(Partition(idx, np.array(la)), Partition(idx, np.array(lb)))
            assert got == pytest.approx(naive_rand_index(la, lb))


def test_rand_index_random_vs_naive():
    rng = np.random.default_rng(0)
    idx = np.arange(300)
    for _ in range(5):
        la = rng.integers(0, 7, 300)
        lb = rng.integers(0, 4, 300)
        got = rand_index(Partition(idx, la), Partition(idx, lb))
        assert got == pytest.approx(naive_rand_index(la.tolist(), lb.tolist()))


def test_rand_index_symmetry():
    rng = np.random.default_rng(1)
    idx = np.arange(50)
    a = Partition(idx, rng.integers(0, 5, 50))
    b = Partition(idx, rng.integers(0, 3, 50))
    assert rand_index(a, b) == rand_index(b, a)


# -- k-modes ---------------------------------------------------------------------


def planted_blobs(rng, per_class=150, nbits=1000):
    """Two classes with per-bit densities 0.05 and 0.95; hugely separated."""
    a = (rng.random((per_class, nbits)) < 0.05).astype(np.uint8)
    b = (rng.random((per_class, nbits)) < 0.95).astype(np.uint8)
    bits = np.vstack([a, b])
    labels = np.repeat([0, 1], per_class)
    payloads = matrix_from_payloads(np.packbits(bits, axis=1), nbits)
    return payloads, labels


def test_kmodes_recovers_planted_blobs():
    payloads, labels = planted_blobs(np.random.default_rng(2))
    part, result = cluster_records(payloads, 1000, KModesConfig(k=2, seed=0))
    truth = Partition(np.arange(labels.size), labels)
    assert rand_index(part, truth) == 1.0
    assert result.converged


def test_kmodes_config_validation():
    with pytest.raises(ValueError):
        KModesConfig(k=1)
    with pytest.raises(ValueError):
        KModesConfig(k=2, iterations=0)
    with pytest.raises(ValueError):
        KModesConfig(k=2, measure=SimilarityMeasure.EUCLIDEAN)
    with pytest.raises(ValueError):
        KModesConfig(k=2, empty_policy="drop")


def test_kmodes_input_validation():
    payloads, _ = planted_blobs(np.random.default_rng(3), per_class=5, nbits=64)
    with pytest.raises(ValueError):
        kmodes(payloads, 64, KModesConfig(k=11))  # more clusters than records
    with pytest.raises(ValueError):
        kmodes(payloads[:, :-1], 64, KModesConfig(k=2))  # not kernel width


def test_kmodes_deterministic():
    payloads, _ = planted_blobs(np.random.default_rng(4), per_class=40, nbits=256)
    cfg = KModesConfig(k=3, seed=7)
    r1 = kmodes(payloads, 256, cfg)
    r2 = kmodes(payloads, 256, cfg)
    assert np.array_equal(r1.assignments, r2.assignments)
    assert r1.objective_history == r2.objective_history
    assert np.array_equal(r1.centers, r2.centers)


def test_kmodes_objective_monotone_under_hamming():
    rng = np.random.default_rng(5)
    bits = rng.integers(0, 2, size=(300, 200), dtype=np.uint8)
    payloads = matrix_from_payloads(np.packbits(bits, axis=1), 200)
    result = kmodes(payloads, 200, KModesConfig(k=4, iterations=15, seed=1))
    diffs = np.diff(result.objective_history)
    assert np.all(diffs <= 0)


def test_kmodes_iteration_budget():
    payloads, _ = planted_blobs(np.random.default_rng(6), per_class=30, nbits=128)
    one = kmodes(payloads, 128, KModesConfig(k=2, iterations=1))
    assert one.n_iter == 1 and not one.converged and len(one.objective_history) == 1
    full = kmodes(payloads, 128, KModesConfig(k=2, iterations=20))
    assert full.converged and full.n_iter <= 20
    # on a converged run the reported centers produced the final assignment
    from simsketch.bitvec import hamming_rows

    recomputed = sum(
        int(hamming_rows(payloads[i : i + 1], full.centers[full.assignments[i]])[0])
        for i in range(payloads.shape[0])
    )
    assert recomputed == full.objective_history[-1]


def test_kmodes_and_measure_runs():
    rng = np.random.default_rng(7)
    payloads, labels = planted_blobs(rng, per_class=50, nbits=256)
    cfg = KModesConfig(k=2, measure=AND, seed=3)
    part, result = cluster_records(payloads, 256, cfg)
    assert result.assignments.shape == (100,)
    assert set(result.assignments.tolist()) <= {0, 1}
    # objective is the negated total similarity
    assert result.objective_history[-1] <= 0


def test_kmodes_matches_naive_oracle():
    """Random tiny instances, duplicate-heavy, against the reference run.

    Small alphabets force empty-cluster reseeds and majority ties, so the
    documented corner rules are exercised, not just the happy path.
    """
    rng = np.random.default_rng(8)
    for case in range(120):
        count = int(rng.integers(3, 10))
        nbits = int(rng.integers(2, 10))
        k = int(rng.integers(2, min(count, 4) + 1))
        iterations = int(rng.integers(1, 5))
        seed = int(rng.integers(0, 1000))
        measure = HAM if case % 2 == 0 else AND
        # draw rows from a tiny pool so duplicates are common
        pool = rng.integers(0, 2, size=(3, nbits), dtype=np.uint8)
        pick = rng.integers(0, 4, size=count)
        bits = np.where(
            (pick < 3)[:, None], pool[np.minimum(pick, 2)],
            rng.integers(0, 2, size=(count, nbits), dtype=np.uint8),
        )
        payloads = matrix_from_payloads(np.packbits(bits, axis=1), nbits)
        cfg = KModesConfig(k=k, iterations=iterations, seed=seed, measure=measure)
        result = kmodes(payloads, nbits, cfg)
        want_assign, want_hist, want_iter, want_conv = naive_kmodes(
            bits.tolist(), k, iterations, seed, measure
        )
        assert result.assignments.tolist() == want_assign, f"case {case}"
        assert result.objective_history == want_hist, f"case {case}"
        assert result.n_iter == want_iter and result.converged == want_conv


# -- k nearest neighbours ----------------------------------------------------------


def test_knn_self_classification():
    rng = np.random.default_rng(9)
    rows = rng.integers(0, 256, size=(30, 16), dtype=np.uint8)
    labels = rng.integers(0, 3, size=30)
    for i in (0, 7, 29):
        assert knn(rows, labels, rows[i], 1, SimilarityMeasure.EUCLIDEAN) == labels[i]


def test_knn_validation():
    rows = np.zeros((4, 8), dtype=np.uint8)
    labels = np.array([0, 1, 0, 1])
    with pytest.raises(ValueError):
        knn(rows, labels, rows[0], 0, SimilarityMeasure.EUCLIDEAN)
    with pytest.raises(ValueError):
        knn(rows, labels, rows[0], 5, SimilarityMeasure.EUCLIDEAN)
    with pytest.raises(ValueError):
        knn(rows, labels[:3], rows[0], 1, SimilarityMeasure.EUCLIDEAN)
    with pytest.raises(ValueError):
        knn(rows, labels, rows[0], 1, HAM)  # bit measure without nbits


def test_knn_index_tie_break():
    # identical rows with different labels: the earlier row wins at k=1
    rows = np.array([[1, 2], [1, 2]], dtype=np.uint8)
    assert knn(rows, np.array([4, 2]), np.array([1, 2]), 1,
               SimilarityMeasure.EUCLIDEAN) == 4


def test_knn_vote_tie_prefers_lower_class():
    # equal votes and exactly equal summed similarity -> lower class id
    rows = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    labels = np.array([1, 0])
    assert knn(rows, labels, np.array([0, 0]), 2, SimilarityMeasure.EUCLIDEAN) == 0


def test_knn_vote_count_beats_similarity_sum():
    rows = np.array([[0, 0], [5, 0], [6, 0]], dtype=np.uint8)
    labels = np.array([1, 0, 0])
    # class 0 has two farther neighbours, class 1 one exact hit
    assert knn(rows, labels, np.array([0, 0]), 3, SimilarityMeasure.EUCLIDEAN) == 0


def test_knn_shuffle_invariance_with_distinct_similarities():
    rng = np.random.default_rng(10)
    rows = rng.integers(0, 256, size=(40, 12), dtype=np.uint8)
    labels = rng.integers(0, 4, size=40)
    queries = rng.integers(0, 256, size=(20, 12), dtype=np.uint8)
    perm = rng.permutation(40)
    for q in queries:
        d = np.linalg.norm(rows.astype(float) - q.astype(float), axis=1)
        if np.unique(d).size != d.size:
            continue  # tie present; index tie-break is order-dependent by design
        a = knn(rows, labels, q, 5, SimilarityMeasure.EUCLIDEAN)
        b = knn(rows[perm], labels[perm], q, 5, SimilarityMeasure.EUCLIDEAN)
        assert a == b


def test_knn_matches_naive_oracle():
    """500 randomized cases across all four measures and k values."""
    rng = np.random.default_rng(11)
    measures = [HAM, AND, SimilarityMeasure.EUCLIDEAN, SimilarityMeasure.COSINE]
    for case in range(500):
        measure = measures[case % 4]
        count = int(rng.integers(3, 25))
        k = int(rng.integers(1, count + 1))
        n_classes = int(rng.integers(2, 5))
        labels = rng.integers(0, n_classes, size=count)
        if measure in (HAM, AND):
            nbits = int(rng.integers(4, 40))
            bits = rng.integers(0, 2, size=(count, nbits), dtype=np.uint8)
            qbits = rng.integers(0, 2, size=nbits, dtype=np.uint8)
            mat = matrix_from_payloads(np.packbits(bits, axis=1), nbits)
            qrow = matrix_from_payloads(np.packbits(qbits)[np.newaxis, :], nbits)[0]
            got = knn(mat, labels, qrow, k, measure, nbits=nbits)
            want = naive_knn(bits.tolist(), labels.tolist(), qbits.tolist(), k,
                             measure, nbits=nbits)
        else:
            dim = int(rng.integers(2, 10))
            rows = rng.integers(0, 50, size=(count, dim), dtype=np.uint8)
            q = rng.integers(0, 50, size=dim, dtype=np.uint8)
            if measure is SimilarityMeasure.COSINE:
                rows = rows + 1  # keep vectors nonzero
                q = q + 1
            got = knn(rows, labels, q, k, measure)
            want = naive_knn(rows.tolist(), labels.tolist(), q.tolist(), k, measure)
        assert got == want, f"case {case} ({measure})"


def test_knn_batch_matches_loop():
    rng = np.random.default_rng(12)
    rows = rng.integers(0, 256, size=(25, 8), dtype=np.uint8)
    labels = rng.integers(0, 3, size=25)
    queries = rng.integers(0, 256, size=(10, 8), dtype=np.uint8)
    batch = knn_batch(rows, labels, queries, 3, SimilarityMeasure.EUCLIDEAN)
    for i, q in enumerate(queries):
        assert batch[i] == knn(rows, labels, q, 3, SimilarityMeasure.EUCLIDEAN)


# -- transposition ------------------------------------------------------------------


def scatter_partition(truth: Partition, perms, class_members) -> Partition:
    """Build the protected-side partition: the record at in-class position i
    lands at index members[perm.apply(i)]."""
    idx, asg = [], []
    for cls, members in class_members.items():
        members = np.asarray(members)
        perm = perms[cls]
        for i, index_value in enumerate(members):
            prot_index = members[perm.apply(i)]
            idx.append(prot_index)
            asg.append(truth.cluster_of(int(index_value)))
    return Partition(np.array(idx), np.array(asg))


def test_transpose_round_trip():
    rng = np.random.default_rng(13)
    class_members = {0: np.array([0, 2, 4, 6, 8]), 1: np.array([1, 3, 5, 7, 9])}
    perms = {c: derive_permutation(KEY, c, 5) for c in (0, 1)}
    truth = Partition(np.arange(10), rng.integers(0, 3, 10))
    protected = scatter_partition(truth, perms, class_members)
    back = transpose_partition(protected, perms, class_members)
    assert back.as_dict() == truth.as_dict()
    assert rand_index(back, truth) == 1.0


def test_transpose_identity_permutations():
    from simsketch.sketch import IndexPermutation

    class_members = {0: np.array([10, 11, 12])}
    perms = {0: IndexPermutation(0, np.arange(3))}
    part = Partition(np.array([10, 11, 12]), np.array([0, 1, 0]))
    out = transpose_partition(part, perms, class_members)
    assert out.as_dict() == part.as_dict()


def test_transpose_validation():
    from simsketch.sketch import IndexPermutation

    part = Partition(np.array([0, 1, 2]), np.array([0, 0, 1]))
    good_perms = {0: IndexPermutation(0, np.arange(3))}
    with pytest.raises(ValueError):  # members do not cover the record set
        transpose_partition(part, good_perms, {0: np.array([0, 1])})
    with pytest.raises(ValueError):  # members not ascending
        transpose_partition(part, good_perms, {0: np.array([2, 1, 0])})
    with pytest.raises(ValueError):  # wrong permutation length
        transpose_partition(
            part, {0: IndexPermutation(0, np.arange(2))}, {0: np.array([0, 1, 2])}
        )


def test_transpose_is_rand_index_invariant_under_keyed_scatter():
    """Clustering quality is unchanged once the transposition is applied."""
    rng = np.random.default_rng(14)
    members = {c: np.flatnonzero(np.arange(40) % 3 == c) for c in range(3)}
    perms = {c: derive_permutation(KEY, c, len(m)) for c, m in members.items()}
    truth = Partition(np.arange(40), rng.integers(0, 4, 40))
    protected = scatter_partition(truth, perms, members)
    # before transposition the scattered labels disagree with the truth
    back = transpose_partition(protected, perms, members)
    assert rand_index(back, truth) == 1.0
