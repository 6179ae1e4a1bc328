import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from intermlearn.core import ContractViolation
from intermlearn.learners import codec
from intermlearn.learners.features import FeatureSet, extract_features
from intermlearn.learners.kmeans import (
    KmModel,
    MinMaxBounds,
    km_activation,
    km_infer,
    km_learn_step,
    label_clusters,
    remap_rows,
)
from intermlearn.learners.knn import (
    ABNORMAL,
    NORMAL,
    KnnModel,
    feature_distance,
    knn_anomaly_score,
    knn_infer,
    knn_learn,
    member_scores,
    nearest_rank,
    pairwise_distances,
)

from oracles import features_reference, knn_score_all_pairs, member_scores_all_pairs, nearest_rank_sorted

F = FeatureSet
ALL = F.Mean | F.Std | F.Median | F.RMS | F.P2P | F.ZCR | F.AAV


def test_feature_examples():
    assert list(extract_features([1, 1, 1, 1], F.Mean | F.Std | F.P2P)) == [1, 0, 0]
    assert extract_features([0, 1, 0, 1], F.ZCR)[0] == 1.0
    got = extract_features([1, 2, 3], F.Mean | F.RMS | F.AAV)
    assert got == pytest.approx([2, math.sqrt(14 / 3), 1], abs=1e-12)
    with pytest.raises(ContractViolation):
        extract_features([1.0], F.Mean)


@given(arrays(float, st.integers(2, 64), elements=st.floats(-1e3, 1e3)))
def test_features_match_reference(x):
    got = extract_features(x, ALL)
    assert got == pytest.approx(features_reference(x), rel=1e-12, abs=1e-9)


def test_feature_set_parse():
    assert F.parse("mean, zcr") == F.Mean | F.ZCR
    assert F.parse("air").names() == ["Mean", "Std", "Median", "RMS", "P2P"]
    with pytest.raises(ValueError):
        F.parse("volume")


def test_distance():
    assert feature_distance([1, 2], [1, 2]) == 0
    assert feature_distance([0, 0], [3, 4]) == 5
    with pytest.raises(ContractViolation):
        feature_distance([0], [0, 0])


def model_of(rows, k, **kw):
    m = KnnModel.empty(np.asarray(rows[0], dtype=float).size, k=k, capacity=max(len(rows) + 1, k + 1), **kw)
    for r in rows:
        m = knn_learn(m, np.atleast_1d(r))
    return m


def test_anomaly_score_examples():
    m = KnnModel(np.array([[1.0], [1.0], [1.0]]), k=2)
    assert knn_anomaly_score([1.0], m) == 0
    m = KnnModel(np.array([[0.0], [1.0], [2.0]]), k=2)
    assert knn_anomaly_score([0.0], m, member_index=0) == 3
    assert knn_anomaly_score([1.0], KnnModel(np.array([[0.0], [2.0]]), k=2)) == 2
    with pytest.raises(ContractViolation):
        knn_anomaly_score([1.0], KnnModel(np.array([[0.0]]), k=2))


def test_threshold_examples():
    assert nearest_rank(list(range(1, 11)), 90) == 9
    m = model_of([[0.0], [1.0], [0.0], [1.0]], k=2)
    assert m.threshold == 1.0  # every member's two nearest sum to 1
    with pytest.raises(ContractViolation):
        nearest_rank([], 90)


def test_infer_examples():
    rng = np.random.default_rng(0)
    m = model_of([[v] for v in rng.uniform(-0.1, 0.1, 20)], k=3)
    assert knn_infer(m, [100.0]) == ABNORMAL
    dup = model_of([[0.0], [0.0], [0.0], [1.0], [3.0]], k=2)
    assert dup.threshold > 0 and knn_infer(dup, [0.0]) == NORMAL
    with pytest.raises(ContractViolation):
        knn_infer(KnnModel.empty(1), [0.0])


def test_score_equal_to_threshold_is_normal():
    m = KnnModel(np.array([[0.0], [1.0], [2.0]]), k=1, threshold=1.0)
    assert knn_anomaly_score([3.0], m) == 1.0 and knn_infer(m, [3.0]) == NORMAL


def test_threshold_needs_more_than_k():
    m = KnnModel.empty(1, k=3, capacity=10)
    for v in (0.0, 1.0, 2.0):
        m = knn_learn(m, [v])
    assert not m.ready
    assert knn_learn(m, [3.0]).ready


def test_capacity_evicts_oldest():
    m = model_of([[float(v)] for v in range(5)], k=1)
    m = KnnModel(m.examples, k=1, capacity=3)
    m = knn_learn(m, [9.0])
    assert m.examples.ravel().tolist() == [3.0, 4.0, 9.0]


ex = arrays(float, st.tuples(st.integers(4, 12), st.integers(1, 4)), elements=st.floats(-100, 100))


@given(ex, st.integers(1, 3))
def test_scores_match_all_pairs(E, k):
    got = member_scores(pairwise_distances(E), k)
    assert got == pytest.approx(member_scores_all_pairs(E.tolist(), k), rel=1e-12, abs=1e-12)
    q = E[0] + 0.5
    m = KnnModel(E, k=k)
    assert knn_anomaly_score(q, m) == pytest.approx(knn_score_all_pairs(q.tolist(), E.tolist(), k), abs=1e-12)


@given(ex, st.floats(1, 99), st.floats(1, 99))
def test_threshold_monotone_in_percentile(E, p1, p2):
    s = member_scores(pairwise_distances(E), 2)
    lo, hi = sorted((p1, p2))
    assert nearest_rank(s, lo) <= nearest_rank(s, hi)
    assert nearest_rank(s, hi) == nearest_rank_sorted(s.tolist(), hi)


@given(ex, st.floats(0.1, 10))
def test_scale_homogeneity(E, c):
    m = KnnModel(E, k=2)
    q = E.mean(axis=0) + 1.0
    assert knn_anomaly_score(q * c, KnnModel(E * c, k=2)) == pytest.approx(c * knn_anomaly_score(q, m), rel=1e-9)
    base = model_of(E.tolist(), k=2)
    scaled = model_of((E * c).tolist(), k=2)
    assert knn_infer(base, q) == knn_infer(scaled, q * c) or math.isclose(
        knn_anomaly_score(q, base), base.threshold, rel_tol=1e-9)


@given(ex)
def test_duplicate_of_low_member_never_raises_threshold(E):
    """A copy of a member scoring at or below the threshold, inserted without eviction."""
    m = model_of(E.tolist(), k=2)
    scores = member_scores(pairwise_distances(m.examples), 2)
    i = int(np.argmin(scores))
    m2 = knn_learn(KnnModel(m.examples, k=2, capacity=len(E) + 5, threshold=m.threshold), m.examples[i])
    assert m2.threshold <= m.threshold + 1e-12


def test_knn_bytes_round_trip():
    m = model_of([[0.0], [1.0], [2.0], [5.0]], k=2)
    assert KnnModel.from_bytes(m.to_bytes()) == m
    assert KnnModel.from_bytes(KnnModel.empty(3).to_bytes()) == KnnModel.empty(3)


def test_codec():
    a, b = np.arange(6.0).reshape(2, 3), np.array([1, -2, 3])
    x, y = codec.unpack(codec.pack(a, b))
    assert np.array_equal(x, a) and np.array_equal(y, b) and y.dtype == np.int64
    with pytest.raises(codec.CodecError):
        codec.unpack(b"\x09garbage")


def test_activation_examples():
    assert list(km_activation(KmModel.zeros(2, 2), [3, 4])) == [0, 0]
    assert list(km_activation(KmModel(np.eye(2)), [3, 4])) == [3, 4]
    assert list(km_activation(KmModel(np.array([[1.0, 1.0], [2.0, 0.0]])), [1, 2])) == [3, 2]
    with pytest.raises(ContractViolation):
        km_activation(KmModel.zeros(2, 2), [1, 2, 3])


def test_learn_step_examples():
    m = km_learn_step(KmModel.zeros(2, 2, eta=1.0), [1.0, 1.0])
    assert m.weights[0].tolist() == [1.0, 1.0]
    m = km_learn_step(KmModel.zeros(2, 2, eta=0.5), [1.0, 1.0])
    assert m.weights.tolist() == [[0.5, 0.5], [0.0, 0.0]]
    m0 = KmModel(np.array([[1.0, 2.0], [3.0, 4.0]]), eta=0.0)
    assert np.array_equal(km_learn_step(m0, [5.0, 5.0]).weights, m0.weights)


@given(arrays(float, (2, 3), elements=st.floats(-5, 5)), arrays(float, 3, elements=st.floats(-5, 5)),
       st.floats(0.01, 1.0))
def test_winner_moves_closer(W, x, eta):
    m = KmModel(W, eta=eta)
    j = int(np.argmax(W @ x))
    d0 = np.linalg.norm(W[j] - x)
    d1 = np.linalg.norm(km_learn_step(m, x).weights[j] - x)
    assert d1 == pytest.approx((1 - eta) * d0, abs=1e-9)


def test_infer_examples_kmeans():
    assert km_infer(KmModel(np.eye(2)), [0, 5]) == (2, None)
    assert km_infer(KmModel(np.eye(2)), [0, 0])[0] == 1


def test_label_clusters_examples():
    m = KmModel(np.eye(2))
    assert label_clusters(m, [([1, 0], 0), ([0, 1], 1)]).labels == (0, 1)
    m2 = label_clusters(m, [([1, 0], 0)] * 3 + [([1, 0], 1)])
    assert m2.labels[0] == 0
    tie = label_clusters(m, [([1, 0], 1), ([1, 0], 0)])
    assert tie.labels[0] == 0
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert label_clusters(m, []) == m
        assert w


def test_kmeans_separates_gentle_from_abrupt():
    rng = np.random.default_rng(3)
    b = MinMaxBounds.empty(2)
    m = KmModel.zeros(2, 2, eta=0.1)
    data = []
    for i in range(400):
        lab = i % 2
        amp = rng.uniform(8, 12) if lab else rng.uniform(0.8, 1.2)
        x = np.array([amp, amp * rng.uniform(0.9, 1.1)])
        data.append((x, lab))
        nb = b.update(x)
        m, b = remap_rows(m, b, nb), nb
        m = km_learn_step(m, b.normalize(x))
    m = label_clusters(m, [(b.normalize(x), y) for x, y in data[:20]])
    assert km_infer(m, b.normalize(np.array([1.0, 1.0])))[1] == 0
    assert km_infer(m, b.normalize(np.array([10.0, 10.0])))[1] == 1


def test_km_bytes_round_trip():
    m = KmModel(np.array([[0.1, 0.2]]), eta=0.3, counts=(4,), labels=(1,), harmonic=True)
    assert KmModel.from_bytes(m.to_bytes()) == m
    b = MinMaxBounds.empty(2).update([1, 2]).update([3, 0])
    assert MinMaxBounds.from_bytes(b.to_bytes()).to_bytes() == b.to_bytes()


def test_bounds_normalize_round_trip():
    b = MinMaxBounds.empty(2).update([0, 5]).update([10, 5])
    assert b.normalize([5, 5]).tolist() == [0.0, 0.0]
    assert b.denormalize(b.normalize([2.5, 5]))[0] == pytest.approx(2.5)
    assert b.informative and not MinMaxBounds.empty(2).update([1, 1]).informative
