import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergnn.errors import DimensionError, ValidationError
from ergnn.graph import Adjacency
from ergnn.numeric import finite_diff_grad
from ergnn.similarity import (
    SimilarityScorer,
    distance,
    filter_adjacency,
    filter_neighbors,
    similarity_loss,
    similarity_score,
)

from .conftest import make_graph


def scorer_with(w, b=0.0, num_relations=1):
    s = SimilarityScorer(num_relations, len(w))
    for r in range(num_relations):
        s.weights[r].value[0] = w
        s.biases[r].value[0, 0] = b
    return s


def logit(p):
    return math.log(p / (1 - p))


def test_zero_scorer_gives_half():
    s = SimilarityScorer(2, 2)
    assert similarity_score(s, 1, [3.0, -7.0]) == 0.5


def test_orthogonal_feature_ignored():
    assert similarity_score(scorer_with([1.0, 0.0]), 0, [0.0, 5.0]) == 0.5


def test_score_matches_scalar_loop():
    rng = np.random.default_rng(0)
    s = scorer_with(rng.normal(size=3).tolist(), float(rng.normal()))
    for _ in range(20):
        x = rng.normal(size=3)
        z = s.biases[0].value[0, 0]
        for wi, xi in zip(s.weights[0].value[0], x):
            z += wi * xi
        assert abs(similarity_score(s, 0, x) - 1 / (1 + math.exp(-z))) < 1e-12


def test_score_dimension_mismatch():
    with pytest.raises(DimensionError):
        similarity_score(SimilarityScorer(1, 2), 0, [1.0, 2.0, 3.0])


def test_distance_examples():
    s = scorer_with([1.0])
    assert distance(s, 0, [0.4], [0.4]) == 0
    assert distance(s, 0, [logit(0.9)], [logit(0.3)]) == pytest.approx(0.6, abs=1e-12)


def test_distance_symmetric():
    rng = np.random.default_rng(1)
    s = scorer_with(rng.normal(size=2).tolist(), 0.3)
    for _ in range(100):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert distance(s, 0, a, b) == distance(s, 0, b, a)
        assert 0 <= distance(s, 0, a, b) <= 1


# -- filtering -----------------------------------------------------------------


def star_graph(center_score, nbr_scores):
    """Node 0 linked to nodes 1..k; features are logits so scores come out as given."""
    feats = [[logit(center_score)]] + [[logit(s)] for s in nbr_scores]
    k = len(nbr_scores)
    labels = [1] + [0] * k
    return make_graph(feats, labels, [[(0, i) for i in range(1, k + 1)]]), scorer_with([1.0])


def test_filter_keep_all():
    g, s = star_graph(0.5, [0.9, 0.1, 0.6])
    assert filter_neighbors(g, s, 0, 0, 1.0) == [1, 2, 3]


def test_filter_half_of_four():
    # distances to center 0.5: 0.4, 0.1, 0.3, 0.2
    g, s = star_graph(0.5, [0.9, 0.6, 0.8, 0.7])
    assert filter_neighbors(g, s, 0, 0, 0.5) == [2, 4]


def test_filter_ties_by_node_id():
    g, s = star_graph(0.5, [0.7, 0.7, 0.7])
    assert filter_neighbors(g, s, 0, 0, 0.34) == [1, 2]


def test_filter_isolated_and_bad_p():
    g = make_graph([[0.0], [1.0]], [1, 0], [[]])
    s = scorer_with([1.0])
    assert filter_neighbors(g, s, 0, 0, 0.5) == []
    with pytest.raises(ValidationError):
        filter_neighbors(g, s, 0, 0, 0.0)


def _oracle(nbrs, dist, p):
    k = math.ceil(Decimal(str(p)) * len(nbrs))
    return [u for _, u in sorted(zip(dist, nbrs))[:k]]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]))
def test_filter_adjacency_matches_oracle(seed, p):
    rng = np.random.default_rng(seed)
    n = 30
    edges = rng.integers(0, n, size=(90, 2))
    adj = Adjacency.from_edges(n, edges[:, 0], edges[:, 1])
    # coarse scores force plenty of distance ties
    scores = rng.integers(0, 5, size=n) / 4.0
    kept, dist = filter_adjacency(adj, scores, p)
    for v in range(n):
        nbrs = adj.neighbors(v).tolist()
        d = [abs(scores[u] - scores[v]) for u in nbrs]
        assert kept.neighbors(v).tolist() == sorted(_oracle(nbrs, d, p))
        np.testing.assert_array_equal(
            dist[kept.indptr[v]:kept.indptr[v + 1]], [abs(scores[u] - scores[v]) for u in kept.neighbors(v)]
        )


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_filter_size_and_monotonicity(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 25))
    g, s = star_graph(0.5, rng.uniform(0.05, 0.95, size=k).round(2).tolist())
    prev = set()
    for p in np.linspace(0.05, 1.0, 20):
        cur = filter_neighbors(g, s, 0, 0, float(p))
        assert len(cur) == math.ceil(round(p * k, 9))
        assert prev <= set(cur)
        prev = set(cur)
    assert filter_neighbors(g, s, 0, 0, 1.0) == g.neighbors(0, 0)


# -- L_D ----------------------------------------------------------------------------


def test_similarity_loss_uninformative(six_node_graph):
    s = SimilarityScorer(2, 2)
    assert similarity_loss(s, six_node_graph, [0, 1]) == pytest.approx(2 * 2 * math.log(2), abs=1e-12)


def test_similarity_loss_perfect_scorer():
    g = make_graph([[-1.0], [1.0]], [0, 1], [[(0, 1)]])
    s = scorer_with([60.0])
    assert similarity_loss(s, g, [0, 1]) < 1e-6


def test_similarity_loss_matches_loop(six_node_graph):
    rng = np.random.default_rng(2)
    s = SimilarityScorer(2, 2)
    for p in s.parameters():
        p.value[...] = rng.normal(size=p.shape)
    batch = [0, 1, 3, 5]
    expected = 0.0
    for r in range(2):
        for v in batch:
            z = float(six_node_graph.features[v] @ s.weights[r].value[0] + s.biases[r].value[0, 0])
            q = 1 / (1 + math.exp(-z))
            y = six_node_graph.labels[v]
            expected -= y * math.log(q) + (1 - y) * math.log(1 - q)
    assert abs(similarity_loss(s, six_node_graph, batch) - expected) < 1e-10


def test_similarity_loss_gradient(six_node_graph):
    rng = np.random.default_rng(3)
    s = SimilarityScorer(2, 2)
    for p in s.parameters():
        p.value[...] = rng.normal(size=p.shape)
    batch = [0, 1, 2, 3, 4, 5]
    similarity_loss(s, six_node_graph, batch, backward=True)
    for p in s.parameters():
        fd = finite_diff_grad(lambda _: similarity_loss(s, six_node_graph, batch), p)
        assert np.linalg.norm(p.grad - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-4


def test_similarity_loss_rejects_non_training_nodes():
    g = make_graph([[0.0], [1.0], [2.0]], [0, 1, 0], [[]], train=[True, True, False], test=[False, False, True])
    with pytest.raises(ValidationError):
        similarity_loss(SimilarityScorer(1, 1), g, [0, 2])
    with pytest.raises(ValidationError):
        similarity_loss(SimilarityScorer(1, 1), g, [])
