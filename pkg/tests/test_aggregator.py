import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergnn.aggregator import (
    LayerParams,
    aggregation_matrix,
    forward,
    inter_relation_aggregate,
    intra_relation_aggregate,
    plan_filters,
)
from ergnn.controller import RelationController
from ergnn.errors import DimensionError
from ergnn.numeric import Parameter, finite_diff_grad
from ergnn.similarity import SimilarityScorer, filter_neighbors
from ergnn.trainer import ERGNNModel, TrainConfig, total_loss

from .conftest import make_graph


def fixed_layer(W, b=None):
    W = np.asarray(W, dtype=np.float64)
    b = np.zeros((1, W.shape[0])) if b is None else np.asarray(b, dtype=np.float64).reshape(1, -1)
    return LayerParams(Parameter(W), Parameter(b))


def random_scorer(rng, R, d):
    s = SimilarityScorer(R, d)
    for p in s.parameters():
        p.value[...] = rng.normal(size=p.shape)
    return s


# -- intra-relation ---------------------------------------------------------------


def test_convex_combination():
    g = make_graph([[1.0, 0.0], [0.0, 1.0]], [1, 0], [[(0, 1)]])
    out = intra_relation_aggregate(g, SimilarityScorer(1, 2), RelationController(p=0.6), 0, 0, g.features)
    np.testing.assert_allclose(out, [0.6, 0.4], atol=1e-15)


def test_isolated_node_unchanged():
    g = make_graph([[1.0, 2.0], [0.0, 1.0]], [1, 0], [[]])
    for p in (0.1, 0.5, 1.0):
        out = intra_relation_aggregate(g, SimilarityScorer(1, 2), RelationController(p=p), 0, 0, g.features)
        np.testing.assert_array_equal(out, [1.0, 2.0])


def test_full_central_weight_ignores_neighbors():
    g = make_graph([[1.0, 2.0], [5.0, -3.0], [7.0, 7.0]], [1, 0, 0], [[(0, 1), (0, 2)]])
    out = intra_relation_aggregate(g, SimilarityScorer(1, 2), RelationController(p=1.0), 0, 0, g.features)
    np.testing.assert_array_equal(out, [1.0, 2.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.02, 1.0))
def test_central_preservation_bound(seed, p):
    rng = np.random.default_rng(seed)
    n = 12
    edges = rng.integers(0, n, size=(30, 2))
    g = make_graph(rng.normal(size=(n, 3)), [1] * 3 + [0] * 9, [edges])
    scorer = random_scorer(rng, 1, 3)
    ctl = RelationController(p=p)
    for v in range(n):
        out = intra_relation_aggregate(g, scorer, ctl, v, 0, g.features)
        kept = filter_neighbors(g, scorer, v, 0, p)
        h_v = g.features[v]
        if kept:
            bound = (1 - p) * np.linalg.norm(g.features[kept].mean(axis=0) - h_v)
            assert np.linalg.norm(out - h_v) <= bound + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.02, 1.0))
def test_coefficients_sum_to_one(seed, p):
    rng = np.random.default_rng(seed)
    n = 15
    edges = rng.integers(0, n, size=(40, 2))
    g = make_graph(np.zeros((n, 1)), [1] + [0] * (n - 1), [edges])
    m = aggregation_matrix(g.relations[0], np.full(n, p))
    np.testing.assert_allclose(np.asarray(m.sum(axis=1)).ravel(), 1.0, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_permutation_invariance(seed):
    # relabelling nodes only reorders neighbor lists; continuous scores avoid ties
    rng = np.random.default_rng(seed)
    n = 10
    feats = rng.normal(size=(n, 2))
    edges = rng.integers(0, n, size=(25, 2))
    labels = [1, 1] + [0] * (n - 2)
    perm = rng.permutation(n)
    g = make_graph(feats, labels, [edges])
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    h = make_graph(feats[perm], np.asarray(labels)[perm], [inv[edges]])
    scorer = random_scorer(rng, 1, 2)
    ctl = RelationController(p=0.5)
    for v in range(n):
        a = intra_relation_aggregate(g, scorer, ctl, v, 0, g.features)
        b = intra_relation_aggregate(h, scorer, ctl, int(inv[v]), 0, h.features)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


# -- inter-relation ----------------------------------------------------------------------


def test_identity_exposes_concatenation_order():
    out = inter_relation_aggregate(fixed_layer(np.eye(4)), [1.0, -1.0], [[0.5, 0.5]])
    np.testing.assert_array_equal(out, [1.0, 0.0, 0.5, 0.5])


def test_zero_weights_give_zero():
    out = inter_relation_aggregate(fixed_layer(np.zeros((3, 6))), [4.0, -2.0], [[1, 2], [3, 4]])
    np.testing.assert_array_equal(out, [0, 0, 0])


def test_inter_matches_loop():
    rng = np.random.default_rng(5)
    W, b = rng.normal(size=(4, 6)), rng.normal(size=4)
    h_prev, rows = rng.normal(size=2), rng.normal(size=(2, 2))
    out = inter_relation_aggregate(fixed_layer(W, b), h_prev, rows)
    cat = list(h_prev) + list(rows[0]) + list(rows[1])
    for j in range(4):
        acc = b[j]
        for k in range(6):
            acc += W[j, k] * cat[k]
        assert abs(out[j] - max(acc, 0.0)) < 1e-12


def test_wrong_relation_count():
    with pytest.raises(DimensionError):
        inter_relation_aggregate(fixed_layer(np.zeros((3, 6))), [1.0, 1.0], [[1.0, 1.0]])


# -- batched forward ------------------------------------------------------------------------


def _controllers(R, L=1, p=0.5):
    return [[RelationController(p=p) for _ in range(R)] for _ in range(L)]


def test_forward_isolated_node_identity_weights():
    g = make_graph([[0.7, -0.3]], [1], [[], []])
    layer = fixed_layer(np.eye(6))
    plan = plan_filters(g, [SimilarityScorer(2, 2)], _controllers(2), [layer])
    h, _ = forward(g, plan, [layer], [0])
    np.testing.assert_array_equal(h[0], [0.7, 0, 0.7, 0, 0.7, 0])


def test_forward_matches_per_node_reference(six_node_graph):
    rng = np.random.default_rng(6)
    g = six_node_graph
    scorer = random_scorer(rng, 2, 2)
    layer = LayerParams.init(rng, 2, 5, 2)
    ctls = [[RelationController(p=0.6), RelationController(p=0.3)]]
    plan = plan_filters(g, [scorer], ctls, [layer])
    h, _ = forward(g, plan, [layer], [3, 0, 5])
    for row, v in zip(h, [3, 0, 5]):
        rel = [intra_relation_aggregate(g, scorer, ctls[0][r], v, r, g.features) for r in range(2)]
        np.testing.assert_allclose(row, inter_relation_aggregate(layer, g.features[v], rel), atol=1e-13)


def test_forward_deterministic(six_node_graph):
    rng = np.random.default_rng(7)
    layers = [LayerParams.init(rng, 2, 4, 2, 1), LayerParams.init(rng, 4, 4, 2, 2)]
    scorers = [random_scorer(rng, 2, 2), random_scorer(rng, 2, 4)]
    plan = plan_filters(six_node_graph, scorers, _controllers(2, 2), layers)
    a, _ = forward(six_node_graph, plan, layers, [1, 2, 4])
    b, _ = forward(six_node_graph, plan, layers, [1, 2, 4])
    assert a.tobytes() == b.tobytes()


def test_forward_batch_matches_full_graph(six_node_graph):
    rng = np.random.default_rng(8)
    layers = [LayerParams.init(rng, 2, 4, 2, 1), LayerParams.init(rng, 4, 3, 2, 2)]
    scorers = [random_scorer(rng, 2, 2), random_scorer(rng, 2, 4)]
    plan = plan_filters(six_node_graph, scorers, _controllers(2, 2), layers)
    full, _ = forward(six_node_graph, plan, layers, np.arange(6))
    part, _ = forward(six_node_graph, plan, layers, [4])
    np.testing.assert_allclose(part[0], full[4], atol=1e-14)


def test_forward_out_of_range(six_node_graph):
    layer = LayerParams.init(np.random.default_rng(0), 2, 3, 2)
    plan = plan_filters(six_node_graph, [SimilarityScorer(2, 2)], _controllers(2), [layer])
    with pytest.raises(IndexError):
        forward(six_node_graph, plan, [layer], [6])


def test_relation_swap_with_column_blocks(six_node_graph):
    rng = np.random.default_rng(9)
    g = six_node_graph
    swapped = type(g)(g.features, g.labels, g.relations[::-1], g.relation_names[::-1],
                      g.train_mask, g.val_mask, g.test_mask)
    scorer = random_scorer(rng, 2, 2)
    scorer2 = SimilarityScorer(2, 2)
    for r in range(2):
        scorer2.weights[r].value[...] = scorer.weights[1 - r].value
        scorer2.biases[r].value[...] = scorer.biases[1 - r].value
    layer = LayerParams.init(rng, 2, 4, 2)
    W = layer.W.value
    layer2 = fixed_layer(np.hstack([W[:, 0:2], W[:, 4:6], W[:, 2:4]]), layer.b.value)
    a, _ = forward(g, plan_filters(g, [scorer], _controllers(2), [layer]), [layer], np.arange(6))
    b, _ = forward(swapped, plan_filters(swapped, [scorer2], _controllers(2), [layer2]), [layer2], np.arange(6))
    np.testing.assert_allclose(a, b, atol=1e-14)


# -- full-loss gradient ------------------------------------------------------------------------


@pytest.mark.parametrize("n_layers", [1, 2])
def test_full_loss_gradient(six_node_graph, n_layers):
    g = six_node_graph
    cfg = TrainConfig(layers=n_layers, d_out=4, seed=3)
    model = ERGNNModel.init(2, 2, cfg, np.random.default_rng(3))
    rng = np.random.default_rng(30)
    for s in model.scorers:
        for p in s.parameters():
            p.value[...] = rng.normal(size=p.shape)
    plan = model.plan(g)
    batch = np.arange(6)
    model.zero_grad()
    total_loss(model, g, plan, batch, lam=0.7)
    for p in model.parameters():
        fd = finite_diff_grad(lambda _: total_loss(model, g, plan, batch, 0.7, backward=False)[0], p)
        err = np.linalg.norm(p.grad - fd) / max(np.linalg.norm(p.grad), np.linalg.norm(fd), 1e-12)
        assert err < 1e-4, p.name
