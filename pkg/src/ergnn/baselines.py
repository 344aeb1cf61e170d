"""Single-relation baselines run on the union of all relations.

Both models stack two layers of the form ``ReLU(W [A_1 H, ..., A_k H] + b)``
with fixed propagation operators ``A_i`` and finish with the same
linear-sigmoid head as ER-GNN:

* GCN: one operator, the symmetric-normalized adjacency with self loops.
* Mean GraphSAGE: the identity and the (unfiltered) neighbor mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .graph import Adjacency, MultiRelationGraph
from .metrics import Metrics, compute_metrics
from .numeric import (
    Adam,
    Parameter,
    bce_with_logits,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
    sigmoid,
    uniform_init,
)
from .trainer import TrainConfig


def adjacency_matrix(adj: Adjacency) -> sp.csr_matrix:
    n = adj.num_nodes
    data = np.ones(adj.indices.size)
    return sp.csr_matrix((data, adj.indices, adj.indptr), shape=(n, n))


def gcn_normalized_adjacency(adj: Adjacency) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` where ``D`` is the degree matrix of ``A + I``."""
    a = adjacency_matrix(adj) + sp.identity(adj.num_nodes, format="csr")
    d = np.asarray(a.sum(axis=1)).reshape(-1)
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(d))
    return (d_inv_sqrt @ a @ d_inv_sqrt).tocsr()


def mean_neighbor_operator(adj: Adjacency) -> sp.csr_matrix:
    """Row-normalized adjacency; isolated nodes get an all-zero row."""
    deg = adj.degrees
    data = np.repeat(1.0 / np.maximum(deg, 1), deg)
    n = adj.num_nodes
    return sp.csr_matrix((data, adj.indices, adj.indptr), shape=(n, n))


@dataclass
class PropagationModel:
    ops: list[sp.csr_matrix]
    weights: list[Parameter]
    biases: list[Parameter]
    head_W: Parameter
    head_b: Parameter

    @classmethod
    def init(cls, ops, d_in: int, d_hidden: int, n_layers: int, rng: np.random.Generator):
        weights, biases = [], []
        d = d_in
        k = len(ops)
        for l in range(n_layers):
            fan_in = d * k
            weights.append(Parameter(uniform_init(rng, d_hidden, fan_in), name=f"layer{l + 1}.W"))
            biases.append(Parameter(rng.uniform(-1, 1, (1, d_hidden)) / np.sqrt(fan_in), name=f"layer{l + 1}.b"))
            d = d_hidden
        head_W = Parameter(uniform_init(rng, 1, d_hidden), name="head.W")
        head_b = Parameter(rng.uniform(-1, 1, (1, 1)) / np.sqrt(d_hidden), name="head.b")
        return cls(list(ops), weights, biases, head_W, head_b)

    def parameters(self) -> list[Parameter]:
        return [*self.weights, *self.biases, self.head_W, self.head_b]

    def embed(self, x: np.ndarray):
        h = x
        cache = []
        for W, b in zip(self.weights, self.biases):
            inp = np.hstack([op @ h for op in self.ops])
            z, _ = linear_forward(W, b, inp)
            cache.append((inp, z, h.shape[1]))
            h = relu(z)
        return h, cache

    def backward(self, cache, grad_h: np.ndarray) -> None:
        g = grad_h
        for (inp, z, d), W, b in zip(reversed(cache), reversed(self.weights), reversed(self.biases)):
            gz = relu_backward(z, g)
            gx = linear_backward(W, b, inp, gz)
            g = sum(op.T @ gx[:, i * d:(i + 1) * d] for i, op in enumerate(self.ops))

    def loss(self, x: np.ndarray, labels: np.ndarray, batch: np.ndarray, backward: bool = True) -> float:
        h, cache = self.embed(x)
        z, hin = linear_forward(self.head_W, self.head_b, h[batch])
        loss, dz = bce_with_logits(z, labels[batch].astype(np.float64).reshape(-1, 1))
        if backward:
            self.head_W.grad += dz.T @ hin
            self.head_b.grad += dz.sum(axis=0, keepdims=True)
            g = np.zeros_like(h)
            np.add.at(g, batch, dz @ self.head_W.value)
            self.backward(cache, g)
        return loss

    def predict_proba(self, x: np.ndarray, nodes=None) -> np.ndarray:
        h, _ = self.embed(x)
        if nodes is not None:
            h = h[np.asarray(nodes)]
        z, _ = linear_forward(self.head_W, self.head_b, h)
        return sigmoid(z)[:, 0]


def train_propagation(graph: MultiRelationGraph, ops, config: TrainConfig, n_layers: int = 2) -> PropagationModel:
    """Mini-batch Adam over training nodes with the same epoch/lr/batch/seed protocol as ER-GNN."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    model = PropagationModel.init(ops, graph.feature_dim, config.d_out, n_layers, rng)
    opt = Adam(model.parameters(), lr=config.learning_rate)
    train_nodes = graph.train_nodes()
    if train_nodes.size == 0:
        raise ValidationError("no training nodes")
    for _ in range(config.epochs):
        order = rng.permutation(train_nodes)
        for start in range(0, order.size, config.batch_size):
            opt.zero_grad()
            model.loss(graph.features, graph.labels, order[start:start + config.batch_size])
            opt.step()
    return model


def gcn_model(graph: MultiRelationGraph, config: TrainConfig) -> PropagationModel:
    return train_propagation(graph, [gcn_normalized_adjacency(graph.union_adjacency())], config)


def mean_sage_model(graph: MultiRelationGraph, config: TrainConfig) -> PropagationModel:
    union = graph.union_adjacency()
    ops = [sp.identity(graph.num_nodes, format="csr"), mean_neighbor_operator(union)]
    return train_propagation(graph, ops, config)


def _test_metrics(model: PropagationModel, graph: MultiRelationGraph) -> Metrics:
    nodes = graph.test_nodes()
    return compute_metrics(model.predict_proba(graph.features, nodes), graph.labels[nodes])


def run_gcn(graph: MultiRelationGraph, config: TrainConfig) -> Metrics:
    return _test_metrics(gcn_model(graph, config), graph)


def run_mean_sage(graph: MultiRelationGraph, config: TrainConfig) -> Metrics:
    return _test_metrics(mean_sage_model(graph, config), graph)
