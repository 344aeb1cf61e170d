"""Central-node enhancer and relation aggregator.

Within a relation, a node's embedding is the convex combination

    h_{v,r} = p * h_v + (1 - p) * mean(h_u for u in kept neighbors)

and across relations the layer output is
``ReLU(W [h_v, h_{v,1}, ..., h_{v,R}] + b)``.

Neighbor selection is discrete and therefore sits outside the gradient: a
:class:`FilterPlan` fixes the kept sets and central weights for every
(layer, relation), and :func:`forward` / :func:`backward` treat it as a
constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError
from .graph import Adjacency, MultiRelationGraph
from .numeric import (
    Parameter,
    as_matrix,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
    uniform_init,
)
from .similarity import filter_adjacency, filter_neighbors


@dataclass
class LayerParams:
    W: Parameter
    b: Parameter
    layer: int = 1

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int, num_relations: int, layer: int = 1):
        fan_in = d_in * (num_relations + 1)
        return cls(
            Parameter(uniform_init(rng, d_out, fan_in), name=f"layer{layer}.W"),
            Parameter(rng.uniform(-1.0, 1.0, size=(1, d_out)) / np.sqrt(fan_in), name=f"layer{layer}.b"),
            layer,
        )

    @property
    def d_out(self) -> int:
        return self.W.value.shape[0]

    def d_in(self, num_relations: int) -> int:
        return self.W.value.shape[1] // (num_relations + 1)

    def parameters(self) -> list[Parameter]:
        return [self.W, self.b]


# -- per-node reference forms ---------------------------------------------------


def intra_relation_aggregate(graph, scorer, controller, v, r, prev_embeddings, filter_p=None) -> np.ndarray:
    """``h_{v,r}`` for one node. ``filter_p`` overrides the keep fraction (defaults to the controller's p)."""
    h = as_matrix(prev_embeddings)
    p = controller.p
    kept = filter_neighbors(graph, scorer, v, r, p if filter_p is None else filter_p, embeddings=h)
    if not kept:
        return h[v].copy()
    return p * h[v] + (1.0 - p) * h[kept].mean(axis=0)


def inter_relation_aggregate(layer: LayerParams, h_prev_v, per_relation_rows) -> np.ndarray:
    h_prev_v = np.asarray(h_prev_v, dtype=np.float64).reshape(-1)
    rows = [np.asarray(x, dtype=np.float64).reshape(-1) for x in per_relation_rows]
    n_rel = layer.W.value.shape[1] // h_prev_v.size - 1
    if len(rows) != n_rel or any(x.size != h_prev_v.size for x in rows):
        raise DimensionError(
            f"layer expects {n_rel} relation rows of width {h_prev_v.size}, got "
            f"{[x.size for x in rows]}"
        )
    z, _ = linear_forward(layer.W, layer.b, np.concatenate([h_prev_v] + rows)[None, :])
    return relu(z)[0]


# -- filter plans ------------------------------------------------------------------


@dataclass
class RelationPlan:
    kept: Adjacency
    kept_distances: np.ndarray
    center: np.ndarray  # per-node weight on the node itself
    matrix: sp.csr_matrix  # n × n aggregation operator


@dataclass
class FilterPlan:
    """Kept neighbors and aggregation operators for every (layer, relation)."""

    layers: list[list[RelationPlan]]
    inputs: list[np.ndarray]  # full-graph h^(l-1) used for scoring at each layer


def aggregation_matrix(kept: Adjacency, center: np.ndarray) -> sp.csr_matrix:
    """Row ``v``: ``center[v]`` on ``v`` and ``(1 - center[v]) / |C_v|`` on each kept neighbor.

    Rows with no kept neighbors are the identity.
    """
    n = kept.num_nodes
    deg = kept.degrees
    self_w = np.where(deg > 0, center, 1.0)
    nb_w = np.repeat((1.0 - center) / np.maximum(deg, 1), deg)
    rows = np.concatenate([np.arange(n), np.repeat(np.arange(n), deg)])
    cols = np.concatenate([np.arange(n), kept.indices])
    vals = np.concatenate([self_w, nb_w])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def plan_layer(graph, scorer, controllers, h_prev, use_filter=True, use_enhancer=True) -> list[RelationPlan]:
    plans = []
    for r, adj in enumerate(graph.relations):
        p = controllers[r].p
        scores = scorer.scores(r, h_prev)
        kept, dist = filter_adjacency(adj, scores, p if use_filter else 1.0)
        if use_enhancer:
            center = np.full(graph.num_nodes, p)
        else:
            center = 1.0 / (kept.degrees + 1.0)
        plans.append(RelationPlan(kept, dist, center, aggregation_matrix(kept, center)))
    return plans


def plan_filters(graph, scorers, controllers, layers, use_filter=True, use_enhancer=True) -> FilterPlan:
    """Score every node, filter every neighborhood, and build aggregation operators.

    Deeper layers are scored on full-graph embeddings from the layers below.
    """
    h = graph.features
    plans, inputs = [], []
    for l, layer in enumerate(layers):
        lp = plan_layer(graph, scorers[l], controllers[l], h, use_filter, use_enhancer)
        plans.append(lp)
        inputs.append(h)
        if l + 1 < len(layers):
            parts = [h] + [rp.matrix @ h for rp in lp]
            z, _ = linear_forward(layer.W, layer.b, np.hstack(parts))
            h = relu(z)
    return FilterPlan(plans, inputs)


# -- batched forward/backward ---------------------------------------------------------


@dataclass
class ForwardCache:
    batch: np.ndarray
    frontiers: list[np.ndarray]  # frontiers[l] = nodes whose h^(l) is computed
    embeddings: list[np.ndarray]  # full-size h^(l); rows outside frontiers[l] are zero
    ops: list[list[sp.csr_matrix]]
    concat: list[np.ndarray]
    pre_act: list[np.ndarray]


def frontiers_for(plan: FilterPlan, batch: np.ndarray) -> list[np.ndarray]:
    L = len(plan.layers)
    fr = [None] * (L + 1)
    fr[L] = np.unique(batch)
    for l in range(L, 0, -1):
        parts = [fr[l]] + [rp.matrix[fr[l]].indices for rp in plan.layers[l - 1]]
        fr[l - 1] = np.unique(np.concatenate(parts))
    return fr


def forward(graph: MultiRelationGraph, plan: FilterPlan, layers: list[LayerParams], batch) -> tuple[np.ndarray, ForwardCache]:
    """``h^(L)`` for ``batch`` (rows in batch order), computing only the needed frontier."""
    batch = np.asarray(batch, dtype=np.int64).reshape(-1)
    n = graph.num_nodes
    if batch.size and (batch.min() < 0 or batch.max() >= n):
        raise IndexError(f"batch contains nodes outside [0, {n})")
    fr = frontiers_for(plan, batch)
    h = np.zeros_like(graph.features)
    h[fr[0]] = graph.features[fr[0]]
    embeddings, ops, concat, pre_act = [h], [], [], []
    for l, layer in enumerate(layers):
        rows = fr[l + 1]
        mats = [rp.matrix[rows] for rp in plan.layers[l]]
        x = np.hstack([h[rows]] + [m @ h for m in mats])
        z, _ = linear_forward(layer.W, layer.b, x)
        h = np.zeros((n, layer.d_out))
        h[rows] = relu(z)
        embeddings.append(h)
        ops.append(mats)
        concat.append(x)
        pre_act.append(z)
    cache = ForwardCache(batch, fr, embeddings, ops, concat, pre_act)
    return h[batch], cache


def backward(layers: list[LayerParams], cache: ForwardCache, grad_out: np.ndarray, extra: dict | None = None) -> np.ndarray:
    """Accumulate parameter gradients from d loss / d h^(L)[batch].

    ``extra`` maps a level ``l`` to an additional full-size gradient on
    ``h^(l)`` (used by similarity losses on deeper-layer inputs). Returns the
    gradient w.r.t. the raw features.
    """
    extra = extra or {}
    L = len(layers)
    g = np.zeros_like(cache.embeddings[L])
    np.add.at(g, cache.batch, grad_out)
    for l in range(L - 1, -1, -1):
        if l + 1 in extra:
            g = g + extra[l + 1]
        layer = layers[l]
        rows = cache.frontiers[l + 1]
        gz = relu_backward(cache.pre_act[l], g[rows])
        gx = linear_backward(layer.W, layer.b, cache.concat[l], gz)
        d = cache.embeddings[l].shape[1]
        g_prev = np.zeros_like(cache.embeddings[l])
        g_prev[rows] += gx[:, :d]
        for r, m in enumerate(cache.ops[l]):
            g_prev += m.T @ gx[:, d * (r + 1): d * (r + 2)]
        g = g_prev
    if 0 in extra:
        g = g + extra[0]
    return g
