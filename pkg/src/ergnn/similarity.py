"""Label-aware neighbor noise filter.

Each relation gets a one-layer scorer ``sigmoid(w · x + b)`` trained to
predict the fraud label. Two nodes are close under relation ``r`` when their
scores are close, and a node keeps the ``ceil(p * degree)`` closest
neighbors (ties by ascending node id).
"""

from __future__ import annotations


import numpy as np

from .errors import DimensionError, ValidationError
from .graph import Adjacency, MultiRelationGraph
from .numeric import Parameter, as_matrix, bce_with_logits, sigmoid


class SimilarityScorer:
    """The per-relation scorers of one layer."""

    def __init__(self, num_relations: int, input_dim: int, layer: int = 1):
        self.layer = layer
        self.input_dim = input_dim
        # zero init: every score is 0.5 until trained
        self.weights = [Parameter(np.zeros((1, input_dim)), name=f"scorer{layer}.w{r}")
                        for r in range(num_relations)]
        self.biases = [Parameter(np.zeros((1, 1)), name=f"scorer{layer}.b{r}")
                       for r in range(num_relations)]

    @property
    def num_relations(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[Parameter]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def logits(self, r: int, x: np.ndarray) -> np.ndarray:
        x = as_matrix(x)
        if x.shape[1] != self.input_dim:
            raise DimensionError(f"scorer expects {self.input_dim} inputs, got shape {x.shape}")
        return (x @ self.weights[r].value.T + self.biases[r].value)[:, 0]

    def scores(self, r: int, x: np.ndarray) -> np.ndarray:
        """Fraud-propensity score of every row of ``x`` under relation ``r``."""
        return sigmoid(self.logits(r, x))


def similarity_score(scorer: SimilarityScorer, r: int, x_v) -> float:
    return float(scorer.scores(r, as_matrix(x_v))[0])


def distance(scorer: SimilarityScorer, r: int, x_v, x_u) -> float:
    return abs(similarity_score(scorer, r, x_v) - similarity_score(scorer, r, x_u))


def keep_count(p: float, degree):
    """``ceil(p * degree)``, with float noise below 1e-9 ignored (so 0.3 * 10 keeps 3)."""
    return np.ceil(np.round(np.asarray(p, dtype=np.float64) * degree, 9)).astype(np.int64)


def filter_neighbors(
    graph: MultiRelationGraph,
    scorer: SimilarityScorer,
    v: int,
    r: int,
    p: float,
    embeddings: np.ndarray | None = None,
) -> list[int]:
    """The ``ceil(p * |N_r(v)|)`` neighbors of ``v`` closest to it under relation ``r``.

    Selection uses the (distance, node id) key; the result is returned in
    ascending id order so that ``p = 1`` reproduces the neighbor list.
    """
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"p must be in (0, 1], got {p}")
    x = graph.features if embeddings is None else embeddings
    nbrs = np.asarray(graph.neighbors(v, r), dtype=np.int64)
    if nbrs.size == 0:
        return []
    s = scorer.scores(r, x[np.concatenate([[v], nbrs])])
    dist = np.abs(s[1:] - s[0])
    order = np.lexsort((nbrs, dist))
    return sorted(nbrs[order[: int(keep_count(p, nbrs.size))]].tolist())


def filter_adjacency(adj: Adjacency, scores: np.ndarray, p) -> tuple[Adjacency, np.ndarray]:
    """Apply top-p filtering to every node at once.

    ``p`` is a scalar or a per-node array. Returns the kept-neighbor
    adjacency (each row still sorted by node id) and the distances of the
    kept entries, aligned with its ``indices``.
    """
    n = adj.num_nodes
    deg = adj.degrees
    rows = np.repeat(np.arange(n), deg)
    cols = adj.indices
    dist = np.abs(scores[rows] - scores[cols])
    # sort within each row by (distance, id); rows stay contiguous
    order = np.lexsort((cols, dist, rows))
    rank = np.arange(rows.size) - np.repeat(adj.indptr[:-1], deg)
    k = keep_count(np.broadcast_to(p, (n,)), deg)
    kept = order[rank < np.repeat(k, deg)]
    kept.sort()  # back to row-major, id-ascending order
    counts = np.bincount(rows[kept], minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return Adjacency(indptr, cols[kept]), dist[kept]


def scorer_loss(scorer: SimilarityScorer, x: np.ndarray, y: np.ndarray, backward: bool = True, weight: float = 1.0):
    """Summed BCE of every relation's scorer on rows ``x`` with labels ``y``.

    With ``backward`` the gradients of ``weight * loss`` are accumulated into
    the parameters, and the gradient w.r.t. ``x`` is returned alongside the
    (unweighted) loss.
    """
    x = as_matrix(x)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    total = 0.0
    grad_x = np.zeros_like(x)
    for r in range(scorer.num_relations):
        z = scorer.logits(r, x).reshape(-1, 1)
        loss, dz = bce_with_logits(z, y)
        total += loss
        if backward:
            dz = weight * dz
            w, b = scorer.weights[r], scorer.biases[r]
            w.grad += dz.T @ x
            b.grad += dz.sum(axis=0, keepdims=True)
            grad_x += dz @ w.value
    return total, grad_x


def similarity_loss(
    scorer: SimilarityScorer,
    graph: MultiRelationGraph,
    batch,
    embeddings: np.ndarray | None = None,
    backward: bool = False,
) -> float:
    """L_D for one layer: BCE of each relation's scorer summed over relations and ``batch``."""
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValidationError("empty batch")
    if not np.all(graph.train_mask[batch]):
        bad = batch[~graph.train_mask[batch]]
        raise ValidationError(f"nodes {bad.tolist()[:5]} are not in the training split")
    x = graph.features if embeddings is None else embeddings
    loss, _ = scorer_loss(scorer, x[batch], graph.labels[batch], backward=backward)
    return loss
