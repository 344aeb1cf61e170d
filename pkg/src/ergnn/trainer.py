"""ER-GNN model container, loss, mini-batch training loop, prediction and checkpoints."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import aggregator
from .aggregator import FilterPlan, LayerParams
from .controller import RelationController, average_distance
from .errors import DimensionError, ValidationError
from .graph import MultiRelationGraph
from .metrics import compute_metrics
from .numeric import Adam, Parameter, bce_with_logits, linear_forward, sigmoid, uniform_init
from .similarity import SimilarityScorer, scorer_loss

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ergnn-checkpoint/1"


@dataclass
class TrainConfig:
    epochs: int = 50
    layers: int = 1
    learning_rate: float = 0.01
    batch_size: int = 256
    lambda_: float = 1.0
    tau: float = 0.02
    seed: int = 0
    d_out: int = 16
    p_init: float = 0.5
    use_filter: bool = True
    use_enhancer: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.layers < 1:
            raise ValidationError(f"layers must be >= 1, got {self.layers}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lambda_ < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lambda_}")
        if not 0 < self.tau < 0.5:
            raise ValidationError(f"tau must be in (0, 0.5), got {self.tau}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.d_out < 1:
            raise ValidationError(f"d_out must be >= 1, got {self.d_out}")
        if not self.tau <= self.p_init <= 1:
            raise ValidationError(f"p_init must be in [tau, 1], got {self.p_init}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


PRESETS = {
    "synthetic": {"learning_rate": 0.01, "batch_size": 256},
    "amazon-format": {"learning_rate": 0.005, "batch_size": 256},
}


@dataclass
class EpochReport:
    epoch: int
    loss_gnn: float
    loss_d: float
    loss_total: float
    lambda_: float
    controllers: list[dict]
    val_metrics: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ERGNNModel:
    scorers: list[SimilarityScorer]
    layers: list[LayerParams]
    head_W: Parameter
    head_b: Parameter
    controllers: list[list[RelationController]]
    use_filter: bool = True
    use_enhancer: bool = True
    relation_names: tuple[str, ...] = field(default=())

    @classmethod
    def init(cls, feature_dim: int, num_relations: int, config: TrainConfig,
             rng: np.random.Generator, relation_names=()) -> "ERGNNModel":
        scorers, layers, controllers = [], [], []
        d_in = feature_dim
        for l in range(1, config.layers + 1):
            scorers.append(SimilarityScorer(num_relations, d_in, layer=l))
            layers.append(LayerParams.init(rng, d_in, config.d_out, num_relations, layer=l))
            controllers.append([RelationController(p=config.p_init, tau=config.tau)
                                for _ in range(num_relations)])
            d_in = config.d_out
        head_W = Parameter(uniform_init(rng, 1, config.d_out), name="head.W")
        head_b = Parameter(rng.uniform(-1, 1, size=(1, 1)) / np.sqrt(config.d_out), name="head.b")
        return cls(scorers, layers, head_W, head_b, controllers,
                   config.use_filter, config.use_enhancer, tuple(relation_names))

    @property
    def feature_dim(self) -> int:
        return self.scorers[0].input_dim

    @property
    def num_relations(self) -> int:
        return self.scorers[0].num_relations

    def parameters(self) -> list[Parameter]:
        params = []
        for s in self.scorers:
            params += s.parameters()
        for layer in self.layers:
            params += layer.parameters()
        return params + [self.head_W, self.head_b]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def check_graph(self, graph: MultiRelationGraph) -> None:
        if graph.feature_dim != self.feature_dim:
            raise DimensionError(
                f"feature_dim mismatch: model expects {self.feature_dim}, dataset has {graph.feature_dim}"
            )
        if graph.num_relations != self.num_relations:
            raise DimensionError(
                f"num_relations mismatch: model expects {self.num_relations}, dataset has {graph.num_relations}"
            )

    def plan(self, graph: MultiRelationGraph) -> FilterPlan:
        self.check_graph(graph)
        return aggregator.plan_filters(graph, self.scorers, self.controllers, self.layers,
                                       self.use_filter, self.use_enhancer)


def classify(head_W: Parameter, head_b: Parameter, h) -> np.ndarray:
    """Fraud probability for each embedding row: ``sigmoid(h · w + b)``."""
    z, _ = linear_forward(head_W, head_b, h)
    return sigmoid(z)[:, 0]


def total_loss(model: ERGNNModel, graph: MultiRelationGraph, plan: FilterPlan, batch,
               lam: float = 1.0, backward: bool = True) -> tuple[float, float, float]:
    """``(L_Total, L_GNN, L_D)`` on ``batch``; with ``backward`` every parameter gradient is accumulated."""
    batch = np.asarray(batch, dtype=np.int64).reshape(-1)
    if batch.size == 0:
        raise ValidationError("empty batch")
    if not np.all(graph.train_mask[batch]):
        raise ValidationError("total_loss batch must come from the training split")
    y = graph.labels[batch].astype(np.float64).reshape(-1, 1)
    h, cache = aggregator.forward(graph, plan, model.layers, batch)
    z, hcache = linear_forward(model.head_W, model.head_b, h)
    loss_gnn, dz = bce_with_logits(z, y)

    loss_d = 0.0
    extra = {}
    for l, scorer in enumerate(model.scorers):
        x = cache.embeddings[l][batch]
        part, gx = scorer_loss(scorer, x, y, backward=backward, weight=lam)
        loss_d += part
        if backward and l > 0:
            g = np.zeros_like(cache.embeddings[l])
            np.add.at(g, batch, gx)
            extra[l] = g

    if backward:
        model.head_W.grad += dz.T @ hcache
        model.head_b.grad += dz.sum(axis=0, keepdims=True)
        aggregator.backward(model.layers, cache, dz @ model.head_W.value, extra)
    return loss_gnn + lam * loss_d, loss_gnn, loss_d


def _controller_snapshot(model: ERGNNModel) -> list[dict]:
    out = []
    for l, row in enumerate(model.controllers, start=1):
        for r, c in enumerate(row):
            out.append({
                "layer": l,
                "relation": r,
                "p": c.p,
                "avg_distance": c.distance_history[-1] if c.distance_history else None,
                "terminated": c.terminated,
                "termination_epoch": c.termination_epoch,
            })
    return out


def predict(model: ERGNNModel, graph: MultiRelationGraph, nodes=None, plan: FilterPlan | None = None):
    """Probabilities and hard labels (``prob >= 0.5``) for ``nodes`` (all nodes by default)."""
    nodes = np.arange(graph.num_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64).reshape(-1)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= graph.num_nodes):
        raise IndexError(f"nodes outside [0, {graph.num_nodes})")
    plan = model.plan(graph) if plan is None else plan
    h, _ = aggregator.forward(graph, plan, model.layers, nodes)
    probs = classify(model.head_W, model.head_b, h)
    return probs, (probs >= 0.5).astype(np.int64)


def evaluate(model: ERGNNModel, graph: MultiRelationGraph, nodes, plan=None):
    nodes = np.asarray(nodes, dtype=np.int64)
    probs, _ = predict(model, graph, nodes, plan)
    return compute_metrics(probs, graph.labels[nodes])


def train(config: TrainConfig, graph: MultiRelationGraph, on_epoch=None):
    """Train from scratch. Returns ``(model, reports)``.

    Each epoch: shuffle the training nodes, take an Adam step per batch,
    re-filter with the updated scorers, feed each controller its average
    distance, then score the validation split with the resulting ``p``.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    model = ERGNNModel.init(graph.feature_dim, graph.num_relations, config, rng, graph.relation_names)
    opt = Adam(model.parameters(), lr=config.learning_rate)
    train_nodes = graph.train_nodes()
    val_nodes = graph.val_nodes()
    reports = []
    for epoch in range(1, config.epochs + 1):
        plan = model.plan(graph)
        order = rng.permutation(train_nodes)
        sum_total = sum_gnn = sum_d = 0.0
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            opt.zero_grad()
            t, g, d = total_loss(model, graph, plan, batch, config.lambda_)
            opt.step()
            sum_total += t
            sum_gnn += g
            sum_d += d

        plan = model.plan(graph)
        for l, row in enumerate(model.controllers):
            for r, ctl in enumerate(row):
                rp = plan.layers[l][r]
                dbar = average_distance(rp.kept, rp.kept_distances, graph.labels, graph.train_mask)
                ctl.step_epoch(dbar, epoch, config.epochs)

        val = None
        if val_nodes.size:
            val = evaluate(model, graph, val_nodes).to_dict()
        report = EpochReport(epoch, sum_gnn, sum_d, sum_total, config.lambda_,
                             _controller_snapshot(model), val)
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)
    return model, reports


# -- checkpoints -----------------------------------------------------------------


def model_to_dict(model: ERGNNModel, config: TrainConfig, graph: MultiRelationGraph | None = None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "config": config.to_dict(),
        "feature_dim": model.feature_dim,
        "num_relations": model.num_relations,
        "relation_names": list(model.relation_names),
        "parameters": {p.name: p.value.tolist() for p in model.parameters()},
        "frozen_p": [[c.p for c in row] for row in model.controllers],
        "controllers": [[c.to_dict() for c in row] for row in model.controllers],
        "dataset": graph.fingerprint() if graph is not None else None,
    }


def model_from_dict(doc: dict) -> tuple[ERGNNModel, TrainConfig]:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"not an ER-GNN checkpoint (format={doc.get('format')!r})")
    config = TrainConfig.from_dict(doc["config"])
    model = ERGNNModel.init(doc["feature_dim"], doc["num_relations"], config,
                            np.random.default_rng(0), doc.get("relation_names", ()))
    stored = doc["parameters"]
    for p in model.parameters():
        if p.name not in stored:
            raise ValidationError(f"checkpoint is missing parameter {p.name}")
        value = np.asarray(stored[p.name], dtype=np.float64)
        if value.shape != p.value.shape:
            raise DimensionError(f"parameter {p.name}: checkpoint shape {value.shape}, config implies {p.value.shape}")
        p.value[...] = value
    ctl_docs = doc["controllers"]
    if len(ctl_docs) != config.layers or any(len(row) != model.num_relations for row in ctl_docs):
        raise DimensionError("controller table does not match layers x relations")
    model.controllers = [[RelationController.from_dict(c) for c in row] for row in ctl_docs]
    return model, config


def save_checkpoint(path, model: ERGNNModel, config: TrainConfig, graph: MultiRelationGraph | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, config, graph), indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[ERGNNModel, TrainConfig, dict]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise TypeError(f"expected a JSON object, got {type(doc).__name__}")
        model, config = model_from_dict(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed checkpoint ({exc})") from None
    return model, config, doc
