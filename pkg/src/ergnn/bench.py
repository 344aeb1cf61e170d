"""Benchmark runner: every model kind over several seeds, summarized as mean and std."""

from __future__ import annotations

import csv
import dataclasses
import io
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .baselines import run_gcn, run_mean_sage
from .errors import ValidationError
from .graph import MultiRelationGraph, SyntheticConfig, generate_synthetic
from .metrics import Metrics
from .trainer import TrainConfig, evaluate, train

METRIC_NAMES = ("f1", "recall", "precision", "accuracy", "auc")


class BaselineKind(str, Enum):
    GCN = "GCN"
    MEAN_SAGE = "MeanSage"
    ERGNN_NO_FILTER = "ERGNN_NoFilter"
    ERGNN_NO_ENHANCER = "ERGNN_NoEnhancer"
    ERGNN_FULL = "ERGNN_Full"

    @classmethod
    def parse(cls, name: str) -> "BaselineKind":
        for k in cls:
            if k.value.lower() == name.strip().lower():
                return k
        raise ValidationError(f"unknown model kind {name!r}; choose from {[k.value for k in cls]}")


ALL_KINDS = tuple(BaselineKind)

# (use_filter, use_enhancer) for each ER-GNN variant
_ERGNN_FLAGS = {
    BaselineKind.ERGNN_FULL: (True, True),
    BaselineKind.ERGNN_NO_FILTER: (False, True),
    BaselineKind.ERGNN_NO_ENHANCER: (True, False),
}


def run_kind(kind: BaselineKind, graph: MultiRelationGraph, config: TrainConfig) -> Metrics:
    """Train one model kind and return its test-split metrics."""
    kind = BaselineKind(kind)
    if kind is BaselineKind.GCN:
        return run_gcn(graph, config)
    if kind is BaselineKind.MEAN_SAGE:
        return run_mean_sage(graph, config)
    use_filter, use_enhancer = _ERGNN_FLAGS[kind]
    cfg = dataclasses.replace(config, use_filter=use_filter, use_enhancer=use_enhancer)
    model, _ = train(cfg, graph)
    return evaluate(model, graph, graph.test_nodes())


@dataclass
class RunRecord:
    kind: str
    seed: int
    metrics: Metrics
    wall_time_seconds: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "metrics": self.metrics.to_dict(),
                "wall_time_seconds": self.wall_time_seconds}


@dataclass
class BenchmarkResult:
    runs: list[RunRecord]

    def kinds(self) -> list[str]:
        seen = []
        for r in self.runs:
            if r.kind not in seen:
                seen.append(r.kind)
        return seen

    def summary(self) -> dict[str, dict[str, tuple[float, float]]]:
        """``{kind: {metric: (mean, std)}}``; std is the population std over seeds."""
        out = {}
        for kind in self.kinds():
            rows = [r.metrics for r in self.runs if r.kind == kind]
            stats = {}
            for name in METRIC_NAMES:
                vals = np.array([getattr(m, name) for m in rows if getattr(m, name) is not None], dtype=float)
                stats[name] = (float(vals.mean()), float(vals.std())) if vals.size else (float("nan"), float("nan"))
            out[kind] = stats
        return out

    def mean(self, kind, metric: str) -> float:
        return self.summary()[BaselineKind(kind).value][metric][0]

    def to_json_obj(self) -> list[dict]:
        return [r.to_dict() for r in self.runs]

    def to_csv(self) -> str:
        """Per-run rows. Wall time is left out so the file is reproducible."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "seed", *METRIC_NAMES, "tp", "fp", "fn", "tn"])
        for r in self.runs:
            m = r.metrics
            w.writerow([r.kind, r.seed, *[_fmt(getattr(m, k)) for k in METRIC_NAMES], m.tp, m.fp, m.fn, m.tn])
        return buf.getvalue()

    def to_text(self) -> str:
        summary = self.summary()
        header = ["Model", "F1", "Recall", "Precision", "Accuracy", "AUC"]
        rows = [[kind] + [f"{mu:.4f} ± {sd:.4f}" for mu, sd in (stats[n] for n in METRIC_NAMES)]
                for kind, stats in summary.items()]
        widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header] + rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def run_benchmark(dataset, kinds=ALL_KINDS, seeds=(0,), config: TrainConfig | None = None,
                  on_run=None) -> BenchmarkResult:
    """Run each kind for each seed.

    ``dataset`` is either a fixed graph (the seed then only changes model
    initialization and batch order) or a :class:`SyntheticConfig`, in which
    case a fresh graph is generated per seed.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("need at least one seed")
    kinds = [BaselineKind(k) for k in kinds]
    config = config or TrainConfig()
    runs = []
    for seed in seeds:
        if isinstance(dataset, SyntheticConfig):
            graph = generate_synthetic(dataclasses.replace(dataset, seed=seed))
        else:
            graph = dataset
        cfg = dataclasses.replace(config, seed=seed)
        for kind in kinds:
            t0 = time.perf_counter()
            metrics = run_kind(kind, graph, cfg)
            rec = RunRecord(kind.value, seed, metrics, time.perf_counter() - t0)
            runs.append(rec)
            if on_run is not None:
                on_run(rec)
    # order by kind then seed regardless of loop order
    order = {k.value: i for i, k in enumerate(kinds)}
    runs.sort(key=lambda r: (order[r.kind], seeds.index(r.seed)))
    return BenchmarkResult(runs)
