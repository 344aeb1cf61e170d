"""Multi-relation graph storage, CSV dataset I/O, splitting and synthetic data."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True, eq=False)
class Adjacency:
    """Sorted, deduplicated neighbor lists in compressed-row form."""

    indptr: np.ndarray
    indices: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    @classmethod
    def from_edges(cls, num_nodes: int, src, dst) -> "Adjacency":
        """Build a symmetric adjacency from undirected edge endpoints.

        Self loops are dropped; duplicate and reverse-duplicate rows collapse.
        """
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        keep = src != dst
        src, dst = src[keep], dst[keep]
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        if rows.size:
            key = np.unique(rows * num_nodes + cols)
            rows, cols = key // num_nodes, key % num_nodes
        counts = np.bincount(rows, minlength=num_nodes)
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return cls(indptr, cols.astype(np.int64))

    def undirected_edges(self) -> np.ndarray:
        """Each undirected edge once as a ``(u, v)`` row with ``u < v``."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)


@dataclass(frozen=True, eq=False)
class MultiRelationGraph:
    features: np.ndarray
    labels: np.ndarray
    relations: tuple[Adjacency, ...]
    relation_names: tuple[str, ...]
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.validate()

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def train_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.train_mask)

    def val_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.val_mask)

    def test_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.test_mask)

    def neighbors(self, v: int, r: int) -> list[int]:
        if not 0 <= r < self.num_relations:
            raise IndexError(f"relation {r} out of range [0, {self.num_relations})")
        if not 0 <= v < self.num_nodes:
            raise IndexError(f"node {v} out of range [0, {self.num_nodes})")
        return self.relations[r].neighbors(v).tolist()

    def union_adjacency(self) -> Adjacency:
        """Edge present if it is present under any relation."""
        n = self.num_nodes
        src, dst = [], []
        for adj in self.relations:
            rows = np.repeat(np.arange(n), adj.degrees)
            src.append(rows)
            dst.append(adj.indices)
        if not src:
            return Adjacency.from_edges(n, [], [])
        return Adjacency.from_edges(n, np.concatenate(src), np.concatenate(dst))

    def with_masks(self, train, val, test) -> "MultiRelationGraph":
        return MultiRelationGraph(
            self.features, self.labels, self.relations, self.relation_names,
            np.asarray(train, bool), np.asarray(val, bool), np.asarray(test, bool),
            dict(self.info),
        )

    def validate(self) -> None:
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ValidationError("features must be a matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain NaN or Inf")
        if self.labels.shape != (n,):
            raise ValidationError(f"expected {n} labels, got {self.labels.shape}")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValidationError("labels must be 0 or 1")
        if len(self.relation_names) != len(self.relations):
            raise ValidationError("one name per relation required")
        for name, adj in zip(self.relation_names, self.relations):
            if adj.num_nodes != n:
                raise ValidationError(f"relation {name!r} sized for {adj.num_nodes} nodes, graph has {n}")
            if adj.indices.size and (adj.indices.min() < 0 or adj.indices.max() >= n):
                raise ValidationError(f"relation {name!r} has an endpoint outside [0, {n})")
        masks = [self.train_mask, self.val_mask, self.test_mask]
        for m in masks:
            if m.shape != (n,) or m.dtype != bool:
                raise ValidationError("masks must be boolean vectors over all nodes")
        total = self.train_mask.astype(int) + self.val_mask + self.test_mask
        if np.any(total > 1):
            raise ValidationError("train/val/test masks overlap")
        if np.any(total == 0):
            raise ValidationError("every labeled node must belong to a split")
        if not np.any(self.labels[self.train_mask] == 1):
            raise ValidationError("training split contains no fraud labels")

    def fingerprint(self) -> dict:
        """Node/edge counts plus a content hash over features, labels, edges and masks."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(self.labels.astype(np.int64).tobytes())
        for name, adj in zip(self.relation_names, self.relations):
            h.update(name.encode())
            h.update(adj.indptr.tobytes())
            h.update(adj.indices.tobytes())
        for m in (self.train_mask, self.val_mask, self.test_mask):
            h.update(m.tobytes())
        return {
            "num_nodes": self.num_nodes,
            "num_relations": self.num_relations,
            "feature_dim": self.feature_dim,
            "edge_counts": {name: int(adj.indices.size // 2)
                            for name, adj in zip(self.relation_names, self.relations)},
            "sha256": h.hexdigest(),
        }


# -- splitting ----------------------------------------------------------------


def stratified_split(labels, train_frac: float = 0.4, val_frac: float = 0.2, seed: int = 0):
    """Per-class proportional train/val/test masks; the remainder of each class goes to test."""
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac >= 1:
        raise ValidationError(
            f"need positive fractions with train+val < 1, got {train_frac}, {val_frac}"
        )
    labels = np.asarray(labels)
    n = labels.size
    rng = np.random.default_rng(seed)
    masks = [np.zeros(n, bool) for _ in SPLIT_NAMES]
    for cls in np.unique(labels):
        ids = np.flatnonzero(labels == cls)
        if ids.size < len(SPLIT_NAMES):
            raise ValidationError(f"class {cls} has {ids.size} nodes, fewer than {len(SPLIT_NAMES)} splits")
        ids = rng.permutation(ids)
        n_train = max(1, math.floor(train_frac * ids.size + 0.5))
        n_val = max(1, math.floor(val_frac * ids.size + 0.5))
        if n_train + n_val >= ids.size:
            raise ValidationError(f"class {cls} too small for a non-empty test split")
        masks[0][ids[:n_train]] = True
        masks[1][ids[n_train:n_train + n_val]] = True
        masks[2][ids[n_train + n_val:]] = True
    return tuple(masks)


# -- synthetic generator -------------------------------------------------------


@dataclass
class SyntheticConfig:
    n_benign: int = 900
    n_fraud: int = 100
    feature_dim: int = 2
    benign_mean: tuple[float, ...] = (0.0, 0.0)
    fraud_mean: tuple[float, ...] = (2.0, 2.0)
    camouflage_ratio: float = 0.5
    avg_degree: float = 10.0
    num_relations: int = 2
    seed: int = 0
    train_frac: float = 0.4
    val_frac: float = 0.2

    def validate(self) -> None:
        if not 0.0 <= self.camouflage_ratio <= 1.0:
            raise ValidationError(f"camouflage_ratio must be in [0, 1], got {self.camouflage_ratio}")
        if self.avg_degree < 1:
            raise ValidationError(f"avg_degree must be >= 1, got {self.avg_degree}")
        if self.n_fraud < 1:
            raise ValidationError("n_fraud must be >= 1")
        if self.n_benign < 1:
            raise ValidationError("n_benign must be >= 1")
        if self.num_relations < 1:
            raise ValidationError("num_relations must be >= 1")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1")
        for name in ("benign_mean", "fraud_mean"):
            if len(getattr(self, name)) != self.feature_dim:
                raise ValidationError(f"{name} must have feature_dim={self.feature_dim} entries")


def _sample_relation(rng, labels, cfg: SyntheticConfig):
    """One relation's undirected edges.

    Every node emits about ``avg_degree / 2`` edges so the symmetrized degree
    averages ``avg_degree``. Fraud nodes aim at benign nodes with probability
    ``camouflage_ratio`` and at other fraud nodes otherwise; benign nodes aim
    at benign nodes only.
    """
    n = labels.size
    fraud = np.flatnonzero(labels == 1)
    benign = np.flatnonzero(labels == 0)
    half = cfg.avg_degree / 2.0
    base = math.floor(half)
    emit = base + (rng.random(n) < half - base)
    src, dst = [], []
    for v in range(n):
        k = int(emit[v])
        if k == 0:
            continue
        if labels[v] == 1:
            to_benign = rng.random(k) < cfg.camouflage_ratio
            pool_b = rng.choice(benign, size=k)
            others = fraud[fraud != v]
            if others.size:
                pool_f = rng.choice(others, size=k)
                targets = np.where(to_benign, pool_b, pool_f)
            else:
                targets = pool_b[to_benign]
        else:
            targets = rng.choice(benign[benign != v], size=k) if benign.size > 1 else np.empty(0, np.int64)
        src.append(np.full(targets.size, v))
        dst.append(targets)
    if not src:
        return Adjacency.from_edges(n, [], [])
    return Adjacency.from_edges(n, np.concatenate(src), np.concatenate(dst))


def generate_synthetic(cfg: SyntheticConfig) -> MultiRelationGraph:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_benign + cfg.n_fraud
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.choice(n, size=cfg.n_fraud, replace=False)] = 1
    means = np.where(labels[:, None] == 1, np.asarray(cfg.fraud_mean, float), np.asarray(cfg.benign_mean, float))
    features = means + rng.standard_normal((n, cfg.feature_dim))
    relations = tuple(_sample_relation(rng, labels, cfg) for _ in range(cfg.num_relations))
    names = tuple(f"r{i}" for i in range(cfg.num_relations))
    masks = stratified_split(labels, cfg.train_frac, cfg.val_frac, seed=cfg.seed)
    return MultiRelationGraph(features, labels, relations, names, *masks)


# -- CSV dataset format ---------------------------------------------------------


def _read_csv(path: Path, ncols: int | None = None):
    """Yield ``(line_no, row)`` for each data row, after checking the header exists."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: missing header row")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if ncols is not None and len(row) != ncols:
                raise ValidationError(f"{path}:{line}: expected {ncols} columns, got {len(row)}")
            yield line, header, row


def _parse_int(path, line, s):
    try:
        return int(s.strip())
    except ValueError:
        raise ValidationError(f"{path}:{line}: not an integer: {s!r}") from None


def _parse_float(path, line, s):
    try:
        return float(s.strip())
    except ValueError:
        raise ValidationError(f"{path}:{line}: not a number: {s!r}") from None


def load_dataset(directory, train_frac: float = 0.4, val_frac: float = 0.2, seed: int = 0) -> MultiRelationGraph:
    """Read a dataset directory (``features.csv``, ``labels.csv``, ``edges_*.csv``, optional ``split.csv``)."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")

    feat_path = root / "features.csv"
    rows = []
    for line, header, row in _read_csv(feat_path):
        if len(row) != len(header):
            raise ValidationError(f"{feat_path}:{line}: expected {len(header)} columns, got {len(row)}")
        node = _parse_int(feat_path, line, row[0])
        if node != len(rows):
            raise ValidationError(f"{feat_path}:{line}: node ids must be 0..n-1 in order, got {node}")
        rows.append([_parse_float(feat_path, line, c) for c in row[1:]])
    if not rows:
        raise ValidationError(f"{feat_path}: no nodes")
    features = np.asarray(rows, dtype=np.float64)
    n = features.shape[0]

    lab_path = root / "labels.csv"
    labels = np.full(n, -1, dtype=np.int64)
    for line, _, row in _read_csv(lab_path, 2):
        node = _parse_int(lab_path, line, row[0])
        if not 0 <= node < n:
            raise ValidationError(f"{lab_path}:{line}: node {node} out of range [0, {n})")
        lab = _parse_int(lab_path, line, row[1])
        if lab not in (0, 1):
            raise ValidationError(f"{lab_path}:{line}: label must be 0 or 1, got {lab}")
        labels[node] = lab
    if np.any(labels < 0):
        raise ValidationError(f"{lab_path}: {int(np.sum(labels < 0))} nodes have no label")
    if not np.any(labels == 1):
        raise ValidationError(f"{lab_path}: no fraud labels")

    edge_files = sorted(root.glob("edges_*.csv"), key=lambda p: p.name)
    if not edge_files:
        raise ValidationError(f"{root}: no edges_<relation>.csv files")
    relations, names = [], []
    one_way = 0
    for path in edge_files:
        src, dst = [], []
        for line, _, row in _read_csv(path, 2):
            u, v = _parse_int(path, line, row[0]), _parse_int(path, line, row[1])
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"{path}:{line}: endpoint out of range [0, {n}): ({u}, {v})")
            src.append(u)
            dst.append(v)
        listed = set(zip(src, dst))
        one_way += sum((v, u) not in listed for u, v in listed if u != v)
        relations.append(Adjacency.from_edges(n, src, dst))
        names.append(path.stem[len("edges_"):])
    if one_way:
        # rows are undirected, so a single listing is normal; report at info level only
        logger.info("added %d missing reverse edges while symmetrizing", one_way)

    split_path = root / "split.csv"
    if split_path.exists():
        masks = {s: np.zeros(n, bool) for s in SPLIT_NAMES}
        for line, _, row in _read_csv(split_path, 2):
            node = _parse_int(split_path, line, row[0])
            name = row[1].strip()
            if not 0 <= node < n:
                raise ValidationError(f"{split_path}:{line}: node {node} out of range [0, {n})")
            if name not in masks:
                raise ValidationError(f"{split_path}:{line}: unknown split {name!r}")
            masks[name][node] = True
        train, val, test = (masks[s] for s in SPLIT_NAMES)
    else:
        train, val, test = stratified_split(labels, train_frac, val_frac, seed)

    return MultiRelationGraph(
        features, labels, tuple(relations), tuple(names), train, val, test,
        info={"symmetrized_edges": one_way, "source": str(root)},
    )


def save_dataset(graph: MultiRelationGraph, directory) -> list[Path]:
    """Write ``graph`` in the CSV dataset format, including ``split.csv``. Returns the files written."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written = []

    path = root / "features.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id"] + [f"f{j}" for j in range(graph.feature_dim)])
        for i, row in enumerate(graph.features):
            w.writerow([i] + [repr(float(x)) for x in row])
    written.append(path)

    path = root / "labels.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "label"])
        w.writerows([i, int(y)] for i, y in enumerate(graph.labels))
    written.append(path)

    for name, adj in zip(graph.relation_names, graph.relations):
        path = root / f"edges_{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["src", "dst"])
            w.writerows(adj.undirected_edges().tolist())
        written.append(path)

    path = root / "split.csv"
    split = np.where(graph.train_mask, "train", np.where(graph.val_mask, "val", "test"))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "split"])
        w.writerows([i, s] for i, s in enumerate(split))
    written.append(path)
    return written
