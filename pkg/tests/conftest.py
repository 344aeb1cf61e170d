import numpy as np
import pytest

from ergnn.graph import Adjacency, MultiRelationGraph


def make_graph(features, labels, relations, train=None, val=None, test=None, names=None):
    """Graph from plain edge lists; every node is a training node unless masks are given."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    adjs = []
    for edges in relations:
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        adjs.append(Adjacency.from_edges(n, edges[:, 0], edges[:, 1]))
    if train is None:
        train = np.ones(n, bool)
    val = np.zeros(n, bool) if val is None else np.asarray(val, bool)
    test = np.zeros(n, bool) if test is None else np.asarray(test, bool)
    names = names or [f"r{i}" for i in range(len(relations))]
    return MultiRelationGraph(features, labels, tuple(adjs), tuple(names),
                              np.asarray(train, bool), val, test)


def graphs_equal(a: MultiRelationGraph, b: MultiRelationGraph) -> bool:
    return (
        np.array_equal(a.features, b.features)
        and np.array_equal(a.labels, b.labels)
        and a.relation_names == b.relation_names
        and all(np.array_equal(x.indptr, y.indptr) and np.array_equal(x.indices, y.indices)
                for x, y in zip(a.relations, b.relations))
        and np.array_equal(a.train_mask, b.train_mask)
        and np.array_equal(a.val_mask, b.val_mask)
        and np.array_equal(a.test_mask, b.test_mask)
    )


@pytest.fixture
def six_node_graph():
    """6 nodes, 2 relations, every node in the training split."""
    rng = np.random.default_rng(11)
    features = rng.normal(size=(6, 2))
    labels = [0, 1, 0, 1, 0, 0]
    r0 = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3)]
    r1 = [(0, 2), (1, 3), (1, 5), (2, 4), (3, 5)]
    return make_graph(features, labels, [r0, r1])


# -- acceptance summary -------------------------------------------------------------

_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
        terminalreporter.write_line(f"{label:4}  {name}")
