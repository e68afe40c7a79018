"""Shared fixtures.

Thread caps are set before numpy is imported anywhere in the test run so
that timing- and determinism-sensitive tests see single-threaded BLAS.
"""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from signa.diffcore import set_finite_checks, set_precision
from signa.graphdata import Graph, from_edges

# filled by test_acceptance; echoed after the run, outside pytest's capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance verdicts")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _reset_numeric_state():
    """Tests that flip precision or finite checks must not leak state."""
    set_precision("f64")
    set_finite_checks(True)
    yield
    set_precision("f64")
    set_finite_checks(True)


@pytest.fixture
def two_node_graph() -> Graph:
    """Single undirected edge 0-1, scalar features [2, 4]."""
    return from_edges(np.array([[0, 1]]), 2, np.array([[2.0], [4.0]]))


@pytest.fixture
def path4_graph() -> Graph:
    """Path 0-1-2-3 with labels [0, 0, 1, 1]."""
    edges = np.array([[0, 1], [1, 2], [2, 3]])
    feats = np.arange(8, dtype=np.float64).reshape(4, 2)
    return from_edges(edges, 4, feats, labels=np.array([0, 0, 1, 1]))


def random_labeled_graph(rng: np.random.Generator, max_nodes: int = 50) -> Graph:
    """Random undirected graph with at least one edge and random labels."""
    while True:
        n = int(rng.integers(3, max_nodes + 1))
        density = float(rng.uniform(0.05, 0.5))
        iu, iv = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < density
        if not keep.any():
            continue
        edges = np.stack([iu[keep], iv[keep]], axis=1)
        feats = rng.standard_normal((n, 3))
        labels = rng.integers(0, int(rng.integers(2, 5)), size=n)
        return from_edges(edges, n, feats, labels=labels)
