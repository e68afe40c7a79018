"""Naive reference implementations used to cross-check the vectorized code.

Everything here is written as plain double loops over nodes or items, on
purpose: slow, obvious, and independent of the library's own linear
algebra.  Tests compare the fast paths against these.
"""

import math

import numpy as np


def unit_rows(z: np.ndarray) -> np.ndarray:
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def jsd_style_loss_oracle(z: np.ndarray, draw, mode: str, eps: float = 1e-7) -> float:
    """Double-loop mean anchor loss for the norm-JSD / JSD objectives."""
    n = z.shape[0]
    zn = unit_rows(z)
    total = 0.0
    for u in range(n):
        pos = set(int(v) for v in draw.positives(u))
        neg = [v for v in range(n) if v not in pos]
        pos_sum = 0.0
        for v in pos:
            if mode == "norm_jsd":
                d = (float(np.dot(zn[u], zn[v])) + 1.0) / 2.0
            else:
                d = 1.0 / (1.0 + math.exp(-float(np.dot(z[u], z[v]))))
            d = min(max(d, eps), 1.0 - eps)
            pos_sum += math.log(d)
        neg_sum = 0.0
        for v in neg:
            if mode == "norm_jsd":
                d = (float(np.dot(zn[u], zn[v])) + 1.0) / 2.0
            else:
                d = 1.0 / (1.0 + math.exp(-float(np.dot(z[u], z[v]))))
            d = min(max(d, eps), 1.0 - eps)
            neg_sum += math.log(1.0 - d)
        total += -pos_sum / len(pos) - neg_sum / len(neg)
    return total / n


def info_nce_loss_oracle(z: np.ndarray, draw, tau: float = 0.5) -> float:
    """Double-loop softmax contrast; positives exclude the anchor itself."""
    n = z.shape[0]
    zn = unit_rows(z)
    sims = zn @ zn.T
    total = 0.0
    for u in range(n):
        pos = [int(v) for v in draw.positives(u) if int(v) != u]
        if not pos:
            continue
        denom = sum(math.exp(sims[u, w] / tau) for w in range(n) if w != u)
        term = 0.0
        for v in pos:
            term += math.log(math.exp(sims[u, v] / tau) / denom)
        total += -term / len(pos)
    return total / n


def global_homophily_oracle(graph) -> float:
    same = total = 0
    for u in range(graph.num_nodes):
        for v in graph.neighbors(u):
            total += 1
            if graph.labels[u] == graph.labels[v]:
                same += 1
    return same / total


def local_homophily_oracle(graph):
    counts, ratios = [], []
    for u in range(graph.num_nodes):
        nbrs = graph.neighbors(u)
        c = sum(1 for v in nbrs if graph.labels[u] == graph.labels[v])
        counts.append(c)
        ratios.append(c / nbrs.size if nbrs.size else float("nan"))
    return np.array(counts), np.array(ratios)


def contingency_oracle(a, b) -> dict:
    table: dict = {}
    for x, y in zip(a, b):
        table[(int(x), int(y))] = table.get((int(x), int(y)), 0) + 1
    return table


def _entropy_from_counts(counts, n) -> float:
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / n
            h -= p * math.log(p)
    return h


def nmi_oracle(a, b) -> float:
    """Mutual information over the contingency table, arithmetic-mean norm."""
    n = len(a)
    table = contingency_oracle(a, b)
    row: dict = {}
    col: dict = {}
    for (x, y), c in table.items():
        row[x] = row.get(x, 0) + c
        col[y] = col.get(y, 0) + c
    mi = 0.0
    for (x, y), c in table.items():
        mi += (c / n) * math.log(n * c / (row[x] * col[y]))
    ha = _entropy_from_counts(row.values(), n)
    hb = _entropy_from_counts(col.values(), n)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    denom = (ha + hb) / 2.0
    if denom == 0.0:
        return 0.0
    return min(max(mi / denom, 0.0), 1.0)


def homogeneity_oracle(assignments, labels) -> float:
    """1 - H(labels | assignments) / H(labels), with the degenerate
    all-one-label case defined as 1."""
    n = len(labels)
    table = contingency_oracle(labels, assignments)
    row: dict = {}
    col: dict = {}
    for (x, y), c in table.items():
        row[x] = row.get(x, 0) + c
        col[y] = col.get(y, 0) + c
    h_c = _entropy_from_counts(row.values(), n)
    if h_c == 0.0:
        return 1.0
    h_ck = 0.0
    for (x, y), c in table.items():
        h_ck -= (c / n) * math.log(c / col[y])
    return min(max(1.0 - h_ck / h_c, 0.0), 1.0)


def canonical_partitions(n: int, max_cells: int = 3) -> list:
    """All label vectors of n items into at most max_cells cells, one
    representative per set partition (cells numbered by first appearance)."""
    out = []
    vec = [0] * n

    def grow(i: int, used: int):
        if i == n:
            out.append(tuple(vec))
            return
        for c in range(min(used + 1, max_cells)):
            vec[i] = c
            grow(i + 1, max(used, c + 1))

    grow(0, 0)
    return out
