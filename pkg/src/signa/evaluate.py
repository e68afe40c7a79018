"""Frozen-encoder evaluation: linear probe, k-means clustering, pairwise
similarity histograms, and the MLP-vs-GConv inference timing harness.

Everything here consumes plain numpy embeddings; nothing feeds back into
training.  The probe is a softmax regression trained with diffcore so the
whole toolkit shares one optimizer implementation.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import diffcore as dc
from .encoder import EncoderState, ModelSpec, encode
from .errors import AnalysisError, ConfigError, DegenerateEmbeddingError, ShapeError
from .graphdata import Graph, normalized_adjacency


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    run_index: int


def make_splits(labels, ratios=(0.1, 0.1, 0.8), num_runs=1, rng=None) -> list[Split]:
    """Independent random train/val/test splits over all labeled nodes.

    Sizes are round(n * ratio) for train and val, remainder test; each run
    uses its own child stream so runs are independent yet reproducible.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    if rng is None:
        rng = dc.RngStream(0, "split")
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * ratios[1]))
    if n_train < 1 or n_val < 1 or n - n_train - n_val < 1:
        raise AnalysisError(f"{n} labeled nodes are too few for ratios {ratios}")
    splits = []
    for run in range(num_runs):
        perm = rng.child(run).permutation(n)
        splits.append(
            Split(
                train=np.sort(perm[:n_train]),
                val=np.sort(perm[n_train : n_train + n_val]),
                test=np.sort(perm[n_train + n_val :]),
                seed=rng.seed,
                run_index=run,
            )
        )
    return splits


# ---------------------------------------------------------------------------
# linear probe


@dataclass
class ProbeConfig:
    learning_rate: float = 0.01
    num_epochs: int = 300
    weight_decay: float = 1e-4


def micro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Micro-averaged F1 over classes (equals accuracy for single-label)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise AnalysisError("micro_f1 needs equal-length non-empty label arrays")
    classes = np.unique(np.concatenate([y_true, y_pred]))
    tp = sum(int(np.sum((y_pred == c) & (y_true == c))) for c in classes)
    fp = sum(int(np.sum((y_pred == c) & (y_true != c))) for c in classes)
    fn = sum(int(np.sum((y_pred != c) & (y_true == c))) for c in classes)
    # single integer division keeps the single-label case bit-identical to accuracy
    return 2 * tp / (2 * tp + fp + fn)


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return float(np.mean(y_true == y_pred))


def linear_probe(
    embeddings: np.ndarray,
    labels: np.ndarray,
    split: Split,
    config: ProbeConfig | None = None,
) -> tuple[float, float]:
    """Softmax regression on frozen embeddings; returns (micro_f1, accuracy)
    on the test set at the epoch with the best validation micro-F1.

    Deterministic: weights start at zero and the objective is convex, so no
    randomness enters the probe itself.
    """
    if config is None:
        config = ProbeConfig()
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"embeddings {x.shape} do not match {y.shape[0]} labels")
    num_classes = int(y.max()) + 1
    missing = sorted(set(range(num_classes)) - set(y[split.train].tolist()))
    if missing:
        warnings.warn(f"classes {missing} absent from the training split; they get zero prior")

    w = dc.Parameter(np.zeros((x.shape[1], num_classes)), name="probe.weight")
    b = dc.Parameter(np.zeros(num_classes), name="probe.bias")
    adam = dc.AdamState([w, b], lr=config.learning_rate, weight_decay=config.weight_decay)

    x_train = x[split.train]
    y_train = y[split.train]
    onehot = np.zeros((x_train.shape[0], num_classes))
    onehot[np.arange(x_train.shape[0]), y_train] = 1.0

    def predict(idx: np.ndarray) -> np.ndarray:
        logits = x[idx] @ w.data + b.data
        return np.argmax(logits, axis=1)

    best_val, best_snapshot = -1.0, (w.data.copy(), b.data.copy())
    for _ in range(config.num_epochs):
        logits = dc.add(dc.matmul(dc.Tensor(x_train), w), b)
        # detached row max: constant shift, exact log-softmax gradients
        row_max = np.max(logits.data, axis=1, keepdims=True)
        shifted = dc.sub(logits, dc.Tensor(row_max))
        log_denom = dc.log(dc.tsum(dc.exp(shifted), axis=1, keepdims=True))
        log_prob = dc.sub(shifted, log_denom)
        loss = dc.scalar_mul(
            dc.tsum(dc.hadamard(dc.Tensor(onehot), log_prob)), -1.0 / x_train.shape[0]
        )
        dc.backward(loss)
        dc.adam_step(adam)
        val_f1 = micro_f1(y[split.val], predict(split.val))
        if val_f1 > best_val:
            best_val = val_f1
            best_snapshot = (w.data.copy(), b.data.copy())

    w.data[...] = best_snapshot[0]
    b.data[...] = best_snapshot[1]
    test_pred = predict(split.test)
    return micro_f1(y[split.test], test_pred), accuracy(y[split.test], test_pred)


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_trace: list[float] = field(default_factory=list)


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(centroids * centroids, axis=1)[None, :]
        - 2.0 * (x @ centroids.T)
    )
    return np.maximum(d2, 0.0)


def _kmeans_once(x: np.ndarray, k: int, max_iters: int, tol: float, rng) -> KMeansResult:
    n = x.shape[0]
    # k-means++ seeding: first centroid uniform, then distance^2-weighted
    centroids = np.empty((k, x.shape[1]))
    first = int(rng.integers(0, n))
    centroids[0] = x[first]
    closest = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            centroids[j:] = x[first]
            break
        r = rng.uniform() * total
        idx = int(np.searchsorted(np.cumsum(closest), r))
        centroids[j] = x[min(idx, n - 1)]
        closest = np.minimum(closest, np.sum((x - centroids[j]) ** 2, axis=1))

    trace: list[float] = []
    assignments = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        d2 = _sq_dists(x, centroids)
        assignments = np.argmin(d2, axis=1)
        trace.append(float(d2[np.arange(n), assignments].sum()))
        new_centroids = centroids.copy()
        for j in range(k):
            members = assignments == j
            if members.any():
                new_centroids[j] = x[members].mean(axis=0)
            else:
                # empty cluster: re-seed at the point farthest from its centroid
                far = int(np.argmax(d2[np.arange(n), assignments]))
                new_centroids[j] = x[far]
                assignments[far] = j
        shift = float(np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        if shift < tol:
            break
    d2 = _sq_dists(x, centroids)
    assignments = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), assignments].sum())
    trace.append(inertia)
    return KMeansResult(assignments, centroids, inertia, trace)


def kmeans(
    embeddings: np.ndarray,
    k: int,
    restarts: int = 10,
    max_iters: int = 300,
    tol: float = 1e-6,
    rng=None,
) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"embeddings must be a matrix, got shape {x.shape}")
    if not 1 <= k <= x.shape[0]:
        raise AnalysisError(f"k must be in [1, {x.shape[0]}], got {k}")
    if rng is None:
        rng = dc.RngStream(0, "kmeans")
    best: KMeansResult | None = None
    for r in range(restarts):
        result = _kmeans_once(x, k, max_iters, tol, rng.child(r))
        if best is None or result.inertia < best.inertia:
            best = result
    return best


# ---------------------------------------------------------------------------
# partition agreement metrics


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise AnalysisError("partition metrics need two equal-length non-empty 1-D arrays")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(assignments: np.ndarray, labels: np.ndarray) -> float:
    """Mutual information normalized by the arithmetic mean of the entropies.

    Natural log internally.  Two identical nontrivial partitions give 1.0;
    if both partitions are trivial (single cell) they agree, also 1.0; if
    exactly one is trivial the MI is 0 and so is the score.
    """
    table = _contingency(assignments, labels)
    n = table.sum()
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    # identical partitions up to relabeling: one nonzero per row and column.
    # Score exactly 1.0 instead of accumulating rounding in the MI sum.
    if np.all((table > 0).sum(axis=0) <= 1) and np.all((table > 0).sum(axis=1) <= 1):
        return 1.0
    pij = table / n
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / np.outer(pa, pb)[nz])).sum())
    value = mi / ((ha + hb) / 2.0)
    return float(min(max(value, 0.0), 1.0))


def homogeneity(assignments: np.ndarray, labels: np.ndarray) -> float:
    """1 - H(classes | clusters) / H(classes); 1.0 when H(classes) = 0."""
    table = _contingency(assignments, labels)  # rows: clusters, cols: classes
    n = table.sum()
    h_c = _entropy(table.sum(axis=0))
    if h_c == 0.0:
        return 1.0
    h_c_given_k = 0.0
    for row in table:
        total = row.sum()
        if total:
            h_c_given_k += (total / n) * _entropy(row)
    value = 1.0 - h_c_given_k / h_c
    return float(min(max(value, 0.0), 1.0))


# ---------------------------------------------------------------------------
# similarity histograms


@dataclass
class SimilarityHistograms:
    """Binned cosine similarities over node pairs, split by adjacency and
    (when labels exist) label agreement.  Bins cover [-1, 1]."""

    bin_edges: np.ndarray
    neighbor: np.ndarray
    non_neighbor: np.ndarray
    same_label: np.ndarray | None
    diff_label: np.ndarray | None
    num_pairs: int
    subsampled: bool


def similarity_histograms(
    embeddings: np.ndarray,
    graph: Graph,
    bins: int = 50,
    subsample_pairs: int | None = None,
    rng=None,
) -> SimilarityHistograms:
    x = np.asarray(embeddings, dtype=np.float64)
    n = graph.num_nodes
    if x.shape[0] != n:
        raise ShapeError(f"embeddings rows {x.shape[0]} != |V| {n}")
    if n > 5000 and subsample_pairs is None:
        raise AnalysisError("graphs over 5000 nodes require explicit pair subsampling")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateEmbeddingError(f"row {int(np.argmin(norms))} has near-zero norm")
    xn = x / norms[:, None]

    if subsample_pairs is None:
        iu, iv = np.triu_indices(n, k=1)
        subsampled = False
    else:
        if rng is None:
            rng = dc.RngStream(0, "split")
        iu = rng.integers(0, n, size=subsample_pairs)
        iv = rng.integers(0, n - 1, size=subsample_pairs)
        iv = np.where(iv >= iu, iv + 1, iv)  # never a self-pair
        subsampled = True
    sims = np.einsum("ij,ij->i", xn[iu], xn[iv])
    sims = np.clip(sims, -1.0, 1.0)

    ones = np.ones(graph.csr_targets.size, dtype=np.int8)
    a = sp.csr_matrix((ones, graph.csr_targets, graph.csr_offsets), shape=(n, n))
    adjacent = np.asarray(a[iu, iv]).ravel() > 0

    edges = np.linspace(-1.0, 1.0, bins + 1)

    def hist(values: np.ndarray) -> np.ndarray:
        return np.histogram(values, bins=edges)[0]

    same = diff = None
    if graph.labels is not None:
        label_match = graph.labels[iu] == graph.labels[iv]
        same = hist(sims[label_match])
        diff = hist(sims[~label_match])
    return SimilarityHistograms(
        bin_edges=edges,
        neighbor=hist(sims[adjacent]),
        non_neighbor=hist(sims[~adjacent]),
        same_label=same,
        diff_label=diff,
        num_pairs=int(iu.shape[0]),
        subsampled=subsampled,
    )


# ---------------------------------------------------------------------------
# inference timing


@dataclass
class TimingEntry:
    encoder_kind: str
    wall_millis: float


@dataclass
class TimingReport:
    entries: list[TimingEntry]
    ratio_gconv_over_linear: float
    repeats: int
    warmup: int


def timing_harness(
    graph: Graph,
    spec_mlp: ModelSpec,
    spec_gconv: ModelSpec,
    repeats: int = 20,
    warmup: int = 3,
    seed: int = 0,
) -> TimingReport:
    """Median single-pass inference wall time for each base encoder.

    The normalized adjacency is built once outside the timed region; only
    the forward pass is measured.
    """
    if spec_mlp.base_encoder != "linear" or spec_gconv.base_encoder != "gconv":
        raise ConfigError("timing_harness expects (linear spec, gconv spec) in that order")
    a, b = spec_mlp.to_dict(), spec_gconv.to_dict()
    a.pop("base_encoder"), b.pop("base_encoder")
    if a != b:
        raise ConfigError("timing specs must differ only in base_encoder")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")

    adj = normalized_adjacency(graph)
    medians = []
    for spec, use_adj in ((spec_mlp, None), (spec_gconv, adj)):
        state = EncoderState(spec, graph.num_features, dc.RngStream(seed, "init"))
        for _ in range(warmup):
            encode(state, spec, graph, adj=use_adj, training=False)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            encode(state, spec, graph, adj=use_adj, training=False)
            times.append((time.perf_counter() - t0) * 1000.0)
        medians.append(float(np.median(times)))
    entries = [TimingEntry("linear", medians[0]), TimingEntry("gconv", medians[1])]
    ratio = medians[1] / medians[0] if medians[0] > 0 else float("inf")
    return TimingReport(entries=entries, ratio_gconv_over_linear=ratio, repeats=repeats, warmup=warmup)
