"""Stochastic neighbor masking and the contrastive loss estimators.

Each epoch, every directed neighbor pair (u, v) independently keeps v as a
positive for anchor u with probability 1-alpha; the anchor itself is always
a positive.  Everything outside P_u is a negative.  Three estimators score
the resulting draw: the normalized-JSD loss (cosine-based discriminator),
a plain JSD variant (sigmoid of inner products), and an InfoNCE variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import (
    ConfigError,
    DegenerateEmbeddingError,
    DegenerateGraphError,
    ShapeError,
)
from .graphdata import Graph, from_edges

ESTIMATOR_KINDS = ("norm_jsd", "jsd", "info_nce")


@dataclass
class ContrastDraw:
    """One epoch's realized positive sets, in CSR form over anchors.

    `pos_targets[pos_offsets[u]:pos_offsets[u+1]]` lists P_u in increasing
    order; u itself is always present.  Negatives are implicit: V \\ P_u.
    """

    num_nodes: int
    pos_offsets: np.ndarray
    pos_targets: np.ndarray
    alpha: float
    epoch: int = 0

    @property
    def pos_counts(self) -> np.ndarray:
        return np.diff(self.pos_offsets)

    def positives(self, u: int) -> np.ndarray:
        return self.pos_targets[self.pos_offsets[u] : self.pos_offsets[u + 1]]

    def membership(self) -> np.ndarray:
        """Dense boolean matrix M[u, v] = (v in P_u)."""
        m = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        src = np.repeat(np.arange(self.num_nodes), self.pos_counts)
        m[src, self.pos_targets] = True
        return m

    def validate(self, graph: Graph) -> None:
        """Check the P_u invariants against the generating graph."""
        for u in range(self.num_nodes):
            pos = self.positives(u)
            if u not in pos:
                raise ConfigError(f"anchor {u} missing from its own positive set")
            rest = pos[pos != u]
            if not np.isin(rest, graph.neighbors(u)).all():
                raise ConfigError(f"anchor {u} has a non-neighbor positive")


def draw_masks(graph: Graph, alpha: float, rng: dc.RngStream, epoch: int = 0) -> ContrastDraw:
    """Sample one epoch's positive sets: keep each directed neighbor pair
    with probability 1-alpha, then add the anchor itself."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"mask rate must be in [0, 1], got {alpha}")
    n = graph.num_nodes
    src = np.repeat(np.arange(n), graph.degrees)
    keep = rng.uniform(size=graph.csr_targets.size) >= alpha
    all_src = np.concatenate([src[keep], np.arange(n)])
    all_tgt = np.concatenate([graph.csr_targets[keep], np.arange(n)])
    order = np.lexsort((all_tgt, all_src))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(all_src, minlength=n), out=offsets[1:])
    return ContrastDraw(n, offsets, all_tgt[order], float(alpha), epoch)


@dataclass
class EstimatorSpec:
    """Which contrastive objective to use and its numeric knobs.

    `target_pos`/`target_neg` are the similarity targets (delta, lambda)
    used by the expectation check; the norm-JSD objective drives targets
    toward 1 and 0.
    """

    kind: str = "norm_jsd"
    temperature: float = 0.5
    clamp_eps: float = 1e-7
    target_pos: float = 1.0
    target_neg: float = 0.0

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ConfigError(f"estimator kind must be one of {ESTIMATOR_KINDS}, got {self.kind!r}")
        if self.temperature <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ConfigError(f"clamp_eps must be in (0, 0.5), got {self.clamp_eps}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "temperature": self.temperature,
            "clamp_eps": self.clamp_eps,
            "target_pos": self.target_pos,
            "target_neg": self.target_neg,
        }


# ---------------------------------------------------------------------------
# discriminators


def discriminator_norm(z_u: np.ndarray, z_v: np.ndarray) -> float:
    """D = (cos(z_u, z_v) + 1) / 2, the [0, 1]-ranged cosine discriminator."""
    z_u = np.asarray(z_u, dtype=np.float64).reshape(-1)
    z_v = np.asarray(z_v, dtype=np.float64).reshape(-1)
    nu, nv = np.linalg.norm(z_u), np.linalg.norm(z_v)
    if nu < 1e-12 or nv < 1e-12:
        raise DegenerateEmbeddingError(f"discriminator input has near-zero norm ({nu:.3e}, {nv:.3e})")
    cos = float(np.dot(z_u, z_v) / (nu * nv))
    return (cos + 1.0) / 2.0


def _cosine_matrix(z: dc.Tensor) -> dc.Tensor:
    zn = dc.rows_l2_normalize(z)
    return dc.matmul(zn, dc.transpose(zn))


def _pair_weights(draw: ContrastDraw):
    """Constant weight matrices: Wp[u,v]=1/|P_u| on P_u, Wn[u,v]=1/|Q_u| on Q_u."""
    n = draw.num_nodes
    pos_counts = draw.pos_counts
    neg_counts = n - pos_counts
    if np.any(neg_counts == 0):
        u = int(np.argmin(neg_counts))
        raise DegenerateGraphError(f"anchor {u} has an empty negative set (|P_u| = |V|)")
    m = draw.membership()
    wp = m / pos_counts[:, None]
    wn = (~m) / neg_counts[:, None]
    return wp, wn


def _jsd_style_loss(d: dc.Tensor, draw: ContrastDraw, eps: float) -> dc.Tensor:
    wp, wn = _pair_weights(draw)
    dcl = dc.clamp(d, eps, 1.0 - eps)
    pos_term = dc.tsum(dc.hadamard(dc.Tensor(wp), dc.log(dcl)))
    neg_term = dc.tsum(dc.hadamard(dc.Tensor(wn), dc.log(dc.sub(1.0, dcl))))
    return dc.scalar_mul(dc.add(pos_term, neg_term), -1.0 / draw.num_nodes)


def _check_z(z: dc.Tensor, draw: ContrastDraw) -> None:
    if z.data.ndim != 2 or z.data.shape[0] != draw.num_nodes:
        raise ShapeError(f"Z must be ({draw.num_nodes}, d), got {z.data.shape}")


def loss_norm_jsd(z: dc.Tensor, draw: ContrastDraw, eps: float = 1e-7) -> dc.Tensor:
    """Mean over anchors of -(1/|P_u|) sum log D - (1/|Q_u|) sum log(1-D)
    with D = (cos+1)/2 on the projected embeddings."""
    _check_z(z, draw)
    d = dc.scalar_mul(dc.add(_cosine_matrix(z), 1.0), 0.5)
    return _jsd_style_loss(d, draw, eps)


def loss_jsd_ablation(z: dc.Tensor, draw: ContrastDraw, eps: float = 1e-7) -> dc.Tensor:
    """Same objective with the unnormalized D = sigmoid(z_u . z_v)."""
    _check_z(z, draw)
    d = dc.sigmoid(dc.matmul(z, dc.transpose(z)))
    return _jsd_style_loss(d, draw, eps)


def loss_info_nce_ablation(z: dc.Tensor, draw: ContrastDraw, tau: float = 0.5) -> dc.Tensor:
    """Softmax contrast: positives from P_u \\ {u}, denominator over all w != u.

    Anchors whose only positive is themselves contribute zero; the per-anchor
    average uses the realized positive count, so equal similarities give
    exactly log(|V| - 1).
    """
    if tau <= 0.0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    _check_z(z, draw)
    n = draw.num_nodes
    logits = dc.scalar_mul(_cosine_matrix(z), 1.0 / tau)
    off_diag = ~np.eye(n, dtype=bool)

    # detached row max over w != u keeps exp in range without touching gradients
    row_max = np.max(np.where(off_diag, logits.data, -np.inf), axis=1, keepdims=True)
    shifted = dc.exp(dc.sub(logits, dc.Tensor(row_max)))
    denom = dc.tsum(dc.hadamard(shifted, dc.Tensor(off_diag.astype(logits.data.dtype))), axis=1, keepdims=True)
    log_denom = dc.add(dc.log(denom), dc.Tensor(row_max))
    log_prob = dc.sub(logits, log_denom)

    pos = draw.membership() & off_diag
    pos_counts = pos.sum(axis=1)
    weights = pos / np.maximum(pos_counts, 1)[:, None]
    return dc.scalar_mul(dc.tsum(dc.hadamard(dc.Tensor(weights), log_prob)), -1.0 / n)


def estimator_loss(z: dc.Tensor, draw: ContrastDraw, spec: EstimatorSpec) -> dc.Tensor:
    if spec.kind == "norm_jsd":
        return loss_norm_jsd(z, draw, eps=spec.clamp_eps)
    if spec.kind == "jsd":
        return loss_jsd_ablation(z, draw, eps=spec.clamp_eps)
    return loss_info_nce_ablation(z, draw, tau=spec.temperature)


# ---------------------------------------------------------------------------
# sampled-negative variant (for graphs too large for the dense pair matrix)


def loss_norm_jsd_sampled(
    z: dc.Tensor,
    draw: ContrastDraw,
    num_negatives: int,
    rng: dc.RngStream,
    eps: float = 1e-7,
) -> dc.Tensor:
    """loss_norm_jsd with the negative term averaged over a uniform sample
    (without replacement) of min(num_negatives, |Q_u|) negatives per anchor.

    With num_negatives >= |Q_u| for every anchor this equals the full loss.
    The positive term is never sampled.  Memory is O(pairs), not O(|V|^2).
    """
    if num_negatives < 1:
        raise ConfigError(f"num_negatives must be >= 1, got {num_negatives}")
    _check_z(z, draw)
    n = draw.num_nodes
    pos_counts = draw.pos_counts
    if np.any(pos_counts >= n):
        raise DegenerateGraphError("an anchor has an empty negative set")

    neg_anchor, neg_target = [], []
    neg_weight = []
    all_nodes = np.arange(n)
    for u in range(n):
        q_u = np.setdiff1d(all_nodes, draw.positives(u), assume_unique=True)
        k = min(num_negatives, q_u.size)
        idx = rng.choice(q_u.size, size=k, replace=False)
        neg_anchor.append(np.full(k, u))
        neg_target.append(q_u[idx])
        neg_weight.append(np.full(k, 1.0 / k))
    neg_anchor = np.concatenate(neg_anchor)
    neg_target = np.concatenate(neg_target)
    neg_weight = np.concatenate(neg_weight)

    pos_anchor = np.repeat(np.arange(n), pos_counts)
    pos_weight = 1.0 / pos_counts[pos_anchor]

    zn = dc.rows_l2_normalize(z)

    def pair_d(anchor_idx, target_idx):
        dots = dc.tsum(
            dc.hadamard(dc.take_rows(zn, anchor_idx), dc.take_rows(zn, target_idx)),
            axis=1,
        )
        return dc.clamp(dc.scalar_mul(dc.add(dots, 1.0), 0.5), eps, 1.0 - eps)

    pos_term = dc.tsum(dc.hadamard(dc.Tensor(pos_weight), dc.log(pair_d(pos_anchor, draw.pos_targets))))
    neg_term = dc.tsum(
        dc.hadamard(dc.Tensor(neg_weight), dc.log(dc.sub(1.0, pair_d(neg_anchor, neg_target))))
    )
    return dc.scalar_mul(dc.add(pos_term, neg_term), -1.0 / n)


# ---------------------------------------------------------------------------
# expectation check for the masking scheme


@dataclass
class TheoremReport:
    """Empirical vs expected target similarity under repeated mask draws."""

    alpha: float
    delta: float
    lam: float
    num_trials: int
    neighbor_mean: float
    non_neighbor_mean: float
    expected_neighbor: float
    expected_non_neighbor: float
    binomial_se: float
    neighbor_within_3se: bool
    non_neighbor_exact: bool

    @property
    def passed(self) -> bool:
        return self.neighbor_within_3se and self.non_neighbor_exact


def verify_theorem(
    alpha: float,
    delta: float,
    lam: float,
    num_trials: int,
    rng: dc.RngStream | None = None,
    ring_size: int = 12,
) -> TheoremReport:
    """Monte Carlo check that masked-neighbor target similarity averages to
    delta*(1-alpha) + lam*alpha for neighbors and lam for non-neighbors.

    Runs real mask draws on a ring graph and reads targets off the realized
    P_u sets, so the check exercises the actual sampling code path.
    """
    if num_trials < 1000:
        raise ConfigError(f"num_trials must be >= 1000, got {num_trials}")
    if rng is None:
        rng = dc.RngStream(seed=0, purpose="mask")
    n = ring_size
    ring_edges = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    graph = from_edges(ring_edges, n, np.zeros((n, 1)))

    adj = np.zeros((n, n), dtype=bool)
    adj[ring_edges[:, 0], ring_edges[:, 1]] = True
    adj |= adj.T
    eye = np.eye(n, dtype=bool)
    nbr_pairs = np.argwhere(adj)
    non_pairs = np.argwhere(~adj & ~eye)

    epochs = -(-num_trials // nbr_pairs.shape[0])
    nbr_samples, non_samples = [], []
    for epoch in range(epochs):
        m = draw_masks(graph, alpha, rng, epoch=epoch).membership()
        nbr_samples.append(np.where(m[nbr_pairs[:, 0], nbr_pairs[:, 1]], delta, lam))
        non_samples.append(np.where(m[non_pairs[:, 0], non_pairs[:, 1]], delta, lam))
    nbr = np.concatenate(nbr_samples)[:num_trials]
    non = np.concatenate(non_samples)[:num_trials]

    expected_nbr = delta * (1.0 - alpha) + lam * alpha
    se = abs(delta - lam) * np.sqrt(alpha * (1.0 - alpha) / num_trials)
    nbr_mean = float(nbr.mean())
    non_mean = float(non.mean())
    return TheoremReport(
        alpha=alpha,
        delta=delta,
        lam=lam,
        num_trials=num_trials,
        neighbor_mean=nbr_mean,
        non_neighbor_mean=non_mean,
        expected_neighbor=expected_nbr,
        expected_non_neighbor=lam,
        binomial_se=float(se),
        neighbor_within_3se=abs(nbr_mean - expected_nbr) <= 3.0 * se + 1e-12,
        non_neighbor_exact=non_mean == lam,
    )
