"""Dropout-noised encoder (Linear or GConv base) and the MLP projector.

Each of the L layers applies dropout, then the base encoder, then the
activation, then LayerNorm (optional).  The output of the last layer is the representation
consumed downstream; the projector exists only for the contrastive loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import ConfigError, ShapeError
from .graphdata import Graph, NormalizedAdjacency, normalized_adjacency, spmm

BASE_ENCODERS = ("linear", "gconv")
# rrelu runs as a fixed-slope leaky relu (midpoint of the usual random range)
ACTIVATION_KINDS = ("relu", "elu", "prelu", "leaky_relu", "rrelu")
RRELU_SLOPE = 0.23
PRELU_INIT_SLOPE = 0.25


@dataclass
class ModelSpec:
    """Architecture description; immutable once validated."""

    num_layers: int = 2
    base_encoder: str = "linear"
    hidden_dim: int = 128
    dropout_p: float = 0.4
    activation: str = "prelu"
    layer_norm_enabled: bool = True
    projector_dim: int = 64
    projector_activation: str = "elu"

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.base_encoder not in BASE_ENCODERS:
            raise ConfigError(f"base_encoder must be one of {BASE_ENCODERS}, got {self.base_encoder!r}")
        if self.hidden_dim < 1 or self.projector_dim < 1:
            raise ConfigError("hidden_dim and projector_dim must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        for field in ("activation", "projector_activation"):
            kind = getattr(self, field)
            if kind not in ACTIVATION_KINDS:
                raise ConfigError(f"{field} must be one of {ACTIVATION_KINDS}, got {kind!r}")

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "base_encoder": self.base_encoder,
            "hidden_dim": self.hidden_dim,
            "dropout_p": self.dropout_p,
            "activation": self.activation,
            "layer_norm_enabled": self.layer_norm_enabled,
            "projector_dim": self.projector_dim,
            "projector_activation": self.projector_activation,
        }


def _resolve_activation(kind: str) -> tuple[str, float | None]:
    if kind == "rrelu":
        return "leaky_relu", RRELU_SLOPE
    if kind == "leaky_relu":
        return "leaky_relu", 0.01
    return kind, None


class EncoderState:
    """Named parameters for the encoder layers and the projector.

    Naming is stable ("layers.0.weight", "projector.1.weight", ...) so that
    checkpoints and optimizer state address parameters unambiguously.
    Base-encoder layers carry a bias only when layer norm is off.
    """

    def __init__(self, spec: ModelSpec, num_features: int, rng: dc.RngStream | None):
        # rng=None leaves the weights zero (checkpoint loading overwrites them)
        self.spec = spec
        self.num_features = int(num_features)
        self.layer_weights: list[dc.Parameter] = []
        self.layer_biases: list[dc.Parameter] = []
        self.ln_gains: list[dc.Parameter] = []
        self.ln_biases: list[dc.Parameter] = []
        self.prelu_slopes: list[dc.Parameter] = []

        dims = [self.num_features] + [spec.hidden_dim] * spec.num_layers
        for l in range(spec.num_layers):
            self.layer_weights.append(self._glorot(f"layers.{l}.weight", dims[l], dims[l + 1], rng))
            if not spec.layer_norm_enabled:
                self.layer_biases.append(
                    dc.Parameter(np.zeros(dims[l + 1]), name=f"layers.{l}.bias")
                )
            if spec.activation == "prelu":
                self.prelu_slopes.append(
                    dc.Parameter(np.full(1, PRELU_INIT_SLOPE), name=f"layers.{l}.prelu_slope")
                )
            if spec.layer_norm_enabled:
                self.ln_gains.append(dc.Parameter(np.ones(dims[l + 1]), name=f"layers.{l}.ln_gain"))
                self.ln_biases.append(dc.Parameter(np.zeros(dims[l + 1]), name=f"layers.{l}.ln_bias"))

        self.proj_w1 = self._glorot("projector.0.weight", spec.hidden_dim, spec.projector_dim, rng)
        self.proj_w2 = self._glorot("projector.1.weight", spec.projector_dim, spec.projector_dim, rng)
        if spec.projector_activation == "prelu":
            self.proj_slope = dc.Parameter(np.full(1, PRELU_INIT_SLOPE), name="projector.prelu_slope")
        else:
            self.proj_slope = None

    @staticmethod
    def _glorot(name: str, fan_in: int, fan_out: int, rng: dc.RngStream | None) -> dc.Parameter:
        if rng is None:
            return dc.Parameter(np.zeros((fan_in, fan_out)), name=name)
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return dc.Parameter((2.0 * rng.uniform(size=(fan_in, fan_out)) - 1.0) * bound, name=name)

    def parameters(self) -> list[dc.Parameter]:
        params: list[dc.Parameter] = []
        for l in range(self.spec.num_layers):
            params.append(self.layer_weights[l])
            if not self.spec.layer_norm_enabled:
                params.append(self.layer_biases[l])
            if self.spec.activation == "prelu":
                params.append(self.prelu_slopes[l])
            if self.spec.layer_norm_enabled:
                params.append(self.ln_gains[l])
                params.append(self.ln_biases[l])
        params.append(self.proj_w1)
        params.append(self.proj_w2)
        if self.proj_slope is not None:
            params.append(self.proj_slope)
        return params


def init_state(spec: ModelSpec, num_features: int, rng: dc.RngStream) -> EncoderState:
    """Glorot-uniform weights from the init stream; gains 1, biases 0."""
    return EncoderState(spec, num_features, rng)


def encode(
    state: EncoderState,
    spec: ModelSpec,
    graph: Graph,
    adj: NormalizedAdjacency | None = None,
    training: bool = False,
    rng: dc.RngStream | None = None,
    features_override: np.ndarray | None = None,
) -> dc.Tensor:
    """Forward pass producing the representation matrix H (|V| x d_enc).

    Dropout draws from `rng` only in training mode with p > 0; inference
    consumes no randomness.  `features_override` substitutes the input
    features (used by the feature-masking ablation).
    """
    if spec.base_encoder == "gconv" and adj is None:
        raise ConfigError("gconv base encoder requires a normalized adjacency")
    if spec.base_encoder == "linear" and adj is not None:
        raise ConfigError("linear base encoder does not take an adjacency")
    if training and spec.dropout_p > 0.0 and rng is None:
        raise ConfigError("training with dropout requires an rng stream")

    feats = graph.features if features_override is None else features_override
    if feats.shape != (graph.num_nodes, graph.num_features):
        raise ShapeError(f"features must be {(graph.num_nodes, graph.num_features)}, got {feats.shape}")
    act_kind, act_slope = _resolve_activation(spec.activation)

    h = dc.Tensor(feats)
    for l in range(spec.num_layers):
        h = dc.dropout(h, spec.dropout_p, rng, training)
        h = dc.matmul(h, state.layer_weights[l])
        if spec.base_encoder == "gconv":
            h = spmm(adj, h)
        if not spec.layer_norm_enabled:
            h = dc.add(h, state.layer_biases[l])
        if act_kind == "prelu":
            h = dc.activation(h, "prelu", state.prelu_slopes[l])
        else:
            h = dc.activation(h, act_kind, act_slope)
        if spec.layer_norm_enabled:
            h = dc.layer_norm(h, state.ln_gains[l], state.ln_biases[l])
    return h


def project(state: EncoderState, h: dc.Tensor) -> dc.Tensor:
    """Two-layer MLP z = W2 sigma(W1 h); no activation after the last layer."""
    act_kind, act_slope = _resolve_activation(state.spec.projector_activation)
    z = dc.matmul(h, state.proj_w1)
    if act_kind == "prelu":
        z = dc.activation(z, "prelu", state.proj_slope)
    else:
        z = dc.activation(z, act_kind, act_slope)
    return dc.matmul(z, state.proj_w2)


def inference_embeddings(
    state: EncoderState, spec: ModelSpec, graph: Graph, adj: NormalizedAdjacency | None = None
) -> dc.Tensor:
    """Frozen-encoder representations: encode with training off, no projector."""
    if spec.base_encoder == "gconv" and adj is None:
        adj = normalized_adjacency(graph)
    return encode(state, spec, graph, adj=adj, training=False)
