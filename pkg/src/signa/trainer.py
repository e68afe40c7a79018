"""Full-batch training loop, run configuration, and checkpoint I/O.

One epoch is: encode with dropout noise -> project -> redraw neighbor masks
-> estimator loss -> backward -> Adam.  Ablation variants rewrite the
effective model/estimator/mask settings before training starts.
"""

from __future__ import annotations

import base64
import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .contrast import EstimatorSpec, draw_masks, estimator_loss
from .encoder import EncoderState, ModelSpec, encode, inference_embeddings, project
from .errors import CheckpointError, ConfigError, OptimizationError
from .graphdata import Graph, normalized_adjacency

ABLATIONS = ("none", "no_dropout", "nfm", "no_stoch_mask", "all_mask")
CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    model: ModelSpec
    estimator: EstimatorSpec
    mask_rate: float = 0.3
    learning_rate: float = 0.001
    weight_decay: float = 0.0
    num_epochs: int = 200
    seed: int = 0
    ablation: str = "none"
    nfm_p_feat: float | None = None  # nfm only; falls back to model.dropout_p
    precision: str = "f64"
    log_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ConfigError(f"mask_rate must be in [0, 1], got {self.mask_rate}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.num_epochs < 1:
            raise ConfigError(f"num_epochs must be >= 1, got {self.num_epochs}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.nfm_p_feat is not None and not 0.0 <= self.nfm_p_feat < 1.0:
            raise ConfigError(f"nfm_p_feat must be in [0, 1), got {self.nfm_p_feat}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be 'f32' or 'f64', got {self.precision!r}")
        if self.log_every < 0:
            raise ConfigError(f"log_every must be non-negative, got {self.log_every}")

    _TOP_KEYS = (
        "model",
        "estimator",
        "mask_rate",
        "learning_rate",
        "weight_decay",
        "num_epochs",
        "seed",
        "ablation",
        "nfm_p_feat",
        "precision",
        "log_every",
    )
    _MODEL_KEYS = (
        "num_layers",
        "base_encoder",
        "hidden_dim",
        "dropout_p",
        "activation",
        "layer_norm_enabled",
        "projector_dim",
        "projector_activation",
    )
    _ESTIMATOR_KEYS = ("kind", "temperature", "clamp_eps", "target_pos", "target_neg")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        """Strict parse: every unknown key (top-level or nested) is collected
        and reported in one error, so typos surface all at once."""
        if not isinstance(raw, dict):
            raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
        unknown = [k for k in raw if k not in cls._TOP_KEYS]
        model_raw = raw.get("model", {})
        est_raw = raw.get("estimator", {})
        if not isinstance(model_raw, dict):
            raise ConfigError("config key 'model' must be an object")
        if not isinstance(est_raw, dict):
            raise ConfigError("config key 'estimator' must be an object")
        unknown += [f"model.{k}" for k in model_raw if k not in cls._MODEL_KEYS]
        unknown += [f"estimator.{k}" for k in est_raw if k not in cls._ESTIMATOR_KEYS]
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        top = {k: v for k, v in raw.items() if k not in ("model", "estimator")}
        return cls(model=ModelSpec(**model_raw), estimator=EstimatorSpec(**est_raw), **top)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "estimator": self.estimator.to_dict(),
            "mask_rate": self.mask_rate,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "num_epochs": self.num_epochs,
            "seed": self.seed,
            "ablation": self.ablation,
            "nfm_p_feat": self.nfm_p_feat,
            "precision": self.precision,
            "log_every": self.log_every,
        }


@dataclass
class ResolvedPlan:
    """Effective settings after ablation rewriting."""

    model: ModelSpec
    estimator: EstimatorSpec
    mask_rate: float
    nfm_p_feat: float | None  # None unless the nfm ablation is active


def apply_ablation(config: TrainConfig) -> ResolvedPlan:
    """Rewrite model/mask settings per the requested ablation variant.

    no_dropout zeroes encoder dropout; nfm swaps encoder dropout for input
    feature masking (zeroing without rescale); no_stoch_mask / all_mask pin
    the mask rate to 0 / 1.  Estimator swaps are plain config choices.
    """
    model = config.model
    mask_rate = config.mask_rate
    nfm_p = None
    if config.ablation in ("no_dropout", "nfm"):
        model = ModelSpec(**{**model.to_dict(), "dropout_p": 0.0})
    if config.ablation == "nfm":
        nfm_p = config.nfm_p_feat if config.nfm_p_feat is not None else config.model.dropout_p
    if config.ablation == "no_stoch_mask":
        mask_rate = 0.0
    if config.ablation == "all_mask":
        mask_rate = 1.0
    return ResolvedPlan(model=model, estimator=config.estimator, mask_rate=mask_rate, nfm_p_feat=nfm_p)


def train(graph: Graph, config: TrainConfig) -> tuple[EncoderState, list[float]]:
    """Run the unsupervised loop and return the trained state + loss curve.

    The loss recorded per epoch is the pre-update value (the one whose
    gradient the step applied).  A non-finite loss aborts immediately.
    """
    dc.set_precision(config.precision)
    plan = apply_ablation(config)
    init_rng = dc.RngStream(config.seed, "init")
    dropout_rng = dc.RngStream(config.seed, "dropout")
    mask_rng = dc.RngStream(config.seed, "mask")

    adj = normalized_adjacency(graph) if plan.model.base_encoder == "gconv" else None
    state = EncoderState(plan.model, graph.num_features, init_rng)
    params = state.parameters()
    adam = dc.AdamState(params, lr=config.learning_rate, weight_decay=config.weight_decay)

    curve: list[float] = []
    for epoch in range(config.num_epochs):
        features_override = None
        if plan.nfm_p_feat is not None and plan.nfm_p_feat > 0.0:
            # input feature masking: zero entries, no rescale
            keep = dropout_rng.uniform(size=graph.features.shape) >= plan.nfm_p_feat
            features_override = graph.features * keep
        draw = draw_masks(graph, plan.mask_rate, mask_rng, epoch=epoch)
        h = encode(
            state,
            plan.model,
            graph,
            adj=adj,
            training=True,
            rng=dropout_rng,
            features_override=features_override,
        )
        z = project(state, h)
        loss = estimator_loss(z, draw, plan.estimator)
        value = float(loss.data)
        if not np.isfinite(value):
            raise OptimizationError(f"non-finite loss at epoch {epoch}")
        dc.backward(loss)
        dc.adam_step(adam)
        curve.append(value)
        if config.log_every and (epoch % config.log_every == 0 or epoch == config.num_epochs - 1):
            print(f"epoch {epoch:5d}  loss {value:.6f}")
    return state, curve


# ---------------------------------------------------------------------------
# checkpoint I/O


def save_checkpoint(state: EncoderState, config: TrainConfig, path: str, final_loss: float | None = None) -> None:
    """Write a JSON checkpoint with base64 little-endian f64 parameter blobs."""
    params = []
    for p in state.parameters():
        payload = np.ascontiguousarray(p.data, dtype="<f8")
        params.append(
            {
                "name": p.name,
                "shape": list(p.data.shape),
                "data": base64.b64encode(payload.tobytes()).decode("ascii"),
            }
        )
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "precision": dc.get_precision(),
        "config": config.to_dict(),
        "num_features": state.num_features,
        "parameters": params,
        "final_loss": final_loss,
        "epochs": config.num_epochs,
        "seed": config.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[EncoderState, TrainConfig]:
    """Read a checkpoint back; parameters are bit-exact under f64.

    Loading under a different active precision converts the parameters and
    warns.  Corrupt or truncated payloads fail with no partial state.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None

    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version!r} unsupported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    config = TrainConfig.from_dict(doc["config"])
    plan = apply_ablation(config)
    state = EncoderState(plan.model, int(doc["num_features"]), rng=None)

    saved_precision = doc.get("precision")
    if saved_precision != dc.get_precision():
        warnings.warn(
            f"checkpoint saved under {saved_precision}, loading under {dc.get_precision()}: converting"
        )

    by_name = {p.name: p for p in state.parameters()}
    seen = set()
    for entry in doc["parameters"]:
        name = entry.get("name")
        if name not in by_name:
            raise CheckpointError(f"checkpoint parameter {name!r} does not fit the config architecture")
        param = by_name[name]
        shape = tuple(entry["shape"])
        if shape != param.data.shape:
            raise CheckpointError(f"parameter {name!r} shape {shape} != expected {param.data.shape}")
        try:
            blob = base64.b64decode(entry["data"], validate=True)
        except Exception as exc:
            raise CheckpointError(f"parameter {name!r} payload is corrupt: {exc}") from None
        flat = np.frombuffer(blob, dtype="<f8")
        if flat.size != param.data.size:
            raise CheckpointError(
                f"parameter {name!r} payload holds {flat.size} values, expected {param.data.size}"
            )
        param.data[...] = flat.reshape(shape).astype(dc.active_dtype())
        seen.add(name)
    missing = set(by_name) - seen
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {', '.join(sorted(missing))}")
    return state, config


def export_embeddings(state: EncoderState, spec: ModelSpec, graph: Graph, path: str) -> np.ndarray:
    """Write inference embeddings as CSV (17 significant digits, header row)."""
    emb = inference_embeddings(state, spec, graph).data
    header = ",".join(f"dim_{j}" for j in range(emb.shape[1]))
    np.savetxt(path, emb, fmt="%.17g", delimiter=",", header=header, comments="")
    return emb
