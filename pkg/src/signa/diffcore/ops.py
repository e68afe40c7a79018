"""Differentiable operations over Tensors.

Each operation computes its forward value eagerly and attaches a closure
that maps the output gradient to gradient contributions for its inputs.
`backward` replays those closures in reverse topological order from a
scalar loss.  The recorded graph is single-use: after `backward` the links
are released and a second call on the same loss raises.

Conventions:
  * elementwise ops (`add`, `sub`, `hadamard`) follow numpy broadcasting,
    with gradients summed back down to each input's shape;
  * `log` demands strictly positive input; callers clamp first;
  * operations that can manufacture non-finite values from finite input
    (matmul, exp, layer_norm) verify finiteness of their output unless
    `set_finite_checks(False)` has been called.
"""

from __future__ import annotations

import numpy as np

from ..errors import (
    ConfigError,
    ContractError,
    DegenerateEmbeddingError,
    DomainError,
    NumericError,
    ShapeError,
)
from .tensor import Parameter, Tensor

_finite_checks = True


def set_finite_checks(enabled: bool) -> None:
    """Toggle NaN/Inf verification on op outputs (on by default)."""
    global _finite_checks
    _finite_checks = bool(enabled)


def check_finite(name: str, arr: np.ndarray) -> None:
    """Raise if arr holds NaN/Inf and finite checks are enabled."""
    if _finite_checks and not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} produced non-finite values")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add a gradient contribution to a tensor (public for custom ops)."""
    if isinstance(t, Parameter):
        t.grad += g
    elif t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product a @ b with gradients dL/da = g bT, dL/db = aT g."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, _parents=(a, b))
    check_finite("matmul", out.data)

    def _bw(g):
        accumulate_grad(a, g @ b.data.T)
        accumulate_grad(b, a.data.T @ g)

    out._backward = _bw
    return out


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.data.shape}")
    out = Tensor(x.data.T, _parents=(x,))

    def _bw(g):
        accumulate_grad(x, g.T)

    out._backward = _bw
    return out


def take_rows(x: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows by index; backward scatter-adds into the source."""
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(x.data[idx], _parents=(x,))

    def _bw(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, idx, g)
        accumulate_grad(x, dx)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# elementwise suite


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, _parents=(a, b))

    def _bw(g):
        accumulate_grad(a, _unbroadcast(g, a.data.shape))
        accumulate_grad(b, _unbroadcast(g, b.data.shape))

    out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data, _parents=(a, b))

    def _bw(g):
        accumulate_grad(a, _unbroadcast(g, a.data.shape))
        accumulate_grad(b, _unbroadcast(-g, b.data.shape))

    out._backward = _bw
    return out


def hadamard(a, b) -> Tensor:
    """Elementwise product (with broadcasting)."""
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data, _parents=(a, b))

    def _bw(g):
        accumulate_grad(a, _unbroadcast(g * b.data, a.data.shape))
        accumulate_grad(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = _bw
    return out


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(x.data * c, _parents=(x,))

    def _bw(g):
        accumulate_grad(x, g * c)

    out._backward = _bw
    return out


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise DomainError("log requires strictly positive input; clamp before taking logs")
    out = Tensor(np.log(x.data), _parents=(x,))

    def _bw(g):
        accumulate_grad(x, g / x.data)

    out._backward = _bw
    return out


def exp(x: Tensor) -> Tensor:
    out = Tensor(np.exp(x.data), _parents=(x,))
    check_finite("exp", out.data)

    def _bw(g):
        accumulate_grad(x, g * out.data)

    out._backward = _bw
    return out


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    s = np.empty_like(d)
    pos = d >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    s[~pos] = ez / (1.0 + ez)
    out = Tensor(s, _parents=(x,))

    def _bw(g):
        accumulate_grad(x, g * s * (1.0 - s))

    out._backward = _bw
    return out


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values into [lo, hi]; gradient is zero outside the interval."""
    out = Tensor(np.clip(x.data, lo, hi), _parents=(x,))
    inside = (x.data >= lo) & (x.data <= hi)

    def _bw(g):
        accumulate_grad(x, g * inside)

    out._backward = _bw
    return out


def tsum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = Tensor(np.sum(x.data, axis=axis, keepdims=keepdims), _parents=(x,))

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        accumulate_grad(x, np.broadcast_to(g, x.data.shape).copy())

    out._backward = _bw
    return out


def tmean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    out = Tensor(np.mean(x.data, axis=axis, keepdims=keepdims), _parents=(x,))

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        accumulate_grad(x, np.broadcast_to(g / count, x.data.shape).copy())

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# neural-network layers


def dropout(x: Tensor, p: float, rng, training: bool) -> Tensor:
    """Inverted dropout: zero entries with probability p, scale by 1/(1-p).

    Inference mode is the exact identity and consumes no randomness; the
    same holds for p == 0 in training mode.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = rng.uniform(size=x.data.shape) >= p
    scale = 1.0 / (1.0 - p)
    out = Tensor(x.data * keep * scale, _parents=(x,))

    def _bw(g):
        accumulate_grad(x, g * keep * scale)

    out._backward = _bw
    return out


def layer_norm(x: Tensor, gain: Parameter, bias: Parameter, eps: float = 1e-5) -> Tensor:
    """Per-row standardization (population variance) with affine gain/bias."""
    if x.data.ndim != 2:
        raise ShapeError(f"layer_norm expects a matrix, got shape {x.data.shape}")
    d = x.data.shape[1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} do not match width {d}"
        )
    mu = np.mean(x.data, axis=1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data, _parents=(x, gain, bias))
    check_finite("layer_norm", out.data)

    def _bw(g):
        accumulate_grad(gain, np.sum(g * xhat, axis=0))
        accumulate_grad(bias, np.sum(g, axis=0))
        gx = g * gain.data
        m1 = np.mean(gx, axis=1, keepdims=True)
        m2 = np.mean(gx * xhat, axis=1, keepdims=True)
        accumulate_grad(x, inv * (gx - m1 - xhat * m2))

    out._backward = _bw
    return out


ACTIVATIONS = ("relu", "elu", "prelu", "leaky_relu")


def activation(x: Tensor, kind: str, slope=None) -> Tensor:
    """Elementwise nonlinearity.

    `prelu` takes a learnable slope Parameter (shared scalar) that receives
    gradient; `leaky_relu` takes a fixed float slope.
    """
    d = x.data
    if kind == "relu":
        out = Tensor(np.maximum(d, 0.0), _parents=(x,))

        def _bw(g):
            accumulate_grad(x, g * (d > 0))

    elif kind == "elu":
        neg = np.exp(np.minimum(d, 0.0)) - 1.0
        out = Tensor(np.where(d > 0, d, neg), _parents=(x,))

        def _bw(g):
            accumulate_grad(x, g * np.where(d > 0, 1.0, neg + 1.0))

    elif kind == "leaky_relu":
        s = float(slope if slope is not None else 0.01)
        out = Tensor(np.where(d > 0, d, s * d), _parents=(x,))

        def _bw(g):
            accumulate_grad(x, g * np.where(d > 0, 1.0, s))

    elif kind == "prelu":
        if not isinstance(slope, Parameter):
            raise ConfigError("prelu requires a slope Parameter")
        s = float(slope.data.reshape(-1)[0])
        out = Tensor(np.where(d > 0, d, s * d), _parents=(x, slope))

        def _bw(g):
            accumulate_grad(x, g * np.where(d > 0, 1.0, s))
            accumulate_grad(slope, np.array([np.sum(g * d * (d <= 0))], dtype=d.dtype).reshape(slope.data.shape))

    else:
        raise ConfigError(f"unknown activation kind {kind!r}; expected one of {ACTIVATIONS}")
    out._backward = _bw
    return out


def rows_l2_normalize(x: Tensor) -> Tensor:
    """Scale each row to unit Euclidean norm.

    Backward accounts for the norm's dependence on the whole row:
    dL/dx = (g - y * <g, y>_row) / ||x||.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"rows_l2_normalize expects a matrix, got shape {x.data.shape}")
    norms = np.sqrt(np.sum(x.data * x.data, axis=1, keepdims=True))
    if np.any(norms < 1e-12):
        row = int(np.argmin(norms))
        raise DegenerateEmbeddingError(f"row {row} has near-zero norm ({float(norms[row, 0]):.3e})")
    y = x.data / norms
    out = Tensor(y, _parents=(x,))

    def _bw(g):
        dots = np.sum(g * y, axis=1, keepdims=True)
        accumulate_grad(x, (g - y * dots) / norms)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dParam into every reachable Parameter's grad.

    The tape is consumed: graph links are dropped afterwards and calling
    backward twice on the same loss raises a ContractError.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if loss._consumed:
        raise ContractError("backward called on an already-consumed tape")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    for node in topo:
        node._consumed = True
        node._backward = None
        node._parents = ()
        if not isinstance(node, Parameter):
            node.grad = None
    loss._consumed = True
