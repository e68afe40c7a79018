"""Tensor and Parameter types for the reverse-mode numeric core.

A Tensor wraps a row-major numpy array together with the links needed to
replay the chain rule: the tensors it was computed from and a closure that
pushes an upstream gradient into them.  Leaf tensors (inputs, constants)
have no links.  Parameter is a named leaf whose gradient buffer persists
across backward passes so an optimizer can consume it.

Precision is a process-global switch: float64 by default (required for
gradient checking), float32 selectable for speed.  Arrays are coerced to
the active dtype at construction time, so the switch must be thrown before
building models.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError

_PRECISIONS = {"f32": np.float32, "f64": np.float64}
_active_precision = "f64"


def set_precision(name: str) -> None:
    """Select the global float width ("f32" or "f64") for new tensors."""
    global _active_precision
    if name not in _PRECISIONS:
        raise ConfigError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}")
    _active_precision = name


def get_precision() -> str:
    return _active_precision


def active_dtype() -> type:
    return _PRECISIONS[_active_precision]


class Tensor:
    """A dense array plus the bookkeeping for reverse-mode differentiation.

    `_parents` and `_backward` are filled in by the operations in
    `signa.diffcore.ops`; user code never touches them directly.  `grad`
    is populated by `ops.backward` and holds dLoss/dself.
    """

    def __init__(self, data, _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=active_dtype())
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._item_error()

    def _item_error(self):
        from ..errors import ContractError

        raise ContractError(f"item() requires a scalar tensor, got shape {self.data.shape}")

    def __float__(self) -> float:
        return self.item()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """A trainable leaf tensor with a persistent, named gradient buffer.

    The gradient is allocated at construction and is all-zeros until a
    backward pass accumulates into it; `value` aliases the underlying
    array for callers that think in (value, grad, name) terms.
    """

    def __init__(self, data, name: str):
        super().__init__(data)
        self.name = name
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def zero_grads(params) -> None:
    """Reset the gradient buffer of every parameter to exactly zero."""
    for p in params:
        p.zero_grad()
