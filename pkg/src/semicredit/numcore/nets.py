"""Fully connected networks built on the tensor primitives."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError
from . import tensor as T
from .tensor import Tensor

_HIDDEN = {"relu": T.relu, "tanh": T.tanh}
_OUTPUT = {"identity": lambda x: x, "tanh": T.tanh}


class Mlp:
    """A stack of affine layers with a fixed hidden activation.

    Weights and biases initialize from U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
    Inputs are 2-d batches (rows are samples); a single sample must be
    passed as shape (1, d).
    """

    def __init__(
        self,
        layer_sizes: list[int],
        hidden_activation: str = "relu",
        output_activation: str = "identity",
        rng: np.random.Generator | None = None,
    ):
        if len(layer_sizes) < 2:
            raise ContractError("layer_sizes needs at least input and output widths")
        if hidden_activation not in _HIDDEN:
            raise ContractError(f"unknown hidden activation {hidden_activation!r}")
        if output_activation not in _OUTPUT:
            raise ContractError(f"unknown output activation {output_activation!r}")
        if rng is None:
            rng = np.random.default_rng()
        self.layer_sizes = list(layer_sizes)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = np.sqrt(1.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=(fan_out,))
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(b, requires_grad=True))

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        named = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"{prefix}w{k}"] = w
            named[f"{prefix}b{k}"] = b
        return named

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def forward(self, x) -> Tensor:
        h = T.as_tensor(x)
        if h.data.ndim != 2:
            raise DimensionError(f"expected a (batch, {self.in_dim}) input, got shape {h.shape}")
        if h.data.shape[1] != self.in_dim:
            raise DimensionError(f"input width {h.data.shape[1]} does not match layer width {self.in_dim}")
        act = _HIDDEN[self.hidden_activation]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = T.matmul(h, w) + b
            if k < last:
                h = act(h)
        return _OUTPUT[self.output_activation](h)

    __call__ = forward

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Inference path on plain arrays; same op order as ``forward``."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise DimensionError(f"expected a (batch, {self.in_dim}) input, got shape {h.shape}")
        hidden = np.tanh if self.hidden_activation == "tanh" else lambda z: np.maximum(z, 0.0)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if k < last:
                h = hidden(h)
        if self.output_activation == "tanh":
            h = np.tanh(h)
        return h
