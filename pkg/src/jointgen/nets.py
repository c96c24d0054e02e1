"""Small fully-connected networks built on the autodiff tape."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class MLP:
    """Batch-first multilayer perceptron with a linear output layer.

    Inputs of shape (n, in_dim); multiple inputs are concatenated along the
    feature axis, which is how conditioning and noise are injected.
    """

    def __init__(self, name: str, in_dim: int, out_dim: int, hidden: int,
                 n_hidden: int, activation: str, rng: np.random.Generator,
                 leaky_slope: float = 0.2, zero_final: bool = False):
        if activation not in ("tanh", "leaky_relu", "relu"):
            raise ValueError(f"mlp: unknown activation {activation!r}")
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden = hidden
        self.n_hidden = n_hidden
        self.activation = activation
        self.leaky_slope = leaky_slope
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        dims = [in_dim] + [hidden] * n_hidden + [out_dim]
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            last = i == len(dims) - 2
            if zero_final and last:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))

    def __call__(self, *inputs: Tensor) -> Tensor:
        h = inputs[0] if len(inputs) == 1 else ad.concat(inputs, axis=1)
        if h.shape[1] != self.in_dim:
            raise ad.ShapeError(
                f"{self.name}: input has {h.shape[1]} features, expected {self.in_dim}"
            )
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add(ad.matmul(h, w), b)
            if i < last:
                if self.activation == "tanh":
                    h = ad.tanh(h)
                elif self.activation == "leaky_relu":
                    h = ad.leaky_relu(h, self.leaky_slope)
                else:
                    h = ad.relu(h)
        return h

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named.append((f"{self.name}.w{i}", w))
            named.append((f"{self.name}.b{i}", b))
        return named

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def hyperparameters(self) -> dict:
        return {
            "name": self.name,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "hidden": self.hidden,
            "n_hidden": self.n_hidden,
            "activation": self.activation,
            "leaky_slope": self.leaky_slope,
        }
