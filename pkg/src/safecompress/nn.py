"""Dense layers used by the attack networks."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "linear"):
        # normal weights, zero biases
        self.weight = Tensor(rng.standard_normal((n_in, n_out)) * math.sqrt(2.0 / n_in),
                             requires_grad=True, name=f"{name}.W")
        self.bias = Tensor(np.zeros(n_out), requires_grad=True, name=f"{name}.b")
        self.name = name

    def __call__(self, x) -> Tensor:
        return T.linear(x, self.weight, self.bias, name=self.name)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class MLP:
    """Stack of :class:`Linear` layers with ReLU between them.

    ``final_relu`` also rectifies the last layer, which is what the attack
    streams want before fusion.
    """

    def __init__(self, dims: Sequence[int], rng: np.random.Generator, name: str = "mlp",
                 final_relu: bool = False):
        self.layers = [Linear(a, b, rng, f"{name}.{i}") for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))]
        self.final_relu = final_relu

    def __call__(self, x) -> Tensor:
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1 or self.final_relu:
                h = T.relu(h)
        return h

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]
