"""SGD and Adam over engine tensors, with optional per-parameter masks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import Tensor


class MissingGradientError(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    kind: str = "sgd"
    lr: float = 0.1
    momentum: float = 0.0
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        self.betas = tuple(self.betas)


class Optimizer:
    """Updates ``params`` in place from their ``.grad`` and then clears the grads.

    ``masks`` maps a parameter's position in ``params`` to a boolean array of
    the same shape; masked-out entries get no update and are forced back to 0.
    """

    def __init__(self, params: Sequence[Tensor], config: OptimizerConfig,
                 masks: dict[int, np.ndarray] | None = None):
        self.params = list(params)
        self.config = config
        self.masks = dict(masks or {})
        self.t = 0

    def _grads(self) -> list[np.ndarray]:
        out = []
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise MissingGradientError(f"parameter {p.name or i} has no gradient")
            g = p.grad
            if self.config.weight_decay:
                g = g + self.config.weight_decay * p.data
            if i in self.masks:
                g = g * self.masks[i]
            out.append(g)
        return out

    def step(self) -> None:
        grads = self._grads()
        self.t += 1
        self._apply(grads)
        for i, p in enumerate(self.params):
            if i in self.masks:
                p.data *= self.masks[i]
            p.grad = None

    def _apply(self, grads: list[np.ndarray]) -> None:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class SGD(Optimizer):
    def __init__(self, params, config, masks=None):
        super().__init__(params, config, masks)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def _apply(self, grads):
        lr, mu = self.config.lr, self.config.momentum
        for p, g, v in zip(self.params, grads, self.velocity):
            if mu:
                v *= mu
                v += g
                g = v
            p.data -= lr * g


class Adam(Optimizer):
    def __init__(self, params, config, masks=None):
        super().__init__(params, config, masks)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _apply(self, grads):
        b1, b2 = self.config.betas
        lr, eps = self.config.lr, self.config.eps
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def make_optimizer(params: Sequence[Tensor], config: OptimizerConfig,
                   masks: dict[int, np.ndarray] | None = None) -> Optimizer:
    cls = SGD if config.kind == "sgd" else Adam
    return cls(params, config, masks)
