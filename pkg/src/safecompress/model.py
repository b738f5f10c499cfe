"""Masked feed-forward classifier and its training / evaluation loops."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .data import DataError, LabeledDataset
from .optim import OptimizerConfig, make_optimizer
from .sparse import SparseMask, er_init
from .tensor import Tensor


class TargetModel:
    """ReLU MLP whose weight matrices carry a :class:`SparseMask`.

    Biases are always dense.  Inactive weight positions hold exactly 0, so the
    forward pass uses the stored matrices directly and the gradient w.r.t. a
    weight matrix is dense (needed for gradient-based growth).
    """

    def __init__(self, layer_dims: Sequence[int], weights: Sequence[np.ndarray],
                 biases: Sequence[np.ndarray], mask: SparseMask, iterations_done: int = 0):
        self.layer_dims = [int(d) for d in layer_dims]
        self.weights = [Tensor(w, requires_grad=True, name=f"W{i}") for i, w in enumerate(weights)]
        self.biases = [Tensor(b, requires_grad=True, name=f"b{i}") for i, b in enumerate(biases)]
        self.mask = mask
        self.iterations_done = int(iterations_done)

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[Tensor]:
        return [*self.weights, *self.biases]

    def weight_masks(self) -> dict[int, np.ndarray]:
        """Masks keyed by position in :meth:`parameters`."""
        return {i: m for i, m in enumerate(self.mask.layers)}

    def copy(self) -> "TargetModel":
        return TargetModel(self.layer_dims, [w.data for w in self.weights],
                           [b.data for b in self.biases], self.mask.copy(), self.iterations_done)

    # forward passes -----------------------------------------------------
    def forward(self, x) -> Tensor:
        """Logits as a graph node (gradients flow to weights and biases)."""
        h = x if isinstance(x, Tensor) else Tensor(x)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = T.linear(h, w, b, name=f"layer{i}")
            if i < self.n_layers - 1:
                h = T.relu(h)
        return h

    __call__ = forward

    def hidden_and_logits(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Graph-free pass returning (input to the last layer, logits)."""
        h = np.asarray(x, dtype=np.float64)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w.data + b.data, 0.0)
        return h, h @ self.weights[-1].data + self.biases[-1].data

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.hidden_and_logits(x)[1]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return T.softmax_np(self.logits(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(self.logits(x), axis=1)

    def dense_weight_grads(self, x: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
        """d(mean CE)/dW for every position of every weight matrix, mask or not."""
        params = self.parameters()
        for p in params:
            p.grad = None
        T.cross_entropy(self.forward(x), y).backward()
        grads = [w.grad.copy() for w in self.weights]
        for p in params:
            p.grad = None
        return grads

    # invariants -----------------------------------------------------------
    def mask_violations(self) -> int:
        return int(sum(np.count_nonzero(w.data[~m]) for w, m in zip(self.weights, self.mask.layers)))

    def apply_mask(self) -> None:
        for w, m in zip(self.weights, self.mask.layers):
            w.data *= m

    def fingerprint(self) -> str:
        return self.mask.digest()


def he_sparse_init(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """He-normal init scaled by the layer's effective fan-in, zero where masked."""
    n_prev = mask.shape[0]
    density = max(mask.mean(), 1.0 / mask.size)
    w = rng.standard_normal(mask.shape) * math.sqrt(2.0 / (density * n_prev))
    return np.where(mask, w, 0.0)


def build_mlp(layer_dims: Sequence[int], omega: float, seed) -> TargetModel:
    if len(layer_dims) < 2:
        raise ValueError("an MLP needs at least input and output dims")
    pairs = list(zip(layer_dims[:-1], layer_dims[1:]))
    rng = np.random.default_rng(seed)
    mask = er_init(pairs, omega, rng)
    weights = [he_sparse_init(m, rng) for m in mask.layers]
    biases = [np.zeros(b) for _, b in pairs]
    return TargetModel(layer_dims, weights, biases, mask)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------
def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Endless stream of index batches; reshuffles after every pass."""
    if n < 1:
        raise DataError("empty dataset")
    batch_size = min(batch_size, n)
    perm, pos = rng.permutation(n), 0
    while True:
        if pos + batch_size > n:
            perm, pos = rng.permutation(n), 0
        yield perm[pos:pos + batch_size]
        pos += batch_size


def train_step(model: TargetModel, opt, x: np.ndarray, y: np.ndarray) -> float:
    loss = T.cross_entropy(model.forward(x), y)
    loss.backward()
    opt.step()
    model.iterations_done += 1
    return loss.item()


def train_rounds(model: TargetModel, data: LabeledDataset, iterations: int, batch_size: int,
                 optimizer: OptimizerConfig, seed=None) -> TargetModel:
    """Run exactly ``iterations`` minibatch steps in place and return ``model``."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(data) == 0:
        raise DataError("empty dataset")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    opt = make_optimizer(model.parameters(), optimizer, model.weight_masks())
    batches = minibatches(len(data), batch_size, rng)
    for _ in range(iterations):
        idx = next(batches)
        train_step(model, opt, data.features[idx], data.labels[idx])
    return model


@dataclass
class FineTuneConfig:
    epochs: int = 5
    lr: float = 5e-4
    batch_size: int = 128
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig("adam", lr=self.lr, weight_decay=self.weight_decay, betas=self.betas)

    def steps_for(self, n: int) -> int:
        return self.epochs * math.ceil(n / min(self.batch_size, n))


def fine_tune(model: TargetModel, data: LabeledDataset, config: FineTuneConfig, seed=None) -> TargetModel:
    """Adam fine-tuning for ``config.epochs`` passes over ``data`` (in place)."""
    if len(data) == 0:
        raise DataError("empty dataset")
    steps = config.steps_for(len(data))
    if steps == 0:
        return model
    return train_rounds(model, data, steps, config.batch_size, config.optimizer(), seed)


def task_accuracy(model: TargetModel, data: LabeledDataset) -> float:
    if len(data) == 0:
        raise DataError("empty dataset")
    return float(np.mean(model.predict(data.features) == data.labels))
