"""Sparse connectivity: masks, Erdős–Rényi allocation, prune/grow rules.

Weight matrices are stored as ``(n_prev, n_cur)`` so a layer computes
``x @ W + b``.  Every function here is pure with respect to its array
arguments: masks and weights come back as fresh arrays.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class SparsityError(ValueError):
    pass


@dataclass(frozen=True)
class UpdateStrategy:
    prune: str
    grow: str

    def __post_init__(self):
        if self.prune not in ("magnitude", "threshold"):
            raise ValueError(f"unknown prune kind {self.prune!r}")
        if self.grow not in ("gradient", "random"):
            raise ValueError(f"unknown grow kind {self.grow!r}")

    @property
    def label(self) -> str:
        return f"{self.prune}+{self.grow}"

    @classmethod
    def parse(cls, label: str) -> "UpdateStrategy":
        prune, _, grow = label.partition("+")
        return cls(prune, grow)

    def __str__(self) -> str:
        return self.label


# Enumeration order doubles as the selection tie-break order.
STRATEGIES: tuple[UpdateStrategy, ...] = (
    UpdateStrategy("magnitude", "gradient"),
    UpdateStrategy("magnitude", "random"),
    UpdateStrategy("threshold", "gradient"),
    UpdateStrategy("threshold", "random"),
)


class SparseMask:
    """Per-layer boolean activation pattern plus the density budget ``omega``."""

    def __init__(self, layers: Sequence[np.ndarray], omega: float):
        if not 0.0 < omega <= 1.0:
            raise SparsityError(f"omega must be in (0, 1], got {omega}")
        self.layers = [np.asarray(m, dtype=bool).copy() for m in layers]
        self.omega = float(omega)

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.layers[i]

    def copy(self) -> "SparseMask":
        return SparseMask(self.layers, self.omega)

    def replace(self, i: int, layer: np.ndarray) -> "SparseMask":
        layers = list(self.layers)
        layers[i] = layer
        return SparseMask(layers, self.omega)

    @property
    def active_count(self) -> int:
        return int(sum(int(m.sum()) for m in self.layers))

    @property
    def total_count(self) -> int:
        return int(sum(m.size for m in self.layers))

    @property
    def density(self) -> float:
        return self.active_count / self.total_count

    @property
    def budget(self) -> int:
        """Largest active count allowed by ``omega``."""
        return budget_for(self.omega, self.total_count)

    def within_budget(self) -> bool:
        return self.active_count <= self.budget

    def digest(self) -> str:
        h = hashlib.sha256()
        for m in self.layers:
            h.update(np.asarray(m.shape, dtype="<u4").tobytes())
            h.update(np.packbits(m.ravel(), bitorder="little").tobytes())
        return h.hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMask):
            return NotImplemented
        return len(self) == len(other) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.layers, other.layers))

    def __repr__(self) -> str:
        return f"SparseMask(layers={len(self)}, active={self.active_count}/{self.total_count}, omega={self.omega})"


def budget_for(omega: float, total: int) -> int:
    # small slack so that e.g. 0.1 * 1000 is not floored to 99
    return int(math.floor(omega * total + 1e-9))


# --------------------------------------------------------------------------
# Erdős–Rényi allocation
# --------------------------------------------------------------------------
def er_probability(n_prev: int, n_cur: int, epsilon: float) -> float:
    """Connection probability of one position, capped at 1."""
    return min(1.0, epsilon * (n_cur + n_prev) / (n_cur * n_prev))


def expected_density(layer_dims: Sequence[tuple[int, int]], epsilon: float) -> float:
    total = sum(a * b for a, b in layer_dims)
    active = sum(er_probability(a, b, epsilon) * a * b for a, b in layer_dims)
    return active / total


def solve_epsilon(layer_dims: Sequence[tuple[int, int]], omega: float, tol: float = 1e-12) -> float:
    """Bisect for the ER coefficient whose expected global density is ``omega``."""
    _check_dims(layer_dims)
    if not 0.0 < omega <= 1.0:
        raise SparsityError(f"omega must be in (0, 1], got {omega}")
    # at this epsilon every layer is fully dense
    hi = max(a * b / (a + b) for a, b in layer_dims)
    if omega >= 1.0:
        return hi
    if expected_density(layer_dims, hi) < omega - 1e-12:
        raise SparsityError(f"omega={omega} is not reachable for layers {list(layer_dims)}")
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if expected_density(layer_dims, mid) < omega:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def er_init(layer_dims: Sequence[tuple[int, int]], omega: float, seed) -> SparseMask:
    """Draw an ER mask whose expected density is ``omega``.

    Each position is an independent Bernoulli draw.  When the draw overshoots
    the hard budget ``floor(omega * total)``, uniformly chosen active positions
    are switched off until the budget holds.
    """
    rng = np.random.default_rng(seed)
    epsilon = solve_epsilon(layer_dims, omega)
    layers = [rng.random((a, b)) < er_probability(a, b, epsilon) for a, b in layer_dims]
    mask = SparseMask(layers, omega)
    excess = mask.active_count - mask.budget
    if excess > 0:
        flat = np.concatenate([m.ravel() for m in layers])
        drop = rng.choice(np.flatnonzero(flat), size=excess, replace=False)
        flat[drop] = False
        bounds = np.cumsum([m.size for m in layers])[:-1]
        mask = SparseMask([part.reshape(m.shape) for part, m in zip(np.split(flat, bounds), layers)], omega)
    return mask


def _check_dims(layer_dims):
    if not layer_dims:
        raise SparsityError("need at least one layer")
    for a, b in layer_dims:
        if a < 1 or b < 1:
            raise SparsityError(f"layer dims must be >= 1, got {(a, b)}")


# --------------------------------------------------------------------------
# pruning
# --------------------------------------------------------------------------
def magnitude_prune(mask: np.ndarray, weights: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Deactivate the ``k`` active positions with the smallest ``|w|``.

    Ties are broken by flat index (lower index pruned first).
    """
    mask = np.asarray(mask, dtype=bool)
    _same_shape(mask, weights)
    active = np.flatnonzero(mask)
    if k < 0 or k > active.size:
        raise SparsityError(f"cannot prune {k} of {active.size} active weights")
    new_mask, new_w = mask.copy(), np.array(weights, dtype=np.float64)
    if k == 0:
        return new_mask, new_w
    order = np.argsort(np.abs(new_w.ravel()[active]), kind="stable")
    victims = active[order[:k]]
    new_mask.ravel()[victims] = False
    new_w.ravel()[victims] = 0.0
    return new_mask, new_w


def threshold_prune(mask: np.ndarray, weights: np.ndarray, tau: float,
                    cap: int | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Deactivate active positions with ``|w| < tau``; returns the pruned count.

    With ``cap`` set, at most ``cap`` positions go, the smallest first.
    """
    if tau < 0:
        raise SparsityError(f"tau must be >= 0, got {tau}")
    mask = np.asarray(mask, dtype=bool)
    _same_shape(mask, weights)
    below = mask & (np.abs(weights) < tau)
    count = int(below.sum())
    if cap is not None and count > cap:
        count = cap
    if cap is None:
        new_mask = mask & ~below
        new_w = np.where(below, 0.0, np.asarray(weights, dtype=np.float64))
        return new_mask, new_w, count
    new_mask, new_w = magnitude_prune(mask, weights, count)
    return new_mask, new_w, count


# --------------------------------------------------------------------------
# growth
# --------------------------------------------------------------------------
def _grow_pool(mask: np.ndarray, g: int, exclude: np.ndarray | None) -> np.ndarray:
    inactive = np.flatnonzero(~mask)
    if g < 0 or g > inactive.size:
        raise SparsityError(f"cannot grow {g} of {inactive.size} inactive positions")
    if exclude is None:
        return inactive
    preferred = np.flatnonzero(~mask & ~np.asarray(exclude, dtype=bool))
    return preferred if preferred.size >= g else inactive


def gradient_grow(mask: np.ndarray, dense_grads: np.ndarray, g: int,
                  exclude: np.ndarray | None = None) -> np.ndarray:
    """Activate the ``g`` inactive positions with the largest ``|dL/dw|``.

    ``exclude`` marks positions to avoid when enough others are available
    (used to keep just-pruned weights from being regrown at once).
    """
    mask = np.asarray(mask, dtype=bool)
    _same_shape(mask, dense_grads)
    pool = _grow_pool(mask, g, exclude)
    new_mask = mask.copy()
    if g == 0:
        return new_mask
    score = np.abs(np.asarray(dense_grads).ravel()[pool])
    # stable sort on -score keeps lower flat index first among ties
    chosen = pool[np.argsort(-score, kind="stable")[:g]]
    new_mask.ravel()[chosen] = True
    return new_mask


def random_grow(mask: np.ndarray, g: int, seed, exclude: np.ndarray | None = None) -> np.ndarray:
    """Activate ``g`` inactive positions uniformly without replacement."""
    mask = np.asarray(mask, dtype=bool)
    pool = _grow_pool(mask, g, exclude)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    new_mask = mask.copy()
    if g == 0:
        return new_mask
    new_mask.ravel()[rng.choice(pool, size=g, replace=False)] = True
    return new_mask


def _same_shape(mask, other):
    if np.shape(mask) != np.shape(other):
        raise SparsityError(f"mask shape {np.shape(mask)} != array shape {np.shape(other)}")


# --------------------------------------------------------------------------
# cardinality-preserving update
# --------------------------------------------------------------------------
def prune_fraction_at(round_index: int, total_rounds: int, initial: float, schedule: str = "cosine") -> float:
    """Prune fraction used in ``round_index`` (0-based)."""
    if schedule == "constant":
        return initial
    if schedule != "cosine":
        raise ValueError(f"unknown prune schedule {schedule!r}")
    if total_rounds <= 1:
        return initial
    return initial * 0.5 * (1.0 + math.cos(math.pi * round_index / (total_rounds - 1)))


def sparse_update(model, strategy: UpdateStrategy, prune_fraction: float, *,
                  growth_batch=None, tau: float = 1e-3, seed=None):
    """Return a pruned-and-regrown copy of ``model``; the original is untouched.

    Per layer: magnitude pruning removes ``ceil(p * active)`` weights,
    threshold pruning removes those under ``tau`` (capped at the same count);
    then exactly as many positions are grown, so the active count is conserved.
    Gradient growth scores positions by dense ``|dL/dw|`` on ``growth_batch``.
    """
    if not 0.0 <= prune_fraction <= 1.0:
        raise SparsityError(f"prune fraction must be in [0, 1], got {prune_fraction}")
    rng = np.random.default_rng(seed)
    cand = model.copy()
    weights = [w.data for w in cand.weights]
    mask = cand.mask
    pruned_masks, removed = [], []
    for i, (m, w) in enumerate(zip(mask.layers, weights)):
        k = math.ceil(prune_fraction * int(m.sum()) - 1e-12)
        if strategy.prune == "magnitude":
            new_m, new_w = magnitude_prune(m, w, k)
        else:
            new_m, new_w, k = threshold_prune(m, w, tau, cap=k)
        # growth never exceeds what was removed, so it is always feasible
        pruned_masks.append(new_m)
        removed.append(k)
        cand.weights[i].data = new_w

    cand.mask = SparseMask(pruned_masks, mask.omega)
    if strategy.grow == "gradient" and any(removed):
        if growth_batch is None:
            raise SparsityError("gradient growth needs a growth batch")
        grads = cand.dense_weight_grads(*growth_batch)
    grown = []
    for i, (m, k) in enumerate(zip(pruned_masks, removed)):
        just_pruned = mask.layers[i] & ~m
        if strategy.grow == "gradient":
            new_m = gradient_grow(m, grads[i], k, exclude=just_pruned) if k else m
        else:
            new_m = random_grow(m, k, rng, exclude=just_pruned)
        grown.append(new_m)
        cand.weights[i].data = np.where(new_m & ~m, 0.0, cand.weights[i].data)
    cand.mask = SparseMask(grown, mask.omega)
    return cand
