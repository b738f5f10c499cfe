"""Shared oracles for the test suite."""
from __future__ import annotations

import numpy as np

from safecompress import tensor as T
from safecompress.tensor import Tensor

FD_STEP = 1e-6


def numeric_grad(f, arrays: list[np.ndarray], i: int, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f(*arrays)`` w.r.t. ``arrays[i]``."""
    x = arrays[i]
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(*arrays)
        x[idx] = orig - h
        down = f(*arrays)
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_grad(build, arrays: list[np.ndarray], h: float = FD_STEP) -> float:
    """Max relative error between autograd and finite differences.

    ``build(*tensors)`` returns a graph node; a fixed random projection
    turns non-scalar outputs into a scalar loss.
    """
    out = build(*[Tensor(a) for a in arrays])
    proj = np.random.default_rng(12345).standard_normal(out.shape)

    def scalar(*arrs):
        return float((build(*[Tensor(a) for a in arrs]).data * proj).sum())

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    y = build(*leaves)
    T.tsum(T.mul(y, Tensor(proj))).backward()
    worst = 0.0
    for i, leaf in enumerate(leaves):
        num = numeric_grad(scalar, arrays, i, h)
        ana = leaf.grad if leaf.grad is not None else np.zeros_like(arrays[i])
        worst = max(worst, rel_error(ana, num))
    return worst


def away_from_zero(a: np.ndarray, margin: float = 0.05) -> np.ndarray:
    """Push entries away from the ReLU kink."""
    return np.where(np.abs(a) < margin, np.sign(a + 1e-300) * margin + a, a)


# op name -> (builder, input factory(rng))
def _shapes(rng):
    n, m = rng.integers(1, 5, size=2)
    return int(n), int(m)


def op_cases():
    def mk(rng, *shape):
        return rng.standard_normal(shape)

    cases = {
        "add": (lambda a, b: a + b, lambda r, n, m: [mk(r, n, m), mk(r, m)]),
        "sub": (lambda a, b: a - b, lambda r, n, m: [mk(r, n, m), mk(r, n, 1)]),
        "mul": (lambda a, b: a * b, lambda r, n, m: [mk(r, n, m), mk(r, n, m)]),
        "div": (lambda a, b: a / b, lambda r, n, m: [mk(r, n, m), 1.5 + r.random((n, m))]),
        "neg": (lambda a: -a, lambda r, n, m: [mk(r, n, m)]),
        "matmul": (lambda a, b: a @ b, lambda r, n, m: [mk(r, n, m), mk(r, m, 3)]),
        "linear": (lambda x, w, b: T.linear(x, w, b), lambda r, n, m: [mk(r, n, m), mk(r, m, 3), mk(r, 3)]),
        "relu": (T.relu, lambda r, n, m: [away_from_zero(mk(r, n, m))]),
        "exp": (T.exp, lambda r, n, m: [mk(r, n, m)]),
        "log": (T.log, lambda r, n, m: [0.5 + r.random((n, m)) * 2]),
        "sigmoid": (T.sigmoid, lambda r, n, m: [3 * mk(r, n, m)]),
        "sum": (lambda a: T.tsum(a), lambda r, n, m: [mk(r, n, m)]),
        "sum_axis0": (lambda a: T.tsum(a, axis=0), lambda r, n, m: [mk(r, n, m)]),
        "sum_axis1": (lambda a: T.tsum(a, axis=1), lambda r, n, m: [mk(r, n, m)]),
        "mean": (lambda a: T.mean(a), lambda r, n, m: [mk(r, n, m)]),
        "mean_axis1": (lambda a: T.mean(a, axis=1), lambda r, n, m: [mk(r, n, m)]),
        "reshape": (lambda a: T.reshape(a, (-1,)), lambda r, n, m: [mk(r, n, m)]),
        "concat": (lambda a, b: T.concat([a, b], axis=1), lambda r, n, m: [mk(r, n, m), mk(r, n, 2)]),
        "log_softmax": (T.log_softmax, lambda r, n, m: [3 * mk(r, n, m + 1)]),
        "softmax": (T.softmax, lambda r, n, m: [3 * mk(r, n, m + 1)]),
        "cross_entropy": (None, None),
        "cross_entropy_1d": (None, None),
        "bce_with_logits": (None, None),
    }
    return cases


def randomized_case(seed: int):
    """(op name, builder, inputs) for case ``seed``; cycles through every op."""
    cases = op_cases()
    names = list(cases)
    name = names[seed % len(names)]
    rng = np.random.default_rng([seed, 99])
    n, m = _shapes(rng)
    if name == "cross_entropy":
        labels = rng.integers(0, 5, n)
        return name, (lambda z: T.cross_entropy(z, labels)), [3 * rng.standard_normal((n, 5))]
    if name == "cross_entropy_1d":
        label = int(rng.integers(0, 5))
        return name, (lambda z: T.cross_entropy(z, label)), [3 * rng.standard_normal(5)]
    if name == "bce_with_logits":
        t = rng.integers(0, 2, (n, 1)).astype(float)
        return name, (lambda z: T.bce_with_logits(z, t)), [3 * rng.standard_normal((n, 1))]
    build, make = cases[name]
    return name, build, make(rng, n, m)
