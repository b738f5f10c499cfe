import numpy as np
import pytest

from safecompress import tensor as T
from safecompress.data import LabeledDataset, SyntheticSpec, generate_synthetic
from safecompress.model import FineTuneConfig, build_mlp, fine_tune, task_accuracy, train_rounds
from safecompress.optim import OptimizerConfig, make_optimizer


def test_dense_build():
    m = build_mlp([8, 16, 4], 1.0, 0)
    assert m.mask.density == 1.0
    assert [w.shape for w in m.weights] == [(8, 16), (16, 4)]


def test_sparse_build_within_budget():
    m = build_mlp([8, 64, 64, 4], 0.1, 0)
    assert m.mask.density <= 0.1
    assert m.mask_violations() == 0


def test_build_deterministic():
    a, b = build_mlp([8, 64, 64, 4], 0.1, 5), build_mlp([8, 64, 64, 4], 0.1, 5)
    assert a.mask == b.mask
    for x, y in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(x.data, y.data)


def _blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    x = rng.standard_normal((n, 2)) * 0.5 + np.where(y[:, None] == 1, 3.0, -3.0)
    return LabeledDataset(x, y, 2)


def test_separable_blobs_reach_full_train_accuracy():
    data = _blobs()
    model = build_mlp([2, 16, 2], 0.5, 1)
    train_rounds(model, data, 500, 32, OptimizerConfig("sgd", lr=0.05, momentum=0.9), seed=0)
    assert task_accuracy(model, data) >= 0.99


def test_masked_positions_stay_zero_through_training():
    train, _ = generate_synthetic(SyntheticSpec(n_train=100, n_test=10), 0)
    model = build_mlp([32, 40, 40, 10], 0.1, 2)
    train_rounds(model, train, 100, 16, OptimizerConfig("sgd", lr=0.1, momentum=0.9), seed=0)
    assert model.mask_violations() == 0
    assert model.iterations_done == 100


def test_loss_decreases_on_fixed_batch():
    train, _ = generate_synthetic(SyntheticSpec(n_train=32, n_test=10), 1)
    model = build_mlp([32, 20, 10], 0.3, 3)
    x, y = train.features, train.labels
    start = T.cross_entropy(T.Tensor(model.logits(x)), y).item()
    opt = make_optimizer(model.parameters(), OptimizerConfig("sgd", lr=0.01), model.weight_masks())
    for _ in range(20):
        T.cross_entropy(model(x), y).backward()
        opt.step()
    assert T.cross_entropy(T.Tensor(model.logits(x)), y).item() <= start


def test_constant_logits_predict_class_zero():
    data = LabeledDataset(np.random.default_rng(0).standard_normal((40, 3)), np.repeat(np.arange(4), 10), 4)
    model = build_mlp([3, 5, 4], 1.0, 0)
    for p in model.parameters():
        p.data = np.zeros_like(p.data)
    assert task_accuracy(model, data) == 0.25


class _Lookup:
    def __init__(self, preds):
        self.preds = np.asarray(preds)

    def predict(self, x):
        return self.preds


def test_perfect_lookup():
    y = np.array([0, 2, 1, 1, 0])
    assert task_accuracy(_Lookup(y), LabeledDataset(np.zeros((5, 1)), y, 3)) == 1.0


def test_hand_counted_fixture():
    labels = [0, 1, 2, 0, 1, 2, 0, 1, 2, 0]
    preds = [0, 1, 2, 0, 1, 0, 1, 1, 0, 0]  # wrong at rows 5, 6, 8
    hits = sum(p == t for p, t in zip(preds, labels))
    assert hits == 7
    assert task_accuracy(_Lookup(preds), LabeledDataset(np.zeros((10, 1)), labels, 3)) == pytest.approx(0.7)


def test_fine_tune_keeps_mask_and_counts_steps():
    train, _ = generate_synthetic(SyntheticSpec(n_train=100, n_test=10), 0)
    model = build_mlp([32, 40, 10], 0.2, 4)
    digest = model.mask.digest()
    cfg = FineTuneConfig(epochs=3, batch_size=32)
    fine_tune(model, train, cfg, seed=0)
    assert model.mask.digest() == digest
    assert model.iterations_done == cfg.steps_for(100) == 12
    assert model.mask_violations() == 0


def test_dense_weight_grads_cover_inactive_positions():
    model = build_mlp([6, 8, 3], 0.2, 0)
    rng = np.random.default_rng(0)
    grads = model.dense_weight_grads(rng.standard_normal((10, 6)), rng.integers(0, 3, 10))
    assert any(np.count_nonzero(g[~m]) for g, m in zip(grads, model.mask.layers))
    assert all(p.grad is None for p in model.parameters())
