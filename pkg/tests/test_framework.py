import dataclasses

import numpy as np
import pytest

from safecompress import framework as F
from safecompress.attack import AttackConfig, make_split, train_attacker
from safecompress.data import SyntheticSpec, generate_synthetic
from safecompress.framework import (AdversarialState, ConfigError, RoundError, RunConfig, RunTrace,
                                    adversarial_objective, adversarial_train_step, run_baseline_prune_finetune,
                                    run_safecompress)
from safecompress.model import FineTuneConfig, build_mlp, train_rounds, train_step
from safecompress.optim import OptimizerConfig, make_optimizer
from safecompress.sparse import STRATEGIES


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(SyntheticSpec(n_classes=4, n_features=8, n_train=60, n_test=60), 0)


def tiny(**kw) -> RunConfig:
    cfg = RunConfig(omega=0.3, total_rounds=2, iterations_per_round=20, batch_size=16, hidden_dims=[16, 16],
                    finetune=FineTuneConfig(epochs=1, batch_size=32), attack=AttackConfig(epochs=2, finetune_epochs=1),
                    growth_batch_size=32, baseline_finetune_epochs=1)
    return dataclasses.replace(cfg, **kw)


def test_config_validation_names_field():
    with pytest.raises(ConfigError, match="omega"):
        tiny(omega=1.5).validate()
    with pytest.raises(ConfigError, match="alpha"):
        tiny(alpha=-0.1).validate()
    with pytest.raises(ConfigError, match="mode"):
        tiny(mode="xmia").validate()


def test_lr_milestones():
    cfg = RunConfig(total_rounds=10, lr=0.1)
    assert [cfg.lr_at(r) for r in (0, 4, 5, 7, 8)] == pytest.approx([0.1, 0.1, 0.01, 0.01, 0.001])


def test_no_prune_single_round_keeps_initial_mask(data):
    cfg = tiny(total_rounds=1, prune_fraction=0.0)
    model, trace = run_safecompress(cfg, *data, evaluate_final=False)
    initial = build_mlp([8, 16, 16, 4], cfg.omega, cfg.rng(F._INIT))
    assert model.mask == initial.mask
    assert trace.final_mask_hash == initial.mask.digest()


def test_trace_structure_and_audits(data):
    model, trace = run_safecompress(tiny(), *data)
    assert len(trace.rounds) == 2
    for rec in trace.rounds:
        assert [c.strategy for c in rec.candidates] == list(STRATEGIES)
        assert rec.selected in [c.candidate_id for c in rec.candidates]
        assert rec.active_before == rec.active_after
        assert set(rec.timings) == {"train", "attack", "candidates"}
    assert trace.audits_pass()
    assert model.mask.within_budget()
    assert trace.final is not None and trace.final.sparsity <= 0.3
    assert RunTrace.from_dict(trace.to_dict()).to_dict() == trace.to_dict()


def test_fixed_seed_is_deterministic(data):
    _, a = run_safecompress(tiny(seed=4), *data, evaluate_final=False)
    _, b = run_safecompress(tiny(seed=4), *data, evaluate_final=False)
    assert a.strategy_sequence == b.strategy_sequence
    assert a.final_mask_hash == b.final_mask_hash
    assert [r.to_dict()["candidates"] for r in a.rounds] == [r.to_dict()["candidates"] for r in b.rounds]


def test_mmia_scores_both_attacks(data):
    _, trace = run_safecompress(tiny(mode="mmia", alpha=0.3, total_rounds=1), *data, evaluate_final=False)
    for c in trace.rounds[0].candidates:
        assert set(c.mia_acc_pct) == {"black_box", "white_box"}
        expected = 0.3 * c.tm_scores["black_box"] + 0.7 * c.tm_scores["white_box"]
        assert c.tm_score_combined == pytest.approx(expected, rel=1e-12)


def test_stage_error_carries_round_index(data, monkeypatch):
    calls = {"n": 0}
    real = F.sparse_update

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] > 4:
            raise RuntimeError("boom")
        return real(*a, **k)

    monkeypatch.setattr(F, "sparse_update", flaky)
    with pytest.raises(RoundError) as info:
        run_safecompress(tiny(), *data, evaluate_final=False)
    assert info.value.round_index == 1
    assert "boom" in str(info.value)


def test_safety_attacker_does_not_touch_target(data):
    model = build_mlp([8, 16, 4], 0.5, 0)
    before = [p.data.tobytes() for p in model.parameters()]
    train_attacker("white_box", model, make_split(*data, 0), AttackConfig(epochs=2), seed=0)
    assert [p.data.tobytes() for p in model.parameters()] == before
    assert all(p.grad is None for p in model.parameters())


# --- adversarial training ------------------------------------------------
def _adv_setup(seed=0, omega=0.4):
    rng = np.random.default_rng(seed)
    model = build_mlp([8, 16, 4], omega, seed)
    x = rng.standard_normal((24, 8))
    y = rng.integers(0, 4, 24)
    flags = np.arange(24) < 12
    return model, x, y, flags


def test_beta_zero_matches_plain_step():
    model, x, y, flags = _adv_setup()
    twin = model.copy()
    state = AdversarialState.create(model, seed=0)
    cfg = OptimizerConfig("sgd", lr=0.1, momentum=0.9)
    adversarial_train_step(model, state, (x, y), flags, 0.0, make_optimizer(model.parameters(), cfg,
                                                                               model.weight_masks()))
    train_step(twin, make_optimizer(twin.parameters(), cfg, twin.weight_masks()), x[flags], y[flags])
    for a, b in zip(model.parameters(), twin.parameters()):
        assert a.data.tobytes() == b.data.tobytes()


def _mean_gain(model, adversary, x, y, flags):
    # the objective is CE + beta * gain, so the beta=1 / beta=0 difference is the gain
    return (adversarial_objective(model, adversary, x, y, flags, 1.0)
            - adversarial_objective(model, adversary, x, y, flags, 0.0))


def test_adversary_gain_rises_over_inner_step():
    for seed in range(5):
        model, x, y, flags = _adv_setup(seed)
        state = AdversarialState.create(model, lr=1e-3, seed=seed)
        before = _mean_gain(model, state.adversary, x, y, flags)
        frozen = make_optimizer(model.parameters(), OptimizerConfig("sgd", lr=1e-12), model.weight_masks())
        adversarial_train_step(model, state, (x, y), flags, 0.1, frozen)
        assert _mean_gain(model, state.adversary, x, y, flags) >= before


def test_target_objective_descends_on_fixed_batch():
    model, x, y, flags = _adv_setup(3)
    state = AdversarialState.create(model, seed=3)
    opt = make_optimizer(model.parameters(), OptimizerConfig("sgd", lr=0.01), model.weight_masks())
    start = adversarial_objective(model, state.adversary, x, y, flags, 0.1)
    for _ in range(50):
        # adversary frozen: the target alone descends on L + beta * G
        adversarial_train_step(model, state, (x, y), flags, 0.1, opt, inner_steps=0)
    assert adversarial_objective(model, state.adversary, x, y, flags, 0.1) <= start
    assert model.mask_violations() == 0


def test_adversarial_step_needs_flags():
    model, x, y, _ = _adv_setup()
    state = AdversarialState.create(model, seed=0)
    opt = make_optimizer(model.parameters(), OptimizerConfig("sgd", lr=0.1))
    with pytest.raises(ValueError, match="flags"):
        adversarial_train_step(model, state, (x, y), None, 0.1, opt)
    with pytest.raises(ValueError):
        adversarial_train_step(model, state, (x, y), np.zeros(24, bool), 0.1, opt)


def test_adversarial_run_keeps_invariants(data):
    model, trace = run_safecompress(tiny(adversarial_training=True), *data, evaluate_final=False)
    assert trace.audits_pass()
    assert model.mask_violations() == 0


# --- baseline ------------------------------------------------------------
def test_baseline_omega_one_is_dense_training(data):
    cfg = tiny(omega=1.0)
    model, trace = run_baseline_prune_finetune(cfg, *data, evaluate_final=False)
    ref = build_mlp([8, 16, 16, 4], 1.0, cfg.rng(F._INIT))
    for r in range(cfg.total_rounds):
        train_rounds(ref, data[0], cfg.iterations_per_round, cfg.batch_size, cfg.train_optimizer(r),
                     cfg.rng(F._TRAIN, r))
    for a, b in zip(model.parameters(), ref.parameters()):
        assert a.data.tobytes() == b.data.tobytes()


def test_baseline_sparsity_bound(data):
    model, trace = run_baseline_prune_finetune(tiny(omega=0.1), *data)
    assert model.mask.density <= 0.1
    assert all(m.sum() <= int(0.1 * m.size) for m in model.mask.layers)
    assert model.mask_violations() == 0
    assert trace.kind == "baseline" and len(trace.rounds) == 1 and trace.audits_pass()
