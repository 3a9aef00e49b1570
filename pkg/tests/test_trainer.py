"""Tests for the training loop: config validation, loss gradients, determinism."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from entlab.advantage import compute_advantages
from entlab.envs import REWARD_SCHEMES, make_env
from entlab.policy import (
    TablePolicy,
    enumerate_responses,
    exact_response_entropy,
    load_checkpoint,
)
from entlab.rollout import collect_group
from entlab.trainer import (
    LOSSES,
    TrainConfig,
    load_metrics,
    masked_train,
    regularizer_terms,
    surrogate_loss,
    train,
)

FAST = dict(
    env_overrides={"task_count": 2, "chain_len": 1, "n_content": 2, "key_len": 2},
    reward_scheme="binary",
    group_size=4,
    prompts_per_step=2,
    steps=3,
    lr=0.5,
)


def test_config_rejects_bad_fields():
    with pytest.raises(ValueError):
        TrainConfig(loss="ppo")
    with pytest.raises(ValueError):
        TrainConfig(aem_mode="sideways")
    with pytest.raises(ValueError):
        TrainConfig(reward_scheme="dense")
    with pytest.raises(ValueError):
        TrainConfig(clip_low=0.0)
    with pytest.raises(ValueError):
        TrainConfig(clip_high=1.0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(group_size=1)
    with pytest.raises(ValueError):
        TrainConfig(steps=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def _loss_inputs(config, jitter=0.0, jitter_seed=3):
    """Collect a couple of groups and the tables the trainer would feed the loss.

    Collection seeds are fixed to ones that give mixed rewards in every group,
    so the advantages are not all zero.  jitter > 0 shifts the policy after
    collection, so importance ratios move off 1 and both clip branches can be
    exercised.
    """
    env = make_env(config.env_kind, seed=config.env_seed, **config.env_overrides)
    scheme = REWARD_SCHEMES[config.reward_scheme]
    policy = TablePolicy(vocab=env.vocab, max_len=env.max_len)
    ref_policy = policy.copy()

    rng = np.random.default_rng(jitter_seed)
    groups = [
        collect_group(policy, env, task, 6, scheme, np.random.default_rng(28 + task))
        for task in range(2)
    ]
    assert all(len(set(g.rewards)) > 1 for g in groups)
    tables = [
        compute_advantages(g, config.estimator, env=env, policy=policy, scheme=scheme)
        for g in groups
    ]
    if jitter > 0.0:
        for group in groups:
            for span in group.spans:
                for k in range(len(span.tokens)):
                    vec = policy.logit_vector(span.state_key, tuple(span.tokens[:k]))
                    vec += rng.normal(scale=jitter, size=vec.shape)
    return policy, ref_policy, groups, tables


def _fd_check(policy, ref_policy, groups, tables, config, h=1e-6, tol=2e-6):
    """Central finite differences of the loss against every analytic grad entry."""
    loss0, grad = surrogate_loss(policy, groups, tables, config, ref_policy)
    assert math.isfinite(loss0)
    assert grad, "expected a nonempty gradient table"
    checked = 0
    for (state, prefix), gvec in grad.items():
        vec = policy.logit_vector(state, prefix)
        for tok in range(len(gvec)):
            vec[tok] += h
            up, _ = surrogate_loss(policy, groups, tables, config, ref_policy)
            vec[tok] -= 2 * h
            down, _ = surrogate_loss(policy, groups, tables, config, ref_policy)
            vec[tok] += h
            fd = (up - down) / (2 * h)
            assert abs(fd - gvec[tok]) <= tol * max(1.0, abs(gvec[tok])), (
                state, prefix, tok, fd, gvec[tok])
            checked += 1
    assert checked > 0


@pytest.mark.parametrize("loss", LOSSES)
def test_loss_gradient_matches_finite_differences(loss):
    config = TrainConfig(loss=loss, kl_coef=0.0, entropy_coef=0.0, **FAST)
    policy, ref_policy, groups, tables = _loss_inputs(config)
    _fd_check(policy, ref_policy, groups, tables, config)


@pytest.mark.parametrize("loss", LOSSES)
def test_loss_gradient_with_regularizers(loss):
    config = TrainConfig(loss=loss, kl_coef=0.05, entropy_coef=0.02, **FAST)
    policy, ref_policy, groups, tables = _loss_inputs(config)
    _fd_check(policy, ref_policy, groups, tables, config)


@pytest.mark.parametrize("loss", LOSSES)
def test_loss_gradient_off_behavior_policy(loss):
    """Ratios far from 1 select both clip branches; the gradient must track them."""
    config = TrainConfig(loss=loss, kl_coef=0.01, entropy_coef=0.0, **FAST)
    policy, ref_policy, groups, tables = _loss_inputs(config, jitter=0.5)
    _fd_check(policy, ref_policy, groups, tables, config)


def test_kl_coef_without_reference_raises():
    config = TrainConfig(kl_coef=0.1, **FAST)
    policy, _, groups, tables = _loss_inputs(config)
    with pytest.raises(ValueError):
        surrogate_loss(policy, groups, tables, config, ref_policy=None)


def test_regularizer_terms_match_exact_enumeration():
    env = make_env("key-chain", seed=0, task_count=2, chain_len=1)
    policy = TablePolicy(vocab=env.vocab, max_len=env.max_len)
    rng = np.random.default_rng(5)
    state = "key-chain#0#0"
    vec = policy.logit_vector(state, ())
    vec += rng.normal(scale=1.0, size=vec.shape)
    ref_policy = TablePolicy(vocab=env.vocab, max_len=env.max_len)

    config = TrainConfig(entropy_coef=0.3, kl_coef=0.7, **FAST)
    bonus, penalty = regularizer_terms(policy, ref_policy, [state], config)

    assert bonus == pytest.approx(0.3 * exact_response_entropy(policy, state), abs=1e-12)

    ref = dict(enumerate_responses(ref_policy, state))
    kl = sum(p * (math.log(p) - math.log(ref[t]))
             for t, p in enumerate_responses(policy, state) if p > 0.0)
    assert kl > 0.0
    assert penalty == pytest.approx(0.7 * kl, abs=1e-12)


def test_train_is_deterministic():
    config = TrainConfig(epochs=2, **FAST)
    first = train(config)
    second = train(config)
    docs_a = [m.to_doc() for m in first.metrics]
    docs_b = [m.to_doc() for m in second.metrics]
    assert json.dumps(docs_a, sort_keys=True) == json.dumps(docs_b, sort_keys=True)
    assert first.policy.logits.keys() == second.policy.logits.keys()
    for key, vec in first.policy.logits.items():
        assert np.array_equal(vec, second.policy.logits[key])


def test_lambda_zero_matches_modulation_off():
    base = dict(FAST, steps=5)
    off = train(TrainConfig(aem_mode="off", **base))
    flat = train(TrainConfig(aem_mode="aem", aem_lambda=0.0, aem_eps=0.0, **base))
    assert off.policy.logits.keys() == flat.policy.logits.keys()
    for key, vec in off.policy.logits.items():
        assert np.array_equal(vec, flat.policy.logits[key])
    for m_off, m_flat in zip(off.metrics, flat.metrics):
        assert m_off.mean_reward == m_flat.mean_reward
        assert m_flat.mean_alpha == pytest.approx(1.0, abs=1e-12)


def test_modulation_changes_the_run():
    """Once groups develop entropy spread, modulated updates leave the off path."""
    base = dict(
        env_overrides={"task_count": 4, "chain_len": 1},
        reward_scheme="binary",
        group_size=16,
        prompts_per_step=2,
        lr=2.0,
        steps=30,
    )
    off = train(TrainConfig(aem_mode="off", **base))
    on = train(TrainConfig(aem_mode="aem", aem_lambda=1.0, **base))
    assert any(abs(m.mean_alpha - 1.0) > 1e-9 for m in on.metrics)
    same = all(
        np.array_equal(vec, on.policy.logits[key])
        for key, vec in off.policy.logits.items()
        if key in on.policy.logits
    )
    assert not (same and off.policy.logits.keys() == on.policy.logits.keys())


def test_training_learns_the_task():
    config = TrainConfig(
        env_overrides={"task_count": 2, "chain_len": 1},
        reward_scheme="binary",
        aem_mode="off",
        lr=2.0,
        group_size=8,
        prompts_per_step=2,
        steps=40,
    )
    result = train(config)
    first = np.mean([m.success_rate for m in result.metrics[:5]])
    last = np.mean([m.success_rate for m in result.metrics[-5:]])
    assert last > first + 0.3
    assert last > 0.8


def test_metrics_log_round_trip(tmp_path):
    config = TrainConfig(**FAST)
    path = tmp_path / "metrics.jsonl"
    result = train(config, metrics_path=str(path))
    docs = load_metrics(str(path))
    assert docs == [m.to_doc() for m in result.metrics]
    keys = {
        "step", "mean_reward", "success_rate", "policy_entropy_estimate",
        "mean_alpha", "frac_positive_advantage", "loss_value", "spans",
    }
    assert set(docs[0]) == keys
    assert [d["step"] for d in docs] == list(range(config.steps))


def test_checkpoint_cadence(tmp_path):
    config = TrainConfig(**dict(FAST, steps=4, ckpt_every=2))
    result = train(config, checkpoint_dir=str(tmp_path))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == [
        "policy_final.json",
        "policy_init.json",
        "policy_step_0002.json",
        "policy_step_0004.json",
    ]
    final = load_checkpoint(str(tmp_path / "policy_final.json"))
    assert final.logits.keys() == result.policy.logits.keys()
    for key, vec in result.policy.logits.items():
        assert np.allclose(vec, final.logits[key])


def test_masked_train_validates_sign():
    with pytest.raises(ValueError):
        masked_train(TrainConfig(**FAST), mask_sign=0)


def test_masked_runs_diverge_by_sign():
    config = TrainConfig(
        env_overrides={"task_count": 4, "chain_len": 1},
        reward_scheme="binary",
        group_size=16,
        prompts_per_step=2,
        lr=2.0,
        steps=30,
    )
    up = masked_train(config, mask_sign=1)
    down = masked_train(config, mask_sign=-1)
    identical = all(
        np.array_equal(vec, down.policy.logits[key])
        for key, vec in up.policy.logits.items()
        if key in down.policy.logits
    )
    assert not (identical and up.policy.logits.keys() == down.policy.logits.keys())
