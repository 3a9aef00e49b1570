"""Tabular group-based policy-gradient trainer with optional advantage modulation.

One training step collects N rollouts per prompt, turns group rewards into
span advantages, optionally modulates them by the entropy coefficients, and
applies one (or more) analytic-gradient updates of a clipped surrogate with
exact enumeration-based entropy/KL regularizers.  Every step is a pure
function of (config, seed): rerunning a config reproduces the metrics log
byte for byte.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import modulation as mod
from .advantage import AdvantageTable, compute_advantages
from .envs import REWARD_SCHEMES, make_env
from .policy import TablePolicy, enumerate_responses, save_checkpoint, token_distribution
from .rollout import Group, collect_group, filter_degenerate_groups

LOSSES = ("grpo_clip", "dapo_token", "gspo_seq")


@dataclass
class TrainConfig:
    """Everything a run needs; serializes to the experiment config file."""

    env_kind: str = "key-chain"
    env_seed: int = 0
    env_overrides: dict = field(default_factory=dict)
    reward_scheme: str = "sparse"
    estimator: str = "grpo"
    aem_mode: str = "aem"
    aem_lambda: float = 1.0
    aem_eps: float = 1e-8
    loss: str = "grpo_clip"
    clip_low: float = 0.2
    clip_high: float = 0.2
    kl_coef: float = 0.01
    entropy_coef: float = 0.0
    lr: float = 0.05
    group_size: int = 8
    prompts_per_step: int = 4
    steps: int = 60
    epochs: int = 1
    filter_mode: str = "off"
    ckpt_every: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.aem_mode not in mod.MODES:
            raise ValueError(f"aem_mode must be one of {mod.MODES}, got {self.aem_mode!r}")
        if self.reward_scheme not in REWARD_SCHEMES:
            raise ValueError(f"reward_scheme must be one of {sorted(REWARD_SCHEMES)}")
        if not (0.0 < self.clip_low < 1.0 and 0.0 < self.clip_high < 1.0):
            raise ValueError("clip_low and clip_high must lie in (0, 1)")
        if self.lr <= 0.0 or self.group_size < 2 or self.steps < 1 or self.epochs < 1:
            raise ValueError("lr > 0, group_size >= 2, steps >= 1, epochs >= 1 required")


@dataclass
class StepMetrics:
    """Scalar summaries of one step plus the per-span modulation diagnostics."""

    step: int
    mean_reward: float
    success_rate: float
    policy_entropy_estimate: float
    mean_alpha: float
    frac_positive_advantage: float
    loss_value: float
    spans: list = field(default_factory=list)

    def to_doc(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    policy: TablePolicy
    ref_policy: TablePolicy
    metrics: list[StepMetrics]
    timings: dict[str, float]


def _clip_active(ratio: float, advantage: float, clip_low: float, clip_high: float) -> bool:
    """True when the unclipped branch of min(ratio*A, clip(ratio)*A) is selected."""
    if advantage > 0.0:
        return ratio <= 1.0 + clip_high
    if advantage < 0.0:
        return ratio >= 1.0 - clip_low
    return True


def _clipped_term(ratio: float, advantage: float, clip_low: float, clip_high: float) -> float:
    clipped = min(max(ratio, 1.0 - clip_low), 1.0 + clip_high)
    return min(ratio * advantage, clipped * advantage)


class _GradAccum:
    """Logit-table gradient accumulator with lazy zero entries."""

    def __init__(self, vocab_size: int) -> None:
        self.vocab_size = vocab_size
        self.table: dict[tuple[str, tuple[int, ...]], np.ndarray] = {}

    def add(self, key: tuple[str, tuple[int, ...]], vec: np.ndarray) -> None:
        acc = self.table.get(key)
        if acc is None:
            self.table[key] = vec.copy()
        else:
            acc += vec


def _one_hot_minus_p(p: np.ndarray, tok: int) -> np.ndarray:
    """d log softmax(z)[tok] / d z."""
    g = -p.copy()
    g[tok] += 1.0
    return g


def surrogate_loss(
    policy: TablePolicy,
    groups: list[Group],
    tables: list[AdvantageTable],
    config: TrainConfig,
    ref_policy: TablePolicy | None = None,
    masked_keys: set[tuple[int, int, int]] | None = None,
) -> tuple[float, dict[tuple[str, tuple[int, ...]], np.ndarray]]:
    """Negated clipped objective plus regularizers, with its analytic logit gradient.

    tables[g] carries the (possibly modulated) advantage of each span of
    groups[g]; each span's recorded logprobs are the behavior policy's, so the
    importance ratio per token is exp(logprob_now - logprob_behavior).
    masked_keys are (group_idx, rollout, turn) triples excluded entirely.
    At the behavior policy all ratios are 1 and the per-token gradient of the
    unclipped surrogate reduces to -A * dlogpi.
    """
    masked_keys = masked_keys or set()
    dist_cache: dict[tuple[str, tuple[int, ...]], tuple[np.ndarray, np.ndarray]] = {}

    def dist(state: str, prefix: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        key = (state, prefix)
        hit = dist_cache.get(key)
        if hit is None:
            p = token_distribution(policy, state, prefix)
            hit = (p, np.log(p))
            dist_cache[key] = hit
        return hit

    # (advantage, state_key, tokens, behavior logprobs) per surviving span.
    span_rows = []
    for g_idx, (group, table) in enumerate(zip(groups, tables)):
        for span in group.spans:
            key = (span.rollout_index, span.turn_index)
            if (g_idx, *key) in masked_keys:
                continue
            span_rows.append((table.values[key], span.state_key, span.tokens, span.logprobs))

    grad = _GradAccum(policy.vocab.size)
    j_clip = 0.0
    n_spans = len(span_rows)
    total_tokens = sum(len(row[2]) for row in span_rows)

    for adv, state, tokens, behavior_lp in span_rows:
        length = len(tokens)
        if config.loss == "gspo_seq":
            # Sequence-level ratio: geometric mean of the per-token ratios.
            log_ratios = []
            for k, tok in enumerate(tokens):
                _, logp = dist(state, tuple(tokens[:k]))
                log_ratios.append(float(logp[tok]) - behavior_lp[k])
            seq_ratio = math.exp(sum(log_ratios) / length)
            j_clip += _clipped_term(seq_ratio, adv, config.clip_low, config.clip_high) / n_spans
            if adv != 0.0 and _clip_active(seq_ratio, adv, config.clip_low, config.clip_high):
                coeff = adv * seq_ratio / (n_spans * length)
                for k, tok in enumerate(tokens):
                    p, _ = dist(state, tuple(tokens[:k]))
                    grad.add((state, tuple(tokens[:k])), coeff * _one_hot_minus_p(p, tok))
            continue

        if config.loss == "grpo_clip":
            token_weight = 1.0 / (n_spans * length)
        else:  # dapo_token
            token_weight = 1.0 / total_tokens
        for k, tok in enumerate(tokens):
            p, logp = dist(state, tuple(tokens[:k]))
            ratio = math.exp(float(logp[tok]) - behavior_lp[k])
            j_clip += token_weight * _clipped_term(ratio, adv, config.clip_low, config.clip_high)
            if adv != 0.0 and _clip_active(ratio, adv, config.clip_low, config.clip_high):
                grad.add((state, tuple(tokens[:k])), (token_weight * adv * ratio) * _one_hot_minus_p(p, tok))

    j_reg = 0.0
    if (config.entropy_coef != 0.0 or config.kl_coef != 0.0) and n_spans > 0:
        if config.kl_coef != 0.0 and ref_policy is None:
            raise ValueError("kl_coef > 0 needs a reference policy")
        state_counts: dict[str, int] = {}
        for _, state, _, _ in span_rows:
            state_counts[state] = state_counts.get(state, 0) + 1
        for state, count in state_counts.items():
            weight = count / n_spans
            j_reg += weight * _regularizer_state(policy, ref_policy, state, config, grad, weight)

    # Loss is the negated objective; the accumulator holds dJ/dz, so flip it.
    loss = -(j_clip + j_reg)
    return loss, {key: -vec for key, vec in grad.table.items()}


def _regularizer_state(
    policy: TablePolicy,
    ref_policy: TablePolicy | None,
    state: str,
    config: TrainConfig,
    grad: _GradAccum,
    weight: float,
) -> float:
    """Exact entropy bonus and KL penalty at one state, accumulating dJ/dz in place.

    Enumerates the response space once: the entropy gradient weights each
    path's score by (surprisal - H), the KL gradient by (ref surprisal -
    surprisal); both use sum-over-positions score decompositions.
    """
    paths = enumerate_responses(policy, state)
    h = 0.0
    for _, prob in paths:
        if prob > 0.0:
            h -= prob * math.log(prob)

    kl = 0.0
    ref_logprob: dict[tuple[int, ...], float] = {}
    if config.kl_coef != 0.0:
        for tokens, prob in enumerate_responses(ref_policy, state):
            ref_logprob[tokens] = math.log(prob) if prob > 0.0 else -math.inf
        for tokens, prob in paths:
            if prob > 0.0:
                kl += prob * (math.log(prob) - ref_logprob[tokens])

    value = config.entropy_coef * h - config.kl_coef * kl

    for tokens, prob in paths:
        if prob <= 0.0:
            continue
        logprob = math.log(prob)
        coeff = config.entropy_coef * prob * (-logprob - h)
        if config.kl_coef != 0.0:
            coeff -= config.kl_coef * prob * (logprob - ref_logprob[tokens])
        if coeff == 0.0:
            continue
        for k, tok in enumerate(tokens):
            prefix = tuple(tokens[:k])
            p = token_distribution(policy, state, prefix)
            grad.add((state, prefix), (weight * coeff) * _one_hot_minus_p(p, tok))
    return value


def regularizer_terms(policy: TablePolicy, ref_policy: TablePolicy, states: list[str],
                      config: TrainConfig) -> tuple[float, float]:
    """Exact (entropy bonus, KL penalty) values averaged over the given states."""
    bonus = 0.0
    penalty = 0.0
    for state in states:
        paths = enumerate_responses(policy, state)
        h = -sum(p * math.log(p) for _, p in paths if p > 0.0)
        ref = {tokens: prob for tokens, prob in enumerate_responses(ref_policy, state)}
        kl = sum(p * (math.log(p) - math.log(ref[t])) for t, p in paths if p > 0.0)
        bonus += config.entropy_coef * h / len(states)
        penalty += config.kl_coef * kl / len(states)
    return bonus, penalty


def _rng_for(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *path]))


def train(
    config: TrainConfig,
    metrics_path: str | None = None,
    checkpoint_dir: str | None = None,
    mask_sign: int | None = None,
) -> TrainResult:
    """Run the full training loop described by the config.

    mask_sign, when given, drops every span whose sgn(A * (alpha - 1))
    equals it from the update (the masked-quadrant experiment); modulation
    coefficients are computed for the mask even when aem_mode is "off".
    """
    env = make_env(config.env_kind, seed=config.env_seed, **config.env_overrides)
    scheme = REWARD_SCHEMES[config.reward_scheme]
    policy = TablePolicy(vocab=env.vocab, max_len=env.max_len)
    ref_policy = policy.copy()

    timings = {"rollout": 0.0, "advantage": 0.0, "aem": 0.0, "update": 0.0, "total": 0.0}
    metrics: list[StepMetrics] = []
    metrics_fh = open(metrics_path, "w") if metrics_path else None
    if checkpoint_dir:
        save_checkpoint(policy, f"{checkpoint_dir}/policy_init.json")

    t_run = time.perf_counter()
    try:
        for step in range(config.steps):
            t0 = time.perf_counter()
            groups: list[Group] = []
            for p_idx in range(config.prompts_per_step):
                task = (step * config.prompts_per_step + p_idx) % env.task_count
                rng = _rng_for(config.seed, 1, step, p_idx)
                groups.append(collect_group(policy, env, task, config.group_size, scheme, rng))
            timings["rollout"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            trained = filter_degenerate_groups(groups, config.filter_mode)
            tables = [
                compute_advantages(g, config.estimator, env=env, policy=policy, scheme=scheme)
                for g in trained
            ]
            timings["advantage"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            want_alpha = config.aem_mode != "off" or mask_sign is not None
            if want_alpha:
                sets = mod.modulate_batch(
                    trained,
                    mode=config.aem_mode if config.aem_mode != "off" else "aem",
                    lam=config.aem_lambda,
                    eps=config.aem_eps,
                    rng=_rng_for(config.seed, 2, step),
                )
            else:
                sets = [_identity_modulation(g, config) for g in trained]
            if config.aem_mode != "off":
                applied = [mod.apply_modulation(t, s) for t, s in zip(tables, sets)]
            else:
                applied = tables
            masked = set()
            if mask_sign is not None:
                for g_idx, (group, table, mset) in enumerate(zip(trained, tables, sets)):
                    for span in group.spans:
                        key = (span.rollout_index, span.turn_index)
                        signal = table.values[key] * (mset.alpha[key] - 1.0)
                        if (signal > 0.0 and mask_sign > 0) or (signal < 0.0 and mask_sign < 0):
                            masked.add((g_idx, *key))
            timings["aem"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            loss_value = 0.0
            if trained:
                for epoch in range(config.epochs):
                    loss, grad = surrogate_loss(policy, trained, applied, config, ref_policy, masked)
                    if epoch == 0:
                        loss_value = loss
                    for key, gvec in grad.items():
                        vec = policy.logit_vector(key[0], key[1])
                        vec -= config.lr * gvec
            timings["update"] += time.perf_counter() - t0

            record = _step_metrics(step, groups, trained, applied, sets, loss_value)
            metrics.append(record)
            if metrics_fh:
                metrics_fh.write(json.dumps(record.to_doc(), sort_keys=True))
                metrics_fh.write("\n")
            if checkpoint_dir and config.ckpt_every and (step + 1) % config.ckpt_every == 0:
                save_checkpoint(policy, f"{checkpoint_dir}/policy_step_{step + 1:04d}.json")
    finally:
        if metrics_fh:
            metrics_fh.close()
    timings["total"] = time.perf_counter() - t_run

    if checkpoint_dir:
        save_checkpoint(policy, f"{checkpoint_dir}/policy_final.json")
    return TrainResult(policy=policy, ref_policy=ref_policy, metrics=metrics, timings=timings)


def masked_train(config: TrainConfig, mask_sign: int, metrics_path: str | None = None,
                 checkpoint_dir: str | None = None) -> TrainResult:
    """Train while zeroing the gradient of spans whose sgn(A * (alpha - 1)) matches mask_sign."""
    if mask_sign not in (1, -1):
        raise ValueError("mask_sign must be +1 or -1")
    return train(config, metrics_path=metrics_path, checkpoint_dir=checkpoint_dir, mask_sign=mask_sign)


def load_metrics(path: str) -> list[dict]:
    """Read a metrics JSONL file back into per-step dicts."""
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _identity_modulation(group: Group, config: TrainConfig) -> mod.ModulationSet:
    """Alpha identically 1 with no normalization computed (aem off)."""
    out = mod.ModulationSet(lam=config.aem_lambda, eps=config.aem_eps, degenerate=False)
    for span in group.spans:
        key = (span.rollout_index, span.turn_index)
        out.h_bar[key] = mod.response_entropy_proxy(span)
        out.h_tilde[key] = None
        out.alpha[key] = 1.0
    return out


def _step_metrics(step: int, collected: list[Group], trained: list[Group],
                  applied: list[AdvantageTable], sets: list[mod.ModulationSet],
                  loss_value: float) -> StepMetrics:
    rewards = [traj.reward for g in collected for traj in g.trajectories]
    successes = [traj.success for g in collected for traj in g.trajectories]
    h_bars = [mod.response_entropy_proxy(span) for g in collected for span in g.spans]

    span_docs = []
    alphas: list[float] = []
    n_pos = 0
    n_spans = 0
    for g_idx, (group, table, mset) in enumerate(zip(trained, applied, sets)):
        for span in group.spans:
            key = (span.rollout_index, span.turn_index)
            adv = table.values[key]
            alphas.append(mset.alpha[key])
            n_spans += 1
            n_pos += 1 if adv > 0.0 else 0
            span_docs.append([
                g_idx, key[0], key[1],
                mset.h_bar[key],
                mset.h_tilde[key],
                mset.alpha[key],
                adv,
            ])

    return StepMetrics(
        step=step,
        mean_reward=sum(rewards) / len(rewards) if rewards else 0.0,
        success_rate=sum(successes) / len(successes) if successes else 0.0,
        policy_entropy_estimate=sum(h_bars) / len(h_bars) if h_bars else 0.0,
        mean_alpha=sum(alphas) / len(alphas) if alphas else 1.0,
        frac_positive_advantage=n_pos / n_spans if n_spans else 0.0,
        loss_value=loss_value,
        spans=span_docs,
    )
