"""Diagnostic probes: coefficient/entropy-change consistency, martingale
residuals of the surprisal decomposition, and baseline-vs-modulated run
comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envs import Env, response_space
from .modulation import group_minmax_normalize, modulation_coeffs
from .policy import TablePolicy, enumerate_responses, sample_response, token_distribution
from .trainer import StepMetrics


@dataclass
class ConsistencyReport:
    """Per-response pairs (alpha - 1, MC entropy-change proxy) and their statistics.

    The proxy for the entropy change of reinforcing response a is
    -(S_a - H_mc): reinforcing a response likelier than average should raise
    concentration, and its coefficient should sit above 1.
    """

    n_states: int
    k_samples: int
    pearson_r: float
    ci_low: float
    ci_high: float
    sign_agreement: float
    n_pairs: int
    n_sign_pairs: int
    pairs: list[tuple[float, float]] = field(default_factory=list)


def consistency_probe(
    policy: TablePolicy,
    states: list[str],
    k_samples: int,
    rng: np.random.Generator,
    lam: float = 1.0,
    eps: float = 1e-8,
    n_bootstrap: int = 1000,
) -> ConsistencyReport:
    """Check that the modulation coefficients anticipate Monte-Carlo entropy changes.

    For each state, K sampled responses form a synthetic group: coefficients
    come from the standard pipeline over their entropy proxies, the entropy
    change proxy from their surprisals around the MC mean.  One pair per
    sampled response; sign agreement counts only pairs where both sides are
    nonzero.
    """
    pairs: list[tuple[float, float]] = []
    for state in states:
        responses = [sample_response(policy, state, rng) for _ in range(k_samples)]
        h_bars = [sum(r.entropies) / len(r.entropies) for r in responses]
        surprisals = [r.surprisal for r in responses]
        h_mc = sum(surprisals) / len(surprisals)
        h_tilde, degenerate = group_minmax_normalize(h_bars, eps)
        alphas = [1.0] * k_samples if degenerate else modulation_coeffs(h_tilde, lam, eps)
        for alpha, s in zip(alphas, surprisals):
            pairs.append((alpha - 1.0, -(s - h_mc)))

    if len(pairs) < 2:
        raise ValueError("consistency statistics need at least two pairs")
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    if xs.std() == 0.0 or ys.std() == 0.0:
        raise ValueError("consistency statistics undefined: a pair coordinate is constant")
    r = float(np.corrcoef(xs, ys)[0, 1])

    boot = np.empty(n_bootstrap)
    n = len(pairs)
    for b in range(n_bootstrap):
        idx = rng.integers(0, n, size=n)
        bx, by = xs[idx], ys[idx]
        if bx.std() == 0.0 or by.std() == 0.0:
            boot[b] = 0.0
        else:
            boot[b] = np.corrcoef(bx, by)[0, 1]
    ci_low, ci_high = (float(q) for q in np.percentile(boot, [2.5, 97.5]))

    nonzero = [(x, y) for x, y in pairs if x != 0.0 and y != 0.0]
    agree = sum(1 for x, y in nonzero if (x > 0.0) == (y > 0.0))
    return ConsistencyReport(
        n_states=len(states),
        k_samples=k_samples,
        pearson_r=r,
        ci_low=ci_low,
        ci_high=ci_high,
        sign_agreement=agree / len(nonzero) if nonzero else float("nan"),
        n_pairs=len(pairs),
        n_sign_pairs=len(nonzero),
        pairs=pairs,
    )


@dataclass
class DoobReport:
    """Martingale residual statistics of the surprisal decomposition at one state.

    For a sampled response, residual = total surprisal minus the summed
    per-position conditional entropies; its expectation is exactly zero.
    """

    state: str
    n_samples: int
    residual_mean: float
    residual_stderr: float
    per_length: dict[int, dict[str, float]]
    ok: bool


def doob_probe(policy: TablePolicy, state: str, n_samples: int, rng: np.random.Generator) -> DoobReport:
    """Monte-Carlo check that mean(surprisal - summed conditional entropies) ~ 0.

    Sampling a full response token by token is distributionally identical to
    sampling a leaf of the enumerated response tree, so the residual of each
    complete path is precomputed once and paths are drawn categorically;
    this keeps large n_samples cheap without changing the estimand.
    """
    paths = enumerate_responses(policy, state)
    probs = np.array([p for _, p in paths])
    residuals = np.empty(len(paths))
    lengths = np.empty(len(paths), dtype=int)
    for j, (tokens, prob) in enumerate(paths):
        entropy_sum = 0.0
        for k in range(len(tokens)):
            p = token_distribution(policy, state, tuple(tokens[:k]))
            entropy_sum -= float((p * np.log(p)).sum())
        surprisal = -math.log(prob) if prob > 0.0 else math.inf
        residuals[j] = surprisal - entropy_sum
        lengths[j] = len(tokens)

    idx = rng.choice(len(paths), size=n_samples, p=probs / probs.sum())
    sample = residuals[idx]
    mean = float(sample.mean())
    stderr = float(sample.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0

    per_length: dict[int, dict[str, float]] = {}
    for length in sorted(set(lengths[idx])):
        sel = sample[lengths[idx] == length]
        per_length[int(length)] = {"mean": float(sel.mean()), "count": int(sel.size)}

    ok = abs(mean) <= 4.0 * stderr if stderr > 0.0 else mean == 0.0
    return DoobReport(state=state, n_samples=n_samples, residual_mean=mean,
                      residual_stderr=stderr, per_length=per_length, ok=ok)


def doob_exact_residuals(policy: TablePolicy, state: str) -> dict[tuple[int, ...], float]:
    """Conditional residual mean at every reachable prefix, by exact enumeration.

    Each value is sum_y p(y|prefix) * (-log p(y|prefix) - H(prefix)), which is
    identically zero; the numbers returned measure only float roundoff.
    """
    out: dict[tuple[int, ...], float] = {}
    stack: list[tuple[int, ...]] = [()]
    while stack:
        prefix = stack.pop()
        p = token_distribution(policy, state, prefix)
        h = float(-(p * np.log(p)).sum())
        out[prefix] = float((p * (-np.log(p) - h)).sum())
        for tok in range(policy.vocab.size):
            path = prefix + (tok,)
            if tok != policy.vocab.terminator_id and len(path) < policy.max_len:
                stack.append(path)
    return out


@dataclass
class TransitionSummary:
    """Early/late entropy and final success comparison of two aligned runs."""

    n_steps: int
    quartile: int
    baseline_early_entropy: float
    modulated_early_entropy: float
    baseline_late_entropy: float
    modulated_late_entropy: float
    baseline_final_success: float
    modulated_final_success: float
    baseline_early_frac_positive: float
    modulated_early_frac_positive: float


def _series(metrics: list, name: str) -> list[float]:
    out = []
    for m in metrics:
        if isinstance(m, StepMetrics):
            out.append(getattr(m, name))
        else:
            out.append(m[name])
    return out


def transition_tracker(baseline: list, modulated: list) -> TransitionSummary:
    """Align a baseline run with a modulated run and summarize the entropy transition.

    Early/late values are means over the first/last quartile of steps; final
    success is the last-quartile mean success rate.  Both runs must cover the
    same number of steps.
    """
    if len(baseline) != len(modulated):
        raise ValueError("runs must have the same number of steps to compare")
    n = len(baseline)
    q = max(1, n // 4)

    def early(xs: list[float]) -> float:
        return sum(xs[:q]) / q

    def late(xs: list[float]) -> float:
        return sum(xs[n - q:]) / q

    b_ent = _series(baseline, "policy_entropy_estimate")
    m_ent = _series(modulated, "policy_entropy_estimate")
    b_succ = _series(baseline, "success_rate")
    m_succ = _series(modulated, "success_rate")
    b_pos = _series(baseline, "frac_positive_advantage")
    m_pos = _series(modulated, "frac_positive_advantage")
    return TransitionSummary(
        n_steps=n,
        quartile=q,
        baseline_early_entropy=early(b_ent),
        modulated_early_entropy=early(m_ent),
        baseline_late_entropy=late(b_ent),
        modulated_late_entropy=late(m_ent),
        baseline_final_success=late(b_succ),
        modulated_final_success=late(m_succ),
        baseline_early_frac_positive=early(b_pos),
        modulated_early_frac_positive=early(m_pos),
    )


def reachable_states(env: Env, limit: int = 10000) -> list[str]:
    """Policy keys of all non-terminal states reachable within the horizon, BFS order."""
    responses = response_space(env.vocab, env.max_len)
    keys: list[str] = []
    seen = set()
    frontier = []
    for task_id in range(env.task_count):
        state = env.reset(task_id)
        if state not in seen:
            seen.add(state)
            frontier.append(state)
            keys.append(state.policy_key)
    while frontier:
        nxt = []
        for state in frontier:
            for resp in responses:
                new_state, _ = env.step(state, resp)
                if not new_state.done and new_state not in seen:
                    seen.add(new_state)
                    nxt.append(new_state)
                    keys.append(new_state.policy_key)
                    if len(keys) >= limit:
                        raise ValueError(f"more than {limit} reachable states")
        frontier = nxt
    # Distinct policy keys in first-seen order (different raw states can share a key).
    out: list[str] = []
    for key in keys:
        if key not in out:
            out.append(key)
    return out
