"""Tabular autoregressive token policy over small vocabularies.

A policy owns one logit vector per (state, prefix) pair and emits
variable-length token responses that end with a terminator token or get
truncated at ``max_len``.  Everything is small enough to enumerate, which is
what makes exact response-level entropies and exact gradient checks possible
downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Hard ceiling on the number of complete responses an exact enumeration is
# allowed to touch.  |V|^max_len beyond this means the caller asked for an
# exact quantity on a policy that is not desk-scale any more.
ENUMERATION_BUDGET = 10**6


class EnumerationBudgetError(RuntimeError):
    """Raised when an exact enumeration would exceed ENUMERATION_BUDGET paths."""


@dataclass(frozen=True)
class Vocabulary:
    """Token alphabet shared by a policy and an environment."""

    size: int
    terminator_id: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError("vocabulary needs at least one content token plus terminator")
        if not 0 <= self.terminator_id < self.size:
            raise ValueError(f"terminator_id {self.terminator_id} outside vocabulary of size {self.size}")

    @property
    def content_ids(self) -> list[int]:
        return [t for t in range(self.size) if t != self.terminator_id]


@dataclass
class Response:
    """One sampled response: tokens plus the per-token stats recorded at sampling time.

    ``logprobs[k]`` is log pi(tokens[k] | state, tokens[:k]) and ``entropies[k]``
    is the Shannon entropy of that same conditional distribution, both under the
    policy that generated the sample.
    """

    tokens: list[int]
    logprobs: list[float]
    entropies: list[float]

    def __post_init__(self) -> None:
        if not (len(self.tokens) == len(self.logprobs) == len(self.entropies)):
            raise ValueError("tokens, logprobs and entropies must have equal length")
        if not self.tokens:
            raise ValueError("a response has at least one token (the terminator)")

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def surprisal(self) -> float:
        """Negative log probability of the whole response under the sampling policy."""
        return -sum(self.logprobs)


@dataclass
class TablePolicy:
    """Lazily materialized logit table keyed by (state, prefix).

    States are opaque hashable keys (strings in practice); prefixes are the
    exact token tuples emitted so far within the current response.  Missing
    entries read as zero logits, i.e. a uniform conditional distribution.
    """

    vocab: Vocabulary
    max_len: int
    logits: dict[tuple[str, tuple[int, ...]], np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")

    def logit_vector(self, state: str, prefix: tuple[int, ...]) -> np.ndarray:
        """Return the live logit array for (state, prefix), materializing zeros on first touch."""
        if len(prefix) >= self.max_len:
            raise ValueError(f"prefix of length {len(prefix)} has no successor under max_len={self.max_len}")
        key = (state, tuple(prefix))
        vec = self.logits.get(key)
        if vec is None:
            vec = np.zeros(self.vocab.size)
            self.logits[key] = vec
        return vec

    def copy(self) -> TablePolicy:
        return TablePolicy(
            vocab=self.vocab,
            max_len=self.max_len,
            logits={k: v.copy() for k, v in self.logits.items()},
        )


def token_distribution(policy: TablePolicy, state: str, prefix: tuple[int, ...]) -> np.ndarray:
    """Conditional next-token distribution softmax(logits) at (state, prefix).

    Returns a probability vector of length |V| with all entries positive and
    summing to 1 up to float roundoff.
    """
    z = policy.logit_vector(state, prefix)
    z = z - z.max()
    p = np.exp(z)
    return p / p.sum()


def _entropy(p: np.ndarray) -> float:
    return float(-(p * np.log(p)).sum())


def sample_response(policy: TablePolicy, state: str, rng: np.random.Generator) -> Response:
    """Sample one response token by token, recording logprob and conditional entropy per token.

    Sampling stops after the terminator token or once the response reaches
    max_len tokens, whichever comes first.
    """
    tokens: list[int] = []
    logprobs: list[float] = []
    entropies: list[float] = []
    while len(tokens) < policy.max_len:
        p = token_distribution(policy, state, tuple(tokens))
        tok = int(rng.choice(policy.vocab.size, p=p))
        tokens.append(tok)
        logprobs.append(float(np.log(p[tok])))
        entropies.append(_entropy(p))
        if tok == policy.vocab.terminator_id:
            break
    return Response(tokens=tokens, logprobs=logprobs, entropies=entropies)


def response_surprisal(policy: TablePolicy, state: str, tokens: list[int]) -> float:
    """Recompute -log pi(tokens | state) for a complete response under the current policy."""
    total = 0.0
    for k, tok in enumerate(tokens):
        p = token_distribution(policy, state, tuple(tokens[:k]))
        total -= float(np.log(p[tok]))
    return total


def _check_budget(policy: TablePolicy) -> None:
    if policy.vocab.size**policy.max_len > ENUMERATION_BUDGET:
        raise EnumerationBudgetError(
            f"|V|^max_len = {policy.vocab.size}^{policy.max_len} exceeds the "
            f"enumeration budget of {ENUMERATION_BUDGET} paths"
        )


def enumerate_responses(policy: TablePolicy, state: str) -> list[tuple[tuple[int, ...], float]]:
    """All complete responses at ``state`` with their probabilities.

    A path is complete when it ends with the terminator or reaches max_len.
    The returned probabilities sum to 1 exactly up to roundoff because the
    two stopping rules partition the outcome space.
    """
    _check_budget(policy)
    out: list[tuple[tuple[int, ...], float]] = []
    stack: list[tuple[tuple[int, ...], float]] = [((), 1.0)]
    while stack:
        prefix, prob = stack.pop()
        p = token_distribution(policy, state, prefix)
        for tok in range(policy.vocab.size):
            path = prefix + (tok,)
            path_prob = prob * float(p[tok])
            if tok == policy.vocab.terminator_id or len(path) == policy.max_len:
                out.append((path, path_prob))
            else:
                stack.append((path, path_prob))
    out.sort(key=lambda item: item[0])
    return out


def exact_response_entropy(policy: TablePolicy, state: str) -> float:
    """Exact Shannon entropy of the full response distribution at ``state``.

    Computed as sum_a pi(a) * (-log pi(a)) over the enumerated response space.
    Raises EnumerationBudgetError when |V|^max_len exceeds the path budget.
    """
    total = 0.0
    for _, prob in enumerate_responses(policy, state):
        if prob > 0.0:
            total -= prob * math.log(prob)
    return total


def pathwise_entropy(policy: TablePolicy, state: str) -> float:
    """Response entropy via the chain rule: E over responses of the summed
    per-position conditional entropies along the sampled path.

    Agrees with exact_response_entropy (the -sum p log p route) up to float
    roundoff; the two routes share only the tree enumeration, not the formula.
    """
    total = 0.0
    for tokens, prob in enumerate_responses(policy, state):
        if prob == 0.0:
            continue
        path_sum = 0.0
        for k in range(len(tokens)):
            path_sum += _entropy(token_distribution(policy, state, tuple(tokens[:k])))
        total += prob * path_sum
    return total


def mc_response_entropy(policy: TablePolicy, state: str, n_samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of the response entropy: mean surprisal of sampled responses."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    acc = 0.0
    for _ in range(n_samples):
        acc += sample_response(policy, state, rng).surprisal
    return acc / n_samples


def random_policy(vocab_size: int, max_len: int, rng: np.random.Generator,
                  scale: float = 1.5, state: str = "s") -> TablePolicy:
    """Policy with normal(0, scale) logits on every reachable prefix of one state."""
    policy = TablePolicy(vocab=Vocabulary(size=vocab_size, terminator_id=vocab_size - 1), max_len=max_len)
    _check_budget(policy)
    stack: list[tuple[int, ...]] = [()]
    while stack:
        prefix = stack.pop()
        policy.logits[(state, prefix)] = scale * rng.normal(size=vocab_size)
        for tok in range(vocab_size):
            path = prefix + (tok,)
            if tok != policy.vocab.terminator_id and len(path) < max_len:
                stack.append(path)
    return policy


CHECKPOINT_VERSION = 1


def save_checkpoint(policy: TablePolicy, path: str) -> None:
    """Write the policy to a versioned JSON checkpoint with a stable entry order."""
    entries = [
        [state, list(prefix), [float(x) for x in vec]]
        for (state, prefix), vec in sorted(policy.logits.items())
    ]
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "vocab_size": policy.vocab.size,
        "terminator_id": policy.vocab.terminator_id,
        "max_len": policy.max_len,
        "entries": entries,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path: str) -> TablePolicy:
    """Load a policy checkpoint, refusing unknown format versions."""
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    policy = TablePolicy(
        vocab=Vocabulary(size=doc["vocab_size"], terminator_id=doc["terminator_id"]),
        max_len=doc["max_len"],
    )
    for state, prefix, vec in doc["entries"]:
        policy.logits[(state, tuple(prefix))] = np.asarray(vec, dtype=float)
    return policy
