"""Deterministic multi-turn token environments with sparse terminal rewards.

Three families, all sharing the same contract: an episode is a sequence of
(state, response) turns, dynamics are a pure function of (state, response),
and reward is assigned only at termination (success/failure plus a penalty
per invalid response).  Hidden task parameters (keys, goals, arms) are drawn
once from the environment seed, so replaying a trajectory's responses
reproduces its states exactly.

* key-chain: emit the secret multi-token key of each turn; any wrong or
  invalid response ends the episode as a failure, so each task has exactly
  one success path.
* grid-fetch: walk a small grid to a goal cell with movement-token
  responses, several moves per turn, clipped at the walls.
* bandit-chain: pick one arm per turn; only the terminal outcome reveals
  whether every pick was correct.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .policy import Vocabulary


@dataclass(frozen=True)
class EnvState:
    """Observable environment state at the start of a turn."""

    env_kind: str
    task_id: int
    step_index: int
    features: tuple[int, ...]
    done: bool = False
    success: bool = False

    @property
    def policy_key(self) -> str:
        """Hashable key the policy conditions on (kind, task and features, not raw step)."""
        feats = ",".join(str(f) for f in self.features)
        return f"{self.env_kind}#{self.task_id}#{feats}"


@dataclass(frozen=True)
class RewardScheme:
    """Terminal reward parameters: success/failure payoffs and a per-invalid-response penalty."""

    success: float = 10.0
    failure: float = 0.0
    invalid_penalty: float = -0.1

    def __post_init__(self) -> None:
        if not self.success > self.failure:
            raise ValueError("reward scheme must pay success strictly more than failure")


#: Named schemes selectable from config.  "sparse" is the default desk-scale
#: setting; "binary" is the plain 1/0 alternative with no invalid penalty.
REWARD_SCHEMES = {
    "sparse": RewardScheme(success=10.0, failure=0.0, invalid_penalty=-0.1),
    "binary": RewardScheme(success=1.0, failure=0.0, invalid_penalty=0.0),
}


def terminal_reward(trajectory, scheme: RewardScheme) -> float:
    """Reward of a terminated trajectory: outcome payoff plus invalid-response penalties."""
    final = trajectory.final_state
    if not final.done:
        raise ValueError("terminal_reward requires a terminated trajectory")
    base = scheme.success if final.success else scheme.failure
    return base + scheme.invalid_penalty * trajectory.invalid_count


def _content(tokens: list[int], terminator_id: int) -> list[int]:
    """Tokens before the first terminator (all tokens when truncation ended the response)."""
    out: list[int] = []
    for tok in tokens:
        if tok == terminator_id:
            break
        out.append(tok)
    return out


class Env(Protocol):
    kind: str
    vocab: Vocabulary
    max_len: int
    horizon: int
    task_count: int

    def reset(self, task_id: int) -> EnvState: ...

    def step(self, state: EnvState, tokens: list[int]) -> tuple[EnvState, bool]: ...


@dataclass
class KeyChainEnv:
    """Emit the turn's secret key exactly, or the episode ends in failure.

    A response is invalid when its content length differs from the key
    length; invalid or wrong responses terminate the episode immediately,
    which makes the full key sequence the unique success path.
    """

    task_count: int = 8
    seed: int = 0
    n_content: int = 2
    key_len: int = 2
    chain_len: int = 2
    horizon: int = 8
    kind: str = field(init=False, default="key-chain")

    def __post_init__(self) -> None:
        if self.chain_len > self.horizon:
            raise ValueError("chain_len cannot exceed the horizon")
        self.vocab = Vocabulary(size=self.n_content + 1, terminator_id=self.n_content)
        # Responses are at most key_len tokens: a correct key fills the whole
        # window, and the terminator only appears in (invalid) short responses.
        self.max_len = self.key_len
        rng = np.random.default_rng(np.random.SeedSequence([7, self.seed]))
        self.keys = [
            [tuple(int(t) for t in rng.integers(0, self.n_content, self.key_len)) for _ in range(self.chain_len)]
            for _ in range(self.task_count)
        ]

    def reset(self, task_id: int) -> EnvState:
        if not 0 <= task_id < self.task_count:
            raise ValueError(f"task_id {task_id} outside [0, {self.task_count})")
        return EnvState(env_kind=self.kind, task_id=task_id, step_index=0, features=(0,))

    def step(self, state: EnvState, tokens: list[int]) -> tuple[EnvState, bool]:
        if state.done:
            raise ValueError("step called on a terminated state")
        progress = state.features[0]
        content = _content(tokens, self.vocab.terminator_id)
        valid = len(content) == self.key_len
        correct = valid and tuple(content) == self.keys[state.task_id][progress]
        nxt_step = state.step_index + 1
        if correct:
            progress += 1
            success = progress == self.chain_len
            done = success or nxt_step >= self.horizon
        else:
            success = False
            done = True
        return (
            EnvState(
                env_kind=self.kind,
                task_id=state.task_id,
                step_index=nxt_step,
                features=(progress,),
                done=done,
                success=success,
            ),
            valid,
        )


# Movement tokens for grid-fetch: index into (dx, dy).
_MOVES = [(0, -1), (0, 1), (-1, 0), (1, 0)]


@dataclass
class GridFetchEnv:
    """Navigate a small grid to a goal cell; each turn executes up to a few moves.

    Off-grid moves clip at the walls.  A response with no movement tokens is
    invalid (wasted turn).  Success is reaching the goal at the end of a
    turn within the horizon.
    """

    task_count: int = 4
    seed: int = 0
    width: int = 4
    height: int = 4
    moves_per_turn: int = 2
    horizon: int = 8
    kind: str = field(init=False, default="grid-fetch")

    def __post_init__(self) -> None:
        self.vocab = Vocabulary(size=5, terminator_id=4)
        self.max_len = self.moves_per_turn + 1
        rng = np.random.default_rng(np.random.SeedSequence([11, self.seed]))
        self.tasks = []
        cells = [(x, y) for x in range(self.width) for y in range(self.height)]
        while len(self.tasks) < self.task_count:
            start = cells[int(rng.integers(len(cells)))]
            goal = cells[int(rng.integers(len(cells)))]
            dist = abs(start[0] - goal[0]) + abs(start[1] - goal[1])
            if 2 <= dist <= self.moves_per_turn * self.horizon:
                self.tasks.append((start, goal))

    def reset(self, task_id: int) -> EnvState:
        if not 0 <= task_id < self.task_count:
            raise ValueError(f"task_id {task_id} outside [0, {self.task_count})")
        start, _ = self.tasks[task_id]
        return EnvState(env_kind=self.kind, task_id=task_id, step_index=0, features=start)

    def step(self, state: EnvState, tokens: list[int]) -> tuple[EnvState, bool]:
        if state.done:
            raise ValueError("step called on a terminated state")
        x, y = state.features
        content = _content(tokens, self.vocab.terminator_id)
        valid = len(content) > 0
        for tok in content:
            dx, dy = _MOVES[tok]
            x = min(max(x + dx, 0), self.width - 1)
            y = min(max(y + dy, 0), self.height - 1)
        nxt_step = state.step_index + 1
        success = (x, y) == self.tasks[state.task_id][1]
        done = success or nxt_step >= self.horizon
        return (
            EnvState(
                env_kind=self.kind,
                task_id=state.task_id,
                step_index=nxt_step,
                features=(x, y),
                done=done,
                success=success,
            ),
            valid,
        )


@dataclass
class BanditChainEnv:
    """One arm choice per turn, judged only at the end of the chain.

    The first content token names the arm; trailing tokens are free text the
    environment ignores.  The observable state carries (turn, correct count),
    so dynamics stay a pure function of (state, response) while the reward
    still reveals nothing before termination.
    """

    task_count: int = 8
    seed: int = 0
    n_arms: int = 2
    chain_len: int = 4
    horizon: int = 8
    kind: str = field(init=False, default="bandit-chain")

    def __post_init__(self) -> None:
        if self.chain_len > self.horizon:
            raise ValueError("chain_len cannot exceed the horizon")
        self.vocab = Vocabulary(size=self.n_arms + 1, terminator_id=self.n_arms)
        self.max_len = 2
        rng = np.random.default_rng(np.random.SeedSequence([13, self.seed]))
        self.arms = [
            [int(a) for a in rng.integers(0, self.n_arms, self.chain_len)] for _ in range(self.task_count)
        ]

    def reset(self, task_id: int) -> EnvState:
        if not 0 <= task_id < self.task_count:
            raise ValueError(f"task_id {task_id} outside [0, {self.task_count})")
        return EnvState(env_kind=self.kind, task_id=task_id, step_index=0, features=(0, 0))

    def step(self, state: EnvState, tokens: list[int]) -> tuple[EnvState, bool]:
        if state.done:
            raise ValueError("step called on a terminated state")
        turn, n_correct = state.features
        content = _content(tokens, self.vocab.terminator_id)
        valid = len(content) > 0
        if valid and content[0] == self.arms[state.task_id][turn]:
            n_correct += 1
        nxt_step = state.step_index + 1
        done = nxt_step >= self.chain_len
        success = done and n_correct == self.chain_len
        return (
            EnvState(
                env_kind=self.kind,
                task_id=state.task_id,
                step_index=nxt_step,
                features=(nxt_step, n_correct),
                done=done,
                success=success,
            ),
            valid,
        )


_ENV_CLASSES = {
    "key-chain": KeyChainEnv,
    "grid-fetch": GridFetchEnv,
    "bandit-chain": BanditChainEnv,
}


def response_space(vocab: Vocabulary, max_len: int) -> list[list[int]]:
    """Every complete response (terminator-ended or max_len-truncated) over a vocabulary."""
    out: list[list[int]] = []
    stack: list[list[int]] = [[]]
    while stack:
        prefix = stack.pop()
        for tok in range(vocab.size):
            path = prefix + [tok]
            if tok == vocab.terminator_id or len(path) == max_len:
                out.append(path)
            else:
                stack.append(path)
    out.sort()
    return out


def verify_success_reachable(env: Env) -> None:
    """Exhaustive check that every task has at least one success trajectory within the horizon."""
    responses = response_space(env.vocab, env.max_len)
    for task_id in range(env.task_count):
        frontier = [env.reset(task_id)]
        seen = {frontier[0]}
        found = False
        while frontier and not found:
            nxt: list[EnvState] = []
            for state in frontier:
                for resp in responses:
                    new_state, _ = env.step(state, resp)
                    if new_state.success:
                        found = True
                        break
                    if not new_state.done and new_state not in seen:
                        seen.add(new_state)
                        nxt.append(new_state)
                if found:
                    break
            frontier = nxt
        if not found:
            raise ValueError(f"{env.kind} task {task_id} has no success trajectory within the horizon")


def make_env(kind: str, seed: int = 0, **overrides) -> Env:
    """Construct an environment by kind name and verify its tasks are solvable."""
    if kind not in _ENV_CLASSES:
        raise ValueError(f"unknown env kind {kind!r}; choose from {sorted(_ENV_CLASSES)}")
    env = _ENV_CLASSES[kind](seed=seed, **overrides)
    verify_success_reachable(env)
    return env


def reset(env_kind: str, task_id: int, seed: int) -> EnvState:
    """Convenience constructor: initial state of a default-parameter environment."""
    return make_env(env_kind, seed=seed).reset(task_id)
