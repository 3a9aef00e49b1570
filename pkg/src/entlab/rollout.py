"""Group rollouts and the span bookkeeping that links tokens back to turns.

A group is N independent trajectories from the same prompt (an environment
task).  Every turn's response becomes one environment-reactive span; spans
carry the per-token entropies and logprobs recorded at sampling time, which
is what the modulation and the trainer consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .envs import Env, EnvState, RewardScheme, terminal_reward
from .policy import Response, TablePolicy, sample_response


@dataclass
class Turn:
    """One (state, response) interaction plus the environment's validity verdict."""

    state: EnvState
    response: Response
    valid: bool


@dataclass
class Trajectory:
    """A terminated episode: ordered turns, the final state and the terminal reward."""

    prompt_id: int
    turns: list[Turn]
    final_state: EnvState
    reward: float = 0.0

    @property
    def success(self) -> bool:
        return self.final_state.success

    @property
    def invalid_count(self) -> int:
        return sum(1 for turn in self.turns if not turn.valid)

    @property
    def token_stream(self) -> list[int]:
        """All generated tokens in order, terminators included."""
        out: list[int] = []
        for turn in self.turns:
            out.extend(turn.response.tokens)
        return out


@dataclass
class ResponseSpan:
    """The slice of a trajectory's token stream belonging to turn t of rollout i."""

    rollout_index: int
    turn_index: int
    token_range: tuple[int, int]
    entropies: list[float]
    logprobs: list[float]
    state_key: str
    tokens: list[int]

    @property
    def length(self) -> int:
        return self.token_range[1] - self.token_range[0]

    @property
    def h_bar(self) -> float:
        """Length-normalized entropy: mean per-token conditional entropy over the span."""
        return sum(self.entropies) / len(self.entropies)


@dataclass
class Group:
    """N trajectories for one prompt plus their parsed spans."""

    prompt_id: int
    trajectories: list[Trajectory]
    spans: list[ResponseSpan] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.spans:
            for i, traj in enumerate(self.trajectories):
                self.spans.extend(parse_spans(traj, rollout_index=i))

    @property
    def rewards(self) -> list[float]:
        return [traj.reward for traj in self.trajectories]


def parse_spans(trajectory: Trajectory, rollout_index: int = 0) -> list[ResponseSpan]:
    """Split a trajectory's token stream into per-turn spans by direct index arithmetic.

    Spans are ordered, non-overlapping and cover the stream exactly.
    """
    spans: list[ResponseSpan] = []
    cursor = 0
    for t, turn in enumerate(trajectory.turns):
        n = turn.response.length
        spans.append(
            ResponseSpan(
                rollout_index=rollout_index,
                turn_index=t,
                token_range=(cursor, cursor + n),
                entropies=list(turn.response.entropies),
                logprobs=list(turn.response.logprobs),
                state_key=turn.state.policy_key,
                tokens=list(turn.response.tokens),
            )
        )
        cursor += n
    return spans


def rollout_trajectory(
    policy: TablePolicy,
    env: Env,
    task_id: int,
    scheme: RewardScheme,
    rng: np.random.Generator,
) -> Trajectory:
    """Play one episode to termination and attach its terminal reward."""
    state = env.reset(task_id)
    turns: list[Turn] = []
    while not state.done:
        response = sample_response(policy, state.policy_key, rng)
        nxt, valid = env.step(state, response.tokens)
        turns.append(Turn(state=state, response=response, valid=valid))
        state = nxt
    traj = Trajectory(prompt_id=task_id, turns=turns, final_state=state)
    traj.reward = terminal_reward(traj, scheme)
    return traj


def collect_group(
    policy: TablePolicy,
    env: Env,
    prompt_id: int,
    n_rollouts: int,
    scheme: RewardScheme,
    rng: np.random.Generator,
) -> Group:
    """Collect N independent rollouts of one prompt.

    Each rollout runs on its own generator seeded from a single upfront draw,
    so the result is identical whether the rollouts execute sequentially or
    in parallel.
    """
    child_seeds = rng.integers(0, 2**63 - 1, size=n_rollouts)
    trajectories = [
        rollout_trajectory(policy, env, prompt_id, scheme, np.random.default_rng(int(s)))
        for s in child_seeds
    ]
    return Group(prompt_id=prompt_id, trajectories=trajectories)


def filter_degenerate_groups(groups: list[Group], mode: str = "off") -> list[Group]:
    """Optionally drop groups whose rewards are all identical (no learning signal)."""
    if mode == "off":
        return list(groups)
    if mode == "drop_uniform":
        return [g for g in groups if max(g.rewards) > min(g.rewards)]
    raise ValueError(f"unknown filter mode {mode!r}")


def write_trajectories(groups: list[Group], path: str) -> None:
    """Append-style JSONL dump of every trajectory in collection order."""
    with open(path, "w") as fh:
        for g_idx, group in enumerate(groups):
            for i, traj in enumerate(group.trajectories):
                record = {
                    "group": g_idx,
                    "rollout": i,
                    "prompt_id": traj.prompt_id,
                    "reward": traj.reward,
                    "success": traj.success,
                    "turns": [
                        {
                            "state": _state_doc(turn.state),
                            "tokens": turn.response.tokens,
                            "logprobs": turn.response.logprobs,
                            "entropies": turn.response.entropies,
                            "valid": turn.valid,
                        }
                        for turn in traj.turns
                    ],
                    "final_state": _state_doc(traj.final_state),
                }
                fh.write(json.dumps(record, sort_keys=True))
                fh.write("\n")


def read_trajectories(path: str) -> list[dict]:
    """Parse a trajectory JSONL file back into plain records."""
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _state_doc(state: EnvState) -> dict:
    return {
        "env_kind": state.env_kind,
        "task_id": state.task_id,
        "step_index": state.step_index,
        "features": list(state.features),
        "done": state.done,
        "success": state.success,
    }
