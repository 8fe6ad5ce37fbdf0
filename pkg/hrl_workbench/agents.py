# hrl_workbench/agents.py

import logging
import os
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from hrl_workbench.core import DecisionRecord, PriorVector
from hrl_workbench.envs import Environment
from hrl_workbench.errors import CheckpointFormatError
from hrl_workbench.priors import biased_distribution, softmax

logger = logging.getLogger(__name__)

CHECKPOINT_DECIMALS = 10


# --- Hyperparameters ---
class PolicyHyper(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.05, gt=0)
    value_rate: float = Field(0.1, gt=0, le=1)
    discount: float = Field(0.95, ge=0, le=1)
    clip_ratio: float = Field(0.2, gt=0)
    epochs: int = Field(4, ge=1)


class QHyper(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.2, gt=0, le=1)
    discount: float = Field(0.95, ge=0, le=1)
    temperature: float = Field(1.0, gt=0, description="Boltzmann temperature over Q values")


class Agent(Protocol):
    requires_prior: bool
    learns: bool

    def select_action(self, state_key: str, p_cs: PriorVector, lam: float,
                      rng: np.random.Generator, env: Environment | None = None) -> int: ...

    def observe(self, record: DecisionRecord) -> None: ...

    def end_episode(self, records: Sequence[DecisionRecord]) -> None: ...


# --- Math ---
def discounted_returns(rewards: Sequence[float], gamma: float, bootstrap: float = 0.0) -> list[float]:
    returns = []
    running = bootstrap
    for r in reversed(rewards):
        running = r + gamma * running
        returns.append(running)
    return returns[::-1]


def clipped_surrogate(new_logits: np.ndarray, old_logits: np.ndarray, action: int,
                      advantage: float, clip: float) -> float:
    ratio = softmax(new_logits)[action] / softmax(old_logits)[action]
    return float(min(ratio * advantage, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantage))


def surrogate_gradient(new_logits: np.ndarray, old_logits: np.ndarray, action: int,
                       advantage: float, clip: float) -> np.ndarray:
    """Gradient of `clipped_surrogate` with respect to `new_logits`; zero where the clip is active."""
    p_new = softmax(new_logits)
    ratio = p_new[action] / softmax(old_logits)[action]
    if (advantage > 0 and ratio > 1.0 + clip) or (advantage < 0 and ratio < 1.0 - clip):
        return np.zeros_like(p_new)
    onehot = np.zeros_like(p_new)
    onehot[action] = 1.0
    return advantage * ratio * (onehot - p_new)


def update_policy_gradient(policy: "SoftmaxPolicy", episode: Sequence[DecisionRecord]) -> "SoftmaxPolicy":
    """Clipped-ratio update of the unbiased logits from one finished episode.

    λ never enters: the records only tell which actions were taken.
    """
    if not episode:
        return policy
    hyper = policy.hyper
    last = episode[-1]
    bootstrap = 0.0 if last.terminal else policy.value(last.next_state_key)
    returns = discounted_returns([r.reward for r in episode], hyper.discount, bootstrap)
    advantages = [g - policy.value(r.state_key) for r, g in zip(episode, returns)]
    old = {r.state_key: policy.logits(r.state_key) for r in episode}

    for _ in range(hyper.epochs):
        grads: dict[str, np.ndarray] = {}
        for record, advantage in zip(episode, advantages):
            if advantage == 0.0:
                continue
            g = surrogate_gradient(policy.logits(record.state_key), old[record.state_key],
                                   record.skill_id, advantage, hyper.clip_ratio)
            grads[record.state_key] = grads.get(record.state_key, 0.0) + g
        for state_key, g in grads.items():
            policy.logits_table[state_key] = policy.logits(state_key) + hyper.learning_rate * g

    for record, g in zip(episode, returns):
        v = policy.value(record.state_key)
        policy.value_table[record.state_key] = v + hyper.value_rate * (g - v)
    return policy


def update_q(qtable: "QTable", record: DecisionRecord) -> "QTable":
    hyper = qtable.hyper
    row = qtable.row(record.state_key)
    future = 0.0 if record.terminal else float(np.max(qtable.row(record.next_state_key)))
    target = record.reward + hyper.discount * future
    row[record.skill_id] += hyper.learning_rate * (target - row[record.skill_id])
    qtable.q[record.state_key] = row
    return qtable


def select_action(agent: Agent, state_key: str, p_cs: PriorVector, lam: float,
                  rng: np.random.Generator, env: Environment | None = None) -> int:
    return agent.select_action(state_key, p_cs, lam, rng, env=env)


# --- Checkpoint tables ---
def _write_table(path: Path, rows: Mapping[str, Sequence[float]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for key in sorted(rows):
            if "\t" in key or "\n" in key:
                raise CheckpointFormatError(f"state key {key!r} contains a tab or newline", str(path), None)
            values = "\t".join(f"{v:.{CHECKPOINT_DECIMALS}f}" for v in rows[key])
            handle.write(f"{key}\t{values}\n")


def _read_table(path: Path, width: int) -> dict[str, np.ndarray]:
    rows = {}
    with open(path, encoding="utf-8", newline="\n") as handle:
        for lineno, line in enumerate(handle, start=1):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != width + 1:
                raise CheckpointFormatError(f"expected {width} values, found {len(fields) - 1}", str(path), lineno)
            try:
                values = np.array([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise CheckpointFormatError(str(exc), str(path), lineno) from None
            if not np.all(np.isfinite(values)):
                raise CheckpointFormatError("non-finite value", str(path), lineno)
            rows[fields[0]] = values
    return rows


def _values_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.values{path.suffix}")


# --- Learners ---
class SoftmaxPolicy:
    """Tabular softmax policy with a state-value baseline, trained by clipped-ratio policy gradient."""

    requires_prior = False
    learns = True

    def __init__(self, k: int, hyper: PolicyHyper | None = None):
        self.k = k
        self.hyper = hyper or PolicyHyper()
        self.logits_table: dict[str, np.ndarray] = {}
        self.value_table: dict[str, float] = {}

    def logits(self, state_key: str) -> np.ndarray:
        row = self.logits_table.get(state_key)
        return np.zeros(self.k) if row is None else row.copy()

    def value(self, state_key: str) -> float:
        return self.value_table.get(state_key, 0.0)

    def select_action(self, state_key, p_cs, lam, rng, env=None) -> int:
        return biased_distribution(self.logits(state_key), p_cs, lam).sample(rng)

    def observe(self, record: DecisionRecord) -> None:
        pass

    def end_episode(self, records: Sequence[DecisionRecord]) -> None:
        update_policy_gradient(self, records)

    def save_table(self, path: str | os.PathLike) -> None:
        path = Path(path)
        _write_table(path, self.logits_table)
        _write_table(_values_path(path), {k: [v] for k, v in self.value_table.items()})

    def load_table(self, path: str | os.PathLike) -> None:
        path = Path(path)
        self.logits_table = _read_table(path, self.k)
        values = _values_path(path)
        self.value_table = {k: float(v[0]) for k, v in _read_table(values, 1).items()} if values.exists() else {}
        logger.info("Loaded %d policy rows from %s", len(self.logits_table), path)


class QTable:
    """Tabular Q-learner acting by Boltzmann sampling over Q plus the prior bias."""

    requires_prior = False
    learns = True

    def __init__(self, k: int, hyper: QHyper | None = None):
        self.k = k
        self.hyper = hyper or QHyper()
        self.q: dict[str, np.ndarray] = {}

    def row(self, state_key: str) -> np.ndarray:
        row = self.q.get(state_key)
        return np.zeros(self.k) if row is None else row.copy()

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(r))) for r in self.q.values()), default=0.0)

    def select_action(self, state_key, p_cs, lam, rng, env=None) -> int:
        return biased_distribution(self.row(state_key) / self.hyper.temperature, p_cs, lam).sample(rng)

    def observe(self, record: DecisionRecord) -> None:
        update_q(self, record)

    def end_episode(self, records: Sequence[DecisionRecord]) -> None:
        pass

    def save_table(self, path: str | os.PathLike) -> None:
        _write_table(Path(path), self.q)

    def load_table(self, path: str | os.PathLike) -> None:
        self.q = _read_table(Path(path), self.k)
        logger.info("Loaded %d Q rows from %s", len(self.q), path)


# --- Baselines ---
class OracleAgent:
    """Follows the environment's ground-truth state machine. The upper bound."""

    requires_prior = False
    learns = False

    def select_action(self, state_key, p_cs, lam, rng, env=None) -> int:
        if env is None:
            raise ValueError("the oracle agent needs the live environment")
        return env.oracle_next()

    def observe(self, record: DecisionRecord) -> None:
        pass

    def end_episode(self, records: Sequence[DecisionRecord]) -> None:
        pass


class SayCanAgent:
    """Greedy on the prior alone, with no affordance term; queries the bridge at every decision."""

    requires_prior = True
    learns = False

    def select_action(self, state_key, p_cs, lam, rng, env=None) -> int:
        # argmax returns the first maximum, so ties go to the lowest id
        return int(np.argmax(p_cs.log_probs))

    def observe(self, record: DecisionRecord) -> None:
        pass

    def end_episode(self, records: Sequence[DecisionRecord]) -> None:
        pass
