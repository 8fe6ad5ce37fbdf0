# hrl_workbench/priors.py

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from hrl_workbench.core import FlagVector, GoalInstruction, PriorVector, Skill, TrajectorySummary, dense_ids
from hrl_workbench.llm_bridge import PromptCache, RelevanceBackend, query_relevance

# λ reached by the exponential shape at the end of annealing, before it is pinned to zero
EXP_FLOOR = 0.01


class AnnealSchedule(BaseModel):
    """λ clock over high-level decision steps."""

    model_config = ConfigDict(frozen=True)

    total_decision_steps: int = Field(..., gt=0)
    anneal_fraction: float = Field(1.0, gt=0.0, le=1.0)
    shape: Literal["linear", "cosine", "exponential"] = "linear"

    @property
    def horizon(self) -> float:
        return self.anneal_fraction * self.total_decision_steps


def lambda_at(schedule: AnnealSchedule, t: int) -> float:
    if t < 0:
        raise ValueError(f"decision index must be non-negative, got {t}")
    if t >= schedule.horizon:
        return 0.0
    frac = t / schedule.horizon
    if schedule.shape == "linear":
        value = 1.0 - frac
    elif schedule.shape == "cosine":
        value = 0.5 * (1.0 + math.cos(math.pi * frac))
    else:
        value = (EXP_FLOOR ** frac - EXP_FLOOR) / (1.0 - EXP_FLOOR)
    return min(1.0, max(0.0, value))


def assemble_flags(backend: RelevanceBackend, cache: PromptCache, goal: GoalInstruction,
                   traj: TrajectorySummary, skills: Sequence[Skill]) -> FlagVector:
    if not skills:
        raise ValueError("cannot assemble flags for an empty skill list")
    if not dense_ids(skills):
        raise ValueError("skills must be listed in id order with dense ids")
    return FlagVector(flags=tuple(query_relevance(backend, cache, goal, traj, s) for s in skills))


def _log_normalize(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x)
    return shifted - np.log(np.sum(np.exp(shifted)))


def log_softmax(flags: FlagVector | Sequence[float]) -> PriorVector:
    values = flags.flags if isinstance(flags, FlagVector) else flags
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("log_softmax needs at least one entry")
    return PriorVector(log_probs=tuple(float(v) for v in _log_normalize(x)))


def softmax(logits: Sequence[float]) -> np.ndarray:
    return np.exp(_log_normalize(np.asarray(logits, dtype=np.float64)))


def uniform_prior(k: int) -> PriorVector:
    return PriorVector(log_probs=(-math.log(k),) * k)


@dataclass(frozen=True)
class CategoricalDistribution:
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def __len__(self) -> int:
        return len(self.log_probs)

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(len(self.log_probs), p=self.probs))

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(len(self.log_probs), size=n, p=self.probs)


def biased_distribution(policy_logits: Sequence[float], p_cs: PriorVector, lam: float) -> CategoricalDistribution:
    """Categorical over skills with logits `policy_logits + lam * p_cs`."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    logits = np.asarray(policy_logits, dtype=np.float64)
    if logits.shape != (len(p_cs),):
        raise ValueError(f"{logits.size} policy logits for a prior over {len(p_cs)} skills")
    return CategoricalDistribution(_log_normalize(logits + lam * np.asarray(p_cs.log_probs)))
