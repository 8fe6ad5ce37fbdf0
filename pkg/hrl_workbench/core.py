# hrl_workbench/core.py

import math
from typing import Any, Mapping, Sequence

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_TRAJ_WINDOW = 2
NORMALIZATION_TOLERANCE = 1e-9

# Separator used by render_traj; skill descriptions may not contain it.
TRAJ_SEPARATOR = ", "


# --- Domain types ---
class Skill(BaseModel):
    """A named temporally-extended action. `executor_ref` points into the owning environment's skill table."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0)
    description: str
    executor_ref: Any = Field(default=None, exclude=True, repr=False)

    @field_validator("description")
    @classmethod
    def _check_description(cls, value: str) -> str:
        if not value:
            raise ValueError("skill description must be non-empty")
        if "\n" in value or "\t" in value:
            raise ValueError(f"skill description {value!r} contains a newline or tab")
        if TRAJ_SEPARATOR in value:
            raise ValueError(f"skill description {value!r} contains {TRAJ_SEPARATOR!r}")
        return value


class GoalInstruction(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str = Field(..., min_length=1)
    task_id: str

    @field_validator("text")
    @classmethod
    def _single_line(cls, value: str) -> str:
        if "\n" in value or "\t" in value:
            raise ValueError("goal text must be a single line")
        return value


class TrajectorySummary(BaseModel):
    """The last K completed skill descriptions, oldest first."""

    model_config = ConfigDict(frozen=True)

    recent_skills: tuple[str, ...] = ()
    window: int = Field(DEFAULT_TRAJ_WINDOW, ge=1)

    @model_validator(mode="after")
    def _check_length(self) -> "TrajectorySummary":
        if len(self.recent_skills) > self.window:
            raise ValueError(f"trajectory holds {len(self.recent_skills)} skills, window is {self.window}")
        return self

    def append(self, description: str) -> "TrajectorySummary":
        skills = (self.recent_skills + (description,))[-self.window:]
        return TrajectorySummary(recent_skills=skills, window=self.window)


class FlagVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    flags: tuple[int, ...]

    @field_validator("flags")
    @classmethod
    def _binary(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value:
            raise ValueError("flag vector must hold at least one flag")
        if any(f not in (0, 1) for f in value):
            raise ValueError(f"flags must be 0 or 1, got {value}")
        return value

    def __len__(self) -> int:
        return len(self.flags)


class PriorVector(BaseModel):
    """Per-skill log-probabilities; exp() sums to one."""

    model_config = ConfigDict(frozen=True)

    log_probs: tuple[float, ...]

    @field_validator("log_probs")
    @classmethod
    def _normalized(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("prior vector must hold at least one entry")
        if not all(math.isfinite(v) for v in value):
            raise ValueError("prior entries must be finite")
        total = math.fsum(math.exp(v) for v in value)
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValueError(f"prior is not normalized (sum of probabilities {total!r})")
        return value

    def __len__(self) -> int:
        return len(self.log_probs)


class DecisionRecord(BaseModel):
    """One high-level decision: enough to learn from and to report on."""

    model_config = ConfigDict(frozen=True)

    state_key: str
    skill_id: int = Field(..., ge=0)
    lambda_used: float = Field(..., ge=0.0, le=1.0)
    reward: float
    next_state_key: str
    terminal: bool
    success: bool


# --- Canonical encodings ---
def render_traj(summary: TrajectorySummary) -> str:
    return TRAJ_SEPARATOR.join(summary.recent_skills)


def canonical_state_key(observation: Mapping[str, Any]) -> str:
    """Serialize a high-level observation as `key=value` pairs in sorted key order."""
    parts = []
    for key in sorted(observation):
        value = observation[key]
        if isinstance(value, (list, tuple, set, frozenset)):
            items = sorted(value) if isinstance(value, (set, frozenset)) else value
            value = ",".join(str(v) for v in items) or "none"
        elif value is None:
            value = "none"
        parts.append(f"{key}={value}")
    return ";".join(parts)


def dense_ids(skills: Sequence[Skill]) -> bool:
    return [s.id for s in skills] == list(range(len(skills)))
