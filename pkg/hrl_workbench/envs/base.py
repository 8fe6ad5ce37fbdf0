# hrl_workbench/envs/base.py

import logging
from abc import ABC, abstractmethod
from typing import Any, ClassVar, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from hrl_workbench.core import GoalInstruction, Skill, TrajectorySummary, canonical_state_key

logger = logging.getLogger(__name__)

DEFAULT_SHAPING_REWARD = 0.1
TASK_REWARD = 1.0


class SkillOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    completed: bool
    primitive_steps_used: int = Field(0, ge=0)
    failure_reason: str | None = None

    @model_validator(mode="after")
    def _reason_only_on_failure(self) -> "SkillOutcome":
        if self.completed and self.failure_reason is not None:
            raise ValueError("a completed skill carries no failure reason")
        return self


class StepResult(NamedTuple):
    outcome: SkillOutcome
    reward: float
    terminal: bool
    success: bool


def failed(reason: str, steps: int = 0) -> SkillOutcome:
    return SkillOutcome(completed=False, primitive_steps_used=steps, failure_reason=reason)


class Environment(ABC):
    """A task family whose actions are skills that run to termination.

    Subclasses build layouts, run the scripted controllers and describe their
    ground-truth sub-goal plans; reward accounting and captioning live here.
    """

    task_ids: ClassVar[tuple[str, ...]] = ()

    def __init__(self, task_id: str, shaped: bool = False, shaping_reward: float = DEFAULT_SHAPING_REWARD):
        if task_id not in self.task_ids:
            raise ValueError(f"{type(self).__name__} does not host task {task_id!r}")
        self.task_id = task_id
        self.shaped = shaped
        self.shaping_reward = shaping_reward
        self._skills = [
            Skill(id=i, description=desc, executor_ref=tuple(desc.split(":")))
            for i, desc in enumerate(self.skill_descriptions(task_id))
        ]
        self._skill_index = {s.description: s.id for s in self._skills}
        self.goal: GoalInstruction | None = None
        self.history: list[tuple[str, bool]] = []
        self.done = False
        self._achieved: set[str] = set()

    # --- Task family description ---
    @classmethod
    @abstractmethod
    def skill_descriptions(cls, task_id: str) -> list[str]:
        ...

    @classmethod
    @abstractmethod
    def plans_for_goal(cls, goal_text: str) -> list[list[str]] | None:
        """Ground-truth sub-goal plans for a goal text of this family, or None if the text is foreign."""

    # --- Layout and controllers ---
    @abstractmethod
    def _build(self, goal_rng: np.random.Generator, layout_rng: np.random.Generator) -> str:
        """Lay out a fresh episode and return its goal text."""

    @abstractmethod
    def _run_skill(self, skill: Skill) -> SkillOutcome:
        ...

    @abstractmethod
    def _is_success(self) -> bool:
        ...

    @abstractmethod
    def observation(self) -> dict[str, Any]:
        ...

    @abstractmethod
    def subgoals_achieved(self) -> set[str]:
        ...

    @abstractmethod
    def oracle_next(self) -> int:
        ...

    @abstractmethod
    def render(self) -> str:
        ...

    # --- Shared episode mechanics ---
    def skills(self) -> list[Skill]:
        return list(self._skills)

    def skill_id(self, description: str) -> int:
        return self._skill_index[description]

    def reset(self, seed: int, goal_seed: int | None = None) -> tuple[dict[str, Any], GoalInstruction]:
        goal_rng = np.random.default_rng(seed if goal_seed is None else goal_seed)
        layout_rng = np.random.default_rng([seed, 1])
        text = self._build(goal_rng, layout_rng)
        self.goal = GoalInstruction(text=text, task_id=self.task_id)
        self.history = []
        self.done = False
        self._achieved = set()
        return self.observation(), self.goal

    def execute_skill(self, skill_id: int) -> StepResult:
        if self.goal is None or self.done:
            raise RuntimeError("execute_skill called outside an active episode")
        skill = self._skills[skill_id]
        outcome = self._run_skill(skill)
        self.history.append((skill.description, outcome.completed))
        success = self._is_success()
        reward = TASK_REWARD if success else 0.0
        if self.shaped and not success:
            fresh = self.subgoals_achieved() - self._achieved
            reward += self.shaping_reward * len(fresh)
        self._achieved |= self.subgoals_achieved()
        self.done = success
        if not outcome.completed:
            logger.debug("Skill %s failed: %s", skill.description, outcome.failure_reason)
        return StepResult(outcome, reward, success, success)

    def caption(self, window: int = 2) -> TrajectorySummary:
        completed = [desc for desc, ok in self.history if ok]
        return TrajectorySummary(recent_skills=tuple(completed[-window:]), window=window)

    def state_key(self) -> str:
        return canonical_state_key(self.observation())
