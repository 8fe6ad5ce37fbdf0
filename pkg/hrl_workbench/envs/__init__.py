# hrl_workbench/envs/__init__.py

from hrl_workbench.envs.base import (
    DEFAULT_SHAPING_REWARD,
    TASK_REWARD,
    Environment,
    SkillOutcome,
    StepResult,
)
from hrl_workbench.envs.blockworld import BlockWorld
from hrl_workbench.envs.gridworld import GridWorld
from hrl_workbench.errors import UnknownTaskError

TASK_FAMILIES: dict[str, type[Environment]] = {
    task_id: family for family in (GridWorld, BlockWorld) for task_id in family.task_ids
}

GRID_TASKS = GridWorld.task_ids
BLOCK_TASKS = BlockWorld.task_ids


def family_of(task_id: str) -> type[Environment]:
    try:
        return TASK_FAMILIES[task_id]
    except KeyError:
        raise UnknownTaskError(f"unknown task {task_id!r}; known: {', '.join(TASK_FAMILIES)}") from None


def make_env(task_id: str, shaped: bool = False, shaping_reward: float = DEFAULT_SHAPING_REWARD) -> Environment:
    return family_of(task_id)(task_id, shaped=shaped, shaping_reward=shaping_reward)


def plans_for_goal(goal_text: str) -> list[list[str]] | None:
    """Ground-truth sub-goal plans for any known goal text, None when no family recognizes it."""
    for family in (GridWorld, BlockWorld):
        plans = family.plans_for_goal(goal_text)
        if plans is not None:
            return plans
    return None


__all__ = [
    "BLOCK_TASKS",
    "BlockWorld",
    "DEFAULT_SHAPING_REWARD",
    "Environment",
    "GRID_TASKS",
    "GridWorld",
    "SkillOutcome",
    "StepResult",
    "TASK_FAMILIES",
    "TASK_REWARD",
    "family_of",
    "make_env",
    "plans_for_goal",
]
