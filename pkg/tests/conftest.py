import pytest

from hrl_workbench.envs import make_env
from hrl_workbench.harness import ExperimentConfig


@pytest.fixture
def make_config(tmp_path):
    """ExperimentConfig writing under tmp_path, with no persistent prompt cache."""

    def _make(**fields) -> ExperimentConfig:
        fields.setdefault("output_dir", str(tmp_path / "results"))
        fields.setdefault("cache_path", None)
        return ExperimentConfig(**fields)

    return _make


def find_seed(task_id: str, goal_text: str, limit: int = 3000) -> int:
    """First seed whose sampled goal is `goal_text`."""
    env = make_env(task_id)
    for seed in range(limit):
        _, goal = env.reset(seed)
        if goal.text == goal_text:
            return seed
    raise AssertionError(f"no seed below {limit} samples {goal_text!r}")


@pytest.fixture
def seed_for():
    return find_seed
