"""End-to-end learning-curve checks. Minutes each; run with `pytest -m slow`."""

import numpy as np
import pytest

from hrl_workbench.envs import make_env
from hrl_workbench.harness import ExperimentConfig, evaluate, run_training, sweep
from hrl_workbench.llm_bridge import PromptCache

pytestmark = pytest.mark.slow

SEEDS = "0-9"


def config_for(tmp_path, **fields):
    fields.setdefault("seeds", SEEDS)
    fields.setdefault("workers", 8)
    return ExperimentConfig(output_dir=str(tmp_path / "results"), cache_path=None, **fields)


def median_ett(results, config):
    reached = [r.metrics.episodes_to_threshold(config.threshold, config.window) for r in results.values()]
    return float(np.median([np.inf if e is None else e for e in reached]))


@pytest.mark.parametrize("task_id", ["UnlockReach", "KeyCorridorV0", "KeyCorridorV1", "DeskCleanUp", "SwapBlocks"])
def test_oracle_upper_bound(tmp_path, task_id):
    config = config_for(tmp_path, task_id=task_id, agent_kind="oracle", episodes=50, seeds="0")
    metrics = run_training(config)[0].metrics
    assert metrics.successes.mean() == 1.0


def test_sample_efficiency_ordering(tmp_path):
    base = config_for(tmp_path, task_id="KeyCorridorV0")
    results = sweep(base, ["llm_hrl", "shaped_hrl", "vanilla_hrl"])
    llm, shaped, vanilla = (median_ett(results[k], base) for k in ("llm_hrl", "shaped_hrl", "vanilla_hrl"))
    assert llm < shaped < vanilla
    assert llm <= 0.5 * vanilla


def test_avoid_constraint(tmp_path):
    base = config_for(tmp_path, task_id="KeyCorridorV1")
    results = sweep(base, ["llm_hrl", "vanilla_hrl"])

    def reached(kind):
        return sum(r.metrics.episodes_to_threshold(base.threshold, base.window) is not None
                   for r in results[kind].values())

    assert reached("llm_hrl") >= 8
    assert reached("vanilla_hrl") <= 3


@pytest.mark.parametrize("task_id, episodes", [("DeskCleanUp", 100), ("SwapBlocks", 100), ("SwapBlocks", 300)])
def test_tabular_priors_beat_plain_q_learning(tmp_path, task_id, episodes):
    base = config_for(tmp_path, task_id=task_id, episodes=episodes)
    results = sweep(base, ["llm_hrl", "vanilla_hrl"])
    wins = sum(results["llm_hrl"][s].metrics.final_success(20) > results["vanilla_hrl"][s].metrics.final_success(20)
               for s in base.seeds)
    assert wins > len(base.seeds) / 2


def test_longer_swap_training_does_not_hurt(tmp_path):
    short = run_training(config_for(tmp_path / "short", task_id="SwapBlocks", agent_kind="llm_hrl", episodes=100))
    long = run_training(config_for(tmp_path / "long", task_id="SwapBlocks", agent_kind="llm_hrl", episodes=300))
    assert (np.median([r.metrics.final_success(20) for r in long.values()])
            >= np.median([r.metrics.final_success(20) for r in short.values()]))


def test_deployment_without_backend(tmp_path):
    config = config_for(tmp_path, task_id="UnlockReach", agent_kind="llm_hrl", seeds="0-2")
    cache = PromptCache()
    for seed, result in run_training(config, cache).items():
        on = evaluate(config, result.agent, seed, 200, use_backend=True, cache=cache)
        off = evaluate(config, result.agent, seed, 200, use_backend=False)
        assert off.backend_calls == 0
        assert off.success_rate >= on.success_rate - 0.02


def test_sweep_cache_bound_and_warm_repeat(tmp_path):
    config = config_for(tmp_path, task_id="KeyCorridorV0", agent_kind="llm_hrl", episodes=300)
    cache = PromptCache()
    first = run_training(config, cache)
    calls = sum(r.metrics.total_backend_calls for r in first.values())
    goals = {key.goal_text for key, _ in cache.items()}
    renderings = {key.traj_text for key, _ in cache.items()}
    assert calls == len(cache) <= len(goals) * len(renderings) * len(make_env("KeyCorridorV0").skills())
    again = run_training(config.model_copy(update={"output_dir": str(tmp_path / "again")}), cache)
    assert sum(r.metrics.total_backend_calls for r in again.values()) == 0


def test_learning_beats_blind_trust_under_noise(tmp_path):
    noisy = {"kind": "scripted", "noise": 0.2}
    saycan = run_training(config_for(tmp_path, task_id="UnlockReach", agent_kind="saycan_no_aff",
                                     episodes=200, backend=noisy))
    learned = run_training(config_for(tmp_path, task_id="UnlockReach", agent_kind="llm_hrl", backend=noisy))
    assert (np.median([r.metrics.final_success(100) for r in saycan.values()])
            < np.median([r.metrics.final_success(100) for r in learned.values()]))
