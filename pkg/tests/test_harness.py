import json

import numpy as np
import pytest
from pydantic import ValidationError

from hrl_workbench.agents import QTable, SoftmaxPolicy
from hrl_workbench.envs import make_env
from hrl_workbench.errors import CompareError, ConfigError
from hrl_workbench.harness import (
    EpisodeRunner,
    ExperimentConfig,
    compare,
    config_from_flat,
    evaluate,
    load_experiment_config,
    parse_seeds,
    run_training,
    sweep,
    warm_cache,
)
from hrl_workbench.llm_bridge import PromptCache, ScriptedBackend, load_cache
from hrl_workbench.metrics import read_run
from hrl_workbench.priors import AnnealSchedule, lambda_at


# --- Configuration ---
def test_parse_seeds():
    assert parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
    assert parse_seeds(5) == [5]
    assert parse_seeds([2, 1]) == [2, 1]


def test_task_defaults():
    grid = ExperimentConfig(task_id="UnlockReach")
    assert grid.episodes == 2000 and grid.learner == "pg" and grid.q.temperature == 1.0
    assert grid.decision_budget == 20 and grid.goal_variation == "per_run"
    block = ExperimentConfig(task_id="DeskCleanUp")
    assert block.episodes == 100 and block.learner == "q" and block.q.temperature == 0.005
    assert block.decision_budget == 5 and block.goal_variation == "per_run"
    swap = ExperimentConfig(task_id="SwapBlocks")
    assert swap.episodes == 300 and swap.decision_budget == 12 and swap.goal_variation == "per_episode"
    assert ExperimentConfig(task_id="KeyCorridorV1").decision_budget == 7
    assert ExperimentConfig(task_id="SwapBlocks", goal_variation="per_run", decision_budget=20).decision_budget == 20


def test_default_anneal_horizon_is_reachable():
    assert ExperimentConfig(task_id="UnlockReach").schedule().total_decision_steps == 2000 * 3 - 1
    assert ExperimentConfig(task_id="DeskCleanUp").schedule().total_decision_steps == 100 * 4 - 1
    assert ExperimentConfig(task_id="SwapBlocks").schedule().total_decision_steps == 300 * 6 - 1
    assert ExperimentConfig(task_id="SwapBlocks", decision_budget=2).shortest_episode() == 2
    assert ExperimentConfig(task_id="UnlockReach", anneal_total_decisions=50).schedule().total_decision_steps == 50


@pytest.mark.parametrize("task_id", ["KeyCorridorV1", "DeskCleanUp", "SwapBlocks"])
def test_default_budget_fits_the_oracle(task_id):
    config = ExperimentConfig(task_id=task_id)
    env = make_env(task_id)
    for seed in range(30):
        env.reset(seed)
        decisions = 0
        while not env.done:
            env.execute_skill(env.oracle_next())
            decisions += 1
        assert decisions <= config.decision_budget


def test_default_llm_run_ends_with_prior_switched_off(tmp_path):
    config = ExperimentConfig(task_id="KeyCorridorV0", episodes=40, output_dir=str(tmp_path), cache_path=None)
    metrics = run_training(config)[0].metrics
    assert sum(e.decisions for e in metrics.episodes) >= 40 * 3
    assert metrics.episodes[-1].lambda_final == 0.0
    assert metrics.episodes[0].lambda_final > 0.0


def test_unknown_task_is_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig(task_id="Pong")


def test_load_config_file_with_overrides(tmp_path):
    path = tmp_path / "exp.env"
    path.write_text("task_id=SwapBlocks\nepisodes=50\nseeds=0-2\nnoise=0.1\n"
                    "q_learning_rate=0.3\nanneal_shape=cosine\n", encoding="utf-8")
    config = load_experiment_config(path, episodes="7", workers=None)
    assert config.episodes == 7
    assert config.seeds == [0, 1, 2]
    assert config.backend.noise == 0.1
    assert config.q.learning_rate == 0.3
    assert config.q.temperature == 0.005
    assert config.anneal_shape == "cosine"


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        config_from_flat({"task_id": "UnlockReach", "bogus": "1"})
    with pytest.raises(ConfigError):
        config_from_flat({"task_id": "UnlockReach", "episodes": "-4"})
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "missing.env")


# --- Episode loop ---
def test_lambda_trace_follows_schedule():
    env = make_env("UnlockReach")
    schedule = AnnealSchedule(total_decision_steps=30)
    runner = EpisodeRunner(env, SoftmaxPolicy(len(env.skills())), ScriptedBackend(), PromptCache(), schedule,
                           np.random.default_rng(0))
    lambdas = []
    for episode in range(5):
        lambdas.extend(r.lambda_used for r in runner.run_episode(episode, goal_seed=0).records)
    assert len(lambdas) == runner.clock
    assert lambdas == [lambda_at(schedule, t) for t in range(len(lambdas))]


def test_prior_is_not_queried_once_lambda_reaches_zero():
    env = make_env("UnlockReach")
    backend = ScriptedBackend()
    runner = EpisodeRunner(env, SoftmaxPolicy(len(env.skills())), backend, PromptCache(),
                           AnnealSchedule(total_decision_steps=1), np.random.default_rng(0))
    runner.run_episode(0)
    calls = backend.calls
    runner.run_episode(1)
    assert backend.calls == calls


def test_oracle_run_succeeds_every_episode(make_config):
    config = make_config(task_id="KeyCorridorV1", agent_kind="oracle", episodes=5, seeds="0,1")
    results = run_training(config)
    for result in results.values():
        assert result.metrics.successes.tolist() == [1.0] * 5
        assert result.metrics.total_backend_calls == 0


def test_vanilla_never_calls_backend(make_config):
    config = make_config(task_id="DeskCleanUp", agent_kind="vanilla_hrl", episodes=10)
    metrics = run_training(config)[0].metrics
    assert all(e.backend_calls_cumulative == 0 for e in metrics.episodes)
    assert all(e.lambda_final == 0.0 for e in metrics.episodes)


def test_runs_are_byte_identical(tmp_path):
    def run(out):
        config = ExperimentConfig(task_id="UnlockReach", agent_kind="llm_hrl", episodes=8, seeds=[3],
                                  output_dir=str(out), cache_path=None)
        run_training(config)
        return (config.run_dir / "seed_3.csv").read_bytes()

    assert run(tmp_path / "a") == run(tmp_path / "b")


def test_thread_pool_matches_serial_run(make_config, tmp_path):
    serial = make_config(task_id="DeskCleanUp", agent_kind="vanilla_hrl", episodes=6, seeds="0-2",
                         output_dir=str(tmp_path / "serial"))
    pooled = serial.model_copy(update={"workers": 3, "output_dir": str(tmp_path / "pooled")})
    run_training(serial)
    run_training(pooled)
    for seed in (0, 1, 2):
        assert (serial.run_dir / f"seed_{seed}.csv").read_bytes() == (pooled.run_dir / f"seed_{seed}.csv").read_bytes()


def test_run_directory_layout(make_config):
    config = make_config(task_id="DeskCleanUp", agent_kind="vanilla_hrl", episodes=4, traces=True, checkpoints=True)
    result = run_training(config)[0]
    run_dir = config.run_dir
    assert json.loads((run_dir / "config.json").read_text(encoding="utf-8"))["task_id"] == "DeskCleanUp"
    header = (run_dir / "seed_0.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "seed,episode,success,decisions,backend_calls_cumulative,lambda_final"
    trace = (run_dir / "traces" / "seed_0.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(trace) == sum(e.decisions for e in result.metrics.episodes)
    assert set(json.loads(trace[0])) >= {"state_key", "skill_id", "lambda_used", "reward"}

    restored = QTable(6)
    restored.load_table(run_dir / "checkpoints" / "seed_0.tsv")
    assert restored.q.keys() == result.agent.q.keys()
    for key, row in result.agent.q.items():
        assert np.allclose(restored.q[key], row, atol=1e-9)


def test_backend_failure_marks_seed_failed(make_config, tmp_path):
    empty = tmp_path / "empty.tsv"
    empty.write_text("", encoding="utf-8")
    config = make_config(task_id="UnlockReach", agent_kind="llm_hrl", episodes=3,
                         backend={"kind": "replay", "replay_path": str(empty), "replay_source": "scripted"})
    result = run_training(config)[0]
    assert result.metrics.status == "failed"
    summary = read_run(config.run_dir)[0]
    assert summary.status == "failed"
    assert summary.error.startswith("replay of scripted has no answer")


# --- Prompt cache ---
def test_backend_calls_match_cache_entries_and_warm_rerun_is_free(make_config, tmp_path):
    cache_path = tmp_path / "priors.tsv"
    config = make_config(task_id="UnlockReach", agent_kind="llm_hrl", episodes=10, cache_path=str(cache_path))
    first = run_training(config)[0].metrics
    cache = load_cache(cache_path)
    assert first.total_backend_calls == len(cache) > 0
    assert cache.backend_ids() == {"scripted"}

    rerun = config.model_copy(update={"output_dir": str(tmp_path / "again")})
    assert run_training(rerun)[0].metrics.total_backend_calls == 0


def test_warm_cache_covers_saycan_queries(make_config):
    config = make_config(task_id="UnlockReach", agent_kind="saycan_no_aff", episodes=3)
    cache = PromptCache()
    calls = warm_cache(config, cache, [0])
    assert calls == len(cache) > 0
    assert run_training(config, cache)[0].metrics.total_backend_calls == 0


def test_saycan_with_exact_oracle_matches_oracle(make_config):
    config = make_config(task_id="UnlockReach", agent_kind="saycan_no_aff", episodes=10)
    cache = PromptCache()
    metrics = run_training(config, cache)[0].metrics
    assert metrics.successes.tolist() == [1.0] * 10
    assert metrics.total_backend_calls == len(cache)


# --- Evaluation ---
def test_evaluation_without_backend_makes_no_calls(make_config):
    config = make_config(task_id="UnlockReach", agent_kind="llm_hrl", episodes=5)
    agent = run_training(config)[0].agent
    frozen = {k: v.copy() for k, v in agent.logits_table.items()}
    off = evaluate(config, agent, 0, episodes=5, use_backend=False)
    on = evaluate(config, agent, 0, episodes=5, use_backend=True)
    assert off.backend_calls == 0
    assert on.backend_calls > 0
    assert off.episodes == on.episodes == 5
    assert agent.logits_table.keys() == frozen.keys()
    assert all(np.array_equal(agent.logits_table[k], frozen[k]) for k in frozen)


# --- Sweep and compare ---
def test_sweep_writes_every_run(make_config):
    config = make_config(task_id="DeskCleanUp", episodes=3, seeds="0,1", workers=2)
    results = sweep(config, ["oracle", "vanilla_hrl", "llm_hrl"])
    assert set(results) == {"oracle", "vanilla_hrl", "llm_hrl"}
    for kind in results:
        run_dir = config.model_copy(update={"agent_kind": kind}).run_dir
        assert set(read_run(run_dir)) == {0, 1}


def test_compare_rejects_bad_inputs(make_config):
    with pytest.raises(CompareError):
        compare([make_config(task_id="DeskCleanUp")], "unused")
    with pytest.raises(CompareError):
        compare([make_config(task_id="DeskCleanUp"), make_config(task_id="SwapBlocks")], "unused")


def test_compare_writes_tables_and_plot(make_config, tmp_path):
    base = make_config(task_id="DeskCleanUp", episodes=6, seeds="0,1", window=5)
    configs = [base.model_copy(update={"agent_kind": kind}) for kind in ("oracle", "vanilla_hrl")]
    out = tmp_path / "cmp"
    comparison = compare(configs, out)
    lines = comparison.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "agent,median_episodes_to_threshold,final_success"
    assert lines[1] == "oracle,5,1.0000"
    assert lines[2].startswith("vanilla_hrl,")
    assert (out / "DeskCleanUp.svg").read_text(encoding="utf-8").lstrip().startswith("<?xml")
    assert (out / "DeskCleanUp__oracle.csv").exists()

    # second call reloads the run directories instead of training again
    seed_csv = configs[0].run_dir / "seed_0.csv"
    before = seed_csv.stat().st_mtime_ns
    compare(configs, out)
    assert seed_csv.stat().st_mtime_ns == before
