# hrl_workbench/harness.py

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Literal, Mapping, NamedTuple, Sequence, TypedDict, get_args

import numpy as np
from dotenv import dotenv_values
from langchain_core.runnables import RunnableConfig
from langgraph.graph import END, StateGraph
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from hrl_workbench.agents import Agent, OracleAgent, PolicyHyper, QHyper, QTable, SayCanAgent, SoftmaxPolicy
from hrl_workbench.config import PRIOR_CACHE_PATH, RESULTS_DIR
from hrl_workbench.core import DecisionRecord, GoalInstruction, PriorVector, TrajectorySummary
from hrl_workbench.envs import BLOCK_TASKS, TASK_FAMILIES, Environment, make_env, plans_for_goal
from hrl_workbench.errors import BackendError, CompareError, ConfigError
from hrl_workbench.llm_bridge import BackendConfig, PromptCache, RelevanceBackend, load_cache, make_backend, persist_cache
from hrl_workbench.metrics import (
    DEFAULT_THRESHOLD,
    DEFAULT_WINDOW,
    EpisodeMetrics,
    MetricsWriter,
    RunMetrics,
    aggregate,
    plot_task,
    read_run,
    write_comparison,
    write_curve_csv,
    write_summary,
)
from hrl_workbench.priors import AnnealSchedule, assemble_flags, lambda_at, log_softmax, uniform_prior
from hrl_workbench.prompts import template_for

logger = logging.getLogger(__name__)

AgentKind = Literal["llm_hrl", "vanilla_hrl", "shaped_hrl", "oracle", "saycan_no_aff"]
AGENT_KINDS: tuple[str, ...] = get_args(AgentKind)
LEARNING_KINDS = ("llm_hrl", "vanilla_hrl", "shaped_hrl")
PRIOR_KINDS = ("llm_hrl", "saycan_no_aff")

DEFAULT_EPISODES = {"UnlockReach": 2000, "KeyCorridorV0": 2000, "KeyCorridorV1": 2000, "DeskCleanUp": 100, "SwapBlocks": 300}
DEFAULT_DECISION_BUDGET = 20
# high-level decisions per episode before truncation
DEFAULT_DECISION_BUDGETS = {"UnlockReach": DEFAULT_DECISION_BUDGET, "KeyCorridorV0": DEFAULT_DECISION_BUDGET,
                             "KeyCorridorV1": 7, "DeskCleanUp": 5, "SwapBlocks": 12}
PER_EPISODE_GOAL_TASKS = ("SwapBlocks",)
BLOCK_BOLTZMANN_TEMPERATURE = 0.005
EPISODE_SEED_STRIDE = 100_000

BACKEND_KEYS = {"backend_kind": "kind", "endpoint_url": "endpoint_url", "model_name": "model_name",
                "max_retries": "max_retries", "timeout": "timeout", "retry_backoff": "retry_backoff",
                "noise": "noise", "replay_path": "replay_path", "replay_source": "replay_source"}
POLICY_KEYS = {"learning_rate": "learning_rate", "value_rate": "value_rate", "discount": "discount",
               "clip_ratio": "clip_ratio", "epochs": "epochs"}
Q_KEYS = {"q_learning_rate": "learning_rate", "q_discount": "discount", "temperature_boltzmann": "temperature"}


def parse_seeds(value: str | int | Sequence[int]) -> list[int]:
    """Accept `3`, `0,1,2`, `0-9` or mixtures like `0-4,10`."""
    if isinstance(value, int):
        return [value]
    if not isinstance(value, str):
        return [int(v) for v in value]
    seeds: list[int] = []
    for part in value.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


# --- Configuration ---
class ExperimentConfig(BaseModel):
    task_id: str
    agent_kind: AgentKind = "llm_hrl"
    backend: BackendConfig = Field(default_factory=BackendConfig)
    episodes: int | None = Field(None, gt=0)
    seeds: list[int] = Field(default_factory=lambda: [0])
    anneal_total_decisions: int | None = Field(None, gt=0)
    anneal_fraction: float = Field(1.0, gt=0.0, le=1.0)
    anneal_shape: Literal["linear", "cosine", "exponential"] = "linear"
    traj_window: int = Field(2, ge=1)
    decision_budget: int | None = Field(None, ge=1)
    learner: Literal["pg", "q"] | None = None
    policy: PolicyHyper = Field(default_factory=PolicyHyper)
    q: QHyper | None = None
    shaping_reward: float = Field(0.1, ge=0.0)
    goal_variation: Literal["per_run", "per_episode"] | None = None
    window: int = Field(DEFAULT_WINDOW, ge=1)
    threshold: float = Field(DEFAULT_THRESHOLD, gt=0.0, le=1.0)
    output_dir: str = RESULTS_DIR
    cache_path: str | None = PRIOR_CACHE_PATH
    traces: bool = False
    checkpoints: bool = False
    workers: int = Field(1, ge=1)

    @field_validator("task_id")
    @classmethod
    def _known_task(cls, value: str) -> str:
        if value not in TASK_FAMILIES:
            raise ValueError(f"unknown task {value!r}; known: {', '.join(TASK_FAMILIES)}")
        return value

    @field_validator("seeds", mode="before")
    @classmethod
    def _expand_seeds(cls, value: Any) -> list[int]:
        return parse_seeds(value)

    @model_validator(mode="after")
    def _task_defaults(self) -> "ExperimentConfig":
        if self.episodes is None:
            self.episodes = DEFAULT_EPISODES[self.task_id]
        if self.learner is None:
            self.learner = "q" if self.task_id in BLOCK_TASKS else "pg"
        if self.q is None:
            self.q = QHyper(temperature=BLOCK_BOLTZMANN_TEMPERATURE) if self.task_id in BLOCK_TASKS else QHyper()
        if self.decision_budget is None:
            self.decision_budget = DEFAULT_DECISION_BUDGETS[self.task_id]
        if self.goal_variation is None:
            self.goal_variation = "per_episode" if self.task_id in PER_EPISODE_GOAL_TASKS else "per_run"
        return self

    @property
    def uses_prior(self) -> bool:
        return self.agent_kind in PRIOR_KINDS

    @property
    def learns(self) -> bool:
        return self.agent_kind in LEARNING_KINDS

    @property
    def shaped(self) -> bool:
        return self.agent_kind == "shaped_hrl"

    def shortest_episode(self) -> int:
        """Fewest decisions a successful episode can take: the shortest ground-truth plan, capped by the budget."""
        _, goal = make_env(self.task_id).reset(0)
        shortest = min(len(plan) for plan in plans_for_goal(goal.text))
        return min(shortest, self.decision_budget)

    def schedule(self) -> AnnealSchedule:
        # a run makes at least episodes * shortest_episode() decisions, so its last decision sees λ = 0
        total = self.anneal_total_decisions or max(1, self.episodes * self.shortest_episode() - 1)
        return AnnealSchedule(total_decision_steps=total, anneal_fraction=self.anneal_fraction, shape=self.anneal_shape)

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / f"{self.task_id}__{self.agent_kind}"


def config_from_flat(values: Mapping[str, Any]) -> ExperimentConfig:
    """Build a config from flat keys (the config-file vocabulary); nested blocks are assembled here."""
    top: dict[str, Any] = {}
    backend: dict[str, Any] = {}
    policy: dict[str, Any] = {}
    q: dict[str, Any] = {}
    for key, value in values.items():
        if value is None or value == "":
            continue
        if key in BACKEND_KEYS:
            backend[BACKEND_KEYS[key]] = value
        elif key in POLICY_KEYS:
            policy[POLICY_KEYS[key]] = value
        elif key in Q_KEYS:
            q[Q_KEYS[key]] = value
        elif key in ExperimentConfig.model_fields and key not in ("backend", "policy", "q"):
            top[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if backend:
        top["backend"] = backend
    if policy:
        top["policy"] = policy
    if q:
        task = top.get("task_id")
        if task in BLOCK_TASKS and "temperature" not in q:
            q["temperature"] = BLOCK_BOLTZMANN_TEMPERATURE
        top["q"] = q
    try:
        return ExperimentConfig(**top)
    except ValidationError as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def load_experiment_config(path: str | os.PathLike | None = None, **overrides: Any) -> ExperimentConfig:
    """File values (dotenv syntax, flat keys) under CLI overrides under defaults."""
    values: dict[str, Any] = {}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} does not exist")
        values.update(dotenv_values(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_flat(values)


def make_agent(config: ExperimentConfig, k: int) -> Agent:
    if config.agent_kind == "oracle":
        return OracleAgent()
    if config.agent_kind == "saycan_no_aff":
        return SayCanAgent()
    if config.learner == "q":
        return QTable(k, config.q)
    return SoftmaxPolicy(k, config.policy)


# --- Episode graph ---
class EpisodeState(TypedDict, total=False):
    goal: GoalInstruction
    state_key: str
    traj: TrajectorySummary
    p_cs: PriorVector | None
    needs_prior: bool
    lam: float
    decisions: int
    records: list[DecisionRecord]
    done: bool
    success: bool


class EpisodeOutcome(NamedTuple):
    success: bool
    decisions: int
    lambda_final: float
    records: list[DecisionRecord]


class EpisodeRunner:
    """Runs episodes of one seed through a compiled decision graph: prior -> act -> ... -> learn."""

    def __init__(self, env: Environment, agent: Agent, backend: RelevanceBackend | None, cache: PromptCache,
                 schedule: AnnealSchedule | None, rng: np.random.Generator, traj_window: int = 2,
                 decision_budget: int = DEFAULT_DECISION_BUDGET, fixed_lambda: float | None = None):
        self.env = env
        self.agent = agent
        self.backend = backend
        self.cache = cache
        self.schedule = schedule
        self.rng = rng
        self.traj_window = traj_window
        self.decision_budget = decision_budget
        self.fixed_lambda = fixed_lambda
        self.skills = env.skills()
        self.clock = 0  # global decision index across episodes
        self.graph = self._build_graph()

    def current_lambda(self, use_prior: bool) -> float:
        if not use_prior or self.backend is None:
            return 0.0
        if self.fixed_lambda is not None:
            return self.fixed_lambda
        return lambda_at(self.schedule, self.clock)

    def needs_prior(self, use_prior: bool) -> bool:
        if self.backend is None:
            return False
        return self.agent.requires_prior or self.current_lambda(use_prior) > 0.0

    # --- Nodes ---
    def _prior_node(self, state: EpisodeState, config: RunnableConfig) -> EpisodeState:
        traj = self.env.caption(self.traj_window)
        flags = assemble_flags(self.backend, self.cache, state["goal"], traj, self.skills)
        logger.debug("Flags for %r: %s", traj.recent_skills, flags.flags)
        return {**state, "traj": traj, "p_cs": log_softmax(flags)}

    def _act_node(self, state: EpisodeState, config: RunnableConfig) -> EpisodeState:
        configurable = config.get("configurable", {})
        use_prior = configurable.get("use_prior", True)
        learning = configurable.get("learning", True)
        lam = self.current_lambda(use_prior)
        p_cs = state.get("p_cs") or uniform_prior(len(self.skills))

        skill_id = self.agent.select_action(state["state_key"], p_cs, lam, self.rng, env=self.env)
        result = self.env.execute_skill(skill_id)
        next_key = self.env.state_key()
        record = DecisionRecord(
            state_key=state["state_key"],
            skill_id=skill_id,
            lambda_used=lam,
            reward=result.reward,
            next_state_key=next_key,
            terminal=result.terminal,
            success=result.success,
        )
        if learning and self.agent.learns:
            self.agent.observe(record)
        self.clock += 1
        decisions = state.get("decisions", 0) + 1
        logger.debug("Decision %d: %s -> reward %.2f", decisions, self.skills[skill_id].description, result.reward)
        return {
            **state,
            "state_key": next_key,
            "p_cs": None,
            "lam": lam,
            "decisions": decisions,
            "records": state.get("records", []) + [record],
            "done": result.terminal or decisions >= self.decision_budget,
            "success": result.success,
            "needs_prior": self.needs_prior(use_prior),
        }

    def _learn_node(self, state: EpisodeState, config: RunnableConfig) -> EpisodeState:
        learning = config.get("configurable", {}).get("learning", True)
        if learning and self.agent.learns:
            self.agent.end_episode(state.get("records", []))
        return state

    # --- Routing ---
    @staticmethod
    def _from_start(state: EpisodeState) -> Literal["prior", "act"]:
        return "prior" if state.get("needs_prior") else "act"

    @staticmethod
    def _after_act(state: EpisodeState) -> Literal["prior", "act", "learn"]:
        if state["done"]:
            return "learn"
        return "prior" if state["needs_prior"] else "act"

    def _build_graph(self):
        g = StateGraph(EpisodeState)
        g.add_node("prior", self._prior_node)
        g.add_node("act", self._act_node)
        g.add_node("learn", self._learn_node)

        g.set_conditional_entry_point(self._from_start, {"prior": "prior", "act": "act"})
        g.add_edge("prior", "act")
        g.add_conditional_edges("act", self._after_act, {"prior": "prior", "act": "act", "learn": "learn"})
        g.add_edge("learn", END)
        return g.compile()

    def run_episode(self, seed: int, goal_seed: int | None = None, use_prior: bool = True,
                    learning: bool = True) -> EpisodeOutcome:
        _, goal = self.env.reset(seed, goal_seed=goal_seed)
        initial: EpisodeState = {
            "goal": goal,
            "state_key": self.env.state_key(),
            "p_cs": None,
            "needs_prior": self.needs_prior(use_prior),
            "decisions": 0,
            "records": [],
            "done": False,
            "success": False,
        }
        final = self.graph.invoke(
            initial,
            config={
                "configurable": {"use_prior": use_prior, "learning": learning},
                "recursion_limit": 2 * self.decision_budget + 5,
            },
        )
        return EpisodeOutcome(final["success"], final["decisions"], final.get("lam", 0.0), final["records"])


# --- Runs ---
class SeedResult(NamedTuple):
    metrics: RunMetrics
    agent: Agent


def _episode_seeds(config: ExperimentConfig, seed: int, episode: int) -> tuple[int, int]:
    layout_seed = seed * EPISODE_SEED_STRIDE + episode
    goal_seed = seed if config.goal_variation == "per_run" else layout_seed
    return layout_seed, goal_seed


def _write_traces(path: Path, records: Sequence[DecisionRecord]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")


def run_seed(config: ExperimentConfig, seed: int, cache: PromptCache) -> SeedResult:
    """Algorithm loop for one seed: fixed episode budget, metrics written as episodes finish."""
    logger.info("--- Starting %s / %s seed %d ---", config.task_id, config.agent_kind, seed)
    env = make_env(config.task_id, shaped=config.shaped, shaping_reward=config.shaping_reward)
    k = len(env.skills())
    agent = make_agent(config, k)
    backend = make_backend(config.backend, template_for(config.task_id), seed) if config.uses_prior else None
    runner = EpisodeRunner(env, agent, backend, cache, config.schedule(), np.random.default_rng(seed),
                           traj_window=config.traj_window, decision_budget=config.decision_budget)
    run_dir = config.run_dir
    metrics = RunMetrics(seed=seed)
    trace: list[DecisionRecord] = []

    with MetricsWriter(run_dir / f"seed_{seed}.csv") as writer:
        try:
            for episode in range(config.episodes):
                layout_seed, goal_seed = _episode_seeds(config, seed, episode)
                outcome = runner.run_episode(layout_seed, goal_seed, use_prior=config.uses_prior,
                                             learning=agent.learns)
                row = EpisodeMetrics(
                    seed=seed,
                    episode=episode,
                    success=int(outcome.success),
                    decisions=outcome.decisions,
                    backend_calls_cumulative=backend.calls if backend else 0,
                    lambda_final=outcome.lambda_final,
                )
                metrics.episodes.append(row)
                writer.write(row)
                if config.traces:
                    trace.extend(outcome.records)
                if (episode + 1) % 100 == 0:
                    logger.info("Seed %d episode %d: moving success %.2f, backend calls %d", seed, episode + 1,
                                metrics.moving_average(config.window)[-1], row.backend_calls_cumulative)
        except BackendError as exc:
            logger.error("Seed %d aborted: %s", seed, exc)
            metrics.status, metrics.error = "failed", str(exc)

    if config.traces:
        _write_traces(run_dir / "traces" / f"seed_{seed}.jsonl", trace)
    if config.checkpoints and agent.learns:
        agent.save_table(run_dir / "checkpoints" / f"seed_{seed}.tsv")
    logger.info("--- Finished seed %d: %s, %d episodes ---", seed, metrics.status, len(metrics.episodes))
    return SeedResult(metrics, agent)


def open_cache(config: ExperimentConfig) -> PromptCache:
    if config.cache_path and Path(config.cache_path).exists():
        cache = load_cache(config.cache_path)
        logger.info("Loaded %d cached relevance answers from %s", len(cache), config.cache_path)
        return cache
    return PromptCache()


def _save_cache(config: ExperimentConfig, cache: PromptCache) -> None:
    if config.cache_path and len(cache):
        persist_cache(cache, config.cache_path)


def run_training(config: ExperimentConfig, cache: PromptCache | None = None) -> dict[int, SeedResult]:
    """Train every seed of `config`; writes the run directory and persists the shared cache."""
    own_cache = cache is None
    cache = open_cache(config) if own_cache else cache
    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = {seed: pool.submit(run_seed, config, seed, cache) for seed in config.seeds}
            results = {seed: f.result() for seed, f in futures.items()}
    else:
        results = {seed: run_seed(config, seed, cache) for seed in config.seeds}

    write_summary(run_dir / "summary.csv", {s: r.metrics for s, r in results.items()},
                  threshold=config.threshold, window=config.window)
    if own_cache:
        _save_cache(config, cache)
    return results


def sweep(config: ExperimentConfig, agent_kinds: Sequence[str], cache: PromptCache | None = None) -> dict[str, dict[int, SeedResult]]:
    """Every (agent kind, seed) pair on a thread pool, all sharing one prompt cache."""
    own_cache = cache is None
    cache = open_cache(config) if own_cache else cache
    configs = {kind: config.model_copy(update={"agent_kind": kind}) for kind in agent_kinds}
    for cfg in configs.values():
        cfg.run_dir.mkdir(parents=True, exist_ok=True)
        (cfg.run_dir / "config.json").write_text(cfg.model_dump_json(indent=2) + "\n", encoding="utf-8")

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = {(kind, seed): pool.submit(run_seed, cfg, seed, cache)
                   for kind, cfg in configs.items() for seed in cfg.seeds}
        results: dict[str, dict[int, SeedResult]] = {kind: {} for kind in configs}
        for (kind, seed), future in futures.items():
            results[kind][seed] = future.result()

    for kind, cfg in configs.items():
        write_summary(cfg.run_dir / "summary.csv", {s: r.metrics for s, r in results[kind].items()},
                      threshold=cfg.threshold, window=cfg.window)
    if own_cache:
        _save_cache(config, cache)
    return results


class EvaluationResult(NamedTuple):
    success_rate: float
    backend_calls: int
    episodes: int


def evaluate(config: ExperimentConfig, agent: Agent, seed: int, episodes: int, use_backend: bool,
             cache: PromptCache | None = None, lam: float = 1.0) -> EvaluationResult:
    """Run a frozen agent. With the backend attached the prior enters at a fixed λ; without it λ is 0."""
    env = make_env(config.task_id)
    backend = None
    if use_backend and (config.uses_prior or agent.requires_prior):
        backend = make_backend(config.backend, template_for(config.task_id), seed)
    runner = EpisodeRunner(env, agent, backend, cache if cache is not None else PromptCache(), None,
                           np.random.default_rng([seed, 2]), traj_window=config.traj_window,
                           decision_budget=config.decision_budget, fixed_lambda=lam)
    successes = 0
    for episode in range(episodes):
        layout_seed, goal_seed = _episode_seeds(config, seed, config.episodes + episode)
        successes += runner.run_episode(layout_seed, goal_seed, use_prior=use_backend, learning=False).success
    calls = backend.calls if backend else 0
    logger.info("Evaluation seed %d (backend %s): success %.3f over %d episodes, %d backend calls",
                seed, "on" if use_backend else "off", successes / episodes, episodes, calls)
    return EvaluationResult(successes / episodes, calls, episodes)


def compare(configs: Sequence[ExperimentConfig], output_dir: str | os.PathLike,
            cache: PromptCache | None = None) -> Path:
    """Aggregate runs of one task (training any that are missing) into CSVs and an SVG plot."""
    if len(configs) < 2:
        raise CompareError("compare needs at least two configs")
    tasks = {c.task_id for c in configs}
    if len(tasks) != 1:
        raise CompareError(f"compare needs configs of a single task, got {sorted(tasks)}")
    task_id = tasks.pop()
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    curves = []
    for config in configs:
        if (config.run_dir / "summary.csv").exists():
            runs = read_run(config.run_dir)
            logger.info("Reloaded %d seeds from %s", len(runs), config.run_dir)
        else:
            runs = {s: r.metrics for s, r in run_training(config, cache).items()}
        curve = aggregate(config.agent_kind, runs, learns=config.learns, window=config.window,
                          threshold=config.threshold)
        write_curve_csv(output_dir / f"{task_id}__{config.agent_kind}.csv", curve)
        curves.append(curve)

    comparison = output_dir / "comparison.csv"
    write_comparison(comparison, curves)
    plot_task(output_dir / f"{task_id}.svg", task_id, curves)
    logger.info("Comparison for %s written to %s", task_id, output_dir)
    return comparison


def warm_cache(config: ExperimentConfig, cache: PromptCache, goal_seeds: Sequence[int]) -> int:
    """Query every skill for each goal's plan prefixes so later runs start from a warm cache."""
    env = make_env(config.task_id)
    skills = env.skills()
    calls = 0
    for goal_seed in goal_seeds:
        _, goal = env.reset(goal_seed, goal_seed=goal_seed)
        backend = make_backend(config.backend, template_for(config.task_id), goal_seed)
        trajs = {()}
        for plan in plans_for_goal(goal.text) or []:
            trajs |= {tuple(plan[:i][-config.traj_window:]) for i in range(1, len(plan) + 1)}
        for recent in sorted(trajs):
            assemble_flags(backend, cache, goal, TrajectorySummary(recent_skills=recent, window=config.traj_window),
                           skills)
        calls += backend.calls
    return calls


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(json.loads(config.model_dump_json()), indent=2, sort_keys=True)
