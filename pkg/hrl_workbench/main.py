# hrl_workbench/main.py

import argparse
import logging
import sys
from pathlib import Path

from hrl_workbench.config import LOG_LEVEL, PRIOR_CACHE_PATH
from hrl_workbench.envs import TASK_FAMILIES, make_env
from hrl_workbench.errors import WorkbenchError
from hrl_workbench.harness import (
    AGENT_KINDS,
    compare,
    dump_config,
    evaluate,
    load_experiment_config,
    open_cache,
    parse_seeds,
    run_training,
    sweep,
    warm_cache,
)
from hrl_workbench.llm_bridge import load_cache, persist_cache

logger = logging.getLogger("hrl_workbench")


def _add_experiment_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value experiment file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    parser.add_argument("--task", dest="task_id", choices=sorted(TASK_FAMILIES))
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--seeds", help="e.g. 0-9 or 0,3,5")
    parser.add_argument("--backend", dest="backend_kind", choices=["scripted", "http", "replay"])
    parser.add_argument("--noise", type=float, help="scripted oracle bit-flip probability")
    parser.add_argument("--output-dir")
    parser.add_argument("--workers", type=int)


def _experiment_config(args: argparse.Namespace, **extra):
    overrides = {
        "task_id": args.task_id,
        "episodes": args.episodes,
        "seeds": args.seeds,
        "backend_kind": args.backend_kind,
        "noise": args.noise,
        "output_dir": args.output_dir,
        "workers": args.workers,
        **extra,
    }
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise WorkbenchError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    return load_experiment_config(args.config, **overrides)


def cmd_run(args: argparse.Namespace) -> int:
    config = _experiment_config(args, agent_kind=args.agent)
    logger.debug("Resolved config:\n%s", dump_config(config))
    cache = open_cache(config)
    results = run_training(config, cache)
    for seed, result in sorted(results.items()):
        m = result.metrics
        print(f"seed {seed}: {m.status}, final success {m.final_success(config.window):.2f}, "
              f"episodes to {config.threshold:g}: {m.episodes_to_threshold(config.threshold, config.window)}, "
              f"backend calls {m.total_backend_calls}")
        if args.eval_episodes and m.status == "ok":
            on = evaluate(config, result.agent, seed, args.eval_episodes, use_backend=True, cache=cache)
            off = evaluate(config, result.agent, seed, args.eval_episodes, use_backend=False)
            print(f"  deployment: with backend {on.success_rate:.3f} ({on.backend_calls} calls), "
                  f"without backend {off.success_rate:.3f} ({off.backend_calls} calls)")
    if config.cache_path and len(cache):
        persist_cache(cache, config.cache_path)
    return 0 if all(r.metrics.status == "ok" for r in results.values()) else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    results = sweep(config, args.agents)
    failed = sum(r.metrics.status != "ok" for runs in results.values() for r in runs.values())
    print(f"sweep finished: {len(args.agents)} agents x {len(config.seeds)} seeds, {failed} failed seeds")
    return 0 if failed == 0 else 1


def cmd_compare(args: argparse.Namespace) -> int:
    base = _experiment_config(args)
    configs = [base.model_copy(update={"agent_kind": kind}) for kind in args.agents]
    out = compare(configs, args.compare_dir or Path(base.output_dir) / f"compare_{base.task_id}")
    print(out.read_text(encoding="utf-8"), end="")
    return 0


def cmd_cache(args: argparse.Namespace) -> int:
    path = args.cache_path or PRIOR_CACHE_PATH
    if args.action == "warm":
        config = _experiment_config(args, agent_kind="llm_hrl", cache_path=path)
        cache = open_cache(config)
        calls = warm_cache(config, cache, parse_seeds(args.goal_seeds))
        persist_cache(cache, path)
        print(f"warmed {path}: {calls} new backend calls, {len(cache)} entries")
        return 0
    cache = load_cache(path)
    if args.action == "inspect":
        print(f"{path}: {len(cache)} entries")
        for backend_id in sorted(cache.backend_ids()):
            subset = cache.filter(backend_id)
            yes = sum(bit for _, bit in subset.items())
            print(f"  {backend_id}: {len(subset)} entries, {yes} yes")
        return 0
    subset = cache.filter(args.backend_id) if args.backend_id else cache
    persist_cache(subset, args.dest)
    print(f"exported {len(subset)} entries to {args.dest}")
    return 0


def cmd_env(args: argparse.Namespace) -> int:
    env = make_env(args.task_id)
    env.reset(args.seed)
    print(env.render())
    for _ in range(args.oracle_steps):
        if env.done:
            break
        skill_id = env.oracle_next()
        result = env.execute_skill(skill_id)
        print(f"\n> {env.skills()[skill_id].description}: completed={result.outcome.completed} "
              f"steps={result.outcome.primitive_steps_used} reward={result.reward:g}")
        print(env.render())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrl-workbench", description="LLM-guided hierarchical RL workbench")
    parser.add_argument("--log-level", default=LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one agent kind over its seeds")
    _add_experiment_args(run)
    run.add_argument("--agent", choices=AGENT_KINDS)
    run.add_argument("--eval-episodes", type=int, default=0,
                     help="after training, evaluate each seed with the backend attached and disabled")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="train several agent kinds x seeds in parallel")
    _add_experiment_args(sw)
    sw.add_argument("--agents", nargs="+", choices=AGENT_KINDS, default=list(AGENT_KINDS))
    sw.set_defaults(func=cmd_sweep)

    cmp = sub.add_parser("compare", help="aggregate runs of one task into CSVs and an SVG")
    _add_experiment_args(cmp)
    cmp.add_argument("--agents", nargs="+", choices=AGENT_KINDS, default=list(AGENT_KINDS))
    cmp.add_argument("--compare-dir")
    cmp.set_defaults(func=cmd_compare)

    cache = sub.add_parser("cache", help="warm, inspect or export the prompt cache")
    cache.add_argument("action", choices=["warm", "inspect", "export"])
    cache.add_argument("--cache-path")
    cache.add_argument("--goal-seeds", default="0-9", help="warm: goal seeds to enumerate")
    cache.add_argument("--backend-id", help="export: keep only this backend's answers")
    cache.add_argument("--dest", default="priors_export.tsv", help="export: destination file")
    _add_experiment_args(cache)
    cache.set_defaults(func=cmd_cache)

    env = sub.add_parser("env", help="render a task layout as text")
    env.add_argument("task_id", choices=sorted(TASK_FAMILIES))
    env.add_argument("--seed", type=int, default=0)
    env.add_argument("--oracle-steps", type=int, default=0, help="also step the oracle and render each state")
    env.set_defaults(func=cmd_env)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WorkbenchError as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
