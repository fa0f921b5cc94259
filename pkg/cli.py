"""
Command-line entry point: ``python cli.py <command> [options]``.

Every command writes its effective configuration to ``<output>/config.json``
before doing any work. Exit codes: 0 success, 2 configuration error,
3 provider error, 4 protocol failure.
"""

import argparse
import hashlib
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from content_logic import (
    PLACEHOLDER_EXEMPLARS,
    builtin_policies,
    generate_corpus,
    get_policy,
    load_exemplars,
    load_policies,
    save_policies,
    save_risk_series,
    synthetic_risk_series,
)
from errors import EXIT_OK, EXIT_PROTOCOL, EXIT_PROVIDER, ConfigError, PartialCorpusError, PartialNetworkError, VacSimError, exit_code_for
from eval_logic import (
    DEFAULT_TEMPERATURE_GRID,
    TARGET_HESITANCY,
    analysis_report,
    compare_rankings,
    end_hesitancy_table,
    load_rankings_table,
    load_reference_series,
    mae_vs_reference,
    metrics_table,
    p1_align,
    p2_effort_gap,
    p3_stance_gap,
    p4_judge,
    sweep_policies,
    trajectory_table,
)
from llm_gateway import build_chat_provider
from models import BackendKind, Policy, PolicyCategory, PolicyEffort, SimulationConfig
from persona_logic import BUNDLED_MARGINALS, load_marginals, sample_population, save_personas
from simulation_logic import batch_is_partial, load_run_log, make_batch_runner, run_batch, summarize_batch, with_overrides
from socialnet_logic import generate_network, save_edges

logger = logging.getLogger(__name__)

PATH_KEYS = ("corpus_path", "marginals_path", "risk_path", "few_shot_path", "network_path", "personas_path")

INIT_FILES = {
    "config": "config.json",
    "marginals": "demographic_marginals.json",
    "policies": "policies.json",
    "risk": "risk.csv",
    "exemplars": "news_exemplars.json",
}


# --- Configuration -------------------------------------------------------------------------


def load_config(path: Optional[str]) -> SimulationConfig:
    """Read a JSON config; relative data paths resolve against the config's directory."""

    if path is None:
        return SimulationConfig()
    source = Path(path)
    try:
        payload = json.loads(source.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {source}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {source} is not valid JSON: {exc}")

    for key in PATH_KEYS:
        value = payload.get(key)
        if value and not Path(value).is_absolute():
            payload[key] = str((source.parent / value).resolve())
    try:
        return SimulationConfig.model_validate(payload)
    except ValueError as exc:
        raise ConfigError(f"invalid config {source}: {exc}")


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: SimulationConfig, assignments: Sequence[str], seed: Optional[int], backend: Optional[str]) -> SimulationConfig:
    """``--set key=value`` pairs (dotted keys reach into ``provider``), then --seed and --backend."""

    payload: Dict[str, Any] = config.model_dump(mode="json")
    for assignment in assignments:
        key, sep, value = assignment.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {assignment!r}")
        target = payload
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(target.get(part), dict):
                raise ConfigError(f"unknown config section {part!r} in {key!r}")
            target = target[part]
        target[parts[-1]] = _parse_value(value)
    if seed is not None:
        payload["seed"] = seed
    if backend is not None:
        payload["provider"]["backend"] = backend
    try:
        return SimulationConfig.model_validate(payload)
    except ValueError as exc:
        raise ConfigError(f"invalid override: {exc}")


def _catalog(args: argparse.Namespace) -> List[Policy]:
    if args.policies:
        return load_policies(args.policies)
    if args.config:
        sibling = Path(args.config).parent / INIT_FILES["policies"]
        if sibling.exists():
            return load_policies(sibling)
    return builtin_policies()


def _parse_policy(name: str, catalog: Sequence[Policy]) -> Optional[Policy]:
    """``none`` or ``<effort>_<category>``, e.g. ``strong_incentive``."""

    if name in ("none", "no_policy"):
        return None
    effort, _, category = name.partition("_")
    try:
        return get_policy(PolicyCategory(category), PolicyEffort(effort), catalog)
    except ValueError:
        raise ConfigError(f"unknown policy {name!r}; use none or <weak|strong>_<incentive|ambassador|mandate>")


def _seeds(args: argparse.Namespace, config: SimulationConfig) -> List[int]:
    return [config.seed + offset for offset in range(args.runs)]


def _write_config(config: SimulationConfig, output: Path) -> None:
    output.mkdir(parents=True, exist_ok=True)
    (output / "config.json").write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")


# --- Commands ------------------------------------------------------------------------------


def cmd_init(args: argparse.Namespace) -> int:
    output = Path(args.output)
    if output.exists() and any(output.iterdir()) and not args.force:
        raise ConfigError(f"{output} is not empty; pass --force to overwrite")
    output.mkdir(parents=True, exist_ok=True)

    config = SimulationConfig(
        marginals_path=INIT_FILES["marginals"],
        risk_path=INIT_FILES["risk"],
        few_shot_path=INIT_FILES["exemplars"],
    )
    (output / INIT_FILES["config"]).write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    shutil.copyfile(BUNDLED_MARGINALS, output / INIT_FILES["marginals"])
    save_policies(builtin_policies(), output / INIT_FILES["policies"])
    save_risk_series(synthetic_risk_series(config.steps), output / INIT_FILES["risk"])
    shutil.copyfile(PLACEHOLDER_EXEMPLARS, output / INIT_FILES["exemplars"])

    for name in INIT_FILES.values():
        print(output / name)
    return EXIT_OK


def cmd_gen_network(args: argparse.Namespace, config: SimulationConfig, output: Path) -> int:
    personas = sample_population(load_marginals(config.marginals_path), config.n_agents, config.seed)
    save_personas(personas, output / "personas.jsonl")
    provider_config = config.provider
    try:
        graph, report = generate_network(
            personas,
            build_chat_provider(provider_config, config.seed),
            seed=config.seed,
            temperature=provider_config.agent_temperature,
            parallelism=provider_config.parallelism,
            max_retries=provider_config.max_retries,
            retry_base_delay=provider_config.retry_base_delay,
            include_race=config.include_race_in_profile,
            artifact_path=output / "network.partial.csv",
        )
    except PartialNetworkError as exc:
        print(f"Network generation aborted after {len(exc.graph.edges)} edges: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    save_edges(graph, output / "network.csv")
    print(f"{report.n_agents} agents, {report.edges} edges, {report.total_dropped} dropped tokens, {report.retries} retries")
    return EXIT_OK


def cmd_gen_news(args: argparse.Namespace, config: SimulationConfig, output: Path) -> int:
    provider_config = config.provider
    count = args.count if args.count is not None else config.corpus_size
    try:
        corpus = generate_corpus(
            build_chat_provider(provider_config, config.seed),
            count,
            load_exemplars(config.few_shot_path),
            output_path=output / "news.jsonl",
            temperature=provider_config.news_temperature,
            seed=config.seed,
            parallelism=provider_config.parallelism,
            max_retries=provider_config.max_retries,
            retry_base_delay=provider_config.retry_base_delay,
            max_tokens=provider_config.max_tokens,
        )
    except PartialCorpusError as exc:
        print(f"News generation stopped; {len(exc.items)} articles saved: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    print(f"{len(corpus)} articles written to {output / 'news.jsonl'}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: SimulationConfig, output: Path) -> int:
    records = run_batch(config, _seeds(args, config), build_chat_provider, output)
    metrics = output / "metrics"
    metrics.mkdir(exist_ok=True)
    trajectory_table(records, metrics / "trajectory.csv")
    end_hesitancy_table(records).to_csv(metrics / "end_hesitancy.csv", index=False)

    for log in sorted((output / "logs").glob("*.jsonl")):
        print(f"{log.name}  sha256={hashlib.sha256(log.read_bytes()).hexdigest()}")
    if batch_is_partial(records):
        print("Batch is partial: at least one run aborted", file=sys.stderr)
        return EXIT_PROVIDER
    summary = summarize_batch(records)
    print(f"{summary.label}: end hesitancy {summary.mean:.3f} over seeds {summary.seeds}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: SimulationConfig, output: Path) -> int:
    seeds = _seeds(args, config)
    metrics = output / "metrics"
    metrics.mkdir(exist_ok=True)
    runner = make_batch_runner(build_chat_provider, output / "runs")

    if args.protocol == "p1":
        grid = [float(value) for value in args.grid.split(",")] if args.grid else list(DEFAULT_TEMPERATURE_GRID)
        result = p1_align(runner, config, grid, args.target, seeds)
        alignment = pd.DataFrame(list(result.errors.items()), columns=["temperature", "mean_error"])
        alignment.to_csv(metrics / "alignment.csv", index=False)
        for temperature, error in result.errors.items():
            print(f"T={temperature:<4} error {error:+.4f}")
        print(f"best temperature: {result.best_temperature}")
        return EXIT_OK

    if args.protocol == "p2":
        category = PolicyCategory(args.policy)
        result = p2_effort_gap(runner, config, category, seeds, _catalog(args))
        metrics_table(result.baseline, [result.weak, result.strong], metrics / f"effort_{category.value}.csv")
        print(f"{category.value}: dH weak {result.delta_weak:.4f}, strong {result.delta_strong:.4f}, gap {result.gap:.4f}")
        if not result.passed:
            print("effort gap below the 0.02 separation bar", file=sys.stderr)
            return EXIT_PROTOCOL
        return EXIT_OK

    if args.protocol == "p3":
        result = p3_stance_gap(runner, config, seeds)
        metrics_table(result.positive, [result.negative], metrics / "stance.csv")
        print(f"drift pos {result.drift_pos:+.4f}, neg {result.drift_neg:+.4f}, gap {result.gap:+.4f}")
        return EXIT_OK if result.gap > 0 else EXIT_PROTOCOL

    logs = _log_paths(args.logs)
    provider_config = config.provider
    reports = p4_judge(
        logs,
        build_chat_provider(provider_config, config.seed),
        n_agents_sampled=args.agents,
        episodes_per_category=args.episodes,
        seed=config.seed,
        temperature=provider_config.judge_temperature,
        parallelism=provider_config.parallelism,
        max_retries=provider_config.max_retries,
        retry_base_delay=provider_config.retry_base_delay,
    )
    rows = []
    for category, report in reports.items():
        rows.append(
            {
                "category": category.value,
                "mean": report.mean,
                "episodes": len(report.ratings),
                "parse_failures": report.parse_failures,
                "failed": report.failed,
            }
        )
        mean = "n/a" if report.mean is None else f"{report.mean:.3f}"
        print(f"{category.value}: mean {mean} over {len(report.ratings)} ({report.parse_failures} unparseable)")
    pd.DataFrame(rows, columns=["category", "mean", "episodes", "parse_failures", "failed"]).to_csv(
        metrics / "judge.csv", index=False
    )
    return EXIT_PROTOCOL if any(report.failed for report in reports.values()) else EXIT_OK


def cmd_rank_compare(args: argparse.Namespace, config: SimulationConfig, output: Path) -> int:
    table = load_rankings_table(args.rankings)
    rankings = dict(table.rankings)
    if args.simulate:
        sweep = sweep_policies(make_batch_runner(build_chat_provider, output / "runs"), config, _seeds(args, config), _catalog(args))
        rankings["Simulation"] = sweep.ranking
        metrics_table(sweep.baseline, sweep.treated, output / "metrics_policies.csv")

    frame = compare_rankings(rankings, table.reference, args.method)
    frame.to_csv(output / "rank_agreement.csv", index=False)
    print(f"Agreement with {table.reference_name}:")
    for row in frame.itertuples(index=False):
        print(f"  {row.ranking:<12} tau_b {row.tau_b:.3f}  p {row.p_value:.3f} ({row.p_method})")
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: SimulationConfig, output: Path) -> int:
    logs = _log_paths(args.logs)
    reports = output / "reports"
    reports.mkdir(exist_ok=True)

    records = [load_run_log(path) for path in logs]
    trajectory_table(records, reports / "trajectory.csv")
    if args.reference:
        reference = load_reference_series(args.reference)
        rows = []
        for path, record in zip(logs, records):
            mae = mae_vs_reference(record.trajectory(), reference)
            rows.append({"log": Path(path).name, "mae_points": mae})
            print(f"{Path(path).name}: MAE {mae:.2f} points")
        pd.DataFrame(rows, columns=["log", "mae_points"]).to_csv(reports / "mae.csv", index=False)

    report = analysis_report(
        logs,
        build_chat_provider(config.provider, config.seed),
        scope=args.scope,
        n_agents=args.agents,
        seed=config.seed,
        temperature=config.provider.judge_temperature,
        parallelism=config.provider.parallelism,
        max_retries=config.provider.max_retries,
        retry_base_delay=config.provider.retry_base_delay,
    )
    (reports / "analysis.md").write_text(report.render() + "\n", encoding="utf-8")
    print(f"{len(report.sections)} sections, {report.calls} calls -> {reports / 'analysis.md'}")
    return EXIT_PROVIDER if report.partial else EXIT_OK


def _log_paths(location: str) -> List[Path]:
    target = Path(location)
    paths = sorted(target.rglob("*.jsonl")) if target.is_dir() else [target]
    paths = [path for path in paths if path.exists()]
    if not paths:
        raise ConfigError(f"no run logs found at {location}")
    return paths


# --- Parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring SimulationConfig")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--backend", choices=[kind.value for kind in BackendKind])
    common.add_argument("--output", default="out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--policies", help="policy catalog override (JSON)")
    common.add_argument("--log-level", default="INFO")

    parser = argparse.ArgumentParser(prog="vacsim", description="Vaccine-hesitancy multi-agent simulator")
    commands = parser.add_subparsers(dest="command", required=True)

    init = commands.add_parser("init", help="scaffold config and data files")
    init.add_argument("output")
    init.add_argument("--force", action="store_true")
    init.add_argument("--log-level", default="INFO")

    commands.add_parser("gen-network", parents=[common], help="build the follow graph")

    news = commands.add_parser("gen-news", parents=[common], help="generate a news corpus")
    news.add_argument("--count", type=int)

    run = commands.add_parser("run", parents=[common], help="run a seeded batch")
    run.add_argument("--policy", default="none", help="none or <effort>_<category>")
    run.add_argument("--runs", type=int, default=1)

    evaluate = commands.add_parser("eval", parents=[common], help="evaluation protocols")
    evaluate.add_argument("protocol", choices=["p1", "p2", "p3", "p4"])
    evaluate.add_argument("--runs", type=int, default=5)
    evaluate.add_argument("--grid", help="comma-separated temperatures (p1)")
    evaluate.add_argument("--target", type=float, default=TARGET_HESITANCY)
    evaluate.add_argument("--policy", default=PolicyCategory.INCENTIVE.value, choices=[c.value for c in PolicyCategory])
    evaluate.add_argument("--logs", default="out/logs", help="run logs for p4")
    evaluate.add_argument("--agents", type=int, default=25)
    evaluate.add_argument("--episodes", type=int, default=10)

    ranks = commands.add_parser("rank-compare", parents=[common], help="Kendall tau-b against the reference ranking")
    ranks.add_argument("--rankings", help="rankings table (defaults to the bundled one)")
    ranks.add_argument("--method", default="auto", choices=["auto", "exact", "asymptotic"])
    ranks.add_argument("--simulate", action="store_true", help="add a ranking from a simulated policy sweep")
    ranks.add_argument("--runs", type=int, default=5)

    report = commands.add_parser("report", parents=[common], help="analysis report and trajectory tables")
    report.add_argument("--logs", default="out/logs")
    report.add_argument("--scope", default="meta", choices=["per_agent", "meta"])
    report.add_argument("--agents", type=int, default=25)
    report.add_argument("--reference", help="week,hesitancy_percent CSV")

    return parser


_COMMANDS = {
    "gen-network": cmd_gen_network,
    "gen-news": cmd_gen_news,
    "run": cmd_run,
    "eval": cmd_eval,
    "rank-compare": cmd_rank_compare,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "init":
            return cmd_init(args)
        config = apply_overrides(load_config(args.config), args.set, args.seed, args.backend)
        if args.command == "run":
            config = with_overrides(config, policy=_parse_policy(args.policy, _catalog(args)))
        output = Path(args.output)
        _write_config(config, output)
        return _COMMANDS[args.command](args, config, output)
    except VacSimError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    raise SystemExit(main())
