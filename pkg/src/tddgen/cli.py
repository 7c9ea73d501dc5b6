"""Command-line front end: every pipeline stage as a subcommand."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from tddgen import evalharness, orchestrator, report as report_mod, retrieval, sandbox, selection
from tddgen.errors import ConfigurationError, TddgenError
from tddgen.gateway import ProviderConfig, extract_tool_requests
from tddgen.manifest import load_manifests
from tddgen.orchestrator import RunBudgets, ToolContext, dispatch_tool
from tddgen.probe_report import load_report, save_report
from tddgen.repo_index import build_index, index_to_json, load_or_build, resolve_target
from tddgen.selection import SelectionStrategy


def _parse_budget(raw: str) -> int | None:
    if raw.lower() == "all":
        return selection.ALL
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError("budget must be >= 1 or 'All'")
    return value


def _locator(args) -> dict:
    locator: dict = {"file_path": args.target_file}
    if args.qualified_name:
        locator["qualified_name"] = args.qualified_name
    if args.start_line is not None:
        locator["start_line"] = args.start_line
    if args.end_line is not None:
        locator["end_line"] = args.end_line
    return locator


def _add_target_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--target-file", required=True, help="repo-relative path of the target's file")
    parser.add_argument("--qualified-name", default="", help="dotted path within the file")
    parser.add_argument("--start-line", type=int, default=None)
    parser.add_argument("--end-line", type=int, default=None)


def _provider_from_args(args) -> ProviderConfig:
    if args.provider == "scripted":
        if not args.replay:
            raise ConfigurationError("--replay is required with --provider scripted")
        return ProviderConfig(kind="scripted", replay_path=args.replay)
    if not args.endpoint:
        raise ConfigurationError("--endpoint is required with --provider http-chat")
    return ProviderConfig(
        kind="http_chat",
        model_name=args.model,
        endpoint=args.endpoint,
        api_key_env=args.api_key_env,
    )


def _default_plugin_file() -> str | None:
    try:
        import repoprobe
    except ImportError:
        return None
    return str(Path(repoprobe.__file__).with_name("plugin.py"))


def _write_or_print(payload: str, out: str | None) -> None:
    if out:
        Path(out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_index(args) -> int:
    index = build_index(args.repo)
    _write_or_print(index_to_json(index), args.out)
    return 0


def cmd_probe(args) -> int:
    plugin_file = args.plugin_file or _default_plugin_file()
    if plugin_file is None:
        raise ConfigurationError(
            "no probe plugin: install the repoprobe package or pass --plugin-file"
        )
    index = load_or_build(args.repo)
    target = resolve_target(index, _locator(args))
    ws = sandbox.create_workspace(args.repo, target)
    try:
        mode = "coverage" if args.coverage else "stub"
        if mode == "stub":
            sandbox.install_stub(ws)
        probe_report = sandbox.run_probe(
            ws,
            plugin_file,
            args.out,
            mode=mode,
            canonical=args.canonical,
        )
    finally:
        sandbox.destroy_workspace(ws)
    save_report(probe_report, args.out)
    print(f"wrote {args.out} ({len(probe_report.records)} records)")
    return 0


def cmd_select_tests(args) -> int:
    probe_report = load_report(args.report)
    plan = selection.select(probe_report, args.strategy, args.budget, args.seed)
    _write_or_print(json.dumps(plan.to_doc(), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_generate(args) -> int:
    manifests = {m.task_id: m for m in load_manifests(args.manifest)}
    if args.task_id not in manifests:
        raise ConfigurationError(f"unknown task id {args.task_id!r} in {args.manifest}")
    config = evalharness.ExperimentConfig(
        label=args.task_id,
        strategy=SelectionStrategy(kind=args.strategy, budget_t=args.budget, rng_seed=args.seed),
        policy=args.policy,
        budgets=RunBudgets(
            max_retrieval_rounds=args.max_retrieval_rounds,
            max_refinement_attempts=args.max_refinement_attempts,
            max_rrw_rounds_per_attempt=args.max_rrw_rounds,
        ),
        provider_cfg=_provider_from_args(args),
    )
    out_dir = Path(args.out_dir)
    row = evalharness.run_one_task(manifests[args.task_id], config, out_dir)
    print(json.dumps(row.to_doc(), indent=2, sort_keys=True))
    return 0 if row.verdict != "infrastructure_error" else 1


def _grid_from_file(path: str) -> list[evalharness.ExperimentConfig]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list):
        raise ConfigurationError(f"grid file must be a JSON array: {path}")
    configs = []
    for entry in doc:
        budget_raw = entry.get("budget_t", 3)
        budget = selection.ALL if budget_raw in (None, "All", "all") else int(budget_raw)
        strategy_kind = entry.get("strategy", "THM").upper()
        provider = entry.get("provider")
        provider_cfg = ProviderConfig(**provider) if provider else None
        budgets = RunBudgets(**entry.get("budgets", {}))
        configs.append(
            evalharness.ExperimentConfig(
                label=entry["label"],
                strategy=SelectionStrategy(
                    kind=strategy_kind,
                    budget_t=budget,
                    rng_seed=entry.get("seed", 0),
                ),
                policy=entry.get("policy", "AllStage"),
                budgets=budgets,
                provider_cfg=provider_cfg,
                parallelism=entry.get("parallelism", 1),
                seed=entry.get("seed", 0),
            )
        )
    return configs


def cmd_evaluate(args) -> int:
    manifests = load_manifests(args.manifest)
    grid = _grid_from_file(args.grid)
    if args.dry_run:
        for config in grid:
            print(
                f"{config.label}: strategy={config.strategy.kind} "
                f"T={config.strategy.budget_t if config.strategy.budget_t is not None else 'All'} "
                f"policy={config.policy} digest={config.digest()} tasks={len(manifests)}"
            )
        return 0
    reports = evalharness.run_grid(manifests, grid, args.run_dir)
    for rep in reports:
        agg = rep.aggregates
        print(f"{rep.config_label}: pass@1={agg['pass_at_1']:.4f} over {agg['tasks']} task(s)")
    return 0


def cmd_tools(args) -> int:
    index = load_or_build(args.repo)
    target = resolve_target(index, _locator(args))
    requests, rejected = extract_tool_requests(args.call)
    if rejected:
        raise ConfigurationError(f"rejected call: {rejected[0].reason}")
    if not requests:
        raise ConfigurationError(f"not a recognized API call: {args.call!r}")
    ws = sandbox.create_workspace(args.repo, target)
    ctx = ToolContext(index=index, ws=ws, target=target, plan=None)
    try:
        for request in requests:
            print(dispatch_tool(request, ctx))
    finally:
        ctx.close()
        sandbox.destroy_workspace(ws)
    return 0


def cmd_report(args) -> int:
    reports = []
    for path in args.metrics:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        reports.append(evalharness.report_from_doc(doc))
    artifacts = report_mod.write_report(reports, args.out_dir, figures=not args.no_figures)
    for name, value in sorted(artifacts.items()):
        print(f"{name}: {value}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tddgen",
        description="Test-driven repository-level code generation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a repository index and emit it as JSON")
    p.add_argument("--repo", required=True)
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("probe", help="run the dynamic probe against a stubbed target")
    p.add_argument("--repo", required=True)
    _add_target_flags(p)
    p.add_argument("--out", required=True, help="ProbeReport output path")
    p.add_argument("--coverage", action="store_true", help="coverage mode on the pristine repo")
    p.add_argument("--canonical", action="store_true", help="zero volatile fields for golden files")
    p.add_argument("--plugin-file", default=None, help="probe plugin path (default: repoprobe package)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("select-tests", help="compute a SelectionPlan from a ProbeReport")
    p.add_argument("--report", required=True)
    p.add_argument("--strategy", default="THM", choices=sorted(selection.STRATEGY_KINDS))
    p.add_argument("--budget", type=_parse_budget, default=3, help="integer or 'All'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_select_tests)

    p = sub.add_parser("generate", help="run one task end to end")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task-id", required=True)
    p.add_argument("--policy", default="AllStage", choices=orchestrator.STAGE_POLICIES)
    p.add_argument("--strategy", default="THM", choices=sorted(selection.STRATEGY_KINDS))
    p.add_argument("--budget", type=_parse_budget, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--provider", default="scripted", choices=("scripted", "http-chat"))
    p.add_argument("--replay", default="", help="replay file for the scripted provider")
    p.add_argument("--endpoint", default="")
    p.add_argument("--model", default="")
    p.add_argument("--api-key-env", default="")
    p.add_argument("--max-retrieval-rounds", type=int, default=15)
    p.add_argument("--max-refinement-attempts", type=int, default=5)
    p.add_argument("--max-rrw-rounds", type=int, default=15)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="run an experiment grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", required=True, help="JSON array of configurations")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tools", help="run one agent API call ad hoc")
    p.add_argument("--repo", required=True)
    _add_target_flags(p)
    p.add_argument("--call", required=True, help="e.g. search_class(\"Foo\")")
    p.set_defaults(func=cmd_tools)

    p = sub.add_parser("report", help="render metrics to table, CSV, and figures")
    p.add_argument("--metrics", nargs="+", required=True, help="metrics.json files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TddgenError as exc:
        print(f"error:{exc.code}: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error:invalid-input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
