"""Experiment grids over benchmark tasks: run configurations, compute the
headline metrics, and persist per-task artifacts for resumable grids."""

from __future__ import annotations

import ast
import dataclasses
import hashlib
import json
import textwrap
import tokenize
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

from tddgen import sandbox
from tddgen.errors import TestRunnerError, WorkspaceStateError
from tddgen.gateway import ProviderConfig
from tddgen.manifest import TaskManifest
from tddgen.orchestrator import RunBudgets, _TaskRun
from tddgen.probe_report import ProbeReport, load_report
from tddgen.repo_index import CodeEntity, load_or_build, resolve_target
from tddgen.selection import SelectionStrategy

ROW_VERDICTS = ("pass", "fail", "budget_exhausted", "infrastructure_error")


@dataclass(frozen=True)
class ExperimentConfig:
    label: str
    strategy: SelectionStrategy
    policy: str
    budgets: RunBudgets = RunBudgets()
    provider_cfg: ProviderConfig | None = None
    parallelism: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    def digest(self) -> str:
        doc = {
            "strategy": {
                "kind": self.strategy.kind,
                "budget_t": self.strategy.budget_t,
                "rng_seed": self.strategy.rng_seed,
            },
            "policy": self.policy,
            "budgets": dataclasses.asdict(self.budgets),
            "provider": dataclasses.asdict(self.provider_cfg) if self.provider_cfg else None,
            "seed": self.seed,
        }
        blob = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class TaskRow:
    task_id: str
    verdict: str  # final outcome, evaluation-suite based
    trajectory_verdict: str  # in-loop outcome from the orchestrator
    rounds_to_pass: int | None
    input_tokens: int
    output_tokens: int
    api_calls: int
    coverage_pct: float | None = None

    def __post_init__(self):
        if self.verdict not in ROW_VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def to_doc(self) -> dict:
        return dataclasses.asdict(self)


def row_from_doc(doc: dict) -> TaskRow:
    return TaskRow(**doc)


@dataclass
class MetricsReport:
    config_label: str
    config_digest: str
    rows: list[TaskRow]
    aggregates: dict = field(default_factory=dict)
    solved_set: tuple[str, ...] = ()

    def to_doc(self) -> dict:
        return {
            "config_label": self.config_label,
            "config_digest": self.config_digest,
            "rows": [r.to_doc() for r in self.rows],
            "aggregates": self.aggregates,
            "solved_set": list(self.solved_set),
        }


def report_from_doc(doc: dict) -> MetricsReport:
    return MetricsReport(
        config_label=doc["config_label"],
        config_digest=doc["config_digest"],
        rows=[row_from_doc(r) for r in doc["rows"]],
        aggregates=doc["aggregates"],
        solved_set=tuple(doc["solved_set"]),
    )


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------


def executable_body_lines(entity: CodeEntity) -> set[int]:
    """Line numbers of the target body that carry code: blank, comment, and
    docstring lines are excluded, as is the definition header."""
    # parse the entity in isolation; offsets are relative to span.start_line
    source = entity.body_text
    node = ast.parse(textwrap.dedent(source)).body[0]
    if not hasattr(node, "body"):
        return set()
    body = node.body
    start = 0
    if (
        body
        and isinstance(body[0], ast.Expr)
        and isinstance(body[0].value, ast.Constant)
        and isinstance(body[0].value.value, str)
    ):
        start = 1
    code_lines: set[int] = set()
    comment_lines: set[int] = set()
    try:
        for tok in tokenize.generate_tokens(StringIO(textwrap.dedent(source)).readline):
            # comment-only lines; an inline comment does not disqualify code
            if tok.type == tokenize.COMMENT and not tok.line[: tok.start[1]].strip():
                comment_lines.add(tok.start[0])
    except tokenize.TokenError:
        pass
    for stmt in body[start:]:
        for sub in ast.walk(stmt):
            lineno = getattr(sub, "lineno", None)
            if lineno is not None:
                code_lines.add(lineno)
    offset = entity.span.start_line - 1
    return {offset + n for n in code_lines if n not in comment_lines}


def coverage_pct(report: ProbeReport, entity: CodeEntity) -> float | None:
    """Covered fraction of executable target-body lines, from the probe's
    coverage mode; None when no record carries coverage data."""
    covered: set[int] = set()
    saw_any = False
    for record in report.records:
        if record.covered_lines:
            saw_any = True
            covered.update(record.covered_lines)
    if not saw_any:
        return None
    denominator = executable_body_lines(entity)
    if not denominator:
        return None
    return 100.0 * len(covered & denominator) / len(denominator)


# ---------------------------------------------------------------------------
# Verdicts and task execution
# ---------------------------------------------------------------------------


def final_verdict(
    ws: sandbox.Workspace,
    manifest: TaskManifest,
    timeout_s: float = sandbox.DEFAULT_FULL_SUITE_TIMEOUT_S,
) -> str:
    """Run the FULL evaluation suite; pass iff every test passes. Distinct
    from the in-loop selected-test validation."""
    result = sandbox.run_tests(ws, list(manifest.evaluation_test_ids), timeout_s=timeout_s)
    return "pass" if result.all_passed() else "fail"


def _task_provider_cfg(config: ExperimentConfig, manifest: TaskManifest) -> ProviderConfig:
    cfg = config.provider_cfg
    if cfg is None:
        raise ValueError(f"config {config.label!r} has no provider")
    if cfg.kind == "scripted" and Path(cfg.replay_path).is_dir():
        # directory of replays keyed by task id
        return dataclasses.replace(
            cfg, replay_path=str(Path(cfg.replay_path) / f"{manifest.task_id}.json")
        )
    return cfg


def _task_coverage(manifest: TaskManifest) -> float | None:
    """Coverage from a coverage-mode probe report only; stub-mode reports
    trace the stub line, not the ground-truth body."""
    if not manifest.coverage_report_path:
        return None
    try:
        report = load_report(manifest.coverage_report_path)
        index = load_or_build(manifest.repo_root)
        entity = resolve_target(index, manifest.target_locator)
    except Exception:
        return None
    return coverage_pct(report, entity)


def run_one_task(
    manifest: TaskManifest, config: ExperimentConfig, artifact_dir: str | Path | None = None
) -> TaskRow:
    run = _TaskRun(
        manifest,
        config.budgets,
        config.policy,
        config.strategy,
        _task_provider_cfg(config, manifest),
    )
    trajectory, ws = run.run()
    verdict = trajectory.verdict
    patch_text = ""
    try:
        if trajectory.verdict == "infrastructure_error":
            verdict = "infrastructure_error"
        elif ws is None or ws.state != "patched":
            verdict = trajectory.verdict if trajectory.verdict == "budget_exhausted" else "fail"
        else:
            patch_text = sandbox.export_patch(ws)
            try:
                final = final_verdict(ws, manifest, config.budgets.full_suite_timeout_s)
            except (TestRunnerError, WorkspaceStateError) as exc:
                trajectory.add("error", error_code=getattr(exc, "code", "runner"), message=str(exc))
                final = None
            if final == "pass":
                verdict = "pass"
            elif trajectory.verdict == "budget_exhausted":
                verdict = "budget_exhausted"
            elif final is None:
                verdict = "infrastructure_error"
            else:
                verdict = "fail"
    finally:
        if ws is not None:
            sandbox.destroy_workspace(ws)

    row = TaskRow(
        task_id=manifest.task_id,
        verdict=verdict,
        trajectory_verdict=trajectory.verdict,
        rounds_to_pass=trajectory.rounds_to_pass if verdict == "pass" else None,
        input_tokens=trajectory.usage.input_tokens,
        output_tokens=trajectory.usage.output_tokens,
        api_calls=trajectory.api_call_count,
        coverage_pct=_task_coverage(manifest),
    )
    if artifact_dir is not None:
        out = Path(artifact_dir)
        out.mkdir(parents=True, exist_ok=True)
        trajectory.write(out / "trajectory.jsonl")
        if patch_text:
            (out / "patch.diff").write_text(patch_text, encoding="utf-8")
        (out / "row.json").write_text(
            json.dumps(row.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return row


# ---------------------------------------------------------------------------
# Metrics and grids
# ---------------------------------------------------------------------------


def compute_metrics(rows: list[TaskRow], config: ExperimentConfig | None = None) -> MetricsReport:
    label = config.label if config else "adhoc"
    digest = config.digest() if config else ""
    n = len(rows)
    passed = [r for r in rows if r.verdict == "pass"]
    valid = [r for r in rows if r.verdict != "infrastructure_error"]
    covs = [r.coverage_pct for r in rows if r.coverage_pct is not None]

    def avg(values: list[float]) -> float:
        return sum(values) / len(values) if values else 0.0

    aggregates = {
        "tasks": n,
        "pass_at_1": len(passed) / n if n else 0.0,
        "pass_at_1_valid_only": len(passed) / len(valid) if valid else 0.0,
        "avg_input_tokens": avg([r.input_tokens for r in rows]),
        "avg_output_tokens": avg([r.output_tokens for r in rows]),
        "avg_api_calls": avg([r.api_calls for r in rows]),
        "avg_coverage_pct": avg(covs) if covs else None,
        "infrastructure_errors": n - len(valid),
    }
    return MetricsReport(
        config_label=label,
        config_digest=digest,
        rows=list(rows),
        aggregates=aggregates,
        solved_set=tuple(sorted(r.task_id for r in passed)),
    )


def solved_set_overlaps(reports: list[MetricsReport]) -> dict:
    """Partition of solved tasks across configurations: per-config exclusive
    sets, the common core, and the union."""
    sets = {r.config_label: set(r.solved_set) for r in reports}
    union: set[str] = set().union(*sets.values()) if sets else set()
    common = set.intersection(*sets.values()) if sets else set()
    exclusive = {
        label: sorted(s - set().union(*(o for k, o in sets.items() if k != label)))
        for label, s in sets.items()
    }
    return {
        "union": sorted(union),
        "common": sorted(common),
        "exclusive": exclusive,
        "per_config": {label: sorted(s) for label, s in sets.items()},
    }


def run_grid(
    manifests: list[TaskManifest],
    grid: list[ExperimentConfig],
    run_dir: str | Path,
) -> list[MetricsReport]:
    """One MetricsReport per configuration; per-task artifacts are stored
    under run_dir/<config_digest>/<task_id>/ and completed pairs are skipped
    on resume."""
    run_dir = Path(run_dir)
    reports = []
    for config in grid:
        config_dir = run_dir / config.digest()
        config_dir.mkdir(parents=True, exist_ok=True)

        def one(manifest: TaskManifest, config=config, config_dir=config_dir) -> TaskRow:
            task_dir = config_dir / manifest.task_id
            marker = task_dir / "row.json"
            if marker.exists():
                return row_from_doc(json.loads(marker.read_text(encoding="utf-8")))
            try:
                return run_one_task(manifest, config, task_dir)
            except Exception as exc:  # per-task isolation: the grid completes
                row = TaskRow(
                    task_id=manifest.task_id,
                    verdict="infrastructure_error",
                    trajectory_verdict="infrastructure_error",
                    rounds_to_pass=None,
                    input_tokens=0,
                    output_tokens=0,
                    api_calls=0,
                )
                task_dir.mkdir(parents=True, exist_ok=True)
                (task_dir / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
                (task_dir / "row.json").write_text(
                    json.dumps(row.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
                )
                return row

        if config.parallelism > 1:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                rows = list(pool.map(one, manifests))
        else:
            rows = [one(m) for m in manifests]
        report = compute_metrics(rows, config)
        (config_dir / "metrics.json").write_text(
            json.dumps(report.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        reports.append(report)
    return reports
