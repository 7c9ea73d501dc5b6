"""Per-task workflow: context assembly, retrieval, generation, validation,
and the reflection-based refinement loop.

A trajectory is an append-only event log; with the scripted provider the
whole trajectory (events, verdict, counts) is byte-stable across runs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template

from tddgen import retrieval, sandbox, selection
from tddgen.errors import (
    CandidateSyntaxError,
    NoCandidateError,
    ProbeError,
    ProviderError,
    ScopeNotFoundError,
    TddgenError,
    TestRunnerError,
    WorkspaceStateError,
)
from tddgen.gateway import (
    ChatMessage,
    RejectedRequest,
    TokenUsage,
    ToolRequest,
    complete,
    extract_candidate_body,
    extract_tool_requests,
    make_provider,
)
from tddgen.manifest import TaskManifest
from tddgen.probe_report import load_report
from tddgen.repo_index import CodeEntity, RepoIndex, load_or_build, resolve_target
from tddgen.sandbox import Workspace
from tddgen.selection import SelectionPlan

STAGE_POLICIES = ("NoTest", "PreGen", "PostGen", "AllStage")

VERDICTS = ("pass", "fail", "budget_exhausted", "infrastructure_error")


@dataclass(frozen=True)
class RunBudgets:
    max_retrieval_rounds: int = 15
    max_refinement_attempts: int = 5
    max_rrw_rounds_per_attempt: int = 15
    selected_test_timeout_s: float = sandbox.DEFAULT_TEST_RUN_TIMEOUT_S
    full_suite_timeout_s: float = sandbox.DEFAULT_FULL_SUITE_TIMEOUT_S
    debugger_timeout_s: float = sandbox.DEFAULT_DEBUGGER_TIMEOUT_S

    def __post_init__(self):
        for name in ("max_retrieval_rounds", "max_refinement_attempts", "max_rrw_rounds_per_attempt"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class AgentTrajectory:
    task_id: str
    events: list[dict] = field(default_factory=list)
    usage: TokenUsage = TokenUsage()
    api_call_count: int = 0
    rounds_to_pass: int | None = None
    verdict: str = "fail"

    def add(self, event_kind: str, **payload) -> None:
        self.events.append({"event": event_kind, **payload})

    def to_jsonl(self) -> str:
        lines = [json.dumps(e, sort_keys=True) for e in self.events]
        lines.append(
            json.dumps(
                {
                    "event": "summary",
                    "verdict": self.verdict,
                    "rounds_to_pass": self.rounds_to_pass,
                    "input_tokens": self.usage.input_tokens,
                    "output_tokens": self.usage.output_tokens,
                    "api_call_count": self.api_call_count,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def _template(name: str) -> Template:
    text = resources.files("tddgen.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return Template(text)


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------


def _test_definition_line(plan_record, index: RepoIndex) -> int | None:
    node_id = plan_record.node_id
    parts = node_id.split("::")
    file_path = parts[0]
    bare = re.sub(r"\[.*\]$", "", parts[-1])
    if not index.has_file(file_path):
        return None
    for entity in index.entities_in_file(file_path):
        if entity.bare_name == bare and entity.kind in ("function", "method"):
            return entity.span.start_line
    return None


def render_selected_tests(plan: SelectionPlan, index: RepoIndex) -> str:
    """Test block of the issue prompt: node id, approximate line, and the
    call-site file/line for indirect invocations."""
    if not plan.chosen:
        return "## Test Information\nNo failing test cases are available for the target function.\n"
    count = len(plan.chosen)
    lines = [
        "## Test Information",
        f"We will provide you the top {count} test cases that invoke the target "
        "from distinct callers with shortest call stack.",
        f"Here are {count} selected test cases:",
    ]
    for i, rec in enumerate(plan.chosen, start=1):
        lines.append(f"- Test {i}:")
        def_line = _test_definition_line(rec, index)
        around = f", around line: {def_line}" if def_line else ""
        test_name = re.sub(r"\[.*\]$", "", rec.node_id.split("::")[-1])
        direct = rec.direct_caller == test_name or rec.chain_depth <= 1
        if direct:
            lines.append(f"pytest node id: `{rec.node_id}`{around}. ")
        else:
            lines.append(f"pytest node id: `{rec.node_id}`{around};")
            if len(rec.call_chain) >= 2:
                site = rec.call_chain[-2]
                lines.append(
                    f"The target function is called in file {site.file_path} "
                    f"around line {site.line};"
                )
    return "\n".join(lines) + "\n"


def build_issue_prompt(
    target: CodeEntity, test_section: str, task_description: str = ""
) -> str:
    source_code = target.signature
    if target.docstring is not None:
        # header plus docstring, as shown to the model (body is a stub)
        doc_lines = target.docstring.splitlines() or [target.docstring]
        source_code += '\n"""' + "\n".join(doc_lines) + '\n"""'
    body = _template("issue").substitute(
        target_name=target.bare_name,
        file_location=target.span.file_path,
        start_line=target.span.start_line,
        end_line=target.span.end_line,
        source_code=source_code,
        test_section=test_section,
    )
    if task_description:
        body = task_description.rstrip() + "\n" + body
    return body


# ---------------------------------------------------------------------------
# Tool dispatch
# ---------------------------------------------------------------------------


@dataclass
class ToolContext:
    index: RepoIndex
    ws: Workspace
    target: CodeEntity
    plan: SelectionPlan | None
    debugger_timeout_s: float = sandbox.DEFAULT_DEBUGGER_TIMEOUT_S
    cache: dict[str, str] = field(default_factory=dict)
    debugger: sandbox.DebuggerSession | None = None

    def close(self) -> None:
        if self.debugger is not None and self.debugger.alive:
            sandbox.close_debugger(self.debugger)
            self.debugger = None


def _render_hits(hits: list[retrieval.SearchHit]) -> str:
    if not hits:
        return "No results found."
    parts = [f"Found {len(hits)} result(s):"]
    for hit in hits:
        header = f"- {hit.span.file_path}:{hit.span.start_line}-{hit.span.end_line}"
        if hit.entity is not None:
            header += f" ({hit.entity.qualified_name})"
        if hit.score is not None:
            header += f" [score={hit.score:.4f}]"
        parts.append(header)
        parts.append("```")
        parts.append(hit.snippet)
        parts.append("```")
    return "\n".join(parts)


def _coerce_int(value, param: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"argument {param!r} must be an integer, got {value!r}")
    return value


def _coerce_str(value, param: str) -> str:
    if not isinstance(value, str):
        raise ValueError(f"argument {param!r} must be a string, got {value!r}")
    return value


def dispatch_tool(request: ToolRequest, ctx: ToolContext) -> str:
    """Route one extracted API call; identical repeats return the cached
    payload plus a repetition notice."""
    key = request.render()
    if key in ctx.cache:
        return (
            "NOTICE: Do not call the same API with the same parameters repeatedly. "
            "Returning the previous result.\n" + ctx.cache[key]
        )
    try:
        payload = _dispatch(request, ctx)
    except (ScopeNotFoundError, TddgenError, ValueError) as exc:
        payload = f"ERROR ({request.render()}): {exc}"
    ctx.cache[key] = payload
    return payload


def _dispatch(request: ToolRequest, ctx: ToolContext) -> str:
    name = request.api_name
    args = request.args_dict()
    index, target = ctx.index, ctx.target
    if name == "search_test_cases":
        if ctx.plan is None or not ctx.plan.chosen:
            return "No test cases are available for the target function."
        return "Selected test cases (pytest nodeid format):\n" + "\n".join(
            ctx.plan.node_ids
        )
    if name == "search_import_in_file":
        records = retrieval.search_import_statement(index, _coerce_str(args["file_name"], "file_name"))
        if not records:
            return "No top-level import statements found."
        return "Top-level import statements:\n" + "\n".join(r.statement_text for r in records)
    if name == "search_target_usage_example":
        n = _coerce_int(args["example_num"], "example_num")
        return _render_hits(retrieval.search_target_usage(index, target, n))
    if name == "search_relevant_method":
        n = _coerce_int(args["top_num"], "top_num")
        return _render_hits(retrieval.search_similar_method(index, target, n))
    if name == "run_pdb_cmd":
        cmd = _coerce_str(args["cmd"], "cmd")
        if ctx.debugger is None or not ctx.debugger.alive:
            node_id = ctx.plan.node_ids[0] if ctx.plan and ctx.plan.chosen else None
            if node_id is None:
                return "ERROR: no test available to debug."
            ctx.debugger = sandbox.open_debugger(ctx.ws, node_id)
        output = sandbox.run_debugger_cmd(ctx.debugger, cmd, ctx.debugger_timeout_s)
        return f"(Pdb) {cmd}\n{output}"
    if name == "search_class":
        return _render_hits(retrieval.search_class(index, _coerce_str(args["class_name"], "class_name")))
    if name == "search_class_in_file":
        return _render_hits(
            retrieval.search_class_in_file(
                index,
                _coerce_str(args["class_name"], "class_name"),
                _coerce_str(args["file_name"], "file_name"),
            )
        )
    if name == "search_method":
        return _render_hits(retrieval.search_method(index, _coerce_str(args["method_name"], "method_name")))
    if name == "search_method_in_file":
        return _render_hits(
            retrieval.search_method_in_file(
                index,
                _coerce_str(args["method_name"], "method_name"),
                _coerce_str(args["file_path"], "file_path"),
            )
        )
    if name == "search_method_in_class":
        return _render_hits(
            retrieval.search_method_in_class(
                index,
                _coerce_str(args["method_name"], "method_name"),
                _coerce_str(args["class_name"], "class_name"),
            )
        )
    if name == "search_code":
        return _render_hits(retrieval.search_code(index, _coerce_str(args["code_str"], "code_str")))
    if name == "search_code_in_file":
        return _render_hits(
            retrieval.search_code_in_file(
                index,
                _coerce_str(args["code_str"], "code_str"),
                _coerce_str(args["file_path"], "file_path"),
            )
        )
    if name == "get_code_around_line":
        hit = retrieval.get_code_around_line(
            index,
            _coerce_str(args["file_path"], "file_path"),
            _coerce_int(args["line_number"], "line_number"),
            _coerce_int(args["window_size"], "window_size"),
        )
        return _render_hits([hit])
    raise ValueError(f"unroutable API {name!r}")


# ---------------------------------------------------------------------------
# The task runner
# ---------------------------------------------------------------------------

_SUFFICIENCY_RE = re.compile(r"^\s*(SUFFICIENT|NEED_MORE)\s*$", re.MULTILINE)


class _TaskRun:
    def __init__(
        self,
        manifest: TaskManifest,
        budgets: RunBudgets,
        policy: str,
        strategy: selection.SelectionStrategy,
        provider_cfg,
        keep_workspace: bool = False,
    ):
        if policy not in STAGE_POLICIES:
            raise ValueError(f"unknown stage policy {policy!r}")
        self.manifest = manifest
        self.budgets = budgets
        self.policy = policy
        self.strategy = strategy
        self.provider = make_provider(provider_cfg)
        self.trajectory = AgentTrajectory(task_id=manifest.task_id)
        self.messages: list[ChatMessage] = []
        self.attempt_index = 0
        self.keep_workspace = keep_workspace
        self.ws: Workspace | None = None
        self.ctx: ToolContext | None = None

    # -- message plumbing ---------------------------------------------------

    def _say(self, role: str, content: str, phase: str) -> None:
        self.messages.append(ChatMessage(role=role, content=content))
        self.trajectory.add("prompt", role=role, phase=phase, content=content)

    def _ask(self, phase: str) -> str:
        text, usage = complete(self.provider, self.messages)
        self.messages.append(ChatMessage(role="assistant", content=text))
        self.trajectory.usage = self.trajectory.usage + usage
        self.trajectory.add(
            "assistant",
            phase=phase,
            content=text,
            input_tokens=usage.input_tokens,
            output_tokens=usage.output_tokens,
        )
        return text

    def _execute_tools(
        self, requests: list[ToolRequest], rejected: list[RejectedRequest], phase: str
    ) -> None:
        payloads: list[tuple[str, str, str]] = []
        for req in requests:
            self.trajectory.add("tool_call", phase=phase, api=req.api_name, call=req.render())
            payload = dispatch_tool(req, self.ctx)
            self.trajectory.api_call_count += 1
            self.trajectory.add(
                "tool_result",
                phase=phase,
                api=req.api_name,
                args_digest=req.args_digest(),
                payload=payload,
            )
            payloads.append((req.api_name, req.args_digest(), payload))
        for rej in rejected:
            message = f"REJECTED API call `{rej.text}`: {rej.reason}."
            self.trajectory.api_call_count += 1
            self.trajectory.add("tool_call", phase=phase, api="<rejected>", call=rej.text)
            self.trajectory.add(
                "tool_result", phase=phase, api="<rejected>", args_digest="", payload=message
            )
            payloads.append(("<rejected>", "", message))
        content = "\n\n".join(
            f"Result of {api}:\n{payload}" if api != "<rejected>" else payload
            for api, _, payload in payloads
        )
        self.messages.append(
            ChatMessage(role="tool", content=content, tool_results=tuple(payloads))
        )
        self.trajectory.add("prompt", role="tool", phase=phase, content=content)

    # -- workflow pieces ----------------------------------------------------

    def _build_plan(self) -> SelectionPlan | None:
        if self.policy == "NoTest":
            return None
        if not self.manifest.probe_report_path:
            raise ProbeError(
                f"task {self.manifest.task_id}: no probe report available and policy "
                f"{self.policy} needs one"
            )
        report = load_report(self.manifest.probe_report_path)
        plan = selection.select(
            report, self.strategy.kind, self.strategy.budget_t, self.strategy.rng_seed
        )
        if not plan.chosen:
            self.trajectory.add(
                "warning",
                message="no failing tests against the stub; degrading to NoTest policy",
            )
            self.policy = "NoTest"
            return None
        return plan

    def _extract_candidate(self, text: str, target: CodeEntity) -> sandbox.CandidateBody | None:
        try:
            return extract_candidate_body(text, target.signature, self.attempt_index)
        except NoCandidateError:
            return None

    def _apply(self, candidate: sandbox.CandidateBody) -> str | None:
        """Apply a candidate; returns an error text on syntactic failure."""
        if self.ws.state == "patched":
            sandbox.revert_to_stub(self.ws)
        try:
            sandbox.apply_candidate(self.ws, candidate)
        except CandidateSyntaxError as exc:
            self.trajectory.add(
                "candidate_syntax_failure", attempt_index=candidate.attempt_index, error=str(exc)
            )
            return str(exc)
        self.trajectory.add(
            "candidate", attempt_index=candidate.attempt_index, body=candidate.body_text
        )
        return None

    def _validate_selected(self, plan: SelectionPlan) -> sandbox.TestRunResult:
        result = sandbox.run_tests(
            self.ws, plan.node_ids, timeout_s=self.budgets.selected_test_timeout_s
        )
        self.trajectory.add(
            "validation",
            kind="selected-tests",
            per_test=result.per_test,
            passed=result.all_passed(),
        )
        return result

    def _final_evaluation(self) -> bool:
        result = sandbox.run_tests(
            self.ws,
            list(self.manifest.evaluation_test_ids),
            timeout_s=self.budgets.full_suite_timeout_s,
        )
        self.trajectory.add(
            "final_evaluation", per_test=result.per_test, passed=result.all_passed()
        )
        return result.all_passed()

    # -- phases -------------------------------------------------------------

    def _retrieval_phase(self, target: CodeEntity) -> sandbox.CandidateBody | None:
        for _round in range(self.budgets.max_retrieval_rounds):
            text = self._ask("retrieval")
            requests, rejected = extract_tool_requests(text)
            if requests or rejected:
                self._execute_tools(requests, rejected, "retrieval")
                continue
            candidate = self._extract_candidate(text, target)
            if candidate is not None:
                return candidate
            self._say("user", _template("reprompt_candidate").template, "retrieval")
        # budget hit: force a generation request (counted separately)
        self._say("user", _template("force_generation").template, "forced-generation")
        text = self._ask("forced-generation")
        candidate = self._extract_candidate(text, target)
        if candidate is None:
            self._say("user", _template("reprompt_candidate").template, "forced-generation")
            text = self._ask("forced-generation")
            candidate = self._extract_candidate(text, target)
        return candidate

    def _rrw_attempt(
        self, target: CodeEntity, plan: SelectionPlan, failure_output: str
    ) -> tuple[sandbox.CandidateBody | None, str]:
        budget = self.budgets.max_rrw_rounds_per_attempt
        exchanges = 0
        attempt = self.attempt_index

        def phase(name: str, prompt: str, allow_tools: bool) -> str:
            nonlocal exchanges
            self.trajectory.add("rrw_phase", attempt=attempt, phase=name)
            self._say("user", prompt, f"rrw:{name}")
            text = self._ask(f"rrw:{name}")
            if allow_tools and exchanges < budget:
                requests, rejected = extract_tool_requests(text)
                if requests or rejected:
                    self._execute_tools(requests, rejected, f"rrw:{name}")
                    exchanges += 1
            return text

        phase(
            "fault_localization",
            _template("rrw_fault_localization").substitute(failure_output=failure_output),
            allow_tools=True,
        )
        phase("context_review", _template("rrw_context_review").template, allow_tools=True)
        while True:
            text = phase("sufficiency_check", _template("rrw_sufficiency").template, allow_tools=False)
            match = _SUFFICIENCY_RE.search(text)
            verdict = match.group(1) if match else "NEED_MORE"
            if verdict == "SUFFICIENT" or exchanges >= budget:
                break
            phase("gather_more", _template("rrw_gather_more").template, allow_tools=True)
        phase("fix_strategy", _template("rrw_fix_strategy").template, allow_tools=False)
        self.trajectory.add("rrw_phase", attempt=attempt, phase="refine")
        self._say("user", _template("rrw_refine").template, "rrw:refine")
        text = self._ask("rrw:refine")
        candidate = self._extract_candidate(text, target)
        if candidate is None:
            self._say("user", _template("reprompt_candidate").template, "rrw:refine")
            text = self._ask("rrw:refine")
            candidate = self._extract_candidate(text, target)
        return candidate, text

    # -- the whole task -----------------------------------------------------

    def run(self) -> tuple[AgentTrajectory, Workspace | None]:
        try:
            return self._run()
        except (TestRunnerError, WorkspaceStateError, ProbeError, ProviderError, OSError) as exc:
            self.trajectory.add("error", error_code=getattr(exc, "code", "os-error"), message=str(exc))
            self.trajectory.verdict = "infrastructure_error"
            return self.trajectory, self.ws
        finally:
            if self.ctx is not None:
                self.ctx.close()

    def _run(self) -> tuple[AgentTrajectory, Workspace | None]:
        manifest = self.manifest
        index = load_or_build(manifest.repo_root)
        target = resolve_target(index, manifest.target_locator)
        self.ws = sandbox.create_workspace(manifest.repo_root, target, env=manifest.env)
        sandbox.install_stub(self.ws)
        plan = self._build_plan()
        self.ctx = ToolContext(
            index=index,
            ws=self.ws,
            target=target,
            plan=plan,
            debugger_timeout_s=self.budgets.debugger_timeout_s,
        )
        self.trajectory.add(
            "task_start",
            task_id=manifest.task_id,
            policy=self.policy,
            strategy=self.strategy.kind,
            budget_t=self.strategy.budget_t if self.strategy.budget_t is not None else "All",
            selected_tests=plan.node_ids if plan else [],
        )

        show_tests = self.policy in ("PreGen", "AllStage") and plan is not None
        test_section = render_selected_tests(plan, index) if show_tests else ""
        self._say("system", _template("system").template, "setup")
        issue = build_issue_prompt(target, test_section, manifest.task_description)
        self._say("user", issue, "setup")
        self._say("user", _template("toolset").template, "setup")

        candidate = self._retrieval_phase(target)
        if candidate is None:
            self.trajectory.verdict = "fail"
            self.trajectory.add("warning", message="no candidate produced after forced re-prompt")
            return self.trajectory, self.ws

        syntax_error = self._apply(candidate)

        if self.policy in ("NoTest", "PreGen"):
            if syntax_error is not None:
                self.trajectory.verdict = "fail"
                return self.trajectory, self.ws
            passed = self._final_evaluation()
            self.trajectory.verdict = "pass" if passed else "fail"
            self.trajectory.rounds_to_pass = 0 if passed else None
            return self.trajectory, self.ws

        # PostGen / AllStage: validate against the selected tests, then RRW.
        if syntax_error is None:
            result = self._validate_selected(plan)
            if result.all_passed():
                self.trajectory.verdict = "pass"
                self.trajectory.rounds_to_pass = 0
                return self.trajectory, self.ws
            failure_output = result.raw_output_tail
        else:
            failure_output = syntax_error

        while self.attempt_index < self.budgets.max_refinement_attempts:
            self.attempt_index += 1
            candidate, _text = self._rrw_attempt(target, plan, failure_output)
            if candidate is None:
                self.trajectory.verdict = "fail"
                self.trajectory.add(
                    "warning", message="no candidate produced in refinement after re-prompt"
                )
                return self.trajectory, self.ws
            syntax_error = self._apply(candidate)
            if syntax_error is not None:
                # cheap signal: feed back without consuming a test run
                failure_output = syntax_error
                continue
            result = self._validate_selected(plan)
            if result.all_passed():
                self.trajectory.verdict = "pass"
                self.trajectory.rounds_to_pass = self.attempt_index
                return self.trajectory, self.ws
            failure_output = result.raw_output_tail

        self.trajectory.verdict = "budget_exhausted"
        return self.trajectory, self.ws


def run_task(
    manifest: TaskManifest,
    budgets: RunBudgets,
    policy: str,
    strategy: selection.SelectionStrategy,
    provider_cfg,
) -> tuple[AgentTrajectory, Workspace | None]:
    """Execute one task end to end; returns the trajectory and the workspace
    (still holding the last applied candidate) for final evaluation."""
    return _TaskRun(manifest, budgets, policy, strategy, provider_cfg).run()
