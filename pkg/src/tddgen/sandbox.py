"""Isolated working copies of a target repository.

A workspace owns a full copy of the source tree. The target function can be
stubbed (body replaced by a sentinel raise), patched with candidate bodies,
and exercised by the test runner or an interactive pdb session. One
workspace is single-writer; distinct workspaces are fully independent.
"""

from __future__ import annotations

import ast
import difflib
import os
import re
import select
import shutil
import signal
import subprocess
import sys
import tempfile
import textwrap
import time
import uuid
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from tddgen.errors import (
    CandidateSyntaxError,
    DebuggerSessionError,
    DebuggerTimeoutError,
    ProbeError,
    SpliceError,
    TestRunnerError,
    WorkspaceStateError,
)
from tddgen.probe_report import ProbeReport, load_report
from tddgen.repo_index import CodeEntity

STUB_MARKER_PREFIX = "TDDGEN_STUB"

DEFAULT_TEST_RUN_TIMEOUT_S = 300.0
DEFAULT_FULL_SUITE_TIMEOUT_S = 1800.0
DEFAULT_DEBUGGER_TIMEOUT_S = 30.0
RAW_OUTPUT_TAIL_CHARS = 20_000


@dataclass(frozen=True)
class CandidateBody:
    body_text: str  # statements only, no signature
    attempt_index: int = 0

    def __post_init__(self):
        if not self.body_text.strip():
            raise ValueError("candidate body must be nonempty")


@dataclass(frozen=True)
class TestRunResult:
    per_test: dict[str, str]  # node_id -> passed|failed|error|skipped
    raw_output_tail: str
    duration_s: float

    def all_passed(self) -> bool:
        return bool(self.per_test) and all(v == "passed" for v in self.per_test.values())

    def failing(self) -> list[str]:
        return sorted(k for k, v in self.per_test.items() if v in ("failed", "error"))


@dataclass
class Workspace:
    source_root: str
    work_root: str
    target: CodeEntity
    state: str = "pristine"  # pristine | stubbed | patched
    env: dict = field(default_factory=dict)
    stub_marker: str = ""

    @property
    def target_file(self) -> Path:
        return Path(self.work_root) / self.target.span.file_path

    def python(self) -> str:
        return self.env.get("python", sys.executable)

    def runner_argv(self) -> list[str]:
        return self.env.get("test_command", [self.python(), "-m", "pytest"])

    def subprocess_env(self) -> dict:
        env = dict(os.environ)
        env.update(self.env.get("env", {}))
        env.setdefault("PYTHONDONTWRITEBYTECODE", "1")
        return env


def create_workspace(
    source_root: str | Path,
    target: CodeEntity,
    work_dir: str | Path | None = None,
    env: dict | None = None,
) -> Workspace:
    source_root = Path(source_root).resolve()
    if work_dir is None:
        work_root = Path(tempfile.mkdtemp(prefix="tddgen-ws-"))
    else:
        work_root = Path(work_dir).resolve()
        work_root.mkdir(parents=True, exist_ok=True)
    if work_root == source_root:
        raise WorkspaceStateError("work_root must not alias source_root")
    dest = work_root / "repo"
    if dest.exists():
        shutil.rmtree(dest)
    shutil.copytree(
        source_root,
        dest,
        ignore=shutil.ignore_patterns("__pycache__", "*.pyc", ".git"),
    )
    return Workspace(
        source_root=str(source_root),
        work_root=str(dest),
        target=target,
        env=env or {},
    )


def destroy_workspace(ws: Workspace) -> None:
    parent = Path(ws.work_root).parent
    shutil.rmtree(parent, ignore_errors=True)


# ---------------------------------------------------------------------------
# Target surgery
# ---------------------------------------------------------------------------


def _locate_def(ws: Workspace) -> tuple[ast.AST, list[str], str]:
    """Find the target def node in the current workspace file."""
    text = ws.target_file.read_text(encoding="utf-8")
    lines = text.splitlines()
    tree = ast.parse(text)
    qname = ws.target.qualified_name
    stack: list[tuple[ast.AST, str]] = [(tree, "")]
    while stack:
        node, prefix = stack.pop()
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                child_q = f"{prefix}.{child.name}" if prefix else child.name
                if child_q == qname and not isinstance(child, ast.ClassDef):
                    return child, lines, text
                stack.append((child, child_q))
    raise SpliceError(f"target {qname!r} not found in {ws.target.span.file_path}")


def _body_layout(node: ast.AST, lines: list[str]) -> tuple[int, str, bool]:
    """(0-based index of the last preserved line, body indent, has_docstring).

    The preserved prefix is the header plus the docstring when present; the
    body indent is taken from the first body statement, so the docstring's
    indentation wins whenever there is one.
    """
    has_doc = ast.get_docstring(node) is not None
    first = node.body[0]
    if has_doc:
        keep_upto = first.end_lineno - 1  # keep the docstring statement
        indent = lines[first.lineno - 1][: first.col_offset]
    else:
        keep_upto = first.lineno - 2  # keep up to the line before the body
        indent = lines[first.lineno - 1][: first.col_offset]
        if first.lineno - 1 <= node.lineno - 1:
            raise SpliceError("body starts on the signature line; cannot splice")
    return keep_upto, indent, has_doc


def _replace_body(ws: Workspace, new_body_lines: list[str], error_cls) -> None:
    node, lines, original = _locate_def(ws)
    keep_upto, _indent, _ = _body_layout(node, lines)
    new_lines = lines[: keep_upto + 1] + new_body_lines + lines[node.end_lineno :]
    new_text = "\n".join(new_lines)
    if original.endswith("\n"):
        new_text += "\n"
    try:
        ast.parse(new_text)
    except SyntaxError as exc:
        diff = "\n".join(
            difflib.unified_diff(
                original.splitlines(), new_text.splitlines(), lineterm="", n=2
            )
        )
        raise error_cls(f"splice produced unparsable file: {exc.msg}\n{diff}") from exc
    ws.target_file.write_text(new_text, encoding="utf-8")


def install_stub(ws: Workspace, marker: str | None = None) -> str:
    """Replace the target body with a sentinel raise; returns the marker."""
    if ws.state != "pristine":
        raise WorkspaceStateError(f"install_stub requires pristine state, got {ws.state}")
    marker = marker or f"{STUB_MARKER_PREFIX}:{uuid.uuid4().hex[:12]}"
    _write_stub(ws, marker)
    ws.state = "stubbed"
    ws.stub_marker = marker
    return marker


def revert_to_stub(ws: Workspace) -> None:
    if ws.state != "patched":
        raise WorkspaceStateError(f"revert requires patched state, got {ws.state}")
    _write_stub(ws, ws.stub_marker)
    ws.state = "stubbed"


def _write_stub(ws: Workspace, marker: str) -> None:
    node, lines, _ = _locate_def(ws)
    _, indent, _ = _body_layout(node, lines)
    stub_line = f'{indent}raise NotImplementedError("{marker}")'
    _replace_body(ws, [stub_line], SpliceError)


def reindent_body(body_text: str, indent: str) -> list[str]:
    dedented = textwrap.dedent(body_text).strip("\n")
    return [indent + line if line.strip() else "" for line in dedented.splitlines()]


def apply_candidate(ws: Workspace, candidate: CandidateBody) -> None:
    """Splice a candidate body under the target signature (and docstring)."""
    if ws.state not in ("stubbed", "patched"):
        raise WorkspaceStateError(f"apply_candidate requires stubbed/patched state, got {ws.state}")
    node, lines, _ = _locate_def(ws)
    _, indent, _ = _body_layout(node, lines)
    _replace_body(ws, reindent_body(candidate.body_text, indent), CandidateSyntaxError)
    ws.state = "patched"


def export_patch(ws: Workspace) -> str:
    """Unified diff of the target file, work copy vs source."""
    rel = ws.target.span.file_path
    src = (Path(ws.source_root) / rel).read_text(encoding="utf-8")
    work = ws.target_file.read_text(encoding="utf-8")
    return "\n".join(
        difflib.unified_diff(
            src.splitlines(), work.splitlines(), fromfile=f"a/{rel}", tofile=f"b/{rel}", lineterm=""
        )
    )


# ---------------------------------------------------------------------------
# Test execution
# ---------------------------------------------------------------------------


def _junit_key(node_id: str) -> tuple[str, str]:
    parts = node_id.split("::")
    module = parts[0]
    if module.endswith(".py"):
        module = module[:-3]
    module = module.replace("/", ".")
    if len(parts) == 2:
        return module, parts[1]
    return module + "." + ".".join(parts[1:-1]), parts[-1]


def run_tests(
    ws: Workspace,
    node_ids: list[str],
    timeout_s: float = DEFAULT_TEST_RUN_TIMEOUT_S,
    extra_args: list[str] | None = None,
) -> TestRunResult:
    if ws.state not in ("stubbed", "patched"):
        raise WorkspaceStateError(f"run_tests requires stubbed/patched state, got {ws.state}")
    if not node_ids:
        raise ValueError("node_ids must be nonempty")
    started = time.monotonic()
    with tempfile.NamedTemporaryFile(suffix=".xml", delete=False) as handle:
        xml_path = handle.name
    try:
        argv = ws.runner_argv() + [
            "-q",
            "--no-header",
            f"--junit-xml={xml_path}",
            "-o",
            "junit_family=xunit2",
            *(extra_args or []),
            *node_ids,
        ]
        try:
            proc = subprocess.run(
                argv,
                cwd=ws.work_root,
                env=ws.subprocess_env(),
                capture_output=True,
                text=True,
                timeout=timeout_s,
            )
        except subprocess.TimeoutExpired as exc:
            raise TestRunnerError(f"test run timed out after {timeout_s}s") from exc
        output = _scrub_timings((proc.stdout or "") + (proc.stderr or ""))
        statuses = _parse_junit(xml_path)
        if proc.returncode != 0 and not statuses:
            raise TestRunnerError(
                f"runner exited {proc.returncode} with zero collected tests:\n"
                + output[-RAW_OUTPUT_TAIL_CHARS:]
            )
        per_test: dict[str, str] = {}
        for node_id in node_ids:
            per_test[node_id] = statuses.get(_junit_key(node_id), "error")
        return TestRunResult(
            per_test=per_test,
            raw_output_tail=output[-RAW_OUTPUT_TAIL_CHARS:],
            duration_s=time.monotonic() - started,
        )
    finally:
        Path(xml_path).unlink(missing_ok=True)


def _scrub_timings(output: str) -> str:
    """Replace wall-clock durations so logged runner output is byte-stable."""
    return re.sub(r"\b\d+\.\d+s\b", "N.NNs", output)


def _parse_junit(xml_path: str) -> dict[tuple[str, str], str]:
    try:
        tree = ET.parse(xml_path)
    except (ET.ParseError, FileNotFoundError):
        return {}
    statuses: dict[tuple[str, str], str] = {}
    for case in tree.getroot().iter("testcase"):
        key = (case.get("classname", ""), case.get("name", ""))
        status = "passed"
        for child in case:
            if child.tag == "failure":
                status = "failed"
            elif child.tag == "error":
                status = "error"
            elif child.tag == "skipped":
                status = "skipped"
        statuses[key] = status
    return statuses


# ---------------------------------------------------------------------------
# Interactive debugger sessions
# ---------------------------------------------------------------------------

_PDB_PROMPT = "(Pdb) "


@dataclass
class DebuggerSession:
    session_id: str
    test_node_id: str
    transcript: list[tuple[str, str]] = field(default_factory=list)
    alive: bool = True
    _proc: subprocess.Popen | None = None


def open_debugger(
    ws: Workspace, node_id: str, startup_timeout_s: float = DEFAULT_DEBUGGER_TIMEOUT_S
) -> DebuggerSession:
    if ws.state not in ("stubbed", "patched"):
        raise WorkspaceStateError(f"open_debugger requires stubbed/patched state, got {ws.state}")
    argv = [ws.python(), "-u", "-m", "pdb", "-m", "pytest", "-q", "--no-header", node_id]
    proc = subprocess.Popen(
        argv,
        cwd=ws.work_root,
        env=ws.subprocess_env(),
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
        bufsize=0,
        start_new_session=True,
    )
    session = DebuggerSession(
        session_id=uuid.uuid4().hex[:12], test_node_id=node_id, _proc=proc
    )
    banner = _read_to_prompt(session, startup_timeout_s)
    session.transcript.append(("<open>", banner))
    return session


def _kill_session(session: DebuggerSession) -> None:
    session.alive = False
    proc = session._proc
    if proc is None or proc.poll() is not None:
        return
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()
    proc.wait(timeout=5)


def _read_to_prompt(session: DebuggerSession, timeout_s: float) -> str:
    """Capture output up to (and excluding) the next pdb prompt."""
    proc = session._proc
    assert proc is not None and proc.stdout is not None
    deadline = time.monotonic() + timeout_s
    buf = ""
    fd = proc.stdout.fileno()
    while True:
        if buf.endswith(_PDB_PROMPT):
            return buf[: -len(_PDB_PROMPT)]
        if proc.poll() is not None:
            # process ended (e.g. `q`); drain what is left
            rest = proc.stdout.read() or ""
            session.alive = False
            return buf + rest
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            _kill_session(session)
            raise DebuggerTimeoutError(
                f"debugger command timed out after {timeout_s}s; session killed"
            )
        ready, _, _ = select.select([fd], [], [], min(remaining, 0.25))
        if ready:
            chunk = os.read(fd, 4096).decode("utf-8", errors="replace")
            buf += chunk


def run_debugger_cmd(
    session: DebuggerSession, cmd: str, timeout_s: float = DEFAULT_DEBUGGER_TIMEOUT_S
) -> str:
    if not session.alive or session._proc is None or session._proc.poll() is not None:
        raise DebuggerSessionError("command sent to a closed debugger session")
    proc = session._proc
    assert proc.stdin is not None
    proc.stdin.write(cmd.rstrip("\n") + "\n")
    proc.stdin.flush()
    output = _read_to_prompt(session, timeout_s)
    session.transcript.append((cmd, output))
    return output


def close_debugger(session: DebuggerSession) -> None:
    if session._proc is not None and session._proc.poll() is None:
        try:
            if session._proc.stdin is not None:
                session._proc.stdin.write("q\n")
                session._proc.stdin.flush()
                session._proc.wait(timeout=2)
        except (BrokenPipeError, OSError, subprocess.TimeoutExpired):
            pass
    _kill_session(session)


# ---------------------------------------------------------------------------
# Probe injection (the probe itself is a separate package)
# ---------------------------------------------------------------------------

_PROBE_PLUGIN_NAME = "_tddgen_probe_plugin"


def run_probe(
    ws: Workspace,
    plugin_file: str | Path,
    out_path: str | Path,
    mode: str = "stub",
    test_selector: str | None = None,
    per_test_timeout_s: float = 60.0,
    suite_timeout_s: float = DEFAULT_FULL_SUITE_TIMEOUT_S,
    canonical: bool = False,
) -> ProbeReport:
    """Run the full suite with the probe plugin injected, then remove it.

    mode "stub" expects the stub installed and records call chains; mode
    "coverage" expects the pristine ground truth and records line coverage
    within the target span.
    """
    expected_state = "stubbed" if mode == "stub" else "pristine"
    if ws.state != expected_state:
        raise WorkspaceStateError(f"probe mode {mode!r} requires {expected_state} workspace")
    plugin_dest = Path(ws.work_root) / f"{_PROBE_PLUGIN_NAME}.py"
    shutil.copyfile(plugin_file, plugin_dest)
    out_path = Path(out_path).resolve()
    env = ws.subprocess_env()
    env.update(
        {
            "TDDGEN_PROBE_TARGET_FILE": ws.target.span.file_path,
            "TDDGEN_PROBE_TARGET_QNAME": ws.target.qualified_name,
            "TDDGEN_PROBE_TARGET_START": str(ws.target.span.start_line),
            "TDDGEN_PROBE_TARGET_END": str(ws.target.span.end_line),
            "TDDGEN_PROBE_OUT": str(out_path),
            "TDDGEN_PROBE_MARKER": ws.stub_marker or STUB_MARKER_PREFIX,
            "TDDGEN_PROBE_MODE": mode,
            "TDDGEN_PROBE_TIMEOUT_S": str(per_test_timeout_s),
            "TDDGEN_PROBE_CANONICAL": "1" if canonical else "0",
        }
    )
    argv = ws.runner_argv() + ["-q", "--no-header", "-p", _PROBE_PLUGIN_NAME]
    if test_selector:
        argv += ["-k", test_selector]
    try:
        proc = subprocess.run(
            argv,
            cwd=ws.work_root,
            env=env,
            capture_output=True,
            text=True,
            timeout=suite_timeout_s,
        )
    finally:
        plugin_dest.unlink(missing_ok=True)
    if not out_path.exists():
        raise ProbeError(
            "probe run produced no report; runner output:\n"
            + ((proc.stdout or "") + (proc.stderr or ""))[-RAW_OUTPUT_TAIL_CHARS:]
        )
    return load_report(out_path)
