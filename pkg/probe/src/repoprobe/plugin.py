"""Self-contained pytest plugin: with a target function stubbed, record per
test its outcome, the call chain from the test function to the target frame,
and line coverage within the target span.

This file is copied verbatim into the repository under test, so it must not
import anything beyond the standard library and pytest. Configuration comes
from TDDGEN_PROBE_* environment variables; the output is a single JSON
document (ProbeReport schema v1).
"""

from __future__ import annotations

import ast
import inspect
import json
import os
import signal
import sys
import textwrap
import threading
import time
from pathlib import Path

import pytest

SCHEMA_VERSION = 1


class ProbeTimeout(Exception):
    pass


def _env(name: str, default: str = "") -> str:
    return os.environ.get(f"TDDGEN_PROBE_{name}", default)


# ---------------------------------------------------------------------------
# Static features of the test function (SS / FRS inputs)
# ---------------------------------------------------------------------------


def cyclomatic_complexity(source: str) -> int:
    """1 + decision points: if/elif, loops, except handlers, boolean
    short-circuits, conditional expressions, comprehension filters."""
    tree = ast.parse(source)
    count = 1
    for node in ast.walk(tree):
        if isinstance(node, (ast.If, ast.IfExp, ast.For, ast.AsyncFor, ast.While, ast.ExceptHandler)):
            count += 1
        elif isinstance(node, ast.BoolOp):
            count += len(node.values) - 1
        elif isinstance(node, ast.comprehension):
            count += len(node.ifs)
    return count


def assertion_bearing(source: str) -> bool:
    """assert/raise statements, `with ...raises(...)` blocks, or
    unittest-style self.assert*/self.fail calls."""
    tree = ast.parse(source)
    for node in ast.walk(tree):
        if isinstance(node, (ast.Assert, ast.Raise)):
            return True
        if isinstance(node, (ast.With, ast.AsyncWith)):
            for item in node.items:
                expr = item.context_expr
                if isinstance(expr, ast.Call):
                    func = expr.func
                    tail = func.attr if isinstance(func, ast.Attribute) else getattr(func, "id", None)
                    if tail == "raises":
                        return True
        if isinstance(node, ast.Call):
            func = node.func
            if (
                isinstance(func, ast.Attribute)
                and isinstance(func.value, ast.Name)
                and func.value.id == "self"
                and (func.attr.startswith("assert") or func.attr == "fail")
            ):
                return True
    return False


# ---------------------------------------------------------------------------
# The plugin
# ---------------------------------------------------------------------------


class _Probe:
    def __init__(self):
        self.root = Path.cwd().resolve()
        self.target_file = _env("TARGET_FILE")
        self.target_qname = _env("TARGET_QNAME") or None
        self.target_start = int(_env("TARGET_START", "0") or 0)
        self.target_end = int(_env("TARGET_END", "0") or 0)
        self.out_path = _env("OUT")
        self.marker = _env("MARKER", "TDDGEN_STUB")
        self.mode = _env("MODE", "stub")
        self.timeout_s = float(_env("TIMEOUT_S", "60") or 60)
        self.canonical = _env("CANONICAL", "0") == "1"
        self.records: dict[str, dict] = {}
        self.order: list[str] = []
        self.started = time.monotonic()
        self._target_abspath = str((self.root / self.target_file).resolve())
        self._is_target_file: dict[str, bool] = {}

    def _matches_target(self, filename: str) -> bool:
        cached = self._is_target_file.get(filename)
        if cached is None:
            cached = str(Path(filename).resolve()) == self._target_abspath
            self._is_target_file[filename] = cached
        return cached

    # -- record plumbing ----------------------------------------------------

    def record(self, node_id: str) -> dict:
        if node_id not in self.records:
            self.order.append(node_id)
            self.records[node_id] = {
                "node_id": node_id,
                "outcome": "passed",
                "call_chain": [],
                "direct_caller": None,
                "chain_depth": 0,
                "covered_lines": set(),
                "assertion_bearing": False,
                "cyclomatic_complexity": 1,
                "annotations": [],
            }
        return self.records[node_id]

    def analyze_static(self, item, rec: dict) -> None:
        func = getattr(item, "function", None)
        if func is None:
            rec["annotations"].append("source-unavailable")
            return
        func = inspect.unwrap(func)
        try:
            source = textwrap.dedent(inspect.getsource(func))
            rec["cyclomatic_complexity"] = cyclomatic_complexity(source)
            rec["assertion_bearing"] = assertion_bearing(source)
        except (OSError, TypeError, SyntaxError):
            rec["annotations"].append("source-unavailable")

    # -- traceback analysis -------------------------------------------------

    def _frames(self, tb) -> list[tuple[str, str, int]]:
        frames = []
        while tb is not None:
            code = tb.tb_frame.f_code
            frames.append((code.co_filename, code.co_name, tb.tb_lineno))
            tb = tb.tb_next
        return frames

    def _relpath(self, filename: str) -> str:
        try:
            return str(Path(filename).resolve().relative_to(self.root))
        except ValueError:
            return filename

    def _in_target_span(self, filename: str, line: int) -> bool:
        if not self._matches_target(filename):
            return False
        if not self.target_start:
            return True
        return self.target_start <= line <= self.target_end

    def classify_failure(self, item, excinfo, rec: dict) -> None:
        value = excinfo.value
        if isinstance(value, ProbeTimeout):
            rec["outcome"] = "error"
            rec["annotations"].append("timeout")
            return
        frames = self._frames(excinfo.tb)
        stub_hit = self.marker in str(value) and any(
            self._in_target_span(f, line) for f, _, line in frames
        )
        if not stub_hit:
            rec["outcome"] = "other_failure"
            return
        rec["outcome"] = "stub_failure"
        test_name = getattr(item, "originalname", None) or item.name.split("[")[0]
        start = 0
        for i, (_, func_name, _) in enumerate(frames):
            if func_name == test_name:
                start = i
                break
        end = max(
            i for i, (f, _, line) in enumerate(frames) if self._in_target_span(f, line)
        )
        chain = [
            {
                "file_path": self._relpath(f),
                "function_name": func_name,
                "line": line,
            }
            for f, func_name, line in frames[start : end + 1]
        ]
        rec["call_chain"] = chain
        rec["chain_depth"] = max(len(chain) - 1, 0)
        if len(chain) >= 2:
            rec["direct_caller"] = chain[-2]["function_name"]
        elif chain:
            rec["direct_caller"] = chain[0]["function_name"]

    # -- hooks ----------------------------------------------------------------

    @pytest.hookimpl(hookwrapper=True)
    def pytest_runtest_call(self, item):
        rec = self.record(item.nodeid)
        covered = rec["covered_lines"]
        matches_target = self._matches_target
        start_line, end_line = self.target_start, self.target_end

        def global_trace(frame, event, arg):
            if event != "call":
                return None
            if not matches_target(frame.f_code.co_filename):
                return None

            def local_trace(frame, event, arg):
                if event == "line" and (
                    not start_line or start_line <= frame.f_lineno <= end_line
                ):
                    covered.add(frame.f_lineno)
                return local_trace

            return local_trace

        use_alarm = (
            hasattr(signal, "SIGALRM")
            and threading.current_thread() is threading.main_thread()
            and self.timeout_s > 0
        )
        if use_alarm:
            def on_timeout(signum, frame):
                raise ProbeTimeout(f"test exceeded {self.timeout_s}s")

            previous = signal.signal(signal.SIGALRM, on_timeout)
            signal.setitimer(signal.ITIMER_REAL, self.timeout_s)
        sys.settrace(global_trace)
        try:
            yield
        finally:
            sys.settrace(None)
            if use_alarm:
                signal.setitimer(signal.ITIMER_REAL, 0)
                signal.signal(signal.SIGALRM, previous)

    @pytest.hookimpl(hookwrapper=True)
    def pytest_runtest_makereport(self, item, call):
        outcome = yield
        report = outcome.get_result()
        rec = self.record(item.nodeid)
        if call.when == "setup":
            self.analyze_static(item, rec)
        if report.skipped:
            rec["outcome"] = "skipped"
        elif report.failed:
            if call.when != "call":
                rec["outcome"] = "error"
            elif call.excinfo is not None:
                self.classify_failure(item, call.excinfo, rec)
            else:
                rec["outcome"] = "other_failure"

    def pytest_sessionfinish(self, session, exitstatus):
        runtime = 0.0 if self.canonical else round(time.monotonic() - self.started, 6)
        doc = {
            "schema_version": SCHEMA_VERSION,
            "target": {
                "file_path": self.target_file,
                "qualified_name": self.target_qname,
                "start_line": self.target_start or None,
                "end_line": self.target_end or None,
            },
            "records": [
                {**rec, "covered_lines": sorted(rec["covered_lines"])}
                for rec in (self.records[node_id] for node_id in sorted(self.order))
            ],
            "suite_runtime_s": runtime,
            "runner_version": f"pytest-{pytest.__version__}",
        }
        if self.out_path:
            Path(self.out_path).write_text(
                json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
            )


def pytest_configure(config):
    if _env("OUT"):
        config.pluginmanager.register(_Probe(), name="tddgen-probe")
