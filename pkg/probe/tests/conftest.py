from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from probe_support import (
    BRANCHY_SPAN,
    FIXTURES,
    KERNEL_SPAN,
    KERNEL_STUB_SPAN,
    run_probe,
)


@pytest.fixture(scope="session")
def stubbed_repo(tmp_path_factory) -> Path:
    repo = tmp_path_factory.mktemp("stubbed") / "depthlib_stubbed"
    shutil.copytree(FIXTURES / "depthlib_stubbed", repo)
    return repo


@pytest.fixture(scope="session")
def pristine_repo(tmp_path_factory) -> Path:
    repo = tmp_path_factory.mktemp("pristine") / "depthlib"
    shutil.copytree(FIXTURES / "depthlib", repo)
    return repo


@pytest.fixture(scope="session")
def stub_report(stubbed_repo, tmp_path_factory) -> dict:
    out = tmp_path_factory.mktemp("stub_out") / "report.json"
    return run_probe(
        stubbed_repo,
        out,
        target_file="depthlib/core.py",
        qualified_name="kernel",
        span=KERNEL_STUB_SPAN,
    )


@pytest.fixture(scope="session")
def kernel_coverage_report(pristine_repo, tmp_path_factory) -> dict:
    out = tmp_path_factory.mktemp("cov_kernel") / "report.json"
    return run_probe(
        pristine_repo,
        out,
        target_file="depthlib/core.py",
        qualified_name="kernel",
        span=KERNEL_SPAN,
        mode="coverage",
    )


@pytest.fixture(scope="session")
def branchy_coverage_report(pristine_repo, tmp_path_factory) -> dict:
    out = tmp_path_factory.mktemp("cov_branchy") / "report.json"
    return run_probe(
        pristine_repo,
        out,
        target_file="depthlib/core.py",
        qualified_name="branchy",
        span=BRANCHY_SPAN,
        mode="coverage",
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One visible pass/fail line per probe acceptance criterion."""
    lines = []
    for status, flag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_probe_acceptance.py::" not in nodeid:
                continue
            name = nodeid.split("::")[-1].removeprefix("test_").replace("_", " ")
            lines.append(f"[SECONDARY] {name}: {flag}")
    if lines:
        terminalreporter.write_sep("=", "probe acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
