from __future__ import annotations

from pathlib import Path

import pytest

from tddgen.probe_report import load_report
from tddgen.repo_index import build_index

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def calcs_root() -> Path:
    return FIXTURES / "calcs"


@pytest.fixture(scope="session")
def calcs_index(calcs_root):
    return build_index(calcs_root)


@pytest.fixture(scope="session")
def sklearnish_index():
    return build_index(FIXTURES / "sklearnish")


@pytest.fixture(scope="session")
def featureunion_index():
    return build_index(FIXTURES / "featureunionish")


@pytest.fixture(scope="session")
def minilib_root() -> Path:
    return FIXTURES / "minilib"


@pytest.fixture(scope="session")
def log_loss_report():
    return load_report(FIXTURES / "goldens" / "sklearnish_log_loss.json")


@pytest.fixture(scope="session")
def bench_manifest_path() -> Path:
    return FIXTURES / "bench" / "manifest.json"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One visible pass/fail line per acceptance criterion."""
    lines = []
    for status, flag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            name = nodeid.split("::")[-1].removeprefix("test_").replace("_", " ")
            lines.append(f"[PRIMARY] {name}: {flag}")
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
