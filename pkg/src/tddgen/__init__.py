"""Test-driven repository-level code generation toolkit."""

from tddgen.errors import TddgenError
from tddgen.manifest import TaskManifest, load_manifests
from tddgen.orchestrator import AgentTrajectory, RunBudgets, run_task
from tddgen.probe_report import ProbeReport, TestCaseRecord, load_report, save_report
from tddgen.repo_index import RepoIndex, build_index, load_or_build, resolve_target
from tddgen.selection import SelectionPlan, SelectionStrategy, select

__version__ = "0.1.0"

__all__ = [
    "AgentTrajectory",
    "ProbeReport",
    "RepoIndex",
    "RunBudgets",
    "SelectionPlan",
    "SelectionStrategy",
    "TaskManifest",
    "TddgenError",
    "TestCaseRecord",
    "build_index",
    "load_manifests",
    "load_or_build",
    "load_report",
    "resolve_target",
    "run_task",
    "save_report",
    "select",
    "__version__",
]
