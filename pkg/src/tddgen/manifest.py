"""Benchmark task manifests.

A manifest file is a JSON array; each entry names one task: the repository
root, how to run its tests, the target locator, and the evaluation test set
used for the final verdict.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from tddgen.errors import ConfigurationError


@dataclass(frozen=True)
class TaskManifest:
    task_id: str
    repo_root: str
    target_locator: dict  # {file_path, qualified_name?, start_line?, end_line?}
    evaluation_test_ids: tuple[str, ...]
    env: dict = field(default_factory=dict)
    probe_report_path: str | None = None
    coverage_report_path: str | None = None
    task_description: str = ""

    def __post_init__(self):
        if not self.evaluation_test_ids:
            raise ConfigurationError(f"task {self.task_id}: evaluation_test_ids is empty")
        if "file_path" not in self.target_locator:
            raise ConfigurationError(f"task {self.task_id}: locator needs file_path")


def _entry_to_manifest(entry: dict, base_dir: Path) -> TaskManifest:
    def resolve(path_value: str | None) -> str | None:
        if path_value is None:
            return None
        p = Path(path_value)
        return str(p if p.is_absolute() else (base_dir / p).resolve())

    return TaskManifest(
        task_id=entry["task_id"],
        repo_root=resolve(entry["repo_root"]),
        target_locator=entry["target_locator"],
        evaluation_test_ids=tuple(entry["evaluation_test_ids"]),
        env=entry.get("env", {}),
        probe_report_path=resolve(entry.get("probe_report_path")),
        coverage_report_path=resolve(entry.get("coverage_report_path")),
        task_description=entry.get("task_description", ""),
    )


def load_manifests(path: str | Path) -> list[TaskManifest]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read manifest file {path}: {exc}") from exc
    if not isinstance(doc, list):
        raise ConfigurationError(f"manifest file must be a JSON array: {path}")
    return [_entry_to_manifest(entry, path.parent) for entry in doc]
