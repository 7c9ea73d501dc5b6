"""Probe report data model and JSON schema.

The probe (a pytest plugin injected into the target repository by the
sandbox) writes one JSON document per run; everything on the selection and
orchestration side consumes these documents, so golden reports checked into
fixtures make the whole core testable without executing the probe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

OUTCOMES = ("stub_failure", "other_failure", "passed", "error", "skipped")

SCHEMA_VERSION = 1

PROBE_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "target", "records", "suite_runtime_s", "runner_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "target": {
            "type": "object",
            "required": ["file_path"],
            "properties": {
                "file_path": {"type": "string"},
                "qualified_name": {"type": ["string", "null"]},
                "start_line": {"type": ["integer", "null"]},
                "end_line": {"type": ["integer", "null"]},
            },
        },
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "node_id",
                    "outcome",
                    "call_chain",
                    "direct_caller",
                    "chain_depth",
                    "covered_lines",
                    "assertion_bearing",
                    "cyclomatic_complexity",
                ],
                "properties": {
                    "node_id": {"type": "string"},
                    "outcome": {"enum": list(OUTCOMES)},
                    "call_chain": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["file_path", "function_name", "line"],
                            "properties": {
                                "file_path": {"type": "string"},
                                "function_name": {"type": "string"},
                                "line": {"type": "integer", "minimum": 1},
                            },
                        },
                    },
                    "direct_caller": {"type": ["string", "null"]},
                    "chain_depth": {"type": "integer", "minimum": 0},
                    "covered_lines": {"type": "array", "items": {"type": "integer"}},
                    "assertion_bearing": {"type": "boolean"},
                    "cyclomatic_complexity": {"type": "integer", "minimum": 0},
                    "annotations": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "suite_runtime_s": {"type": "number"},
        "runner_version": {"type": "string"},
    },
}


@dataclass(frozen=True)
class FrameRef:
    file_path: str
    function_name: str
    line: int

    def __post_init__(self):
        if self.line < 1:
            raise ValueError("frame line must be >= 1")


@dataclass(frozen=True)
class TestCaseRecord:
    node_id: str
    outcome: str
    call_chain: tuple[FrameRef, ...] = ()
    direct_caller: str | None = None
    chain_depth: int = 0
    covered_lines: frozenset[int] = frozenset()
    assertion_bearing: bool = False
    cyclomatic_complexity: int = 1
    annotations: tuple[str, ...] = ()


@dataclass(frozen=True)
class ProbeReport:
    target: dict
    records: tuple[TestCaseRecord, ...]
    suite_runtime_s: float = 0.0
    runner_version: str = ""

    def stub_failures(self) -> list[TestCaseRecord]:
        return [r for r in self.records if r.outcome == "stub_failure"]

    def record(self, node_id: str) -> TestCaseRecord:
        for r in self.records:
            if r.node_id == node_id:
                return r
        raise KeyError(node_id)


def validate_report_doc(doc: dict) -> None:
    jsonschema.validate(doc, PROBE_REPORT_SCHEMA)
    seen = set()
    for rec in doc["records"]:
        if rec["node_id"] in seen:
            raise ValueError(f"duplicate node_id in report: {rec['node_id']}")
        seen.add(rec["node_id"])


def report_from_doc(doc: dict) -> ProbeReport:
    validate_report_doc(doc)
    records = tuple(
        TestCaseRecord(
            node_id=r["node_id"],
            outcome=r["outcome"],
            call_chain=tuple(
                FrameRef(f["file_path"], f["function_name"], f["line"]) for f in r["call_chain"]
            ),
            direct_caller=r["direct_caller"],
            chain_depth=r["chain_depth"],
            covered_lines=frozenset(r["covered_lines"]),
            assertion_bearing=r["assertion_bearing"],
            cyclomatic_complexity=r["cyclomatic_complexity"],
            annotations=tuple(r.get("annotations", ())),
        )
        for r in doc["records"]
    )
    return ProbeReport(
        target=doc["target"],
        records=records,
        suite_runtime_s=doc["suite_runtime_s"],
        runner_version=doc["runner_version"],
    )


def report_to_doc(report: ProbeReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "target": report.target,
        "records": [
            {
                "node_id": r.node_id,
                "outcome": r.outcome,
                "call_chain": [
                    {"file_path": f.file_path, "function_name": f.function_name, "line": f.line}
                    for f in r.call_chain
                ],
                "direct_caller": r.direct_caller,
                "chain_depth": r.chain_depth,
                "covered_lines": sorted(r.covered_lines),
                "assertion_bearing": r.assertion_bearing,
                "cyclomatic_complexity": r.cyclomatic_complexity,
                "annotations": list(r.annotations),
            }
            for r in report.records
        ],
        "suite_runtime_s": report.suite_runtime_s,
        "runner_version": report.runner_version,
    }


def load_report(path: str | Path) -> ProbeReport:
    return report_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


def save_report(report: ProbeReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_doc(report), indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
