"""Probe report document model: schema validation, round trips, and
byte-stable serialization against a golden file."""

from __future__ import annotations

import json
import random

import pytest

from support import FIXTURES, make_record, make_report, random_probe_report
from tddgen.probe_report import (
    OUTCOMES,
    FrameRef,
    load_report,
    report_from_doc,
    report_to_doc,
    save_report,
    validate_report_doc,
)

GOLDEN = FIXTURES / "goldens" / "sklearnish_log_loss.json"


def test_outcome_taxonomy_is_closed():
    assert set(OUTCOMES) == {"stub_failure", "other_failure", "passed", "error", "skipped"}


def test_frame_ref_rejects_nonpositive_line():
    FrameRef("a.py", "f", 1)
    with pytest.raises(ValueError):
        FrameRef("a.py", "f", 0)


def test_golden_round_trip_is_byte_identical(tmp_path, log_loss_report):
    out = tmp_path / "copy.json"
    save_report(log_loss_report, out)
    assert out.read_bytes() == GOLDEN.read_bytes()


def test_fuzzed_reports_round_trip():
    rng = random.Random(4)
    for _ in range(25):
        report = random_probe_report(rng)
        assert report_from_doc(report_to_doc(report)) == report


def test_validate_rejects_duplicate_node_ids():
    doc = report_to_doc(make_report([make_record("t::a"), make_record("t::b")]))
    validate_report_doc(doc)
    doc["records"][1]["node_id"] = "t::a"
    with pytest.raises(ValueError, match="duplicate node_id"):
        validate_report_doc(doc)


def test_validate_rejects_schema_violations():
    base = report_to_doc(make_report([make_record("t::a")]))
    bad_outcome = json.loads(json.dumps(base))
    bad_outcome["records"][0]["outcome"] = "exploded"
    bad_version = json.loads(json.dumps(base))
    bad_version["schema_version"] = 99
    missing_field = json.loads(json.dumps(base))
    del missing_field["records"][0]["chain_depth"]
    bad_frame = json.loads(json.dumps(base))
    bad_frame["records"][0]["call_chain"][0]["line"] = 0
    for doc in (bad_outcome, bad_version, missing_field, bad_frame):
        with pytest.raises(Exception):
            report_from_doc(doc)


def test_covered_lines_serialize_sorted():
    record = make_record("t::a", outcome="passed")
    record = type(record)(**{**record.__dict__, "covered_lines": frozenset({9, 3, 7})})
    doc = report_to_doc(make_report([record]))
    assert doc["records"][0]["covered_lines"] == [3, 7, 9]


def test_report_lookup_helpers(log_loss_report):
    fails = log_loss_report.stub_failures()
    assert len(fails) == 3
    assert all(r.outcome == "stub_failure" for r in fails)
    rec = log_loss_report.record(fails[0].node_id)
    assert rec is fails[0]
    with pytest.raises(KeyError):
        log_loss_report.record("missing::test")


def test_load_report_golden_fields(log_loss_report):
    assert log_loss_report.target["file_path"] == "sklearn/neural_network/_base.py"
    assert log_loss_report.runner_version.startswith("pytest-")
    depth_by_caller = {
        (r.direct_caller, r.chain_depth) for r in log_loss_report.stub_failures()
    }
    assert ("_backprop", 4) in depth_by_caller
