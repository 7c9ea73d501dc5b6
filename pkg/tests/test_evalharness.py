"""Experiment harness: coverage accounting, final verdicts, metric
aggregation, and resumable grids over the scripted benchmark."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from support import FIXTURES, make_record, make_report
from tddgen.evalharness import (
    ExperimentConfig,
    TaskRow,
    compute_metrics,
    coverage_pct,
    executable_body_lines,
    final_verdict,
    report_from_doc,
    run_grid,
    run_one_task,
    solved_set_overlaps,
)
from tddgen.gateway import ProviderConfig
from tddgen.manifest import load_manifests
from tddgen.orchestrator import RunBudgets
from tddgen.probe_report import load_report
from tddgen.repo_index import build_index, resolve_target
from tddgen.sandbox import CandidateBody, apply_candidate, create_workspace, install_stub
from tddgen.selection import SelectionStrategy

BENCH = FIXTURES / "bench"


def _config(label="thm-allstage", policy="AllStage", **kwargs) -> ExperimentConfig:
    return ExperimentConfig(
        label=label,
        strategy=SelectionStrategy("THM", 3),
        policy=policy,
        provider_cfg=ProviderConfig(kind="scripted", replay_path=str(BENCH / "replays")),
        **kwargs,
    )


def _row(task_id, verdict, coverage=None, tokens=(100, 10), api=1, rounds=None) -> TaskRow:
    return TaskRow(
        task_id=task_id,
        verdict=verdict,
        trajectory_verdict=verdict,
        rounds_to_pass=rounds,
        input_tokens=tokens[0],
        output_tokens=tokens[1],
        api_calls=api,
        coverage_pct=coverage,
    )


# -- coverage accounting ---------------------------------------------------------


def test_executable_body_lines_exact_sets(minilib_root):
    index = build_index(minilib_root)
    expected = {
        "add_scaled": {8},
        "window_sum": {17, 18, 19},
        "rolling_max": {24, 25, 26, 27, 28, 29},
        "normalize_range": {34, 35, 36, 37},
    }
    for qname, lines in expected.items():
        entity = resolve_target(index, {"file_path": "minilib/core.py", "qualified_name": qname})
        assert executable_body_lines(entity) == lines, qname


def test_executable_body_lines_skip_comments_blanks_docstring(tmp_path):
    (tmp_path / "m.py").write_text(
        "def f(x):\n"              # line 1: header, excluded
        '    """Doc line.\n'       # 2: docstring
        '    More doc."""\n'       # 3
        "    # setup comment\n"    # 4: comment
        "    y = x + 1\n"          # 5: code
        "\n"                       # 6: blank
        "    # trailing note\n"    # 7: comment
        "    return y  # inline\n" # 8: code (inline comment does not exclude)
    )
    index = build_index(tmp_path)
    entity = resolve_target(index, {"file_path": "m.py", "qualified_name": "f"})
    assert executable_body_lines(entity) == {5, 8}


def test_coverage_pct_full_partial_and_absent(minilib_root):
    index = build_index(minilib_root)
    entity = resolve_target(
        index, {"file_path": "minilib/core.py", "qualified_name": "rolling_max"}
    )
    golden = load_report(BENCH / "coverage" / "rolling_max.json")
    assert coverage_pct(golden, entity) == 100.0
    rec = make_record("tests/test_core.py::t", outcome="passed")
    partial = make_report(
        [type(rec)(**{**rec.__dict__, "covered_lines": frozenset({24, 25, 26})})]
    )
    assert coverage_pct(partial, entity) == pytest.approx(50.0)
    # lines outside the executable body never count
    noisy = make_report(
        [type(rec)(**{**rec.__dict__, "covered_lines": frozenset({24, 22, 23, 31})})]
    )
    assert coverage_pct(noisy, entity) == pytest.approx(100.0 / 6)
    assert coverage_pct(make_report([rec]), entity) is None


def test_all_bench_coverage_goldens_are_complete(minilib_root):
    index = build_index(minilib_root)
    for manifest in load_manifests(BENCH / "manifest.json"):
        entity = resolve_target(index, manifest.target_locator)
        report = load_report(manifest.coverage_report_path)
        assert coverage_pct(report, entity) == 100.0, manifest.task_id


# -- final verdict -----------------------------------------------------------------


def test_final_verdict_full_suite(minilib_root, tmp_path):
    manifest = next(
        m for m in load_manifests(BENCH / "manifest.json") if m.task_id == "normalize_range"
    )
    index = build_index(minilib_root)
    target = resolve_target(index, manifest.target_locator)
    ws = create_workspace(minilib_root, target, work_dir=tmp_path / "ws")
    install_stub(ws)
    # forgets the constant-input branch: selected tests pass, full suite fails
    apply_candidate(
        ws,
        CandidateBody(
            "lo, hi = min(values), max(values)\n"
            "return [(v - lo) / (hi - lo) for v in values]"
        ),
    )
    assert final_verdict(ws, manifest) == "fail"
    apply_candidate(
        ws,
        CandidateBody(
            "lo, hi = min(values), max(values)\n"
            "if hi == lo:\n"
            "    return [0.0 for _ in values]\n"
            "return [(v - lo) / (hi - lo) for v in values]"
        ),
    )
    assert final_verdict(ws, manifest) == "pass"


# -- metrics ------------------------------------------------------------------------


def test_compute_metrics_hand_case():
    rows = [
        _row("a", "pass", coverage=100.0, tokens=(100, 10), api=2, rounds=0),
        _row("d", "pass", coverage=None, tokens=(300, 30), api=0, rounds=1),
        _row("b", "fail", coverage=50.0, tokens=(200, 20), api=1),
        _row("c", "infrastructure_error", tokens=(0, 0), api=0),
    ]
    report = compute_metrics(rows, _config())
    agg = report.aggregates
    assert agg["tasks"] == 4
    assert agg["pass_at_1"] == 0.5
    assert agg["pass_at_1_valid_only"] == pytest.approx(2 / 3)
    assert agg["avg_input_tokens"] == 150.0
    assert agg["avg_output_tokens"] == 15.0
    assert agg["avg_api_calls"] == 0.75
    assert agg["avg_coverage_pct"] == 75.0
    assert agg["infrastructure_errors"] == 1
    assert report.solved_set == ("a", "d")
    assert report.config_digest == _config().digest()
    # doc round trip
    assert report_from_doc(report.to_doc()).to_doc() == report.to_doc()


def test_compute_metrics_empty_and_all_uncovered():
    report = compute_metrics([])
    assert report.aggregates["pass_at_1"] == 0.0
    assert report.aggregates["avg_coverage_pct"] is None
    only_fail = compute_metrics([_row("x", "fail")])
    assert only_fail.aggregates["pass_at_1"] == 0.0
    assert only_fail.solved_set == ()


def test_solved_set_overlaps_hand_enumeration():
    reports = [
        compute_metrics([_row("a", "pass"), _row("b", "pass")], None),
        compute_metrics([_row("b", "pass"), _row("c", "pass")], None),
        compute_metrics([_row("b", "pass")], None),
        compute_metrics([_row("d", "fail")], None),
    ]
    for report, label in zip(reports, ("one", "two", "three", "four")):
        report.config_label = label
    overlap = solved_set_overlaps(reports)
    assert overlap["union"] == ["a", "b", "c"]
    assert overlap["common"] == []
    assert overlap["exclusive"] == {"one": ["a"], "two": ["c"], "three": [], "four": []}
    assert overlap["per_config"]["three"] == ["b"]


def test_config_digest_is_stable_and_sensitive():
    assert _config().digest() == _config().digest()
    assert len(_config().digest()) == 16
    assert _config().digest() != _config(policy="PreGen").digest()
    assert (
        _config().digest()
        != _config(budgets=RunBudgets(max_refinement_attempts=2)).digest()
    )
    # the label is presentation-only and not part of the identity
    assert _config(label="other").digest() == _config().digest()
    with pytest.raises(ValueError):
        _config(parallelism=0)
    with pytest.raises(ValueError):
        _row("x", "exploded")


# -- task execution and grids ----------------------------------------------------------


def test_run_one_task_writes_artifacts(tmp_path):
    manifests = {m.task_id: m for m in load_manifests(BENCH / "manifest.json")}
    row = run_one_task(manifests["add_scaled"], _config(), tmp_path / "add_scaled")
    assert row.verdict == "pass" and row.rounds_to_pass == 0
    assert row.coverage_pct == 100.0
    assert (tmp_path / "add_scaled" / "trajectory.jsonl").exists()
    # the candidate reproduces the pristine body exactly, so the diff is empty
    assert not (tmp_path / "add_scaled" / "patch.diff").exists()
    saved = json.loads((tmp_path / "add_scaled" / "row.json").read_text(encoding="utf-8"))
    assert saved == row.to_doc()


def test_run_one_task_demotes_in_loop_pass(tmp_path):
    manifests = {m.task_id: m for m in load_manifests(BENCH / "manifest.json")}
    row = run_one_task(manifests["normalize_range"], _config(), tmp_path / "normalize_range")
    # selected tests passed in the loop, the withheld evaluation test did not
    assert row.trajectory_verdict == "pass"
    assert row.verdict == "fail"
    assert row.rounds_to_pass is None
    patch = (tmp_path / "normalize_range" / "patch.diff").read_text(encoding="utf-8")
    assert patch.startswith("--- a/minilib/core.py")
    assert any(line.startswith("-") and "hi == lo" in line for line in patch.splitlines())


@pytest.fixture(scope="module")
def grid_run(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("grid")
    manifests = load_manifests(BENCH / "manifest.json")
    config = _config()
    reports = run_grid(manifests, [config], run_dir)
    return run_dir, config, reports


def test_grid_headline_metrics(grid_run):
    _, _, (report,) = grid_run
    agg = report.aggregates
    assert agg["tasks"] == 4
    assert agg["pass_at_1"] == 0.5
    assert agg["pass_at_1_valid_only"] == 0.5
    assert agg["avg_input_tokens"] == 1050.0
    assert agg["avg_output_tokens"] == 350.0
    assert agg["avg_api_calls"] == 0.5
    assert agg["avg_coverage_pct"] == 100.0
    assert agg["infrastructure_errors"] == 0
    assert report.solved_set == ("add_scaled", "window_sum")
    by_id = {r.task_id: r.verdict for r in report.rows}
    assert by_id == {
        "add_scaled": "pass",
        "window_sum": "pass",
        "rolling_max": "budget_exhausted",
        "normalize_range": "fail",
    }


def test_grid_persists_metrics_and_artifacts(grid_run):
    run_dir, config, (report,) = grid_run
    config_dir = run_dir / config.digest()
    saved = json.loads((config_dir / "metrics.json").read_text(encoding="utf-8"))
    assert saved == report.to_doc()
    for task_id in ("add_scaled", "window_sum", "rolling_max", "normalize_range"):
        assert (config_dir / task_id / "row.json").exists()


def test_grid_resume_skips_completed_tasks(grid_run):
    run_dir, config, _ = grid_run
    marker = run_dir / config.digest() / "add_scaled" / "row.json"
    doc = json.loads(marker.read_text(encoding="utf-8"))
    doc["api_calls"] = 777  # tamper: a resumed run must read, not recompute
    marker.write_text(json.dumps(doc), encoding="utf-8")
    (resumed,) = run_grid(load_manifests(BENCH / "manifest.json"), [config], run_dir)
    by_id = {r.task_id: r for r in resumed.rows}
    assert by_id["add_scaled"].api_calls == 777
    assert by_id["window_sum"].verdict == "pass"


def test_grid_isolates_per_task_failures(tmp_path):
    manifests = load_manifests(BENCH / "manifest.json")
    lonely = tmp_path / "replays"
    lonely.mkdir()
    (lonely / "add_scaled.json").write_text(
        (BENCH / "replays" / "add_scaled.json").read_text(encoding="utf-8"), encoding="utf-8"
    )
    config = ExperimentConfig(
        label="partial",
        strategy=SelectionStrategy("THM", 3),
        policy="AllStage",
        provider_cfg=ProviderConfig(kind="scripted", replay_path=str(lonely)),
    )
    (report,) = run_grid(manifests, [config], tmp_path / "run")
    by_id = {r.task_id: r.verdict for r in report.rows}
    assert by_id["add_scaled"] == "pass"
    assert by_id["window_sum"] == "infrastructure_error"
    assert report.aggregates["infrastructure_errors"] == 3
    error_txt = tmp_path / "run" / config.digest() / "window_sum" / "error.txt"
    assert error_txt.exists() and error_txt.read_text(encoding="utf-8").strip()


def test_empty_grid(tmp_path):
    assert run_grid([], [], tmp_path) == []
