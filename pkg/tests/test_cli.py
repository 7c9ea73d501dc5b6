"""Command-line front end: one test per subcommand plus error exit codes."""

from __future__ import annotations

import json

from support import APPENDIX_TEST_IDS, FIXTURES
from tddgen.cli import main
from tddgen.evalharness import TaskRow, compute_metrics
from tddgen.repo_index import build_index, index_to_json

BENCH = FIXTURES / "bench"
GOLDEN_REPORT = FIXTURES / "goldens" / "sklearnish_log_loss.json"


def test_cli_index(tmp_path, calcs_root):
    out = tmp_path / "index.json"
    assert main(["index", "--repo", str(calcs_root), "--out", str(out)]) == 0
    assert out.read_text(encoding="utf-8") == index_to_json(build_index(calcs_root))


def test_cli_select_tests_default_strategy(tmp_path):
    out = tmp_path / "plan.json"
    code = main(["select-tests", "--report", str(GOLDEN_REPORT), "--out", str(out)])
    assert code == 0
    plan = json.loads(out.read_text(encoding="utf-8"))
    assert plan["chosen"] == APPENDIX_TEST_IDS
    assert plan["strategy"] == {"kind": "THM", "budget_t": 3, "rng_seed": 0}


def test_cli_select_tests_all_budget(tmp_path, capsys):
    code = main(["select-tests", "--report", str(GOLDEN_REPORT), "--budget", "All"])
    assert code == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["strategy"]["budget_t"] == "All"
    assert sorted(plan["chosen"]) == sorted(APPENDIX_TEST_IDS)


def test_cli_tools_call(capsys, fixtures_dir):
    code = main(
        [
            "tools",
            "--repo",
            str(fixtures_dir / "featureunionish"),
            "--target-file",
            "sklearn/pipeline.py",
            "--qualified-name",
            "FeatureUnion.fit",
            "--call",
            'search_class("FeatureUnion")',
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "class FeatureUnion" in out
    assert "sklearn/pipeline.py" in out


def test_cli_tools_rejected_call(capsys, fixtures_dir):
    code = main(
        [
            "tools",
            "--repo",
            str(fixtures_dir / "featureunionish"),
            "--target-file",
            "sklearn/pipeline.py",
            "--qualified-name",
            "FeatureUnion.fit",
            "--call",
            "search_class(undefined_variable)",
        ]
    )
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_cli_generate_notest_policy(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code = main(
        [
            "generate",
            "--manifest",
            str(BENCH / "manifest.json"),
            "--task-id",
            "add_scaled",
            "--policy",
            "NoTest",
            "--replay",
            str(BENCH / "replays" / "add_scaled.json"),
            "--out-dir",
            str(out_dir),
        ]
    )
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["verdict"] == "pass"
    saved = json.loads((out_dir / "row.json").read_text(encoding="utf-8"))
    assert saved == printed


def test_cli_evaluate_dry_run(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(
        json.dumps(
            [
                {
                    "label": "harness",
                    "strategy": "THM",
                    "budget_t": 3,
                    "policy": "AllStage",
                    "provider": {"kind": "scripted", "replay_path": str(BENCH / "replays")},
                },
                {"label": "everything", "strategy": "IPS", "budget_t": "All"},
            ]
        ),
        encoding="utf-8",
    )
    run_dir = tmp_path / "runs"
    code = main(
        [
            "evaluate",
            "--manifest",
            str(BENCH / "manifest.json"),
            "--grid",
            str(grid),
            "--run-dir",
            str(run_dir),
            "--dry-run",
        ]
    )
    assert code == 0
    out_lines = capsys.readouterr().out.splitlines()
    assert out_lines[0].startswith("harness: strategy=THM T=3 policy=AllStage digest=")
    assert "T=All" in out_lines[1]
    assert out_lines[0].endswith("tasks=4")
    assert not run_dir.exists()  # dry run executes nothing


def test_cli_report(tmp_path, capsys):
    row = TaskRow(
        task_id="a",
        verdict="pass",
        trajectory_verdict="pass",
        rounds_to_pass=0,
        input_tokens=10,
        output_tokens=5,
        api_calls=1,
    )
    metrics = tmp_path / "metrics.json"
    metrics.write_text(
        json.dumps(compute_metrics([row]).to_doc(), indent=2, sort_keys=True), encoding="utf-8"
    )
    out_dir = tmp_path / "rendered"
    assert main(["report", "--metrics", str(metrics), "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "report.txt").exists()
    assert (out_dir / "pass_at_1.png").exists()
    assert (out_dir / "token_consumption.png").exists()
    bare = tmp_path / "bare"
    assert main(["report", "--metrics", str(metrics), "--out-dir", str(bare), "--no-figures"]) == 0
    assert not list(bare.glob("*.png"))
    assert "report.txt" in capsys.readouterr().out


def test_cli_probe_reproduces_golden(tmp_path, minilib_root):
    out = tmp_path / "probe.json"
    code = main(
        [
            "probe",
            "--repo",
            str(minilib_root),
            "--target-file",
            "minilib/core.py",
            "--qualified-name",
            "add_scaled",
            "--out",
            str(out),
            "--canonical",
        ]
    )
    assert code == 0
    assert out.read_bytes() == (BENCH / "probes" / "add_scaled.json").read_bytes()


def test_cli_error_exit_codes(tmp_path, capsys):
    assert main(["select-tests", "--report", str(tmp_path / "missing.json")]) == 2
    assert capsys.readouterr().err.startswith("error:invalid-input:")
    assert main(["index", "--repo", str(tmp_path / "nowhere")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and ":" in err[6:]
