"""Standalone probe runner: configure the plugin via environment variables
and execute pytest inside the target repository.

The target must already be stubbed (stub mode) or pristine (coverage mode);
the probe never edits source.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repoprobe")
    parser.add_argument("--repo", required=True, help="repository root to run in")
    parser.add_argument("--target-file", required=True, help="repo-relative target file")
    parser.add_argument("--qualified-name", default="")
    parser.add_argument("--start-line", type=int, default=0)
    parser.add_argument("--end-line", type=int, default=0)
    parser.add_argument("--out", required=True, help="ProbeReport output path")
    parser.add_argument("--mode", default="stub", choices=("stub", "coverage"))
    parser.add_argument("--marker", default="TDDGEN_STUB")
    parser.add_argument("--per-test-timeout", type=float, default=60.0)
    parser.add_argument("--canonical", action="store_true")
    parser.add_argument("--selector", default="", help="pytest -k expression")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    env = dict(os.environ)
    env.update(
        {
            "TDDGEN_PROBE_TARGET_FILE": args.target_file,
            "TDDGEN_PROBE_TARGET_QNAME": args.qualified_name,
            "TDDGEN_PROBE_TARGET_START": str(args.start_line),
            "TDDGEN_PROBE_TARGET_END": str(args.end_line),
            "TDDGEN_PROBE_OUT": os.path.abspath(args.out),
            "TDDGEN_PROBE_MARKER": args.marker,
            "TDDGEN_PROBE_MODE": args.mode,
            "TDDGEN_PROBE_TIMEOUT_S": str(args.per_test_timeout),
            "TDDGEN_PROBE_CANONICAL": "1" if args.canonical else "0",
        }
    )
    env.setdefault("PYTHONDONTWRITEBYTECODE", "1")
    argv_pytest = [sys.executable, "-m", "pytest", "-q", "--no-header", "-p", "repoprobe.plugin"]
    if args.selector:
        argv_pytest += ["-k", args.selector]
    proc = subprocess.run(argv_pytest, cwd=args.repo, env=env)
    if not os.path.exists(args.out):
        print(f"error:probe-error: no report written (pytest exit {proc.returncode})", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
