"""Render MetricsReports: aligned text tables, CSV, and summary figures."""

from __future__ import annotations

import csv
from io import StringIO
from pathlib import Path

from tddgen.evalharness import MetricsReport, TaskRow, compute_metrics

_ROW_COLUMNS = (
    "task_id",
    "verdict",
    "rounds_to_pass",
    "input_tokens",
    "output_tokens",
    "api_calls",
    "coverage_pct",
)

_AGG_COLUMNS = (
    "config_label",
    "tasks",
    "pass_at_1",
    "pass_at_1_valid_only",
    "avg_input_tokens",
    "avg_output_tokens",
    "avg_api_calls",
    "avg_coverage_pct",
    "infrastructure_errors",
)


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}".rstrip("0").rstrip(".") or "0"
    return str(value)


def _aligned(header: tuple[str, ...], rows: list[tuple]) -> str:
    table = [header] + [tuple(_fmt(v) for v in row) for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _row_cells(row: TaskRow) -> tuple:
    return (
        row.task_id,
        row.verdict,
        row.rounds_to_pass,
        row.input_tokens,
        row.output_tokens,
        row.api_calls,
        row.coverage_pct,
    )


def verify_aggregates(report: MetricsReport) -> None:
    """Every aggregate must equal recomputation from the per-task rows."""
    fresh = compute_metrics(report.rows).aggregates
    for key, value in fresh.items():
        got = report.aggregates.get(key)
        if isinstance(value, float) and isinstance(got, float):
            if abs(value - got) > 1e-12:
                raise ValueError(f"aggregate {key!r} inconsistent: {got} != {value}")
        elif got != value:
            raise ValueError(f"aggregate {key!r} inconsistent: {got} != {value}")


def render_text(reports: list[MetricsReport]) -> str:
    parts = []
    for report in reports:
        verify_aggregates(report)
        parts.append(f"== {report.config_label} ({report.config_digest or 'n/a'}) ==")
        parts.append(_aligned(_ROW_COLUMNS, [_row_cells(r) for r in report.rows]))
        agg = report.aggregates
        parts.append(
            _aligned(
                _AGG_COLUMNS[1:],
                [tuple(agg.get(k) for k in _AGG_COLUMNS[1:])],
            )
        )
        parts.append("solved: " + (", ".join(report.solved_set) or "(none)") + "\n")
    return "\n".join(parts)


def render_csv(reports: list[MetricsReport]) -> tuple[str, str]:
    """(per-task CSV, aggregates CSV)."""
    rows_out = StringIO()
    writer = csv.writer(rows_out, lineterminator="\n")
    writer.writerow(("config_label",) + _ROW_COLUMNS)
    for report in reports:
        for row in report.rows:
            writer.writerow((report.config_label,) + tuple(_fmt(v) for v in _row_cells(row)))
    agg_out = StringIO()
    writer = csv.writer(agg_out, lineterminator="\n")
    writer.writerow(_AGG_COLUMNS)
    for report in reports:
        agg = report.aggregates
        writer.writerow(
            (report.config_label,) + tuple(_fmt(agg.get(k)) for k in _AGG_COLUMNS[1:])
        )
    return rows_out.getvalue(), agg_out.getvalue()


def render_figures(reports: list[MetricsReport], out_dir: str | Path) -> list[str]:
    """Summary charts as PNG files; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = [r.config_label for r in reports]
    written = []

    fig, axis = plt.subplots(figsize=(max(4, 1.2 * len(labels)), 3.5))
    axis.bar(labels, [r.aggregates["pass_at_1"] for r in reports], color="#4878d0")
    axis.set_ylabel("pass@1")
    axis.set_ylim(0, 1)
    axis.set_title("Pass@1 per configuration")
    fig.tight_layout()
    path = out_dir / "pass_at_1.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))

    fig, axis = plt.subplots(figsize=(max(4, 1.2 * len(labels)), 3.5))
    x = range(len(labels))
    width = 0.4
    axis.bar(
        [i - width / 2 for i in x],
        [r.aggregates["avg_input_tokens"] for r in reports],
        width,
        label="avg input tokens",
        color="#4878d0",
    )
    axis.bar(
        [i + width / 2 for i in x],
        [r.aggregates["avg_output_tokens"] for r in reports],
        width,
        label="avg output tokens",
        color="#ee854a",
    )
    axis.set_xticks(list(x), labels)
    axis.set_title("Token consumption per configuration")
    axis.legend()
    fig.tight_layout()
    path = out_dir / "token_consumption.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))
    return written


def write_report(
    reports: list[MetricsReport], out_dir: str | Path, figures: bool = True
) -> dict[str, object]:
    """Write the aligned table, the two CSV files, and (optionally) figures
    under out_dir; returns the artifact paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = render_text(reports)
    rows_csv, agg_csv = render_csv(reports)
    artifacts: dict[str, object] = {}
    for name, payload in (
        ("report.txt", text),
        ("per_task.csv", rows_csv),
        ("aggregates.csv", agg_csv),
    ):
        path = out_dir / name
        path.write_text(payload, encoding="utf-8")
        artifacts[name] = str(path)
    if figures:
        artifacts["figures"] = render_figures(reports, out_dir)
    return artifacts
