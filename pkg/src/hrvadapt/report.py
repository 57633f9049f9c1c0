"""Report emission: delimited metric tables (CSV, JSON) plus rendered
comparison figures, written atomically."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import DataError, ParseError
from .metrics import MetricsReport, ReportRow
from .variants import ABLATION_VARIANTS, TABLE1_VARIANTS

CSV_COLUMNS = (
    "variant",
    "roc_auc",
    "pr_auc",
    "n_pos",
    "n_neg",
    "variance_bound",
    "seed",
    "config_digest",
)

_CANONICAL_ORDER = {name: i for i, name in enumerate(TABLE1_VARIANTS + ABLATION_VARIANTS)}


def ordered_rows(report: MetricsReport) -> list[ReportRow]:
    """Known variants in presentation order (main table then ablations);
    anything else afterwards in stable input order."""
    indexed = list(enumerate(report.rows))
    indexed.sort(key=lambda p: (_CANONICAL_ORDER.get(p[1].variant, len(_CANONICAL_ORDER)), p[0]))
    return [r for _, r in indexed]


def _atomic_write(path: Path, data: str | bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, bytes):
        tmp.write_bytes(data)
    else:
        tmp.write_text(data)
    os.replace(tmp, path)


def report_to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in ordered_rows(report):
        writer.writerow(
            [
                row.variant,
                repr(row.roc_auc),
                repr(row.pr_auc),
                row.n_pos,
                row.n_neg,
                repr(row.variance_bound),
                row.seed,
                row.config_digest,
            ]
        )
    return buf.getvalue()


def report_from_csv(text: str) -> MetricsReport:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise ParseError(f"report CSV must start with header {','.join(CSV_COLUMNS)}")
    rows = []
    for rec in reader:
        if len(rec) != len(CSV_COLUMNS):
            raise ParseError(f"report CSV row has {len(rec)} fields, expected {len(CSV_COLUMNS)}")
        rows.append(
            ReportRow(
                variant=rec[0],
                roc_auc=float(rec[1]),
                pr_auc=float(rec[2]),
                n_pos=int(rec[3]),
                n_neg=int(rec[4]),
                variance_bound=float(rec[5]),
                seed=int(rec[6]),
                config_digest=rec[7],
            )
        )
    return MetricsReport(rows)


def report_to_json(report: MetricsReport) -> str:
    doc = {"rows": [asdict(r) for r in ordered_rows(report)]}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> MetricsReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid report JSON: {e}") from e
    try:
        return MetricsReport([ReportRow(**row) for row in doc["rows"]])
    except (KeyError, TypeError) as e:
        raise ParseError(f"report JSON rows malformed: {e}") from e


def render_metrics_figure(report: MetricsReport, path: Path) -> None:
    """Horizontal bars of pooled ROC and PR AUC per variant, best at top."""
    rows = ordered_rows(report)[::-1]
    names = [r.variant.replace("_", " ") for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(11, 0.45 * len(rows) + 1.6), sharey=True)
    for ax, metric, title in (
        (axes[0], [r.roc_auc for r in rows], "ROC AUC"),
        (axes[1], [r.pr_auc for r in rows], "PR AUC"),
    ):
        ax.barh(range(len(rows)), metric, color="#4878a8", height=0.6)
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(names, fontsize=9)
        ax.set_xlim(0.0, 1.0)
        ax.set_title(title)
        ax.grid(axis="x", linestyle=":", alpha=0.5)
        for i, v in enumerate(metric):
            ax.text(v + 0.01, i, f"{v:.3f}", va="center", fontsize=8)
    fig.suptitle("Per-window validation metrics")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emit_report(
    report: MetricsReport,
    out_dir: str | Path,
    formats: tuple[str, ...] = ("csv", "json", "png"),
    stem: str = "metrics",
) -> dict[str, Path]:
    """Write the report in the requested formats; returns format -> path."""
    if not report.rows:
        raise DataError("cannot emit an empty report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for fmt in formats:
        path = out_dir / f"{stem}.{fmt}"
        if fmt == "csv":
            _atomic_write(path, report_to_csv(report))
        elif fmt == "json":
            _atomic_write(path, report_to_json(report))
        elif fmt == "png":
            render_metrics_figure(report, path)
        else:
            raise DataError(f"unknown report format {fmt!r}")
        written[fmt] = path
    return written
