"""Delimited and human-readable report emission.

Every pipeline stage reports the same way: a CSV for machines, an aligned
text table for people. Writers return the rows they emitted so callers
(and tests) can inspect exactly what went to disk.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .acquire import ReplicationReport, WorklistEntry
from .harden import TrendTable
from .manifest import CompositionStats
from .soundness import MEASURES, MeasureAssessment, Status


def render_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(c) for c in row] for row in rows]
    widths = [
        max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
        for i, h in enumerate(headers)
    ]
    def line(values):
        return "  ".join(v.ljust(w) for v, w in zip(values, widths)).rstrip()

    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(row) for row in cells)
    return "\n".join(out)


def write_csv(path: Path, headers: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)


def _fmt(value: float, digits: int = 2) -> str:
    return f"{value:.{digits}f}"


# --- composition --------------------------------------------------------------

COMPOSITION_HEADERS = (
    "manufacturer",
    "samples",
    "devices",
    "samples_per_device_mean",
    "size_per_sample_mean_bytes",
    "files_per_sample_mean",
)


def composition_rows(stats: CompositionStats) -> list[list]:
    rows = []
    for name, group in stats.per_manufacturer.items():
        rows.append(
            [
                name,
                group.samples,
                group.devices,
                _fmt(group.samples_per_device_mean),
                _fmt(group.size_per_sample_mean, 0),
                "" if group.files_per_sample_mean is None
                else _fmt(group.files_per_sample_mean, 0),
            ]
        )
    total = stats.totals
    rows.append(
        [
            "TOTAL",
            total.samples,
            total.devices,
            _fmt(total.samples_per_device_mean),
            _fmt(total.size_per_sample_mean, 0),
            "" if total.files_per_sample_mean is None
            else _fmt(total.files_per_sample_mean, 0),
        ]
    )
    return rows


def histogram_rows(histogram: dict[str, int]) -> list[list]:
    def key(item):
        label = item[0]
        return (label == "unknown", label)

    return [[label, count] for label, count in sorted(histogram.items(), key=key)]


# --- soundness ----------------------------------------------------------------

AGGREGATE_HEADERS = (
    "key",
    "full",
    "partial",
    "none",
    "applicable",
    "not_applicable",
    "full_pct",
    "partial_pct",
    "none_pct",
)


def aggregate_rows(aggregates: dict) -> list[list]:
    rows = []
    for key, agg in aggregates.items():
        label = key.value if hasattr(key, "value") else str(key)
        rows.append(
            [
                label,
                agg.full,
                agg.partial,
                agg.none,
                agg.applicable,
                agg.not_applicable,
                round(100 * agg.fraction(Status.FULL)),
                round(100 * agg.fraction(Status.PARTIAL)),
                round(100 * agg.fraction(Status.NONE)),
            ]
        )
    return rows


AUDIT_HEADERS = ("measure", "status", "evidence", "count", "note")


def audit_rows(assessment: MeasureAssessment) -> list[list]:
    rows = []
    for measure in MEASURES:
        cell = assessment.cells[measure]
        rows.append(
            [
                measure.value,
                cell.status.value,
                ";".join(sorted(e.value for e in cell.evidence_sources)),
                cell.count or "",
                cell.note,
            ]
        )
    return rows


_STATUS_GLYPHS = {
    Status.FULL: "full",
    Status.PARTIAL: "partial",
    Status.NONE: "none",
    Status.NOT_APPLICABLE: "n.a.",
}


def audit_summary_row(assessment: MeasureAssessment) -> tuple[list, list]:
    """One survey-table-shaped row: the subject plus all 16 status cells."""
    headers = ["subject"] + [m.value for m in MEASURES]
    row = [assessment.subject_id]
    for measure in MEASURES:
        cell = assessment.cells[measure]
        row.append(cell.count or _STATUS_GLYPHS[cell.status])
    return headers, [row]


# --- hardening trends ----------------------------------------------------------

TREND_HEADERS = ("year", "key", "enabled", "total", "fraction")


def trend_rows(trend: TrendTable) -> list[list]:
    rows = []
    for (year, key), cell in sorted(trend.rows.items()):
        rows.append([year, key, cell.enabled, cell.total, _fmt(cell.fraction, 4)])
    return rows


# --- replication ----------------------------------------------------------------

REPLICATION_HEADERS = (
    "manufacturer",
    "samples",
    "replicated",
    "direct",
    "direct_ratio",
    "archive",
    "archive_ratio",
    "hash_lookup",
    "hash_lookup_ratio",
    "worklist",
    "worklist_ratio",
    "missing",
    "missing_ratio",
)


def replication_rows(report: ReplicationReport) -> list[list]:
    def row(name, r):
        return [
            name,
            r.samples,
            r.replicated,
            r.direct,
            _fmt(r.ratio(r.direct)),
            r.archive,
            _fmt(r.ratio(r.archive)),
            r.hash_lookup,
            _fmt(r.ratio(r.hash_lookup)),
            r.worklist,
            _fmt(r.ratio(r.worklist)),
            r.missing,
            _fmt(r.ratio(r.missing)),
        ]

    rows = [
        row(name, r) for name, r in report.per_manufacturer.items()
    ]
    rows.append(row("TOTAL", report.total))
    return rows


WORKLIST_HEADERS = ("manufacturer", "model", "file_name", "version", "sha256")


def worklist_rows(entries: Sequence[WorklistEntry]) -> list[list]:
    return [
        [e.manufacturer, e.model, e.file_name, e.version, e.sha256]
        for e in entries
    ]


# --- inventory / matches ---------------------------------------------------------

INVENTORY_HEADERS = (
    "sha256",
    "mime_class",
    "isa_family",
    "origin_firmware_sha256",
    "release_year",
)


def inventory_rows(inventory, manifest=None) -> list[list]:
    from .identify import isa_family

    records = manifest.by_sha256() if manifest is not None else {}
    rows = []
    for entry in inventory.entries:
        for origin in entry.origins:
            record = records.get(origin)
            year = record.release_year if record else None
            rows.append(
                [
                    entry.sha256,
                    entry.mime_class,
                    isa_family(entry.summary.isa),
                    origin,
                    year if year is not None else "unknown",
                ]
            )
    return rows


MATCH_HEADERS = ("sha256", "exploit_id", "cve_ids", "confidence")


def match_rows(matches) -> list[list]:
    return [
        [m.record_sha256, m.exploit_id, ";".join(m.cve_ids), m.confidence]
        for m in matches
    ]
