"""Corpus data model: record schema, manifest parsing, composition stats.

A manifest is UTF-8 JSON Lines, one record per line, with the fixed field
set of :data:`MANIFEST_FIELDS`. The format is streamable and diff-friendly,
which is what shared corpus meta data needs. Unknown keys on a line are not
an error; they are folded into ``notes`` so nothing a third party shipped
is lost on a round-trip.

Release dates are ISO calendar dates. Sources that only publish a month
are stored as the first of that month with ``date_precision="month"``;
composition reporting buckets by year, so no downstream consumer loses
information.

A "device" is one distinct (manufacturer, model) pair. Sample counts and
device counts are different things and are never interchanged here.
"""

from __future__ import annotations

import io
import json
from collections import Counter
from dataclasses import dataclass
from datetime import date
from typing import Mapping
from urllib.parse import urlparse

from .digest import DigestError, FuzzyDigest

SCHEMA_VERSION = 1

MANIFEST_FIELDS = (
    "manufacturer",
    "model",
    "device_class",
    "firmware_version",
    "release_date",
    "download_url",
    "sha256",
    "size_bytes",
    "fuzzy_digest",
    "firmware_type",
    "unpack_status",
    "notes",
)

# 22-label device-class vocabulary used for record validation.
DEVICE_CLASSES = frozenset(
    {
        "switch",
        "router",
        "ipcam",
        "repeater",
        "mesh",
        "controller",
        "accesspoint",
        "powerline",
        "modem",
        "power_supply",
        "wifi-usb",
        "recorder",
        "nas",
        "phone",
        "board",
        "kvm",
        "converter",
        "san",
        "printer",
        "media",
        "encoder",
        "gateway",
    }
)

# OS-abstraction taxonomy: general purpose, retrofitted general purpose
# (e.g. embedded Linux), special purpose OS, bare metal. Unknown is a legal
# value; images frequently blur the line between TypeI and TypeII.
FIRMWARE_TYPES = ("Type0", "TypeI", "TypeII", "TypeIII", "Unknown")

UNPACK_STATUSES = ("Untested", "Unpacked", "Failed")

MIN_RELEASE_DATE = date(1990, 1, 1)

_SHA256_HEX = frozenset("0123456789abcdef")


class ManifestError(ValueError):
    """Raised on malformed manifest input; carries per-line issues."""

    def __init__(self, issues: list["ParseIssue"]):
        self.issues = issues
        lines = "; ".join(str(i) for i in issues[:10])
        more = f" (+{len(issues) - 10} more)" if len(issues) > 10 else ""
        super().__init__(f"{len(issues)} manifest error(s): {lines}{more}")


@dataclass(frozen=True)
class ParseIssue:
    line: int
    field: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.field}: {self.message}"


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


@dataclass(frozen=True)
class FirmwareRecord:
    manufacturer: str
    model: str
    device_class: str
    sha256: str
    firmware_version: str = ""
    release_date: date | None = None
    date_precision: str = "day"  # "day" or "month"
    download_url: str | None = None
    size_bytes: int = 0
    fuzzy_digest: FuzzyDigest | str | None = None
    firmware_type: str = "Unknown"
    unpack_status: str = "Untested"
    notes: str = ""

    @property
    def release_year(self) -> int | None:
        return self.release_date.year if self.release_date else None


@dataclass(frozen=True)
class CorpusManifest:
    records: tuple[FirmwareRecord, ...]
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.records)

    def by_sha256(self) -> dict[str, FirmwareRecord]:
        return {r.sha256: r for r in self.records}


def is_valid_sha256(value: str) -> bool:
    return (
        isinstance(value, str)
        and len(value) == 64
        and all(c in _SHA256_HEX for c in value)
    )


def validate_record(record: FirmwareRecord) -> list[Violation]:
    """Schema check; the empty list means every record invariant holds."""
    violations = []
    if not record.manufacturer:
        violations.append(Violation("manufacturer", "must be non-empty"))
    if not record.model:
        violations.append(Violation("model", "must be non-empty"))
    if record.device_class not in DEVICE_CLASSES:
        violations.append(
            Violation(
                "device_class",
                f"{record.device_class!r} is not one of the "
                f"{len(DEVICE_CLASSES)} known class labels",
            )
        )
    if not is_valid_sha256(record.sha256):
        violations.append(
            Violation("sha256", "must be 64 lowercase hex characters")
        )
    if record.release_date is not None and record.release_date < MIN_RELEASE_DATE:
        violations.append(
            Violation(
                "release_date",
                f"{record.release_date.isoformat()} predates "
                f"{MIN_RELEASE_DATE.isoformat()}",
            )
        )
    if record.date_precision not in ("day", "month"):
        violations.append(Violation("date_precision", "must be day or month"))
    if record.download_url is not None:
        parsed = urlparse(record.download_url)
        if not parsed.scheme or not parsed.netloc:
            violations.append(
                Violation("download_url", "must be an absolute URL")
            )
    if record.size_bytes < 0:
        violations.append(Violation("size_bytes", "must be non-negative"))
    # A fetched sample cannot be empty. "Fetched" is approximated by the
    # unpack status having moved past Untested while a source URL exists.
    if (
        record.download_url is not None
        and record.unpack_status != "Untested"
        and record.size_bytes == 0
    ):
        violations.append(
            Violation("size_bytes", "must be > 0 once the sample was fetched")
        )
    if record.firmware_type not in FIRMWARE_TYPES:
        violations.append(
            Violation(
                "firmware_type",
                f"{record.firmware_type!r} not in {'/'.join(FIRMWARE_TYPES)}",
            )
        )
    if record.unpack_status not in UNPACK_STATUSES:
        violations.append(
            Violation(
                "unpack_status",
                f"{record.unpack_status!r} not in {'/'.join(UNPACK_STATUSES)}",
            )
        )
    return violations


def _parse_release_date(raw: str) -> tuple[date, str]:
    parts = raw.split("-")
    if len(parts) == 2:
        return date(int(parts[0]), int(parts[1]), 1), "month"
    return date.fromisoformat(raw), "day"


def _record_from_mapping(obj: Mapping, line_no: int) -> FirmwareRecord:
    issues: list[ParseIssue] = []

    def fail(field_name: str, message: str):
        issues.append(ParseIssue(line_no, field_name, message))

    def text(field_name: str, default: str = "") -> str:
        value = obj.get(field_name, default)
        if value is None:
            return default
        if not isinstance(value, str):
            fail(field_name, f"expected string, got {type(value).__name__}")
            return default
        return value

    release_date = None
    precision = "day"
    raw_date = obj.get("release_date")
    if raw_date not in (None, ""):
        try:
            release_date, precision = _parse_release_date(str(raw_date))
        except (ValueError, TypeError):
            fail("release_date", f"invalid date {raw_date!r}")

    size = obj.get("size_bytes", 0) or 0
    if not isinstance(size, int) or isinstance(size, bool):
        fail("size_bytes", f"expected integer, got {size!r}")
        size = 0

    fuzzy: FuzzyDigest | str | None = None
    raw_fuzzy = obj.get("fuzzy_digest")
    if raw_fuzzy not in (None, ""):
        try:
            fuzzy = FuzzyDigest.from_string(str(raw_fuzzy))
        except DigestError:
            # Opaque external digest (e.g. ssdeep/tlsh) passed through as-is.
            fuzzy = str(raw_fuzzy)

    url = obj.get("download_url")
    if url is not None and not isinstance(url, str):
        fail("download_url", f"expected string, got {url!r}")
        url = None

    notes = text("notes")
    extras = sorted(k for k in obj if k not in MANIFEST_FIELDS)
    if extras:
        folded = " ".join(f"{k}={obj[k]}" for k in extras)
        notes = f"{notes} {folded}".strip() if notes else folded

    record = FirmwareRecord(
        manufacturer=text("manufacturer"),
        model=text("model"),
        device_class=text("device_class"),
        firmware_version=text("firmware_version"),
        release_date=release_date,
        date_precision=precision,
        download_url=url or None,
        sha256=text("sha256"),
        size_bytes=size,
        fuzzy_digest=fuzzy,
        firmware_type=text("firmware_type", "Unknown") or "Unknown",
        unpack_status=text("unpack_status", "Untested") or "Untested",
        notes=notes,
    )
    if issues:
        raise ManifestError(issues)
    return record


def parse_manifest(source) -> CorpusManifest:
    """Parse JSON Lines from bytes, str, or a file-like object.

    Every line must yield a valid record; all problems are collected and
    raised together as one :class:`ManifestError` carrying line numbers
    and the offending field. Schema violations (bad sha256, unknown device
    class, ...) are parse errors, never silently coerced.
    """
    if isinstance(source, (bytes, bytearray)):
        stream = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        stream = io.StringIO(source)
    else:
        stream = source

    records: list[FirmwareRecord] = []
    issues: list[ParseIssue] = []
    for line_no, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(ParseIssue(line_no, "-", f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            issues.append(ParseIssue(line_no, "-", "expected a JSON object"))
            continue
        try:
            record = _record_from_mapping(obj, line_no)
        except ManifestError as exc:
            issues.extend(exc.issues)
            continue
        for violation in validate_record(record):
            issues.append(
                ParseIssue(line_no, violation.field, violation.rule)
            )
        records.append(record)
    if issues:
        raise ManifestError(issues)
    return CorpusManifest(records=tuple(records))


def record_to_dict(record: FirmwareRecord) -> dict:
    if record.release_date is None:
        raw_date = None
    elif record.date_precision == "month":
        raw_date = record.release_date.strftime("%Y-%m")
    else:
        raw_date = record.release_date.isoformat()
    fuzzy = record.fuzzy_digest
    if isinstance(fuzzy, FuzzyDigest):
        fuzzy = fuzzy.to_string()
    return {
        "manufacturer": record.manufacturer,
        "model": record.model,
        "device_class": record.device_class,
        "firmware_version": record.firmware_version,
        "release_date": raw_date,
        "download_url": record.download_url,
        "sha256": record.sha256,
        "size_bytes": record.size_bytes,
        "fuzzy_digest": fuzzy,
        "firmware_type": record.firmware_type,
        "unpack_status": record.unpack_status,
        "notes": record.notes,
    }


def serialize_manifest(manifest: CorpusManifest) -> str:
    lines = [
        json.dumps(record_to_dict(r), ensure_ascii=False, sort_keys=True)
        for r in manifest.records
    ]
    return "\n".join(lines) + ("\n" if lines else "")


# --- composition analytics -------------------------------------------------


@dataclass(frozen=True)
class RecordFindings:
    """Optional per-record identification results joined into composition."""

    kernel_versions: tuple[str, ...] = ()
    isas: tuple[str, ...] = ()
    file_count: int | None = None


@dataclass(frozen=True)
class GroupStats:
    samples: int
    devices: int
    samples_per_device_mean: float
    size_per_sample_mean: float
    files_per_sample_mean: float | None


@dataclass(frozen=True)
class CompositionStats:
    per_manufacturer: dict[str, GroupStats]
    totals: GroupStats
    class_histogram: dict[str, int]
    year_histogram: dict[str, int]
    kernel_histogram: dict[str, int]
    isa_histogram: dict[str, int]


def _group_stats(records: list[FirmwareRecord], findings) -> GroupStats:
    samples = len(records)
    devices = len({(r.manufacturer, r.model) for r in records})
    size_mean = sum(r.size_bytes for r in records) / samples if samples else 0.0
    files_mean = None
    if findings is not None:
        counts = [
            findings[r.sha256].file_count
            for r in records
            if r.sha256 in findings and findings[r.sha256].file_count is not None
        ]
        if counts:
            files_mean = sum(counts) / len(counts)
    return GroupStats(
        samples=samples,
        devices=devices,
        samples_per_device_mean=samples / devices if devices else 0.0,
        size_per_sample_mean=size_mean,
        files_per_sample_mean=files_mean,
    )


def composition_report(
    manifest: CorpusManifest,
    findings: Mapping[str, RecordFindings] | None = None,
) -> CompositionStats:
    """Aggregate manifest composition.

    Devices are distinct (manufacturer, model) pairs. Records without a
    release date land in the "unknown" year bucket. When identification
    findings are supplied, kernel and ISA histograms are filled in: kernel
    versions count one per banner finding (grouped major.minor), ISAs count
    one per record that carries the label.
    """
    groups: dict[str, list[FirmwareRecord]] = {}
    for record in manifest.records:
        groups.setdefault(record.manufacturer, []).append(record)

    per_manufacturer = {
        name: _group_stats(records, findings)
        for name, records in sorted(groups.items())
    }
    totals = _group_stats(list(manifest.records), findings)

    class_histogram = Counter(r.device_class for r in manifest.records)
    year_histogram = Counter(
        str(r.release_year) if r.release_year else "unknown"
        for r in manifest.records
    )

    kernel_histogram: Counter[str] = Counter()
    isa_histogram: Counter[str] = Counter()
    if findings is not None:
        for record in manifest.records:
            found = findings.get(record.sha256)
            if found is None:
                continue
            for version in found.kernel_versions:
                kernel_histogram[_major_minor(version)] += 1
            for isa in set(found.isas):
                isa_histogram[isa] += 1

    return CompositionStats(
        per_manufacturer=per_manufacturer,
        totals=totals,
        class_histogram=dict(class_histogram),
        year_histogram=dict(year_histogram),
        kernel_histogram=dict(kernel_histogram),
        isa_histogram=dict(isa_histogram),
    )


def _major_minor(version: str) -> str:
    parts = version.split(".")
    return ".".join(parts[:2]) if len(parts) >= 2 else version
