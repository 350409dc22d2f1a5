"""Vulnerability ground-truth candidate matching against exploit metadata.

Matches are candidates, never verdicts: advisory version data is known to
be unreliable, so everything this module emits carries Automatic
confidence until a human records a confirmation. Model patterns are
explicit globs; revision suffixes are never stripped heuristically because
hardware revisions change affectedness.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .manifest import CorpusManifest

log = logging.getLogger(__name__)

_NUMERIC_HEAD = re.compile(r"^(\d+(?:\.\d+)*)(.*)$")
_NON_ALNUM = re.compile(r"[^a-z0-9*?\[\]]")


class VersionError(ValueError):
    pass


@dataclass(frozen=True)
class Version:
    segments: tuple[int, ...]
    suffix: str = ""

    def __str__(self) -> str:
        return ".".join(str(s) for s in self.segments) + self.suffix


def parse_version(s: str) -> Version:
    """Parse "v1.2.3b"-style strings: numeric dotted head, textual tail."""
    if not s:
        raise VersionError("empty version string")
    text = s.strip()
    if text[:1] in ("v", "V"):
        text = text[1:]
    match = _NUMERIC_HEAD.match(text)
    if not match:
        raise VersionError(f"no numeric segment in {s!r}")
    segments = tuple(int(part) for part in match.group(1).split("."))
    return Version(segments=segments, suffix=match.group(2))


def compare_versions(a: Version, b: Version) -> int:
    """Total order: numeric segments (zero-padded), then suffix.

    Equal numerics rank an empty suffix before any suffix; suffixes
    compare lexicographically among themselves.
    """
    width = max(len(a.segments), len(b.segments))
    left = a.segments + (0,) * (width - len(a.segments))
    right = b.segments + (0,) * (width - len(b.segments))
    if left != right:
        return -1 if left < right else 1
    if a.suffix == b.suffix:
        return 0
    if not a.suffix:
        return -1
    if not b.suffix:
        return 1
    return -1 if a.suffix < b.suffix else 1


@dataclass(frozen=True)
class Constraint:
    op: str  # "==", "<", "<=", ">", ">=", "range"
    low: Version
    high: Version | None = None

    def __str__(self) -> str:
        if self.op == "range":
            return f"{self.low}..{self.high}"
        return f"{self.op}{self.low}"


def parse_constraint(s: str) -> Constraint:
    """Grammar: ==X | <X | <=X | >X | >=X | X..Y (inclusive range)."""
    text = s.strip()
    if not text:
        raise VersionError("empty constraint")
    if ".." in text:
        low, _, high = text.partition("..")
        return Constraint(
            op="range", low=parse_version(low), high=parse_version(high)
        )
    for op in ("==", "<=", ">=", "<", ">"):
        if text.startswith(op):
            return Constraint(op=op, low=parse_version(text[len(op) :]))
    raise VersionError(f"malformed constraint {s!r}")


def version_satisfies(version: Version, constraint: Constraint) -> bool:
    cmp_low = compare_versions(version, constraint.low)
    if constraint.op == "==":
        return cmp_low == 0
    if constraint.op == "<":
        return cmp_low < 0
    if constraint.op == "<=":
        return cmp_low <= 0
    if constraint.op == ">":
        return cmp_low > 0
    if constraint.op == ">=":
        return cmp_low >= 0
    return cmp_low >= 0 and compare_versions(version, constraint.high) <= 0


@dataclass(frozen=True)
class ExploitEntry:
    id: str
    manufacturer_pattern: str
    model_pattern: str
    version_constraint: str
    cve_ids: tuple[str, ...] = ()
    advisory_ref: str = ""

    def validate(self) -> None:
        if not self.cve_ids and not self.advisory_ref:
            raise ValueError(
                f"exploit {self.id}: needs cve_ids or an advisory_ref"
            )
        parse_constraint(self.version_constraint)


def parse_exploit_db(source: str | bytes) -> list[ExploitEntry]:
    """Load a JSON Lines exploit-metadata file; entries are validated."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    entries = []
    for line_no, line in enumerate(source.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            entry = ExploitEntry(
                id=obj["id"],
                manufacturer_pattern=obj["manufacturer_pattern"],
                model_pattern=obj["model_pattern"],
                version_constraint=obj["version_constraint"],
                cve_ids=tuple(obj.get("cve_ids", [])),
                advisory_ref=obj.get("advisory_ref", ""),
            )
            entry.validate()
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"exploit db line {line_no}: {exc}") from exc
        entries.append(entry)
    return entries


@dataclass(frozen=True)
class GroundTruthMatch:
    record_sha256: str
    exploit_id: str
    cve_ids: tuple[str, ...]
    confidence: str = "Automatic"  # or "ManuallyConfirmed"
    note: str = ""


def normalize_name(s: str) -> str:
    """Lowercase and strip non-alphanumerics (glob metacharacters survive)."""
    return _NON_ALNUM.sub("", s.lower())


def _glob_match(value: str, pattern: str) -> bool:
    import fnmatch

    return fnmatch.fnmatchcase(value, pattern)


def match_exploits(
    manifest: CorpusManifest, db: Sequence[ExploitEntry]
) -> list[GroundTruthMatch]:
    """Emit an Automatic candidate per (record, exploit) predicate hit.

    The predicate: normalized manufacturer equality, case-insensitive
    model glob (non-alphanumerics stripped on both sides), and firmware
    version inside the entry's constraint. Records whose version does not
    parse are logged and skipped.
    """
    matches = []
    for record in manifest.records:
        try:
            version = parse_version(record.firmware_version)
        except VersionError:
            log.warning(
                "unparseable version %r on %s/%s; excluded from matching",
                record.firmware_version,
                record.manufacturer,
                record.model,
            )
            continue
        manufacturer = normalize_name(record.manufacturer)
        model = normalize_name(record.model)
        for entry in db:
            if normalize_name(entry.manufacturer_pattern) != manufacturer:
                continue
            if not _glob_match(model, normalize_name(entry.model_pattern)):
                continue
            if not version_satisfies(
                version, parse_constraint(entry.version_constraint)
            ):
                continue
            matches.append(
                GroundTruthMatch(
                    record_sha256=record.sha256,
                    exploit_id=entry.id,
                    cve_ids=entry.cve_ids,
                )
            )
    return matches
