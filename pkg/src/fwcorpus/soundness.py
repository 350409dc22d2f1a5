"""Soundness scoring: 16 measures, six requirements, survey aggregation.

The framework scores how well a corpus is documented. Each subject (a
surveyed publication or a corpus under self-audit) gets one status per
measure: full, partial, none, or not-applicable. Measures feed one or
more of six requirements; aggregating by requirement pools every
(subject, measure) data point of the mapped measures, so a measure that
serves several requirements counts in each of their pools - unweighted
within a requirement, weighted across requirements.

A survey of 44 vulnerability-research papers (2013-2023) ships as the
built-in fixture; it doubles as the regression baseline for the
aggregation arithmetic.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence


class Measure(enum.Enum):
    PACKED_COUNT = "PackedCount"
    UNPACKED_COUNT = "UnpackedCount"
    DEDUPLICATION = "Deduplication"
    UNPACK_PROCESS = "UnpackProcess"
    REASONING = "Reasoning"
    ACQUISITION = "Acquisition"
    VULNERABILITIES = "Vulnerabilities"
    RELEASE_DATES = "ReleaseDates"
    VERSIONS = "Versions"
    LINKS = "Links"
    HASHES = "Hashes"
    MANUFACTURERS = "Manufacturers"
    MODELS = "Models"
    DEVICE_CLASSES = "DeviceClasses"
    ISAS = "Isas"
    FW_TYPES = "FwTypes"


MEASURES: tuple[Measure, ...] = tuple(Measure)
assert len(MEASURES) == 16


class Requirement(enum.Enum):
    GROUND_TRUTH = "R1"
    RELEVANCE = "R2"
    CLEAN_DATA = "R3"
    RICH_META_DATA = "R4"
    DOCUMENTATION = "R5"
    HETEROGENEITY = "R6"


REQUIREMENT_MEASURES: dict[Requirement, frozenset[Measure]] = {
    Requirement.GROUND_TRUTH: frozenset({Measure.VULNERABILITIES}),
    Requirement.RELEVANCE: frozenset(
        {
            Measure.RELEASE_DATES,
            Measure.VERSIONS,
            Measure.MANUFACTURERS,
            Measure.MODELS,
            Measure.DEVICE_CLASSES,
            Measure.ISAS,
            Measure.FW_TYPES,
        }
    ),
    Requirement.CLEAN_DATA: frozenset(
        {
            Measure.PACKED_COUNT,
            Measure.UNPACKED_COUNT,
            Measure.DEDUPLICATION,
        }
    ),
    Requirement.RICH_META_DATA: frozenset(
        {
            Measure.RELEASE_DATES,
            Measure.VERSIONS,
            Measure.LINKS,
            Measure.HASHES,
            Measure.MANUFACTURERS,
            Measure.MODELS,
            Measure.DEVICE_CLASSES,
            Measure.ISAS,
            Measure.FW_TYPES,
        }
    ),
    Requirement.DOCUMENTATION: frozenset(
        {
            Measure.DEDUPLICATION,
            Measure.UNPACK_PROCESS,
            Measure.REASONING,
            Measure.ACQUISITION,
        }
    ),
    Requirement.HETEROGENEITY: frozenset(
        {
            Measure.UNPACKED_COUNT,
            Measure.MANUFACTURERS,
            Measure.MODELS,
            Measure.DEVICE_CLASSES,
            Measure.ISAS,
            Measure.FW_TYPES,
        }
    ),
}


class Status(enum.Enum):
    FULL = "full"
    PARTIAL = "partial"
    NONE = "none"
    NOT_APPLICABLE = "na"


class EvidenceSource(enum.Enum):
    TEXT = "Text"
    FIGURE_OR_TABLE = "FigureOrTable"
    SHARED_META_DATA = "SharedMetaData"
    SAMPLE_LIST = "SampleList"
    REFERENCES = "References"
    SHARED_SAMPLES = "SharedSamples"


# Evidence sources that can back a "full" status, per measure group.
# Quantity- and process-style measures accept the four core sources;
# file-property measures additionally accept references, and links/hashes
# can be proven by shared samples themselves.
_CORE_EVIDENCE = frozenset(
    {
        EvidenceSource.TEXT,
        EvidenceSource.FIGURE_OR_TABLE,
        EvidenceSource.SHARED_META_DATA,
        EvidenceSource.SAMPLE_LIST,
    }
)

FILE_PROPERTY_MEASURES = frozenset(
    {
        Measure.RELEASE_DATES,
        Measure.VERSIONS,
        Measure.LINKS,
        Measure.HASHES,
        Measure.FW_TYPES,
    }
)

SHARED_SAMPLE_MEASURES = frozenset({Measure.LINKS, Measure.HASHES})

# Reasoning and Vulnerabilities have prose-style criteria without their
# own printed evidence-source list; they are handled under the core group
# and flagged as such in validation output.
CLOSEST_GROUP_MEASURES = frozenset({Measure.REASONING, Measure.VULNERABILITIES})


def allowed_evidence(measure: Measure) -> frozenset[EvidenceSource]:
    allowed = set(_CORE_EVIDENCE)
    if measure in FILE_PROPERTY_MEASURES:
        allowed.add(EvidenceSource.REFERENCES)
    if measure in SHARED_SAMPLE_MEASURES:
        allowed.add(EvidenceSource.SHARED_SAMPLES)
    return frozenset(allowed)


@dataclass(frozen=True)
class MeasureCell:
    status: Status
    evidence_sources: frozenset = frozenset()
    note: str = ""
    count: str | None = None  # verbatim quantity annotation, if any


@dataclass
class MeasureAssessment:
    subject_id: str
    cells: dict[Measure, MeasureCell] = field(default_factory=dict)

    def status(self, measure: Measure) -> Status:
        return self.cells[measure].status


@dataclass(frozen=True)
class RubricViolation:
    measure: Measure
    rule: str
    advisory: bool = False  # True for closest-group approximations

    def __str__(self) -> str:
        tag = " [closest-group rule]" if self.advisory else ""
        return f"{self.measure.value}: {self.rule}{tag}"


def validate_assessment(assessment: MeasureAssessment) -> list[RubricViolation]:
    """Structural rubric check; an empty list means the assessment conforms.

    Full requires at least one evidence source allowed for the measure's
    group; not-applicable requires an explanatory note and no evidence.
    """
    violations = []
    for measure, cell in assessment.cells.items():
        advisory = measure in CLOSEST_GROUP_MEASURES
        if cell.status is Status.FULL:
            if not cell.evidence_sources:
                violations.append(
                    RubricViolation(
                        measure,
                        "full status requires at least one evidence source",
                        advisory,
                    )
                )
            elif not (cell.evidence_sources & allowed_evidence(measure)):
                names = ", ".join(
                    sorted(e.value for e in cell.evidence_sources)
                )
                violations.append(
                    RubricViolation(
                        measure,
                        f"evidence [{names}] not accepted for this measure",
                        advisory,
                    )
                )
        elif cell.status is Status.NOT_APPLICABLE:
            if not cell.note.strip():
                violations.append(
                    RubricViolation(
                        measure,
                        "not-applicable requires a note explaining why the "
                        "measure does not fit the scenario",
                        advisory,
                    )
                )
            if cell.evidence_sources:
                violations.append(
                    RubricViolation(
                        measure,
                        "not-applicable must not carry evidence sources",
                        advisory,
                    )
                )
    return violations


# --- aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class Aggregate:
    full: int
    partial: int
    none: int
    not_applicable: int

    @property
    def applicable(self) -> int:
        return self.full + self.partial + self.none

    def fraction(self, status: Status) -> float:
        if not self.applicable:
            return 0.0
        value = {
            Status.FULL: self.full,
            Status.PARTIAL: self.partial,
            Status.NONE: self.none,
        }[status]
        return value / self.applicable


class AssessmentSetError(ValueError):
    pass


def _check_subjects(assessments: Sequence[MeasureAssessment]) -> None:
    seen = set()
    for a in assessments:
        if a.subject_id in seen:
            raise AssessmentSetError(f"duplicate subject id {a.subject_id!r}")
        seen.add(a.subject_id)
        missing = [m.value for m in MEASURES if m not in a.cells]
        if missing:
            raise AssessmentSetError(
                f"subject {a.subject_id!r} missing measures: {missing}"
            )


def _tally(statuses: Iterable[Status]) -> Aggregate:
    full = partial = none = na = 0
    for status in statuses:
        if status is Status.FULL:
            full += 1
        elif status is Status.PARTIAL:
            partial += 1
        elif status is Status.NONE:
            none += 1
        else:
            na += 1
    return Aggregate(full=full, partial=partial, none=none, not_applicable=na)


def aggregate_by_measure(
    assessments: Sequence[MeasureAssessment],
) -> dict[Measure, Aggregate]:
    """Status fractions per measure, over subjects where it applies."""
    _check_subjects(assessments)
    return {
        measure: _tally(a.status(measure) for a in assessments)
        for measure in MEASURES
    }


def aggregate_by_requirement(
    assessments: Sequence[MeasureAssessment],
) -> dict[Requirement, Aggregate]:
    """Pool every (subject, measure) data point mapped to a requirement.

    A measure mapped to k requirements contributes to all k pools.
    """
    _check_subjects(assessments)
    result = {}
    for requirement, measures in REQUIREMENT_MEASURES.items():
        statuses = [
            a.status(measure)
            for a in assessments
            for measure in MEASURES
            if measure in measures
        ]
        result[requirement] = _tally(statuses)
    return result


# --- bundled survey fixture ---------------------------------------------------

_FIXTURE_NAME = "survey_corpus_practices.json"

_STATUS_CODES = {
    "F": Status.FULL,
    "P": Status.PARTIAL,
    "N": Status.NONE,
    "NA": Status.NOT_APPLICABLE,
}

_NA_NOTE = (
    "measure does not fit the paper scenario (e.g. hardware-in-the-loop "
    "methods need no sample unpacking)"
)


def _cell_from_code(code: str) -> MeasureCell:
    """Decode one fixture cell.

    "F"/"P"/"N"/"NA" are bare statuses; "P:x" and "N:x" carry the verbatim
    annotation; any other string is a concrete documented quantity, which
    counts as full.
    """
    if code in _STATUS_CODES:
        status = _STATUS_CODES[code]
        if status is Status.NOT_APPLICABLE:
            return MeasureCell(status=status, note=_NA_NOTE)
        if status is Status.FULL:
            return MeasureCell(
                status=status,
                evidence_sources=frozenset({EvidenceSource.FIGURE_OR_TABLE}),
            )
        return MeasureCell(status=status)
    prefix, _, annotation = code.partition(":")
    if prefix in ("P", "N") and annotation:
        return MeasureCell(status=_STATUS_CODES[prefix], count=annotation)
    return MeasureCell(
        status=Status.FULL,
        evidence_sources=frozenset({EvidenceSource.FIGURE_OR_TABLE}),
        count=code,
    )


def assessments_from_payload(payload: Mapping) -> list[MeasureAssessment]:
    """Decode an assessment file: measure_order + one cell row per subject."""
    order = [Measure(name) for name in payload["measure_order"]]
    assessments = []
    for row in payload["subjects"]:
        cells = {
            measure: _cell_from_code(code)
            for measure, code in zip(order, row["cells"])
        }
        assessments.append(
            MeasureAssessment(subject_id=row["subject"], cells=cells)
        )
    return assessments


def load_survey_fixture() -> list[MeasureAssessment]:
    """Load the bundled 44-paper survey as assessments."""
    raw = (
        resources.files("fwcorpus").joinpath(f"data/{_FIXTURE_NAME}")
    ).read_text("utf-8")
    return assessments_from_payload(json.loads(raw))


# --- corpus self-audit --------------------------------------------------------


@dataclass
class DocumentationFlags:
    """Operator-supplied statuses for the prose-only measures."""

    unpack_process: Status = Status.NONE
    reasoning: Status = Status.NONE
    acquisition: Status = Status.NONE
    note: str = ""


@dataclass
class AuditArtifacts:
    """Optional evidence handed to the self-audit alongside the manifest."""

    dedup_result: object | None = None
    unpack_reports: Sequence | None = None
    isa_findings: Mapping[str, Sequence[str]] | None = None
    groundtruth_matches: Sequence | None = None
    docs: DocumentationFlags = field(default_factory=DocumentationFlags)


def _presence_status(present: int, total: int) -> Status:
    if total and present == total:
        return Status.FULL
    if present:
        return Status.PARTIAL
    return Status.NONE


def score_corpus_manifest(
    manifest, artifacts: AuditArtifacts | None = None
) -> MeasureAssessment:
    """Self-audit a corpus manifest against all 16 measures.

    Field-backed measures derive from field presence across records;
    process measures come from the operator's documentation flags;
    ground truth counts as covered when candidate matches are supplied.
    """
    artifacts = artifacts or AuditArtifacts()
    records = manifest.records
    total = len(records)
    meta = frozenset({EvidenceSource.SHARED_META_DATA})
    text = frozenset({EvidenceSource.TEXT})

    def presence(predicate) -> Status:
        return _presence_status(sum(1 for r in records if predicate(r)), total)

    def cell(status: Status, evidence=meta, note: str = "") -> MeasureCell:
        if status in (Status.NONE, Status.NOT_APPLICABLE):
            evidence = frozenset()
        return MeasureCell(status=status, evidence_sources=evidence, note=note)

    unpacked = presence(lambda r: r.unpack_status != "Untested")
    if artifacts.unpack_reports:
        reported = {
            report.firmware_sha256 for report in artifacts.unpack_reports
        }
        unpacked = presence(
            lambda r: r.unpack_status != "Untested" or r.sha256 in reported
        )

    isa_map = artifacts.isa_findings or {}
    docs = artifacts.docs

    cells = {
        Measure.PACKED_COUNT: cell(Status.FULL if total else Status.NONE),
        Measure.UNPACKED_COUNT: cell(unpacked),
        Measure.DEDUPLICATION: cell(
            Status.FULL if artifacts.dedup_result is not None else Status.NONE
        ),
        Measure.UNPACK_PROCESS: cell(docs.unpack_process, text, docs.note),
        Measure.REASONING: cell(docs.reasoning, text, docs.note),
        Measure.ACQUISITION: cell(docs.acquisition, text, docs.note),
        Measure.VULNERABILITIES: cell(
            Status.FULL if artifacts.groundtruth_matches else Status.NONE
        ),
        Measure.RELEASE_DATES: cell(
            presence(lambda r: r.release_date is not None)
        ),
        Measure.VERSIONS: cell(presence(lambda r: bool(r.firmware_version))),
        Measure.LINKS: cell(presence(lambda r: r.download_url is not None)),
        Measure.HASHES: cell(presence(lambda r: bool(r.sha256))),
        Measure.MANUFACTURERS: cell(presence(lambda r: bool(r.manufacturer))),
        Measure.MODELS: cell(presence(lambda r: bool(r.model))),
        Measure.DEVICE_CLASSES: cell(presence(lambda r: bool(r.device_class))),
        Measure.ISAS: cell(presence(lambda r: bool(isa_map.get(r.sha256)))),
        Measure.FW_TYPES: cell(
            presence(lambda r: r.firmware_type != "Unknown")
        ),
    }
    return MeasureAssessment(subject_id="corpus-self-audit", cells=cells)
