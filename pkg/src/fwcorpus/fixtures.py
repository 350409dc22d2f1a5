"""Bundled reference data and synthetic-manifest expansion.

Two fixtures ship with the package: the 44-paper survey (loaded by
:mod:`fwcorpus.soundness`) and the per-manufacturer composition summary of
the reference Linux firmware corpus. The latter can be expanded into a
full synthetic manifest whose per-manufacturer sample and device counts
match the summary exactly, which exercises the composition pipeline at
corpus scale without redistributing any real sample data.

Headline figures of the reference corpus that cannot be reproduced on a
desk - they required the real 353 GiB sample set and a live network - are
kept here as constants so reports can cite them for shape parity:
14,583 unique packed images yielded 10,913 verified-unpackable ones, and
one year later 10,883 of those (99.73%) could be re-acquired through the
shared meta data (10,786 direct, 20 web archive, 50 hash lookup, 27
manual, 30 missing).
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from datetime import date
from importlib import resources

from .manifest import (
    CorpusManifest,
    DEVICE_CLASSES,
    FirmwareRecord,
    RecordFindings,
)

MIB = 1024 * 1024

# Reference-corpus scale (not desk-reproducible; report-shape parity only).
REFERENCE_PACKED_UNIQUE = 14583
REFERENCE_UNPACK_VERIFIED = 10913
REFERENCE_REPLICATED = 10883
REFERENCE_REPLICATION_PHASES = {
    "direct": 10786,
    "archive": 20,
    "hash_lookup": 50,
    "manual": 27,
    "missing": 30,
}
REFERENCE_REPLICATION_RATE = REFERENCE_REPLICATED / REFERENCE_UNPACK_VERIFIED


@dataclass(frozen=True)
class ManufacturerSummary:
    manufacturer: str
    samples: int
    devices: int
    mean_size_mib: int
    mean_files: int


@dataclass(frozen=True)
class CorpusSummary:
    name: str
    manufacturers: tuple[ManufacturerSummary, ...]

    @property
    def total_samples(self) -> int:
        return sum(m.samples for m in self.manufacturers)

    @property
    def total_devices(self) -> int:
        return sum(m.devices for m in self.manufacturers)


def load_corpus_summary() -> CorpusSummary:
    raw = (
        resources.files("fwcorpus")
        .joinpath("data/reference_corpus_summary.json")
        .read_text("utf-8")
    )
    payload = json.loads(raw)
    rows = tuple(
        ManufacturerSummary(
            manufacturer=row["manufacturer"],
            samples=int(row["samples"]),
            devices=int(row["devices"]),
            mean_size_mib=int(row["mean_size_mib"]),
            mean_files=int(row["mean_files"]),
        )
        for row in payload["manufacturers"]
    )
    return CorpusSummary(name=payload["name"], manufacturers=rows)


def _synthetic_sha256(*parts) -> str:
    return hashlib.sha256("/".join(str(p) for p in parts).encode()).hexdigest()


def expand_summary(
    summary: CorpusSummary, seed: int = 0
) -> tuple[CorpusManifest, dict[str, RecordFindings]]:
    """Deterministically expand a summary into a synthetic manifest.

    Per manufacturer, ``devices`` distinct models are synthesized and the
    samples are distributed round-robin, so sample and device counts match
    the summary exactly. Sizes and file counts are constant at the
    manufacturer mean, keeping the aggregate means exact as well. A small
    deterministic share of records gets no release date to exercise the
    "unknown" year bucket.
    """
    rng = random.Random(seed)
    classes = sorted(DEVICE_CLASSES)
    records = []
    findings: dict[str, RecordFindings] = {}
    for m in summary.manufacturers:
        for i in range(m.samples):
            device_idx = i % m.devices
            model = f"{m.manufacturer.upper()[:3]}-{device_idx:04d}"
            version = f"{1 + i // m.devices}.{i % 10}.{i % 4}"
            sha = _synthetic_sha256(summary.name, m.manufacturer, model, i)
            if rng.random() < 0.068:  # roughly the reference share of unknowns
                release = None
            else:
                release = date(2005 + rng.randrange(19), 1 + rng.randrange(12), 1)
            records.append(
                FirmwareRecord(
                    manufacturer=m.manufacturer,
                    model=model,
                    device_class=classes[device_idx % len(classes)],
                    firmware_version=version,
                    release_date=release,
                    date_precision="month",
                    download_url=(
                        f"https://downloads.{m.manufacturer.lower()}.example/"
                        f"{model}/fw-{version}.bin"
                    ),
                    sha256=sha,
                    size_bytes=m.mean_size_mib * MIB,
                    firmware_type="TypeI",
                    unpack_status="Unpacked",
                )
            )
            findings[sha] = RecordFindings(file_count=m.mean_files)
    return CorpusManifest(records=tuple(records)), findings
