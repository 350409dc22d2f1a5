"""Firmware corpus curation, audit, and replication toolkit."""

from .digest import FuzzyDigest, block_digest, dedup, fuzzy_similarity, sha256_digest
from .manifest import (
    CorpusManifest,
    FirmwareRecord,
    composition_report,
    parse_manifest,
    serialize_manifest,
    validate_record,
)
from .unpack import (
    UnpackerRegistry,
    content_dedup,
    default_registry,
    detect_container,
    unpack_recursive,
    verify_unpack,
)
from .identify import classify_elf, detect_isas, elf_inventory, parse_elf, scan_kernel_banners
from .harden import HardeningFlags, RelroLevel, checksec, hardening_trend
from .soundness import (
    Measure,
    Requirement,
    Status,
    aggregate_by_measure,
    aggregate_by_requirement,
    load_survey_fixture,
    score_corpus_manifest,
    validate_assessment,
)
from .groundtruth import match_exploits, parse_version, version_satisfies
from .acquire import AcquisitionPolicy, acquire_corpus, acquire_record, wayback_lookup

__version__ = "0.1.0"
