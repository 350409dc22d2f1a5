"""Replication engine: ordered acquisition fallbacks with throttling.

Per sample the engine walks a strict phase chain - original download link,
web-archive snapshot, hash-lookup service - and hash-verifies every
payload against the manifest before accepting it. Samples none of the
automated phases recover become manual-worklist entries carrying the
search terms a human needs (device name, file name, version); the engine
never does the searching itself.

All outgoing requests flow through a per-host token scheduler shared by
the worker pool, so neither parallelism nor retries can exceed the
configured per-host rate. Network trouble is data, not an exception:
every attempt lands in the result's attempt log.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol
from urllib.parse import urlparse

from .digest import sha256_digest
from .manifest import CorpusManifest, FirmwareRecord

PHASE_DIRECT = "direct"
PHASE_ARCHIVE = "archive"
PHASE_HASH_LOOKUP = "hash_lookup"

OUTCOME_DIRECT = "Direct"
OUTCOME_ARCHIVE = "Archive"
OUTCOME_HASH_LOOKUP = "HashLookup"
OUTCOME_WORKLIST = "ManualWorklist"
OUTCOME_MISSING = "Missing"

_PHASE_OUTCOME = {
    PHASE_DIRECT: OUTCOME_DIRECT,
    PHASE_ARCHIVE: OUTCOME_ARCHIVE,
    PHASE_HASH_LOOKUP: OUTCOME_HASH_LOOKUP,
}

SNAPSHOT_BASE = "https://web.archive.org/web"


class HttpClient(Protocol):
    def get(self, url: str) -> tuple[int, bytes]: ...


class ArchiveClient(Protocol):
    def cdx_query(self, url: str) -> list[tuple[str, str, str]]:
        """Captures of ``url`` as (timestamp, original, statuscode) rows."""
        ...

    def fetch(self, snapshot_url: str) -> tuple[int, bytes]: ...


class HashLookupClient(Protocol):
    def lookup(self, sha256: str) -> bytes | None: ...


@dataclass
class Clients:
    http: HttpClient
    archive: ArchiveClient
    hash_lookup: HashLookupClient


@dataclass(frozen=True)
class AcquisitionPolicy:
    per_host_rate: float = 1.0  # requests per second per host
    max_parallel: int = 4
    timeout: float = 30.0
    verify_hash: bool = True

    def __post_init__(self):
        if self.per_host_rate <= 0:
            raise ValueError("per_host_rate must be > 0")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")


class HostRateLimiter:
    """Serializes request slots per host at a fixed minimum spacing."""

    def __init__(self, rate: float):
        self._interval = 1.0 / rate
        self._next_slot: dict[str, float] = {}
        self._lock = threading.Lock()

    def wait(self, host: str) -> None:
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next_slot.get(host, now))
            self._next_slot[host] = slot + self._interval
        delay = slot - time.monotonic()
        if delay > 0:
            time.sleep(delay)


def _host_of(url: str) -> str:
    return urlparse(url).netloc or "unknown-host"


@dataclass(frozen=True)
class Attempt:
    phase: str
    url: str
    status: str


@dataclass
class AcquisitionResult:
    sha256: str
    outcome: str
    bytes_fetched: int = 0
    attempts: list[Attempt] = field(default_factory=list)
    hash_verified: bool = False


@dataclass(frozen=True)
class WorklistEntry:
    manufacturer: str
    model: str
    file_name: str
    version: str
    sha256: str


def wayback_lookup(original_url: str, archive: ArchiveClient) -> str | None:
    """Newest status-200 capture of ``original_url`` as a replayable URL."""
    try:
        rows = archive.cdx_query(original_url)
    except Exception:
        return None
    ok = [(ts, orig) for ts, orig, status in rows if status == "200"]
    if not ok:
        return None
    ts, orig = max(ok)  # CDX timestamps sort lexicographically by recency
    return f"{SNAPSHOT_BASE}/{ts}/{orig}"


def _file_name(record: FirmwareRecord) -> str:
    if record.download_url:
        tail = record.download_url.rstrip("/").rsplit("/", 1)[-1]
        if tail:
            return tail
    return f"{record.model}-{record.firmware_version}.bin"


def acquire_record(
    record: FirmwareRecord,
    clients: Clients,
    policy: AcquisitionPolicy = AcquisitionPolicy(),
    limiter: HostRateLimiter | None = None,
) -> AcquisitionResult:
    """Run the phase chain for one record; never raises on network trouble."""
    limiter = limiter or HostRateLimiter(policy.per_host_rate)
    result = AcquisitionResult(sha256=record.sha256, outcome=OUTCOME_WORKLIST)

    def verify(data: bytes) -> bool:
        if not policy.verify_hash:
            return True
        return sha256_digest(data) == record.sha256

    def attempt_fetch(phase: str, url: str, fetch) -> bool:
        limiter.wait(_host_of(url))
        try:
            status, data = fetch(url)
        except Exception as exc:  # client bugs/network errors become data
            result.attempts.append(Attempt(phase, url, f"error:{exc}"))
            return False
        if status != 200:
            result.attempts.append(Attempt(phase, url, str(status)))
            return False
        result.bytes_fetched += len(data)
        if not verify(data):
            result.attempts.append(Attempt(phase, url, "hash-mismatch"))
            return False
        result.attempts.append(Attempt(phase, url, "200"))
        result.outcome = _PHASE_OUTCOME[phase]
        result.hash_verified = policy.verify_hash
        return True

    # Phase 1: the original download link.
    if record.download_url and attempt_fetch(
        PHASE_DIRECT, record.download_url, clients.http.get
    ):
        return result

    # Phase 2: newest archived snapshot of the same link.
    if record.download_url:
        limiter.wait("web.archive.org")
        snapshot = wayback_lookup(record.download_url, clients.archive)
        if snapshot is None:
            result.attempts.append(
                Attempt(PHASE_ARCHIVE, record.download_url, "no-snapshot")
            )
        elif attempt_fetch(PHASE_ARCHIVE, snapshot, clients.archive.fetch):
            return result

    # Phase 3: content-addressed lookup by sha256.
    limiter.wait("hash-lookup")
    try:
        data = clients.hash_lookup.lookup(record.sha256)
    except Exception as exc:
        data = None
        result.attempts.append(
            Attempt(PHASE_HASH_LOOKUP, record.sha256, f"error:{exc}")
        )
    if data is not None:
        result.bytes_fetched += len(data)
        if verify(data):
            result.attempts.append(
                Attempt(PHASE_HASH_LOOKUP, record.sha256, "200")
            )
            result.outcome = OUTCOME_HASH_LOOKUP
            result.hash_verified = policy.verify_hash
            return result
        result.attempts.append(
            Attempt(PHASE_HASH_LOOKUP, record.sha256, "hash-mismatch")
        )
    else:
        result.attempts.append(
            Attempt(PHASE_HASH_LOOKUP, record.sha256, "not-found")
        )

    # Phase 4 is manual: emit the search terms, do not search.
    result.outcome = OUTCOME_WORKLIST
    return result


@dataclass(frozen=True)
class ReplicationRow:
    samples: int
    replicated: int
    direct: int
    archive: int
    hash_lookup: int
    worklist: int
    missing: int

    def ratio(self, count: int) -> float:
        return count / self.samples if self.samples else 0.0


@dataclass
class ReplicationReport:
    per_manufacturer: dict[str, ReplicationRow]
    total: ReplicationRow
    results: list[AcquisitionResult]
    worklist: list[WorklistEntry]
    duration_seconds: float


def _row(results: list[AcquisitionResult]) -> ReplicationRow:
    counts = {
        OUTCOME_DIRECT: 0,
        OUTCOME_ARCHIVE: 0,
        OUTCOME_HASH_LOOKUP: 0,
        OUTCOME_WORKLIST: 0,
        OUTCOME_MISSING: 0,
    }
    for r in results:
        counts[r.outcome] += 1
    replicated = (
        counts[OUTCOME_DIRECT]
        + counts[OUTCOME_ARCHIVE]
        + counts[OUTCOME_HASH_LOOKUP]
    )
    return ReplicationRow(
        samples=len(results),
        replicated=replicated,
        direct=counts[OUTCOME_DIRECT],
        archive=counts[OUTCOME_ARCHIVE],
        hash_lookup=counts[OUTCOME_HASH_LOOKUP],
        worklist=counts[OUTCOME_WORKLIST],
        missing=len(results) - replicated,
    )


def acquire_corpus(
    manifest: CorpusManifest,
    clients: Clients,
    policy: AcquisitionPolicy = AcquisitionPolicy(),
) -> ReplicationReport:
    """Replicate a whole corpus with a bounded worker pool.

    Results are reassembled in manifest order, so the report content does
    not depend on worker scheduling.
    """
    limiter = HostRateLimiter(policy.per_host_rate)
    started = time.monotonic()
    records = list(manifest.records)
    if records:
        with ThreadPoolExecutor(max_workers=policy.max_parallel) as pool:
            results = list(
                pool.map(
                    lambda r: acquire_record(r, clients, policy, limiter),
                    records,
                )
            )
    else:
        results = []
    duration = time.monotonic() - started

    by_manufacturer: dict[str, list[AcquisitionResult]] = {}
    worklist = []
    for record, result in zip(records, results):
        by_manufacturer.setdefault(record.manufacturer, []).append(result)
        if result.outcome == OUTCOME_WORKLIST:
            worklist.append(
                WorklistEntry(
                    manufacturer=record.manufacturer,
                    model=record.model,
                    file_name=_file_name(record),
                    version=record.firmware_version,
                    sha256=record.sha256,
                )
            )

    return ReplicationReport(
        per_manufacturer={
            name: _row(rs) for name, rs in sorted(by_manufacturer.items())
        },
        total=_row(results),
        results=results,
        worklist=worklist,
        duration_seconds=duration,
    )


class ScraperAdapter(Protocol):
    """Interface for optional site scrapers (none ship with the toolkit).

    Implementations must honor the target's robots.txt and throttle both
    requests and execution threads; the engine only replays known URLs and
    therefore never crawls.
    """

    def discover(self, manufacturer: str) -> list[FirmwareRecord]: ...
