"""In-process stand-in network clients for offline replication drills.

The "standard" scenario builds a 100-record manifest across ten hosts
with a known ground truth: 90 live direct links, then 10 dead ones of
which 5 have an archived snapshot, 3 are only recoverable through the
hash-lookup service, and 2 are gone everywhere. Every client records its
requests with monotonic timestamps, which lets tests check both the phase
accounting and the per-host request spacing.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .acquire import Clients, SNAPSHOT_BASE
from .digest import sha256_digest
from .manifest import CorpusManifest, FirmwareRecord


@dataclass(frozen=True)
class LoggedRequest:
    host: str
    url: str
    timestamp: float


class RequestLog:
    def __init__(self):
        self._lock = threading.Lock()
        self.requests: list[LoggedRequest] = []

    def add(self, host: str, url: str) -> None:
        with self._lock:
            self.requests.append(LoggedRequest(host, url, time.monotonic()))

    def by_host(self) -> dict[str, list[float]]:
        grouped: dict[str, list[float]] = {}
        for r in self.requests:
            grouped.setdefault(r.host, []).append(r.timestamp)
        for stamps in grouped.values():
            stamps.sort()
        return grouped


def _host_of(url: str) -> str:
    from urllib.parse import urlparse

    return urlparse(url).netloc or "unknown-host"


class MockHttpClient:
    def __init__(self, payloads: dict[str, bytes], log: RequestLog):
        self._payloads = payloads
        self.log = log

    def get(self, url: str) -> tuple[int, bytes]:
        self.log.add(_host_of(url), url)
        data = self._payloads.get(url)
        if data is None:
            return 404, b""
        return 200, data


class MockArchiveClient:
    """CDX index plus snapshot store keyed by (timestamp, original URL)."""

    def __init__(
        self,
        captures: dict[str, list[tuple[str, str]]],
        snapshots: dict[str, bytes],
        log: RequestLog,
    ):
        self._captures = captures  # url -> [(timestamp, statuscode)]
        self._snapshots = snapshots  # snapshot_url -> bytes
        self.log = log

    def cdx_query(self, url: str) -> list[tuple[str, str, str]]:
        self.log.add("web.archive.org", f"cdx:{url}")
        return [
            (ts, url, status) for ts, status in self._captures.get(url, [])
        ]

    def fetch(self, snapshot_url: str) -> tuple[int, bytes]:
        self.log.add("web.archive.org", snapshot_url)
        data = self._snapshots.get(snapshot_url)
        if data is None:
            return 404, b""
        return 200, data


class MockHashLookupClient:
    def __init__(self, store: dict[str, bytes], log: RequestLog):
        self._store = store
        self.log = log

    def lookup(self, sha256: str) -> bytes | None:
        self.log.add("hash-lookup", sha256)
        return self._store.get(sha256)


@dataclass
class MockScenario:
    manifest: CorpusManifest
    clients: Clients
    log: RequestLog
    expected: dict[str, int] = field(default_factory=dict)


def standard_scenario() -> MockScenario:
    """100 records, expected outcome (direct=90, archive=5, hash=3, worklist=2)."""
    manufacturers = [f"vendor{i:02d}" for i in range(10)]
    log = RequestLog()
    payloads: dict[str, bytes] = {}
    captures: dict[str, list[tuple[str, str]]] = {}
    snapshots: dict[str, bytes] = {}
    hash_store: dict[str, bytes] = {}
    records = []

    for i in range(100):
        manufacturer = manufacturers[i % 10]
        data = f"firmware-image-{i:03d}".encode() * 64
        sha = sha256_digest(data)
        url = f"https://downloads.{manufacturer}.example/fw/image-{i:03d}.bin"
        records.append(
            FirmwareRecord(
                manufacturer=manufacturer,
                model=f"model-{i % 10}",
                device_class="router",
                firmware_version=f"1.0.{i}",
                download_url=url,
                sha256=sha,
                size_bytes=len(data),
                firmware_type="TypeI",
            )
        )
        if i < 90:
            payloads[url] = data  # live direct link
        elif i < 95:
            ts = f"202401{i - 89:02d}000000"
            captures[url] = [("20190101000000", "404"), (ts, "200")]
            snapshots[f"{SNAPSHOT_BASE}/{ts}/{url}"] = data
        elif i < 98:
            hash_store[sha] = data  # only the lookup service has it
        # the final two records are unrecoverable everywhere

    clients = Clients(
        http=MockHttpClient(payloads, log),
        archive=MockArchiveClient(captures, snapshots, log),
        hash_lookup=MockHashLookupClient(hash_store, log),
    )
    return MockScenario(
        manifest=CorpusManifest(records=tuple(records)),
        clients=clients,
        log=log,
        expected={"direct": 90, "archive": 5, "hash_lookup": 3, "worklist": 2},
    )


SCENARIOS = {"standard": standard_scenario}
