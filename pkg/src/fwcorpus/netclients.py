"""Stdlib network clients for the replication engine.

These are the production counterparts of the mock clients: plain urllib
HTTP, the public CDX index for snapshot discovery, and a null hash-lookup
backend (content-addressed services need credentials; plug a real client
in through the same one-method interface).
"""

from __future__ import annotations

import json
import urllib.parse
import urllib.request

CDX_ENDPOINT = "https://web.archive.org/cdx/search/cdx"
_USER_AGENT = "fwcorpus/0.1 (corpus replication; throttled)"


class UrllibHttpClient:
    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    def get(self, url: str) -> tuple[int, bytes]:
        request = urllib.request.Request(url, headers={"User-Agent": _USER_AGENT})
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                return resp.status, resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, b""


class CdxArchiveClient:
    """Snapshot discovery over the public capture index."""

    def __init__(self, timeout: float = 30.0):
        self._http = UrllibHttpClient(timeout)

    def cdx_query(self, url: str) -> list[tuple[str, str, str]]:
        query = urllib.parse.urlencode(
            {
                "url": url,
                "output": "json",
                "fl": "timestamp,original,statuscode",
                "filter": "statuscode:200",
            }
        )
        status, body = self._http.get(f"{CDX_ENDPOINT}?{query}")
        if status != 200 or not body:
            return []
        rows = json.loads(body)
        return [tuple(row) for row in rows[1:]]  # row 0 is the header

    def fetch(self, snapshot_url: str) -> tuple[int, bytes]:
        return self._http.get(snapshot_url)


class NullHashLookupClient:
    """Placeholder backend: always misses, keeping phase 3 a clean no-op."""

    def lookup(self, sha256: str) -> bytes | None:
        return None
