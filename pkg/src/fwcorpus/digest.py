"""Cryptographic and fuzzy digests plus firmware-level deduplication.

Firmware images are identified by their SHA-256. The fuzzy scheme is a
fixed-block piecewise hash: the input is cut into power-of-two blocks and
each block contributes a 64-bit truncation of its SHA-256. It is exactly
specified and therefore reproducible anywhere; ssdeep/TLSH values produced
by external tools travel through the manifest as opaque strings instead.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

DEFAULT_BLOCK_SIZE = 4096
MIN_BLOCK_SIZE = 1024
MAX_BLOCK_SIZE = 65536

_CHUNK = 1 << 20


class DigestError(ValueError):
    pass


def sha256_digest(data) -> str:
    """SHA-256 of a bytes object or a binary file-like, as lowercase hex."""
    h = hashlib.sha256()
    if isinstance(data, (bytes, bytearray, memoryview)):
        h.update(data)
    else:
        for chunk in iter(lambda: data.read(_CHUNK), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class FuzzyDigest:
    """Piecewise block hash: one truncated SHA-256 per fixed-size block."""

    block_size: int
    block_hashes: tuple[int, ...]

    PREFIX = "pbh"

    def to_string(self) -> str:
        hashes = ",".join(f"{h:016x}" for h in self.block_hashes)
        return f"{self.PREFIX}:{self.block_size}:{hashes}"

    @classmethod
    def from_string(cls, s: str) -> "FuzzyDigest":
        parts = s.split(":", 2)
        if len(parts) != 3 or parts[0] != cls.PREFIX:
            raise DigestError(f"not a {cls.PREFIX} fuzzy digest: {s!r}")
        try:
            block_size = int(parts[1])
            hashes = tuple(int(h, 16) for h in parts[2].split(",") if h)
        except ValueError as exc:
            raise DigestError(f"malformed fuzzy digest: {s!r}") from exc
        _check_block_size(block_size)
        return cls(block_size=block_size, block_hashes=hashes)


def _check_block_size(block_size: int) -> None:
    if (
        block_size < MIN_BLOCK_SIZE
        or block_size > MAX_BLOCK_SIZE
        or block_size & (block_size - 1)
    ):
        raise DigestError(
            f"block_size must be a power of two in "
            f"[{MIN_BLOCK_SIZE}, {MAX_BLOCK_SIZE}], got {block_size}"
        )


def block_digest(data: bytes, block_size: int = DEFAULT_BLOCK_SIZE) -> FuzzyDigest:
    """Piecewise hash of ``data``; the final short block is hashed as-is."""
    _check_block_size(block_size)
    hashes = []
    for off in range(0, len(data), block_size):
        block = data[off : off + block_size]
        digest = hashlib.sha256(block).digest()
        hashes.append(int.from_bytes(digest[:8], "big"))
    return FuzzyDigest(block_size=block_size, block_hashes=tuple(hashes))


def fuzzy_similarity(a: FuzzyDigest, b: FuzzyDigest) -> float:
    """Multiset block overlap in [0, 1]; two empty digests compare as 1.0."""
    if a.block_size != b.block_size:
        raise DigestError(
            f"block size mismatch: {a.block_size} vs {b.block_size}"
        )
    if not a.block_hashes and not b.block_hashes:
        return 1.0
    shared = Counter(a.block_hashes) & Counter(b.block_hashes)
    return sum(shared.values()) / max(len(a.block_hashes), len(b.block_hashes))


@dataclass
class DedupResult:
    """Unique records plus the groups of exact duplicates that were folded.

    ``unique`` keeps input order; the first occurrence of each SHA-256 is
    the group representative. ``duplicate_groups`` only lists hashes seen
    more than once, with every member record.
    """

    unique: list = field(default_factory=list)
    duplicate_groups: dict[str, list] = field(default_factory=dict)

    @property
    def duplicate_count(self) -> int:
        return sum(len(group) - 1 for group in self.duplicate_groups.values())


def dedup(records: Sequence) -> DedupResult:
    """Collapse records sharing a SHA-256; representative = first in input."""
    by_hash: dict[str, list] = {}
    order: list[str] = []
    for i, record in enumerate(records):
        sha = getattr(record, "sha256", "") or ""
        if not sha:
            label = _record_label(record, i)
            raise DigestError(f"record {label} has no sha256")
        if sha not in by_hash:
            by_hash[sha] = []
            order.append(sha)
        by_hash[sha].append(record)
    result = DedupResult()
    for sha in order:
        group = by_hash[sha]
        result.unique.append(group[0])
        if len(group) > 1:
            result.duplicate_groups[sha] = group
    return result


def _record_label(record, index: int) -> str:
    manufacturer = getattr(record, "manufacturer", None)
    model = getattr(record, "model", None)
    if manufacturer or model:
        return f"#{index} ({manufacturer}/{model})"
    return f"#{index}"
