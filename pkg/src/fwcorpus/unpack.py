"""Recursive firmware unpacking, rootfs verification, content dedup.

The orchestrator is format-agnostic: a registry maps container formats to
unpackers, each of which turns one blob into (relative path, bytes)
children. Built-ins cover gzip, zip, tar, and cpio(newc); anything else
(squashfs, jffs2, vendor containers, ...) plugs in through the external
command adapter, so breadth lives in tooling, not in this module.

Every node re-enters detection until its format is unknown, the depth
limit is hit, or its SHA-256 was already unpacked in this run (the cycle
guard). Failures are recorded per node and are never fatal to siblings.
Entry names from archives are untrusted: ".." and absolute prefixes are
stripped before a path is ever reported or written.
"""

from __future__ import annotations

import gzip
import io
import logging
import shlex
import subprocess
import tarfile
import tempfile
import zipfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .digest import sha256_digest

log = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 8
DEFAULT_MAX_TOTAL_BYTES = 512 * 1024 * 1024

FORMAT_GZIP = "gzip"
FORMAT_ZIP = "zip"
FORMAT_TAR = "tar"
FORMAT_CPIO = "cpio_newc"
FORMAT_DIRECTORY = "directory"
FORMAT_UNKNOWN = "unknown"

# Path components that indicate an extracted Linux root filesystem. An
# image that verifies false is not necessarily broken: incremental updates
# legitimately ship without a full rootfs. The list is configurable.
DEFAULT_ROOTFS_MARKERS = (
    "/bin/",
    "/sbin/",
    "/lib/",
    "/usr/",
    "/etc/",
    "/var/",
    "/root/",
    "/home/",
    "/opt/",
    "/mnt/",
    "/proc/",
    "/sys/",
    "/dev/",
    "/tmp/",
)


class UnpackError(Exception):
    pass


def detect_container(prefix: bytes, length: int | None = None) -> str:
    """Identify a container format from its leading bytes.

    Only the first 512 bytes are needed. Returns one of gzip, zip, tar,
    cpio_newc, directory, or unknown ("directory" is never produced from
    bytes; it exists for registry entries fed from filesystem walks).
    """
    if length is None:
        length = len(prefix)
    if length >= 2 and prefix[:2] == b"\x1f\x8b":
        return FORMAT_GZIP
    if length >= 4 and prefix[:4] == b"PK\x03\x04":
        return FORMAT_ZIP
    if length >= 262 and prefix[257:262] == b"ustar":
        return FORMAT_TAR
    if length >= 6 and prefix[:6] == b"070701":
        return FORMAT_CPIO
    return FORMAT_UNKNOWN


def sanitize_path(name: str) -> str:
    """Flatten an archive entry name into a safe relative slash path.

    Absolute prefixes, drive separators, ".", "", and ".." segments are
    dropped. Traversal attempts are logged, not fatal.
    """
    cleaned = name.replace("\\", "/")
    segments = []
    dropped = False
    for segment in cleaned.split("/"):
        if segment in ("", "."):
            continue
        if segment == "..":
            dropped = True
            continue
        segments.append(segment)
    if dropped:
        log.warning("stripped traversal segments from archive entry %r", name)
    return "/".join(segments)


# --- unpackers ---------------------------------------------------------------


def _gzip_member_name(data: bytes) -> str:
    # RFC 1952: FLG at byte 3, optional FEXTRA then FNAME (NUL-terminated).
    try:
        flags = data[3]
        pos = 10
        if flags & 0x04:
            xlen = int.from_bytes(data[pos : pos + 2], "little")
            pos += 2 + xlen
        if flags & 0x08:
            end = data.index(b"\x00", pos)
            name = data[pos:end].decode("latin-1")
            return sanitize_path(name) or "data"
    except (IndexError, ValueError):
        pass
    return "data"


def unpack_gzip(data: bytes) -> list[tuple[str, bytes]]:
    try:
        payload = gzip.decompress(data)
    except (OSError, EOFError, zlib.error) as exc:
        raise UnpackError(f"gzip: {exc}") from exc
    return [(_gzip_member_name(data), payload)]


def unpack_zip(data: bytes) -> list[tuple[str, bytes]]:
    children = []
    try:
        with zipfile.ZipFile(io.BytesIO(data)) as archive:
            for info in archive.infolist():
                if info.is_dir():
                    continue
                path = sanitize_path(info.filename)
                if not path:
                    continue
                children.append((path, archive.read(info)))
    except (zipfile.BadZipFile, RuntimeError, NotImplementedError, OSError) as exc:
        raise UnpackError(f"zip: {exc}") from exc
    return children


def unpack_tar(data: bytes) -> list[tuple[str, bytes]]:
    children = []
    try:
        with tarfile.open(fileobj=io.BytesIO(data)) as archive:
            for member in archive:
                if not member.isfile():
                    continue
                path = sanitize_path(member.name)
                if not path:
                    continue
                handle = archive.extractfile(member)
                if handle is None:
                    continue
                children.append((path, handle.read()))
    except (tarfile.TarError, EOFError, OSError) as exc:
        raise UnpackError(f"tar: {exc}") from exc
    return children


_CPIO_MAGIC = b"070701"
_CPIO_TRAILER = "TRAILER!!!"


def _cpio_align(n: int) -> int:
    return (n + 3) & ~3


def unpack_cpio(data: bytes) -> list[tuple[str, bytes]]:
    """Parse a newc ("070701") cpio stream."""
    children = []
    pos = 0
    while True:
        if pos + 110 > len(data):
            if not children:
                raise UnpackError("cpio: truncated header")
            break
        header = data[pos : pos + 110]
        if header[:6] != _CPIO_MAGIC:
            raise UnpackError(f"cpio: bad magic at offset {pos}")
        try:
            mode = int(header[14:22], 16)
            filesize = int(header[54:62], 16)
            namesize = int(header[94:102], 16)
        except ValueError as exc:
            raise UnpackError(f"cpio: malformed header at {pos}") from exc
        name_start = pos + 110
        name = data[name_start : name_start + namesize - 1].decode(
            "latin-1", "replace"
        )
        data_start = _cpio_align(name_start + namesize)
        data_end = data_start + filesize
        if data_end > len(data):
            raise UnpackError(f"cpio: entry {name!r} overruns stream")
        if name == _CPIO_TRAILER:
            break
        if (mode & 0o170000) == 0o100000:  # regular file
            path = sanitize_path(name)
            if path:
                children.append((path, data[data_start:data_end]))
        pos = _cpio_align(data_end)
    return children


@dataclass
class ExternalUnpacker:
    """Adapter that shells out to an installed extraction tool.

    ``command`` is a template whose {input_file} and {output_dir}
    placeholders are substituted before execution inside a scratch
    directory. Exit code 0 means success; whatever the tool wrote to the
    output directory is re-ingested as children.
    """

    format_id: str
    command: str
    magic: bytes = b""
    magic_offset: int = 0
    timeout: float = 120.0

    def matches(self, prefix: bytes, length: int) -> bool:
        if not self.magic:
            return False
        end = self.magic_offset + len(self.magic)
        return length >= end and prefix[self.magic_offset : end] == self.magic

    def __call__(self, data: bytes) -> list[tuple[str, bytes]]:
        with tempfile.TemporaryDirectory(prefix="fwcorpus-unpack-") as scratch:
            root = Path(scratch)
            input_file = root / "input.bin"
            output_dir = root / "out"
            output_dir.mkdir()
            input_file.write_bytes(data)
            argv = [
                token.format(input_file=str(input_file), output_dir=str(output_dir))
                for token in shlex.split(self.command)
            ]
            try:
                proc = subprocess.run(
                    argv,
                    capture_output=True,
                    timeout=self.timeout,
                    cwd=scratch,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise UnpackError(f"{self.format_id}: {exc}") from exc
            if proc.returncode != 0:
                stderr = proc.stderr.decode("latin-1", "replace").strip()
                raise UnpackError(
                    f"{self.format_id}: exit {proc.returncode}: {stderr[:200]}"
                )
            children = []
            for child in sorted(output_dir.rglob("*")):
                if child.is_file() and not child.is_symlink():
                    rel = sanitize_path(str(child.relative_to(output_dir)))
                    if rel:
                        children.append((rel, child.read_bytes()))
            return children


@dataclass
class UnpackerRegistry:
    """Ordered mapping of format ids to unpacker callables."""

    unpackers: dict[str, Callable[[bytes], list[tuple[str, bytes]]]] = field(
        default_factory=dict
    )
    external: list[ExternalUnpacker] = field(default_factory=list)

    def register(self, format_id: str, unpacker) -> None:
        self.unpackers[format_id] = unpacker

    def register_external(self, adapter: ExternalUnpacker) -> None:
        self.external.append(adapter)
        self.unpackers[adapter.format_id] = adapter

    def detect(self, prefix: bytes, length: int) -> str:
        builtin = detect_container(prefix, length)
        if builtin != FORMAT_UNKNOWN and builtin in self.unpackers:
            return builtin
        for adapter in self.external:
            if adapter.matches(prefix, length):
                return adapter.format_id
        return FORMAT_UNKNOWN

    def get(self, format_id: str):
        return self.unpackers.get(format_id)


def default_registry() -> UnpackerRegistry:
    registry = UnpackerRegistry()
    registry.register(FORMAT_GZIP, unpack_gzip)
    registry.register(FORMAT_ZIP, unpack_zip)
    registry.register(FORMAT_TAR, unpack_tar)
    registry.register(FORMAT_CPIO, unpack_cpio)
    return registry


def load_registry_config(entries: Iterable[dict]) -> UnpackerRegistry:
    """Extend the default registry from a config list.

    Each entry: {"format": id, "command": template, "magic_hex": bytes at
    "offset" used for detection, "timeout": seconds}.
    """
    registry = default_registry()
    for entry in entries:
        registry.register_external(
            ExternalUnpacker(
                format_id=entry["format"],
                command=entry["command"],
                magic=bytes.fromhex(entry.get("magic_hex", "")),
                magic_offset=int(entry.get("offset", 0)),
                timeout=float(entry.get("timeout", 120.0)),
            )
        )
    return registry


# --- recursive orchestration -------------------------------------------------


@dataclass(frozen=True)
class ExtractedFile:
    path: str
    size_bytes: int
    sha256: str
    depth: int
    container_chain: tuple[str, ...]


@dataclass(frozen=True)
class FailedNode:
    path: str
    format_guess: str
    reason: str


@dataclass
class UnpackReport:
    firmware_sha256: str
    files: list[ExtractedFile] = field(default_factory=list)
    failed_nodes: list[FailedNode] = field(default_factory=list)
    max_depth_reached: bool = False
    budget_exceeded: bool = False

    def to_dict(self) -> dict:
        return {
            "firmware_sha256": self.firmware_sha256,
            "files": [
                {
                    "path": f.path,
                    "size_bytes": f.size_bytes,
                    "sha256": f.sha256,
                    "depth": f.depth,
                    "container_chain": list(f.container_chain),
                }
                for f in self.files
            ],
            "failed_nodes": [
                {"path": n.path, "format_guess": n.format_guess, "reason": n.reason}
                for n in self.failed_nodes
            ],
            "max_depth_reached": self.max_depth_reached,
            "budget_exceeded": self.budget_exceeded,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "UnpackReport":
        return cls(
            firmware_sha256=obj["firmware_sha256"],
            files=[
                ExtractedFile(
                    path=f["path"],
                    size_bytes=f["size_bytes"],
                    sha256=f["sha256"],
                    depth=f["depth"],
                    container_chain=tuple(f["container_chain"]),
                )
                for f in obj.get("files", [])
            ],
            failed_nodes=[
                FailedNode(n["path"], n["format_guess"], n["reason"])
                for n in obj.get("failed_nodes", [])
            ],
            max_depth_reached=obj.get("max_depth_reached", False),
            budget_exceeded=obj.get("budget_exceeded", False),
        )


@dataclass(frozen=True)
class UnpackLimits:
    max_depth: int = DEFAULT_MAX_DEPTH
    max_total_bytes: int = DEFAULT_MAX_TOTAL_BYTES


def unpack_recursive(
    firmware: bytes,
    registry: UnpackerRegistry | None = None,
    limits: UnpackLimits = UnpackLimits(),
    sink: Callable[[str, str, bytes], None] | None = None,
) -> UnpackReport:
    """Recursively extract a firmware blob.

    Containers that unpack successfully are consumed; only terminal files
    appear in the report. ``sink(path, sha256, data)`` is invoked for every
    terminal file so callers can persist contents (the report itself holds
    digests, not bytes).
    """
    registry = registry or default_registry()
    if not registry.unpackers:
        raise UnpackError("registry has no unpackers")

    report = UnpackReport(firmware_sha256=sha256_digest(firmware))
    expanded: set[str] = set()
    budget = limits.max_total_bytes

    def add_file(path, data, sha, depth, chain):
        report.files.append(
            ExtractedFile(
                path=path,
                size_bytes=len(data),
                sha256=sha,
                depth=depth,
                container_chain=chain,
            )
        )
        if sink is not None:
            sink(path, sha, data)

    def walk(data: bytes, path: str, depth: int, chain: tuple[str, ...]) -> None:
        nonlocal budget
        sha = sha256_digest(data)
        fmt = registry.detect(data[:512], len(data))
        is_root = depth == 0

        if fmt == FORMAT_UNKNOWN:
            if is_root:
                report.failed_nodes.append(
                    FailedNode(path, FORMAT_UNKNOWN, "no unpacker matched")
                )
            else:
                add_file(path, data, sha, depth, chain)
            return
        if sha in expanded:
            # Cycle guard: this exact blob was already unpacked once.
            if not is_root:
                add_file(path, data, sha, depth, chain)
            return
        if depth >= limits.max_depth:
            report.max_depth_reached = True
            if not is_root:
                add_file(path, data, sha, depth, chain)
            return

        unpacker = registry.get(fmt)
        try:
            children = unpacker(data)
        except UnpackError as exc:
            report.failed_nodes.append(FailedNode(path, fmt, str(exc)))
            if not is_root:
                add_file(path, data, sha, depth, chain)
            return

        expanded.add(sha)
        for child_path, child_data in children:
            if budget - len(child_data) < 0:
                report.budget_exceeded = True
                log.warning("byte budget exhausted at %s", path or "<root>")
                return
            budget -= len(child_data)
            joined = f"{path}/{child_path}" if path else child_path
            walk(child_data, joined, depth + 1, chain + (fmt,))

    walk(firmware, "", 0, ())
    report.files.sort(key=lambda f: f.path)
    return report


# --- verification ------------------------------------------------------------


@dataclass(frozen=True)
class VerificationResult:
    verified: bool
    matched_markers: tuple[str, ...]
    marker_set_id: str


def _marker_segments(marker: str) -> tuple[str, ...]:
    return tuple(s for s in marker.split("/") if s)


def verify_unpack(
    report: UnpackReport,
    markers: Sequence[str] = DEFAULT_ROOTFS_MARKERS,
    marker_set_id: str = "default-linux-rootfs",
) -> VerificationResult:
    """Check extracted paths for Linux rootfs path components.

    A marker like "/bin/" matches any path carrying "bin" as a segment;
    multi-segment markers must appear contiguously. Verified means at
    least one marker matched somewhere in the extracted tree.
    """
    if not markers:
        raise ValueError("marker list must be non-empty")
    wanted = {m: _marker_segments(m) for m in markers}
    matched = []
    for marker, needle in wanted.items():
        if not needle:
            continue
        for f in report.files:
            segments = tuple(f.path.split("/"))
            n = len(needle)
            if any(
                segments[i : i + n] == needle
                for i in range(len(segments) - n + 1)
            ):
                matched.append(marker)
                break
    return VerificationResult(
        verified=bool(matched),
        matched_markers=tuple(sorted(matched)),
        marker_set_id=marker_set_id,
    )


# --- cross-image content dedup ----------------------------------------------


@dataclass
class ContentDedupIndex:
    by_hash: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    unique_file_count: int = 0
    total_file_count: int = 0

    def occurrences(self, sha256: str) -> list[tuple[str, str]]:
        return self.by_hash.get(sha256, [])


def content_dedup(reports: Iterable[UnpackReport]) -> ContentDedupIndex:
    """Index every extracted file by hash across all reports.

    Totals do not depend on report order; occurrence lists are sorted to
    keep the index deterministic.
    """
    index = ContentDedupIndex()
    for report in reports:
        for f in report.files:
            index.by_hash.setdefault(f.sha256, []).append(
                (report.firmware_sha256, f.path)
            )
            index.total_file_count += 1
    for entries in index.by_hash.values():
        entries.sort()
    index.unique_file_count = len(index.by_hash)
    return index
