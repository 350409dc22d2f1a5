"""Content identification: kernel banners, ISA detection, ELF inventory.

The ELF parser is deliberately self-contained and defensive. Firmware
trees are full of truncated and malformed binaries, so every table read is
bounds-checked: out-of-range offsets set a truncation flag on the summary
instead of raising, and only genuinely non-ELF input is an error.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

ELF_MAGIC = b"\x7fELF"
AR_MAGIC = b"!<arch>\n"
DTB_MAGIC = b"\xd0\x0d\xfe\xed"

PT_DYNAMIC = 2
PT_INTERP = 3
PT_GNU_STACK = 0x6474E551
PT_GNU_RELRO = 0x6474E552
PF_X = 1

SHT_SYMTAB = 2
SHT_DYNSYM = 11

DT_NULL = 0
DT_BIND_NOW = 24
DT_FLAGS = 30
DT_FLAGS_1 = 0x6FFFFFFB
DF_BIND_NOW = 0x8
DF_1_NOW = 0x1
DF_1_PIE = 0x08000000

_E_TYPE_NAMES = {1: "Rel", 2: "Exec", 3: "Dyn", 4: "Core"}

EM_MIPS = 0x08
_MACHINE_ISA = {
    0x28: "arm",
    0xB7: "arm64",
    0x03: "x86",
    0x3E: "x86_64",
    0x14: "ppc",
    0x15: "ppc",
}

# Labels detect_isas may emit. "mips" is the family-level label used when
# the evidence (a kernel build config) cannot resolve width or endianness.
ISA_LABELS = frozenset(
    {
        "arm",
        "arm64",
        "mips",
        "mips32el",
        "mips32eb",
        "mips64",
        "x86",
        "x86_64",
        "ppc",
    }
)


def is_known_isa_label(label: str) -> bool:
    return label in ISA_LABELS or label.startswith("other:")


def isa_family(label: str | None) -> str:
    """Roll an ISA label up to the ARM/MIPS/x86/Other reporting families."""
    if label is None:
        return "Other"
    if label.startswith("arm"):
        return "ARM"
    if label.startswith("mips"):
        return "MIPS"
    if label.startswith("x86"):
        return "x86"
    return "Other"


class NotElfError(ValueError):
    pass


# --- kernel banner scanning --------------------------------------------------

_BANNER_RE = re.compile(rb"Linux version (\d+\.\d+(?:\.\d+)?)")
_BANNER_CONTEXT = 64
_BANNER_RAW_MAX = 96

# Known non-kernel producer of "Linux version ..." strings: matches inside
# a context window mentioning any of these are discarded.
DEFAULT_BANNER_FALSE_POSITIVE_MARKERS = (b"pptp",)


@dataclass(frozen=True)
class KernelBannerFinding:
    version: str
    offset: int
    source_path: str
    raw_banner: str


def scan_kernel_banners(
    files: Iterable[tuple[str, bytes]],
    false_positive_markers: Sequence[bytes] = DEFAULT_BANNER_FALSE_POSITIVE_MARKERS,
) -> list[KernelBannerFinding]:
    """Find "Linux version X.Y[.Z]" banners in raw file contents.

    The 64 bytes around each match are checked against the false-positive
    marker list; version strings printed by lookalike client binaries are
    dropped rather than reported.
    """
    findings = []
    markers = [m.lower() for m in false_positive_markers]
    for path, data in files:
        for match in _BANNER_RE.finditer(data):
            window = data[
                max(0, match.start() - _BANNER_CONTEXT) : match.end()
                + _BANNER_CONTEXT
            ].lower()
            if any(marker in window for marker in markers):
                continue
            raw = data[match.start() : match.start() + _BANNER_RAW_MAX]
            for stop in (b"\x00", b"\n"):
                cut = raw.find(stop)
                if cut != -1:
                    raw = raw[:cut]
            findings.append(
                KernelBannerFinding(
                    version=match.group(1).decode("ascii"),
                    offset=match.start(),
                    source_path=path,
                    raw_banner=raw.decode("latin-1"),
                )
            )
    return findings


# --- ISA detection -----------------------------------------------------------


@dataclass(frozen=True)
class IsaFinding:
    isa: str
    evidence: str  # ElfHeader | DeviceTree | KernelConfig
    source_path: str


_CONFIG_RE = re.compile(rb"(?m)^CONFIG_(ARM64|ARM|MIPS|X86|PPC)=y$")
_CONFIG_ISA = {
    b"ARM64": "arm64",
    b"ARM": "arm",
    b"MIPS": "mips",
    b"X86": "x86",
    b"PPC": "ppc",
}

# Searched longest-first inside device-tree blobs.
_DT_TOKENS = (
    b"mips32el",
    b"mips32eb",
    b"x86_64",
    b"mips64",
    b"arm64",
    b"mips",
    b"arm",
    b"x86",
    b"ppc",
)


def _elf_header_isa(data: bytes) -> str | None:
    if len(data) < 20 or data[:4] != ELF_MAGIC:
        return None
    ei_class, ei_data = data[4], data[5]
    if ei_data not in (1, 2):
        return None
    endian = "little" if ei_data == 1 else "big"
    machine = int.from_bytes(data[18:20], endian)
    if machine == EM_MIPS:
        if ei_class == 2:
            return "mips64"
        return "mips32el" if endian == "little" else "mips32eb"
    return _MACHINE_ISA.get(machine)


def detect_isas(files: Iterable[tuple[str, bytes]]) -> list[IsaFinding]:
    """Detect instruction sets from ELF headers, DTBs, and kernel configs."""
    findings = []
    for path, data in files:
        label = _elf_header_isa(data)
        if label is not None:
            findings.append(IsaFinding(label, "ElfHeader", path))
        if data[:4] == DTB_MAGIC:
            body = data[4:]
            token = next((t for t in _DT_TOKENS if t in body), None)
            label = token.decode("ascii") if token else "other:devicetree"
            findings.append(IsaFinding(label, "DeviceTree", path))
        seen = set()
        for match in _CONFIG_RE.finditer(data):
            label = _CONFIG_ISA[match.group(1)]
            if label not in seen:
                seen.add(label)
                findings.append(IsaFinding(label, "KernelConfig", path))
    return findings


# --- ELF parsing -------------------------------------------------------------


@dataclass(frozen=True)
class ElfSummary:
    is_ar_archive: bool = False
    elf_class: int | None = None  # 32 or 64
    endianness: str | None = None  # little or big
    e_type: str = "Other"  # Rel | Exec | Dyn | Core | Other
    machine: int | None = None
    isa: str | None = None
    has_interp: bool = False
    dynamic_flags: frozenset = frozenset()  # subset of {"BindNow", "Pie"}
    program_headers: tuple[tuple[int, int], ...] = ()  # (p_type, p_flags)
    dynamic_symbols: tuple[str, ...] = ()
    static_symbols: tuple[str, ...] = ()
    truncated: bool = False

    def segment_flags(self, p_type: int) -> int | None:
        for seg_type, seg_flags in self.program_headers:
            if seg_type == p_type:
                return seg_flags
        return None

    def has_segment(self, p_type: int) -> bool:
        return self.segment_flags(p_type) is not None


class _Reader:
    """Bounds-checked little/big-endian field reader over one blob."""

    def __init__(self, data: bytes, endian: str):
        self.data = data
        self.end = "little" if endian == "little" else "big"
        self.truncated = False

    def u(self, offset: int, size: int) -> int | None:
        chunk = self.data[offset : offset + size]
        if len(chunk) != size or offset < 0:
            self.truncated = True
            return None
        return int.from_bytes(chunk, self.end)


def parse_elf(data: bytes) -> ElfSummary:
    """Parse header facts from an ELF binary or recognize an ar archive.

    Malformed program/section/dynamic tables degrade to whatever subset
    parsed, with ``truncated`` set; only a missing magic raises.
    """
    if data[: len(AR_MAGIC)] == AR_MAGIC:
        return ElfSummary(is_ar_archive=True)
    if data[:4] != ELF_MAGIC:
        raise NotElfError("input is neither ELF nor an ar archive")
    if len(data) < 20:
        return ElfSummary(truncated=True)

    ei_class, ei_data = data[4], data[5]
    bits = {1: 32, 2: 64}.get(ei_class)
    endian = {1: "little", 2: "big"}.get(ei_data)
    if bits is None or endian is None:
        return ElfSummary(truncated=True)

    r = _Reader(data, endian)
    e_type = _E_TYPE_NAMES.get(r.u(16, 2) or 0, "Other")
    machine = r.u(18, 2)

    if bits == 32:
        e_phoff, e_phentsize, e_phnum = r.u(28, 4), r.u(42, 2), r.u(44, 2)
        e_shoff, e_shentsize, e_shnum = r.u(32, 4), r.u(46, 2), r.u(48, 2)
    else:
        e_phoff, e_phentsize, e_phnum = r.u(32, 8), r.u(54, 2), r.u(56, 2)
        e_shoff, e_shentsize, e_shnum = r.u(40, 8), r.u(58, 2), r.u(60, 2)

    phdrs: list[tuple[int, int]] = []
    segments: list[tuple[int, int, int]] = []  # (p_type, p_offset, p_filesz)
    has_interp = False
    if e_phoff and e_phnum and e_phentsize:
        for i in range(e_phnum):
            base = e_phoff + i * e_phentsize
            p_type = r.u(base, 4)
            if p_type is None:
                break
            if bits == 32:
                p_flags = r.u(base + 24, 4)
                p_offset = r.u(base + 4, 4)
                p_filesz = r.u(base + 16, 4)
            else:
                p_flags = r.u(base + 4, 4)
                p_offset = r.u(base + 8, 8)
                p_filesz = r.u(base + 32, 8)
            if p_flags is None:
                break
            phdrs.append((p_type, p_flags))
            if p_type == PT_INTERP:
                has_interp = True
            if p_offset is not None and p_filesz is not None:
                segments.append((p_type, p_offset, p_filesz))

    flags: set[str] = set()
    for tag, value in _dynamic_entries(r, data, bits, segments):
        if tag == DT_BIND_NOW:
            flags.add("BindNow")
        elif tag == DT_FLAGS and value & DF_BIND_NOW:
            flags.add("BindNow")
        elif tag == DT_FLAGS_1:
            if value & DF_1_NOW:
                flags.add("BindNow")
            if value & DF_1_PIE:
                flags.add("Pie")

    dynamic_symbols, static_symbols = _symbol_names(
        r, data, bits, e_shoff, e_shentsize, e_shnum
    )

    if machine == EM_MIPS:
        isa = "mips64" if bits == 64 else (
            "mips32el" if endian == "little" else "mips32eb"
        )
    else:
        isa = _MACHINE_ISA.get(machine) if machine is not None else None

    return ElfSummary(
        elf_class=bits,
        endianness=endian,
        e_type=e_type,
        machine=machine,
        isa=isa,
        has_interp=has_interp,
        dynamic_flags=frozenset(flags),
        program_headers=tuple(phdrs),
        dynamic_symbols=dynamic_symbols,
        static_symbols=static_symbols,
        truncated=r.truncated,
    )


def _dynamic_entries(r: _Reader, data, bits, segments):
    """Yield (tag, value) pairs from the PT_DYNAMIC segment, if sane."""
    span = next(
        ((off, size) for t, off, size in segments if t == PT_DYNAMIC), None
    )
    if span is None:
        return
    offset, size = span
    entry = 8 if bits == 32 else 16
    half = entry // 2
    end = min(offset + size, len(data))
    if offset >= len(data):
        r.truncated = True
        return
    if offset + size > len(data):
        r.truncated = True
    pos = offset
    while pos + entry <= end:
        tag = r.u(pos, half)
        value = r.u(pos + half, half)
        if tag is None or value is None or tag == DT_NULL:
            return
        yield tag, value
        pos += entry


_MAX_SYMBOLS = 500_000


def _symbol_names(r, data, bits, e_shoff, e_shentsize, e_shnum):
    """Collect names from .dynsym and .symtab via the section table."""
    dynamic: list[str] = []
    static: list[str] = []
    if not (e_shoff and e_shnum and e_shentsize):
        return (), ()

    def section(idx):
        base = e_shoff + idx * e_shentsize
        sh_type = r.u(base + 4, 4)
        if bits == 32:
            sh_offset, sh_size = r.u(base + 16, 4), r.u(base + 20, 4)
            sh_link, sh_entsize = r.u(base + 24, 4), r.u(base + 36, 4)
        else:
            sh_offset, sh_size = r.u(base + 24, 8), r.u(base + 32, 8)
            sh_link, sh_entsize = r.u(base + 40, 4), r.u(base + 56, 8)
        return sh_type, sh_offset, sh_size, sh_link, sh_entsize

    for idx in range(e_shnum):
        parsed = section(idx)
        if any(v is None for v in parsed):
            break
        sh_type, sh_offset, sh_size, sh_link, sh_entsize = parsed
        if sh_type not in (SHT_DYNSYM, SHT_SYMTAB):
            continue
        entsize = sh_entsize or (16 if bits == 32 else 24)
        if entsize < 8 or sh_offset >= len(data):
            r.truncated = True
            continue
        strtab = b""
        if sh_link < e_shnum:
            link = section(sh_link)
            if not any(v is None for v in link):
                _, str_off, str_size, _, _ = link
                strtab = data[str_off : str_off + str_size]
        count = min(sh_size // entsize, (len(data) - sh_offset) // entsize)
        if count * entsize < sh_size:
            r.truncated = True
        names = dynamic if sh_type == SHT_DYNSYM else static
        for i in range(min(count, _MAX_SYMBOLS)):
            st_name = r.u(sh_offset + i * entsize, 4)
            if st_name is None:
                break
            if not st_name or st_name >= len(strtab):
                continue
            nul = strtab.find(b"\x00", st_name)
            if nul == -1:
                nul = len(strtab)
            name = strtab[st_name:nul].decode("latin-1")
            if name:
                names.append(name)
    return tuple(dynamic), tuple(static)


# --- classification and corpus-wide inventory --------------------------------

MIME_EXECUTABLE = "x-executable"
MIME_PIE_EXECUTABLE = "x-pie-executable"
MIME_SHAREDLIB = "x-sharedlib"
MIME_ARCHIVE = "x-archive"
MIME_OBJECT = "x-object"
MIME_UNKNOWN = "unknown"

EXEC_CLASSES = (MIME_PIE_EXECUTABLE, MIME_EXECUTABLE)
LIB_CLASSES = (MIME_SHAREDLIB, MIME_ARCHIVE)
OBJ_CLASSES = (MIME_OBJECT,)


def classify_elf(summary: ElfSummary) -> str:
    if summary.is_ar_archive:
        return MIME_ARCHIVE
    if summary.e_type == "Exec":
        return MIME_EXECUTABLE
    if summary.e_type == "Dyn":
        if summary.has_interp or "Pie" in summary.dynamic_flags:
            return MIME_PIE_EXECUTABLE
        return MIME_SHAREDLIB
    if summary.e_type == "Rel":
        return MIME_OBJECT
    return MIME_UNKNOWN


@dataclass(frozen=True)
class InventoryEntry:
    sha256: str
    summary: ElfSummary
    mime_class: str
    origins: tuple[str, ...]  # firmware sha256 values, sorted


@dataclass
class ElfInventory:
    entries: list[InventoryEntry] = field(default_factory=list)
    raw_counts: Counter = field(default_factory=Counter)
    dedup_counts: Counter = field(default_factory=Counter)

    @property
    def raw_total(self) -> int:
        return sum(self.raw_counts.values())

    @property
    def dedup_total(self) -> int:
        return sum(self.dedup_counts.values())

    def by_sha256(self) -> dict[str, InventoryEntry]:
        return {e.sha256: e for e in self.entries}


def elf_inventory(files: Iterable[tuple[str, str, bytes]]) -> ElfInventory:
    """Build the corpus-wide ELF inventory from (fw_sha256, path, data).

    Kernel objects (.ko) and kernel images (anything carrying a kernel
    banner finding) are purged; classification failures ("unknown") are
    excluded. Counts are keyed by (ISA family, mime class), both raw
    (every occurrence) and deduplicated by content hash.
    """
    from .digest import sha256_digest

    raw_counts: Counter = Counter()
    seen: dict[str, dict] = {}
    order: list[str] = []

    for fw_sha, path, data in files:
        if path.endswith(".ko"):
            continue
        is_elf = data[:4] == ELF_MAGIC
        is_ar = data[: len(AR_MAGIC)] == AR_MAGIC
        if not is_elf and not is_ar:
            continue
        if is_elf and scan_kernel_banners([(path, data)]):
            continue  # kernel image proxy: embedded version banner
        summary = parse_elf(data)
        mime = classify_elf(summary)
        if mime == MIME_UNKNOWN:
            continue
        sha = sha256_digest(data)
        family = isa_family(summary.isa)
        raw_counts[(family, mime)] += 1
        entry = seen.get(sha)
        if entry is None:
            seen[sha] = {"summary": summary, "mime": mime, "origins": {fw_sha}}
            order.append(sha)
        else:
            entry["origins"].add(fw_sha)

    inventory = ElfInventory(raw_counts=raw_counts)
    for sha in order:
        info = seen[sha]
        inventory.entries.append(
            InventoryEntry(
                sha256=sha,
                summary=info["summary"],
                mime_class=info["mime"],
                origins=tuple(sorted(info["origins"])),
            )
        )
        inventory.dedup_counts[
            (isa_family(info["summary"].isa), info["mime"])
        ] += 1
    return inventory
