"""Checksec-style hardening detection and adoption-trend aggregation.

All five indicators are decided from ELF header facts alone:

* canary   - a stack-protector symbol is referenced (dynamic or static)
* nx       - a GNU_STACK segment exists and lacks the execute flag;
             an absent GNU_STACK counts as no NX, which is the honest
             reading for older MIPS toolchains that never emit it
* relro    - GNU_RELRO segment present (Partial), plus bind-now (Full)
* pic      - the file is ET_DYN; shared libraries count as PIC-enabled
* fortify  - any dynamic symbol matches __*_chk

Trend tables join each deduplicated ELF to the release year of its origin
firmware and report enabled/total fractions per year, either per method or
per ISA family for the NX view.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from .identify import (
    ElfInventory,
    ElfSummary,
    MIME_EXECUTABLE,
    MIME_PIE_EXECUTABLE,
    MIME_SHAREDLIB,
    PF_X,
    PT_GNU_RELRO,
    PT_GNU_STACK,
    isa_family,
)
from .manifest import CorpusManifest

CANARY_SYMBOLS = frozenset({"__stack_chk_fail", "__stack_chk_guard"})

HARDENING_METHODS = ("canary", "nx", "relro", "pic", "fortify")

# Classes checksec applies to; objects and archives carry no loadable
# segments worth judging.
CHECKSEC_CLASSES = frozenset(
    {MIME_EXECUTABLE, MIME_PIE_EXECUTABLE, MIME_SHAREDLIB}
)

UNKNOWN_YEAR = "unknown"


class RelroLevel(enum.Enum):
    NONE = "none"
    PARTIAL = "partial"
    FULL = "full"


@dataclass(frozen=True)
class HardeningFlags:
    canary: bool
    nx: bool
    relro: RelroLevel
    pic: bool
    fortify: bool

    @property
    def relro_enabled(self) -> bool:
        # The single-series trend view treats partial and full alike.
        return self.relro is not RelroLevel.NONE

    def enabled(self, method: str) -> bool:
        if method == "relro":
            return self.relro_enabled
        return bool(getattr(self, method))


def _is_fortified(name: str) -> bool:
    return name.startswith("__") and name.endswith("_chk")


def _plain(name: str) -> str:
    # .symtab entries of linked binaries decorate imports as name@GLIBC_x.
    return name.split("@", 1)[0]


def checksec(summary: ElfSummary) -> HardeningFlags:
    """Decide the five hardening indicators for one executable or library."""
    if summary.is_ar_archive:
        raise ValueError("checksec does not apply to ar archives")
    if summary.e_type not in ("Exec", "Dyn"):
        raise ValueError(
            f"checksec does not apply to e_type={summary.e_type}"
        )

    symbols = {
        _plain(s)
        for s in (*summary.dynamic_symbols, *summary.static_symbols)
    }
    canary = bool(symbols & CANARY_SYMBOLS)

    stack_flags = summary.segment_flags(PT_GNU_STACK)
    nx = stack_flags is not None and not (stack_flags & PF_X)

    if summary.has_segment(PT_GNU_RELRO):
        relro = (
            RelroLevel.FULL
            if "BindNow" in summary.dynamic_flags
            else RelroLevel.PARTIAL
        )
    else:
        relro = RelroLevel.NONE

    return HardeningFlags(
        canary=canary,
        nx=nx,
        relro=relro,
        pic=summary.e_type == "Dyn",
        fortify=any(
            _is_fortified(_plain(s)) for s in summary.dynamic_symbols
        ),
    )


@dataclass(frozen=True)
class TrendCell:
    enabled: int
    total: int

    @property
    def fraction(self) -> float:
        return self.enabled / self.total if self.total else 0.0


@dataclass
class TrendTable:
    mode: str  # "by_method" or "nx_by_isa"
    rows: dict[tuple[str, str], TrendCell]  # (year, key) -> cell

    def years(self) -> list[str]:
        known = sorted({y for y, _ in self.rows if y != UNKNOWN_YEAR})
        if any(y == UNKNOWN_YEAR for y, _ in self.rows):
            known.append(UNKNOWN_YEAR)
        return known


class TrendJoinError(ValueError):
    def __init__(self, orphans: list[str]):
        self.orphans = orphans
        shown = ", ".join(orphans[:5])
        more = f" (+{len(orphans) - 5} more)" if len(orphans) > 5 else ""
        super().__init__(
            f"{len(orphans)} inventory origin(s) missing from manifest: "
            f"{shown}{more}"
        )


def hardening_trend(
    inventory: ElfInventory,
    manifest: CorpusManifest,
    mode: str = "by_method",
) -> TrendTable:
    """Aggregate hardening adoption per firmware release year.

    Every deduplicated ELF contributes at most once per (year, series)
    cell; an ELF shipped by several firmwares of the same year still
    counts once there. Origins without a release date land in the
    "unknown" year row.
    """
    if mode not in ("by_method", "nx_by_isa"):
        raise ValueError(f"unknown trend mode {mode!r}")
    records = manifest.by_sha256()
    orphans = sorted(
        {
            origin
            for entry in inventory.entries
            for origin in entry.origins
            if origin not in records
        }
    )
    if orphans:
        raise TrendJoinError(orphans)

    enabled: dict[tuple[str, str], int] = {}
    totals: dict[tuple[str, str], int] = {}

    for entry in inventory.entries:
        if entry.mime_class not in CHECKSEC_CLASSES:
            continue
        flags = checksec(entry.summary)
        years = {
            str(records[o].release_year) if records[o].release_year else UNKNOWN_YEAR
            for o in entry.origins
        }
        if mode == "by_method":
            series = [(m, flags.enabled(m)) for m in HARDENING_METHODS]
        else:
            series = [(isa_family(entry.summary.isa), flags.nx)]
        for year in years:
            for key, is_on in series:
                cell = (year, key)
                totals[cell] = totals.get(cell, 0) + 1
                if is_on:
                    enabled[cell] = enabled.get(cell, 0) + 1

    rows = {
        cell: TrendCell(enabled=enabled.get(cell, 0), total=total)
        for cell, total in totals.items()
    }
    return TrendTable(mode=mode, rows=rows)
