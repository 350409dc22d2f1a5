"""Minimal ELF synthesizer for tests.

Builds small but structurally valid ELF files: header, program headers,
optional PT_INTERP/PT_DYNAMIC payloads, and optional .dynsym/.symtab
section tables, so both our parser and binutils can read them.
"""

from __future__ import annotations

import struct

PT_DYNAMIC = 2
PT_INTERP = 3
PT_GNU_STACK = 0x6474E551
PT_GNU_RELRO = 0x6474E552
PF_R = 4
PF_W = 2
PF_X = 1

SHT_NULL = 0
SHT_PROGBITS = 1
SHT_SYMTAB = 2
SHT_STRTAB = 3
SHT_DYNAMIC = 6
SHT_DYNSYM = 11

DT_NULL = 0
DT_BIND_NOW = 24
DT_FLAGS = 30
DT_FLAGS_1 = 0x6FFFFFFB
DF_BIND_NOW = 0x8
DF_1_NOW = 0x1
DF_1_PIE = 0x08000000

ET_REL, ET_EXEC, ET_DYN, ET_CORE = 1, 2, 3, 4

EM_ARM = 0x28
EM_AARCH64 = 0xB7
EM_MIPS = 0x08
EM_386 = 0x03
EM_X86_64 = 0x3E
EM_PPC = 0x14


def _strtab(names: list[str]) -> tuple[bytes, dict[str, int]]:
    blob = b"\x00"
    offsets = {}
    for name in names:
        offsets[name] = len(blob)
        blob += name.encode() + b"\x00"
    return blob, offsets


def make_elf(
    *,
    bits: int = 32,
    endian: str = "little",
    e_type: int = ET_EXEC,
    machine: int = EM_ARM,
    phdrs: list[tuple[int, int]] | None = None,
    interp: bool = False,
    dyn_entries: list[tuple[int, int]] | None = None,
    dynsyms: list[str] | None = None,
    symtab_syms: list[str] | None = None,
) -> bytes:
    """Assemble an ELF image; phdrs entries are (p_type, p_flags)."""
    assert bits in (32, 64)
    e = "<" if endian == "little" else ">"
    word = "I" if bits == 32 else "Q"
    ehsize = 52 if bits == 32 else 64
    phentsize = 32 if bits == 32 else 56
    shentsize = 40 if bits == 32 else 64
    symsize = 16 if bits == 32 else 24
    dynent = 8 if bits == 32 else 16

    phdrs = list(phdrs or [])
    if interp and all(t != PT_INTERP for t, _ in phdrs):
        phdrs.insert(0, (PT_INTERP, PF_R))
    if dyn_entries is not None and all(t != PT_DYNAMIC for t, _ in phdrs):
        phdrs.append((PT_DYNAMIC, PF_R | PF_W))

    # body blobs laid out after the program header table
    interp_blob = b"/lib/ld.so\x00" if interp else b""
    dyn_blob = b""
    if dyn_entries is not None:
        for tag, val in list(dyn_entries) + [(DT_NULL, 0)]:
            dyn_blob += struct.pack(e + word + word, tag, val)

    dynsym_blob = dynstr_blob = b""
    dynstr_offsets = {}
    if dynsyms:
        dynstr_blob, dynstr_offsets = _strtab(dynsyms)
        dynsym_blob = _symbols(e, bits, symsize, dynsyms, dynstr_offsets)
    symtab_blob = strtab_blob = b""
    strtab_offsets = {}
    if symtab_syms:
        strtab_blob, strtab_offsets = _strtab(symtab_syms)
        symtab_blob = _symbols(e, bits, symsize, symtab_syms, strtab_offsets)

    phoff = ehsize
    body_off = phoff + len(phdrs) * phentsize
    offsets = {}
    cursor = body_off
    for name, blob in (
        ("interp", interp_blob),
        ("dynamic", dyn_blob),
        ("dynsym", dynsym_blob),
        ("dynstr", dynstr_blob),
        ("symtab", symtab_blob),
        ("strtab", strtab_blob),
    ):
        offsets[name] = cursor
        cursor += len(blob)

    # section table: NULL + data sections + .shstrtab
    sections = [(".", SHT_NULL, 0, 0, 0, 0)]  # placeholder row
    section_names = []

    def add_section(name, sh_type, off, size, link, entsize):
        section_names.append(name)
        sections.append((name, sh_type, off, size, link, entsize))
        return len(sections) - 1

    if dynsyms:
        dynsym_idx = add_section(
            ".dynsym", SHT_DYNSYM, offsets["dynsym"], len(dynsym_blob), 0, symsize
        )
        dynstr_idx = add_section(
            ".dynstr", SHT_STRTAB, offsets["dynstr"], len(dynstr_blob), 0, 0
        )
        sections[dynsym_idx] = sections[dynsym_idx][:4] + (dynstr_idx, symsize)
    if symtab_syms:
        symtab_idx = add_section(
            ".symtab", SHT_SYMTAB, offsets["symtab"], len(symtab_blob), 0, symsize
        )
        strtab_idx = add_section(
            ".strtab", SHT_STRTAB, offsets["strtab"], len(strtab_blob), 0, 0
        )
        sections[symtab_idx] = sections[symtab_idx][:4] + (strtab_idx, symsize)
    if dyn_entries is not None:
        add_section(
            ".dynamic", SHT_DYNAMIC, offsets["dynamic"], len(dyn_blob), 0, dynent
        )

    shstr_blob, shstr_offsets = _strtab([s[0] for s in sections[1:]] + [".shstrtab"])
    shstr_off = cursor
    cursor += len(shstr_blob)
    add_section(".shstrtab", SHT_STRTAB, shstr_off, len(shstr_blob), 0, 0)
    shoff = cursor
    shnum = len(sections)
    shstrndx = shnum - 1

    ident = bytes(
        [0x7F, ord("E"), ord("L"), ord("F"), 1 if bits == 32 else 2,
         1 if endian == "little" else 2, 1]
    ) + b"\x00" * 9
    if bits == 32:
        ehdr = ident + struct.pack(
            e + "HHIIIIIHHHHHH",
            e_type, machine, 1, 0, phoff if phdrs else 0, shoff, 0,
            ehsize, phentsize, len(phdrs), shentsize, shnum, shstrndx,
        )
    else:
        ehdr = ident + struct.pack(
            e + "HHIQQQIHHHHHH",
            e_type, machine, 1, 0, phoff if phdrs else 0, shoff, 0,
            ehsize, phentsize, len(phdrs), shentsize, shnum, shstrndx,
        )

    phdr_blob = b""
    for p_type, p_flags in phdrs:
        if p_type == PT_INTERP:
            off, size = offsets["interp"], len(interp_blob)
        elif p_type == PT_DYNAMIC:
            off, size = offsets["dynamic"], len(dyn_blob)
        else:
            off, size = 0, 0
        if bits == 32:
            phdr_blob += struct.pack(
                e + "IIIIIIII", p_type, off, off, off, size, size, p_flags, 4
            )
        else:
            phdr_blob += struct.pack(
                e + "IIQQQQQQ", p_type, p_flags, off, off, off, size, size, 8
            )

    shdr_blob = b""
    for name, sh_type, off, size, link, entsize in sections:
        name_off = shstr_offsets.get(name, 0) if sh_type != SHT_NULL else 0
        if bits == 32:
            shdr_blob += struct.pack(
                e + "IIIIIIIIII",
                name_off, sh_type, 0, off, off, size, link, 0, 1, entsize,
            )
        else:
            shdr_blob += struct.pack(
                e + "IIQQQQIIQQ",
                name_off, sh_type, 0, off, off, size, link, 0, 1, entsize,
            )

    body = (
        interp_blob + dyn_blob + dynsym_blob + dynstr_blob
        + symtab_blob + strtab_blob + shstr_blob
    )
    return ehdr + phdr_blob + body + shdr_blob


def _symbols(e, bits, symsize, names, offsets) -> bytes:
    blob = b"\x00" * symsize  # null symbol
    for name in names:
        if bits == 32:
            blob += struct.pack(e + "IIIBBH", offsets[name], 0, 0, 0x12, 0, 1)
        else:
            blob += struct.pack(e + "IBBHQQ", offsets[name], 0x12, 0, 1, 0, 0)
    return blob
