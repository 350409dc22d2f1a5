import random
from datetime import date

import pytest

from fwcorpus.digest import sha256_digest
from fwcorpus.harden import (
    HARDENING_METHODS,
    RelroLevel,
    TrendJoinError,
    checksec,
    hardening_trend,
)
from fwcorpus.identify import (
    ElfInventory,
    InventoryEntry,
    classify_elf,
    parse_elf,
)
from fwcorpus.manifest import CorpusManifest

import elfcraft
from conftest import record
from refcheck import reference_checksec


def _assert_matches_reference(path):
    mine = checksec(parse_elf(path.read_bytes()))
    ref = reference_checksec(path)
    assert mine.canary == ref["canary"], path.name
    assert mine.nx == ref["nx"], path.name
    assert mine.relro.value == ref["relro"], path.name
    assert mine.pic == ref["pic"], path.name
    assert mine.fortify == ref["fortify"], path.name


class TestChecksecCompiled:
    def test_stack_protector_full_relro_fixture(self, elf_fixtures):
        flags = checksec(
            parse_elf(elf_fixtures["nopie-canary-fullrelro"].read_bytes())
        )
        assert flags.canary
        assert flags.relro is RelroLevel.FULL
        assert flags.nx

    def test_fortified_fixture(self, elf_fixtures):
        flags = checksec(
            parse_elf(elf_fixtures["pie-canary-fullrelro-fortify"].read_bytes())
        )
        assert flags.fortify

    def test_execstack_fixture(self, elf_fixtures):
        path = elf_fixtures["nopie-nocanary-relro-execstack"]
        ref = reference_checksec(path)
        if ref["nx"]:
            pytest.skip("toolchain ignored -z execstack")
        flags = checksec(parse_elf(path.read_bytes()))
        assert not flags.nx

    def test_every_fixture_matches_reference(self, elf_fixtures):
        executables = {
            name: path
            for name, path in elf_fixtures.items()
            if name not in ("object", "archive")
        }
        assert len(executables) >= 12
        for path in executables.values():
            _assert_matches_reference(path)


class TestChecksecRules:
    def test_absent_gnu_stack_means_no_nx(self):
        summary = parse_elf(
            elfcraft.make_elf(e_type=elfcraft.ET_EXEC, phdrs=[])
        )
        assert not checksec(summary).nx

    def test_exec_is_not_pic(self):
        summary = parse_elf(elfcraft.make_elf(e_type=elfcraft.ET_EXEC))
        assert not checksec(summary).pic

    def test_dyn_is_pic(self):
        summary = parse_elf(elfcraft.make_elf(e_type=elfcraft.ET_DYN))
        assert checksec(summary).pic

    def test_relro_partial_vs_full(self):
        partial = parse_elf(
            elfcraft.make_elf(
                e_type=elfcraft.ET_DYN,
                phdrs=[(elfcraft.PT_GNU_RELRO, elfcraft.PF_R)],
                dyn_entries=[],
            )
        )
        assert checksec(partial).relro is RelroLevel.PARTIAL
        full = parse_elf(
            elfcraft.make_elf(
                e_type=elfcraft.ET_DYN,
                phdrs=[(elfcraft.PT_GNU_RELRO, elfcraft.PF_R)],
                dyn_entries=[(elfcraft.DT_FLAGS_1, elfcraft.DF_1_NOW)],
            )
        )
        assert checksec(full).relro is RelroLevel.FULL

    def test_canary_via_static_symbols_too(self):
        summary = parse_elf(
            elfcraft.make_elf(
                e_type=elfcraft.ET_EXEC, symtab_syms=["__stack_chk_guard"]
            )
        )
        assert checksec(summary).canary

    def test_fortify_is_dynamic_only(self):
        summary = parse_elf(
            elfcraft.make_elf(
                e_type=elfcraft.ET_EXEC, symtab_syms=["__memcpy_chk"]
            )
        )
        assert not checksec(summary).fortify

    def test_stack_chk_fail_does_not_count_as_fortify(self):
        summary = parse_elf(
            elfcraft.make_elf(
                e_type=elfcraft.ET_DYN, dynsyms=["__stack_chk_fail"]
            )
        )
        flags = checksec(summary)
        assert flags.canary and not flags.fortify

    def test_rejects_objects_and_archives(self, elf_fixtures):
        with pytest.raises(ValueError):
            checksec(parse_elf(elf_fixtures["object"].read_bytes()))
        with pytest.raises(ValueError):
            checksec(parse_elf(elf_fixtures["archive"].read_bytes()))

    def test_deterministic(self):
        blob = elfcraft.make_elf(
            e_type=elfcraft.ET_DYN,
            phdrs=[(elfcraft.PT_GNU_STACK, elfcraft.PF_R | elfcraft.PF_W)],
            dynsyms=["__stack_chk_fail"],
            dyn_entries=[],
        )
        assert checksec(parse_elf(blob)) == checksec(parse_elf(blob))

    def test_crafted_files_agree_with_reference(self, tmp_path):
        # cross-check the synthesizer itself against binutils
        crafted = {
            "mips-nostack": elfcraft.make_elf(
                bits=32, endian="big", e_type=elfcraft.ET_EXEC,
                machine=elfcraft.EM_MIPS,
            ),
            "arm-hardened": elfcraft.make_elf(
                bits=32, endian="little", e_type=elfcraft.ET_DYN,
                machine=elfcraft.EM_ARM,
                phdrs=[
                    (elfcraft.PT_GNU_STACK, elfcraft.PF_R | elfcraft.PF_W),
                    (elfcraft.PT_GNU_RELRO, elfcraft.PF_R),
                ],
                interp=True,
                dyn_entries=[(elfcraft.DT_FLAGS_1, elfcraft.DF_1_NOW)],
                dynsyms=["__stack_chk_fail", "__printf_chk"],
            ),
        }
        for name, blob in crafted.items():
            path = tmp_path / name
            path.write_bytes(blob)
            _assert_matches_reference(path)


def _make_inventory_elf(machine, nx, seed, canary=False):
    phdrs = []
    if nx is not None:
        flags = elfcraft.PF_R | elfcraft.PF_W | (0 if nx else elfcraft.PF_X)
        phdrs.append((elfcraft.PT_GNU_STACK, flags))
    return elfcraft.make_elf(
        bits=32,
        endian="little",
        e_type=elfcraft.ET_EXEC,
        machine=machine,
        phdrs=phdrs,
        symtab_syms=[f"pad{seed}"] + (["__stack_chk_fail"] if canary else []),
    )


def _entry(blob, origins):
    summary = parse_elf(blob)
    return InventoryEntry(
        sha256=sha256_digest(blob),
        summary=summary,
        mime_class=classify_elf(summary),
        origins=tuple(sorted(origins)),
    )


def _manifest(year_by_sha):
    records = tuple(
        record(
            model=f"M{i}",
            sha256=sha,
            release=None if year is None else date(year, 6, 1),
        )
        for i, (sha, year) in enumerate(year_by_sha.items())
    )
    return CorpusManifest(records=records)


class TestTrend:
    def test_fraction_three_of_four(self):
        fw = "c" * 64
        entries = [
            _entry(_make_inventory_elf(elfcraft.EM_ARM, nx, seed), [fw])
            for seed, nx in enumerate([True, True, True, False])
        ]
        inventory = ElfInventory(entries=entries)
        trend = hardening_trend(
            inventory, _manifest({fw: 2020}), mode="by_method"
        )
        cell = trend.rows[("2020", "nx")]
        assert (cell.enabled, cell.total) == (3, 4)
        assert cell.fraction == 0.75

    def test_empty_inventory(self):
        trend = hardening_trend(
            ElfInventory(), _manifest({"d" * 64: 2020}), mode="by_method"
        )
        assert trend.rows == {}

    def test_unknown_year_row(self):
        fw = "a" * 64
        inventory = ElfInventory(
            entries=[_entry(_make_inventory_elf(elfcraft.EM_ARM, True, 1), [fw])]
        )
        trend = hardening_trend(inventory, _manifest({fw: None}))
        assert ("unknown", "nx") in trend.rows
        assert trend.years()[-1] == "unknown"

    def test_orphan_origin_error(self):
        inventory = ElfInventory(
            entries=[
                _entry(_make_inventory_elf(elfcraft.EM_ARM, True, 1), ["9" * 64])
            ]
        )
        with pytest.raises(TrendJoinError, match="9{10}"):
            hardening_trend(inventory, _manifest({"a" * 64: 2020}))

    def test_same_year_origins_count_once(self):
        fw1, fw2 = "a" * 64, "b" * 64
        blob = _make_inventory_elf(elfcraft.EM_ARM, True, 7)
        inventory = ElfInventory(entries=[_entry(blob, [fw1, fw2])])
        trend = hardening_trend(
            inventory, _manifest({fw1: 2019, fw2: 2019}), mode="by_method"
        )
        assert trend.rows[("2019", "nx")].total == 1

    def test_multi_year_origins_count_once_per_year(self):
        fw1, fw2 = "a" * 64, "b" * 64
        blob = _make_inventory_elf(elfcraft.EM_ARM, True, 8)
        inventory = ElfInventory(entries=[_entry(blob, [fw1, fw2])])
        trend = hardening_trend(
            inventory, _manifest({fw1: 2019, fw2: 2021}), mode="by_method"
        )
        assert trend.rows[("2019", "nx")].total == 1
        assert trend.rows[("2021", "nx")].total == 1

    def test_mips_gnu_stack_gap_shows_lower_nx(self):
        # MIPS fixtures systematically lack GNU_STACK; ARM carries it.
        fw = "f" * 64
        entries = [
            _entry(_make_inventory_elf(elfcraft.EM_MIPS, None, s), [fw])
            for s in range(4)
        ] + [
            _entry(_make_inventory_elf(elfcraft.EM_ARM, True, s + 10), [fw])
            for s in range(4)
        ]
        trend = hardening_trend(
            ElfInventory(entries=entries), _manifest({fw: 2018}), mode="nx_by_isa"
        )
        mips = trend.rows[("2018", "MIPS")]
        arm = trend.rows[("2018", "ARM")]
        assert mips.fraction < arm.fraction
        assert mips.fraction == 0.0 and arm.fraction == 1.0

    def test_against_brute_force_group_by(self):
        rng = random.Random(5)
        years = {f"{i:064x}": rng.choice([2018, 2019, 2020, None]) for i in range(12)}
        shas = list(years)
        entries = []
        blobs = {}
        for seed in range(200):
            machine = rng.choice(
                [elfcraft.EM_ARM, elfcraft.EM_MIPS, elfcraft.EM_386]
            )
            nx = rng.choice([True, False, None])
            canary = rng.random() < 0.4
            blob = _make_inventory_elf(machine, nx, seed % 37, canary)
            sha = sha256_digest(blob)
            origins = set(rng.sample(shas, rng.randrange(1, 3)))
            if sha in blobs:
                blobs[sha][1].update(origins)
            else:
                blobs[sha] = (blob, set(origins))
        entries = [_entry(blob, origins) for blob, origins in blobs.values()]
        inventory = ElfInventory(entries=entries)
        manifest = _manifest(years)
        trend = hardening_trend(inventory, manifest, mode="by_method")

        expected = {}
        lookup = manifest.by_sha256()
        for entry in entries:
            flags = checksec(entry.summary)
            entry_years = set()
            for origin in entry.origins:
                y = lookup[origin].release_year
                entry_years.add(str(y) if y else "unknown")
            for year in entry_years:
                for method in HARDENING_METHODS:
                    key = (year, method)
                    on, total = expected.get(key, (0, 0))
                    expected[key] = (
                        on + (1 if flags.enabled(method) else 0),
                        total + 1,
                    )
        assert {
            k: (c.enabled, c.total) for k, c in trend.rows.items()
        } == expected

    def test_order_invariance(self):
        fw = "a" * 64
        entries = [
            _entry(_make_inventory_elf(elfcraft.EM_ARM, bool(i % 2), i), [fw])
            for i in range(6)
        ]
        manifest = _manifest({fw: 2020})
        forward = hardening_trend(ElfInventory(entries=entries), manifest)
        backward = hardening_trend(
            ElfInventory(entries=entries[::-1]), manifest
        )
        assert forward.rows == backward.rows
