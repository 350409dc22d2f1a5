import random
import sys
import threading

import pytest

from fwcorpus.digest import sha256_digest
from fwcorpus.unpack import (
    ExternalUnpacker,
    UnpackError,
    UnpackerRegistry,
    FORMAT_CPIO,
    FORMAT_GZIP,
    FORMAT_TAR,
    FORMAT_UNKNOWN,
    FORMAT_ZIP,
    UnpackLimits,
    UnpackReport,
    content_dedup,
    default_registry,
    detect_container,
    sanitize_path,
    unpack_recursive,
    verify_unpack,
)

from archives import make_cpio_newc, make_gzip, make_tar, make_zip

ROOTFS = [
    ("bin/busybox", b"\x7fELFfakebusybox"),
    ("etc/passwd", b"root:x:0:0::/root:/bin/sh\n"),
    ("www/index.html", b"<html></html>"),
]


class TestDetect:
    def test_gzip_magic(self):
        assert detect_container(b"\x1f\x8b\x08" + b"\x00" * 20, 23) == FORMAT_GZIP

    def test_zip_magic(self):
        assert detect_container(b"PK\x03\x04rest", 8) == FORMAT_ZIP

    def test_cpio_magic(self):
        assert detect_container(b"070701" + b"0" * 104, 110) == FORMAT_CPIO

    def test_zero_block_unknown(self):
        assert detect_container(b"\x00" * 512, 600) == FORMAT_UNKNOWN

    def test_tar_via_archiving_oracle(self):
        # tarfile is the oracle: whatever it writes must carry the magic.
        blob = make_tar([("hello.txt", b"hi")])
        assert blob[257:262] == b"ustar"
        assert detect_container(blob[:512], len(blob)) == FORMAT_TAR

    def test_short_input(self):
        assert detect_container(b"\x1f", 1) == FORMAT_UNKNOWN


class TestSanitize:
    @pytest.mark.parametrize(
        "hostile,expected",
        [
            ("../../etc/passwd", "etc/passwd"),
            ("/abs/path", "abs/path"),
            ("a/./b", "a/b"),
            ("..", ""),
            ("a\\..\\b", "a/b"),
        ],
    )
    def test_cases(self, hostile, expected):
        assert sanitize_path(hostile) == expected


class TestUnpackRecursive:
    def test_gzip_tar_rootfs(self):
        firmware = make_gzip(make_tar(ROOTFS), name="rootfs.tar")
        report = unpack_recursive(firmware)
        assert len(report.files) == 3
        assert all(f.depth == 2 for f in report.files)
        assert {f.container_chain for f in report.files} == {("gzip", "tar")}
        by_path = {f.path.split("/", 1)[1]: f for f in report.files}
        for name, data in ROOTFS:
            assert by_path[name].sha256 == sha256_digest(data)
            assert by_path[name].size_bytes == len(data)

    def test_unknown_blob(self):
        report = unpack_recursive(b"\x00" * 600)
        assert report.files == []
        assert len(report.failed_nodes) == 1
        assert report.failed_nodes[0].format_guess == FORMAT_UNKNOWN

    def test_empty_registry_rejected(self):
        with pytest.raises(UnpackError, match="no unpackers"):
            unpack_recursive(b"data", UnpackerRegistry())

    def test_cycle_guard_terminates(self):
        registry = default_registry()
        registry.register("loop", lambda data: [("self", data)])
        registry.detect = lambda prefix, length: (
            "loop" if prefix.startswith(b"LOOP") else FORMAT_UNKNOWN
        )
        done = {}

        def run():
            done["report"] = unpack_recursive(
                b"LOOP" + b"fixture", registry, UnpackLimits(max_depth=50)
            )

        worker = threading.Thread(target=run, daemon=True)
        worker.start()
        worker.join(timeout=10)  # watchdog
        assert not worker.is_alive(), "cycle guard failed to terminate"
        report = done["report"]
        assert len(report.files) == 1  # the self-copy stays a leaf

    def test_failed_child_keeps_siblings(self):
        corrupt = b"\x1f\x8b" + b"\x00" * 30
        firmware = make_tar([("ok.txt", b"fine"), ("bad.gz", corrupt)])
        report = unpack_recursive(firmware)
        assert any(f.path == "ok.txt" for f in report.files)
        assert any(f.path == "bad.gz" for f in report.files)
        assert len(report.failed_nodes) == 1
        assert report.failed_nodes[0].format_guess == FORMAT_GZIP

    def test_depth_limit_flag(self):
        blob = b"innermost"
        for _ in range(4):
            blob = make_gzip(blob)
        report = unpack_recursive(blob, limits=UnpackLimits(max_depth=2))
        assert report.max_depth_reached

    def test_byte_budget_flag(self):
        firmware = make_tar([("big.bin", b"x" * 10000)])
        report = unpack_recursive(
            firmware, limits=UnpackLimits(max_total_bytes=100)
        )
        assert report.budget_exceeded

    def test_zip_and_cpio_formats(self):
        zipped = make_zip([("payload/a.txt", b"A"), ("payload/b.txt", b"B")])
        report = unpack_recursive(zipped)
        assert sorted(f.path for f in report.files) == [
            "payload/a.txt",
            "payload/b.txt",
        ]
        cpio = make_cpio_newc([("etc/config", b"option"), ("bin/sh", b"#!")])
        report = unpack_recursive(cpio)
        assert sorted(f.path for f in report.files) == ["bin/sh", "etc/config"]

    def test_determinism(self):
        firmware = make_gzip(make_tar(ROOTFS))
        first = unpack_recursive(firmware)
        second = unpack_recursive(firmware)
        assert [f.sha256 for f in first.files] == [f.sha256 for f in second.files]
        assert [f.path for f in first.files] == [f.path for f in second.files]

    def test_hostile_tar_paths_stay_inside(self):
        rng = random.Random(9)
        entries = []
        for i in range(50):
            depth = rng.randrange(1, 6)
            name = "/".join([".."] * depth + [f"esc{i}.bin"])
            entries.append((name, bytes([i])))
        report = unpack_recursive(make_tar(entries))
        assert report.files, "paths were all dropped instead of sanitized"
        for f in report.files:
            assert not f.path.startswith("/")
            assert ".." not in f.path.split("/")

    def test_sink_receives_terminal_files(self):
        seen = []
        report = unpack_recursive(
            make_tar(ROOTFS),
            sink=lambda path, sha, data: seen.append((path, sha, data)),
        )
        assert len(seen) == 3
        for path, sha, data in seen:
            assert sha256_digest(data) == sha  # digests recomputable
        assert {s[1] for s in seen} == {f.sha256 for f in report.files}

    def test_report_json_round_trip(self):
        report = unpack_recursive(make_gzip(make_tar(ROOTFS)))
        clone = UnpackReport.from_dict(report.to_dict())
        assert clone == report


class TestExternalAdapter:
    def test_command_template_round_trip(self, tmp_path):
        helper = tmp_path / "strip_magic.py"
        helper.write_text(
            "import sys, pathlib\n"
            "src = pathlib.Path(sys.argv[1]).read_bytes()[8:]\n"
            "out = pathlib.Path(sys.argv[2])\n"
            "(out / 'part1.bin').write_bytes(src[: len(src) // 2])\n"
            "(out / 'part2.bin').write_bytes(src[len(src) // 2 :])\n"
        )
        registry = default_registry()
        registry.register_external(
            ExternalUnpacker(
                format_id="vendorfs",
                command=f"{sys.executable} {helper} {{input_file}} {{output_dir}}",
                magic=b"VENDORFS",
            )
        )
        payload = b"VENDORFS" + b"0123456789abcdef"
        report = unpack_recursive(payload, registry)
        assert sorted(f.path for f in report.files) == ["part1.bin", "part2.bin"]

    def test_registry_config_loader(self, tmp_path):
        from fwcorpus.unpack import load_registry_config

        helper = tmp_path / "copy_out.py"
        helper.write_text(
            "import sys, pathlib\n"
            "data = pathlib.Path(sys.argv[1]).read_bytes()\n"
            "(pathlib.Path(sys.argv[2]) / 'inner.bin').write_bytes(data[4:])\n"
        )
        registry = load_registry_config(
            [
                {
                    "format": "acmefs",
                    "magic_hex": "41434d45",  # "ACME"
                    "offset": 0,
                    "command": f"{sys.executable} {helper} {{input_file}} {{output_dir}}",
                    "timeout": 30,
                }
            ]
        )
        assert registry.detect(b"ACMEpayload", 11) == "acmefs"
        assert registry.detect(b"\x1f\x8b\x08", 3) == FORMAT_GZIP
        report = unpack_recursive(b"ACME" + b"inner-bytes", registry)
        assert [f.path for f in report.files] == ["inner.bin"]

    def test_nonzero_exit_is_failure(self, tmp_path):
        registry = default_registry()
        registry.register_external(
            ExternalUnpacker(
                format_id="willfail",
                command=f"{sys.executable} -c 'raise SystemExit(3)'",
                magic=b"FAILFMT!",
            )
        )
        report = unpack_recursive(b"FAILFMT!" + b"payload", registry)
        assert report.files == []
        assert report.failed_nodes[0].format_guess == "willfail"


class TestVerify:
    def test_rootfs_markers(self):
        report = unpack_recursive(make_gzip(make_tar(ROOTFS)))
        result = verify_unpack(report)
        assert result.verified
        assert "/bin/" in result.matched_markers
        assert "/etc/" in result.matched_markers

    def test_empty_report(self):
        empty = UnpackReport(firmware_sha256="0" * 64)
        assert not verify_unpack(empty).verified

    def test_incremental_update_not_verified(self):
        report = unpack_recursive(make_tar([("update.dat", b"delta")]))
        assert not verify_unpack(report).verified

    def test_markers_must_be_non_empty(self):
        with pytest.raises(ValueError):
            verify_unpack(UnpackReport(firmware_sha256="0" * 64), markers=[])

    def test_multi_segment_marker(self):
        report = unpack_recursive(make_tar([("usr/bin/awk", b"x")]))
        result = verify_unpack(report, markers=["/usr/bin/"])
        assert result.verified

    def test_monotone_under_added_files(self):
        base = [("bin/busybox", b"x")]
        extra = base + [("update.dat", b"y"), ("data/blob", b"z")]
        small = verify_unpack(unpack_recursive(make_tar(base)))
        big = verify_unpack(unpack_recursive(make_tar(extra)))
        assert small.verified
        assert big.verified  # adding files never flips true -> false


class TestContentDedup:
    def _report(self, fw_sha, entries):
        report = unpack_recursive(make_tar(entries))
        report.firmware_sha256 = fw_sha
        return report

    def test_shared_file_counted_once(self):
        shared = b"libshared-1.0"
        a = self._report("a" * 64, [("lib/libc.so", shared), ("etc/a", b"a")])
        b = self._report("b" * 64, [("lib/libc.so", shared), ("etc/b", b"b")])
        index = content_dedup([a, b])
        assert index.total_file_count == 4
        assert index.unique_file_count == 3
        assert len(index.occurrences(sha256_digest(shared))) == 2

    def test_single_report_all_distinct(self):
        report = self._report("a" * 64, [(f"f{i}", bytes([i])) for i in range(5)])
        index = content_dedup([report])
        assert index.unique_file_count == index.total_file_count == 5

    def test_order_invariant(self):
        a = self._report("a" * 64, [("x", b"1"), ("y", b"2")])
        b = self._report("b" * 64, [("x", b"1"), ("z", b"3")])
        forward = content_dedup([a, b])
        backward = content_dedup([b, a])
        assert forward.unique_file_count == backward.unique_file_count
        assert forward.by_hash == backward.by_hash
