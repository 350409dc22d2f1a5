from __future__ import annotations

import shutil
import subprocess
from datetime import date
from pathlib import Path

import pytest

from fwcorpus.manifest import FirmwareRecord


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for r in RESULTS:
        status = "PASS" if r.passed else "FAIL"
        terminalreporter.write_line(
            f"[{status}] {r.name} "
            f"({r.elapsed_seconds:.2f}s / budget {r.budget_seconds:g}s)"
        )

C_MAIN = """
#include <stdio.h>
#include <string.h>

int work(const char *s) {
    char buf[128];
    strcpy(buf, s);
    printf("%s\\n", buf);
    return (int)strlen(buf);
}

int main(int argc, char **argv) {
    return work(argv[0]) + argc;
}
"""

C_LIB = "int lib_add(int a, int b) { return a + b; }\n"

_PIE = {"pie": ["-pie", "-fPIE"], "nopie": ["-no-pie"]}
_CANARY = {
    "canary": ["-fstack-protector-all"],
    "nocanary": ["-fno-stack-protector"],
}
_RELRO = {
    "norelro": ["-Wl,-z,norelro"],
    "relro": ["-Wl,-z,relro", "-Wl,-z,lazy"],
    "fullrelro": ["-Wl,-z,relro", "-Wl,-z,now"],
}


def _checksec_matrix() -> dict[str, list[str]]:
    variants = {}
    for pie_name, pie_flags in _PIE.items():
        for can_name, can_flags in _CANARY.items():
            for rel_name, rel_flags in _RELRO.items():
                name = f"{pie_name}-{can_name}-{rel_name}"
                variants[name] = pie_flags + can_flags + rel_flags
    variants["nopie-nocanary-relro-execstack"] = (
        _PIE["nopie"] + _CANARY["nocanary"] + _RELRO["relro"] + ["-z", "execstack"]
    )
    variants["pie-nocanary-relro-execstack"] = (
        _PIE["pie"] + _CANARY["nocanary"] + _RELRO["relro"] + ["-z", "execstack"]
    )
    variants["pie-canary-fullrelro-fortify"] = (
        _PIE["pie"]
        + _CANARY["canary"]
        + _RELRO["fullrelro"]
        + ["-O2", "-U_FORTIFY_SOURCE", "-D_FORTIFY_SOURCE=2"]
    )
    return variants


@pytest.fixture(scope="session")
def elf_fixtures(tmp_path_factory) -> dict[str, Path]:
    """Compile the checksec fixture matrix once per session.

    Returns variant name -> path for executables, plus a shared library,
    a relocatable object, and a static archive.
    """
    gcc = shutil.which("gcc")
    if gcc is None:
        pytest.skip("gcc not available")
    root = tmp_path_factory.mktemp("elf-fixtures")
    src = root / "main.c"
    src.write_text(C_MAIN)
    libsrc = root / "lib.c"
    libsrc.write_text(C_LIB)

    built: dict[str, Path] = {}
    for name, flags in _checksec_matrix().items():
        out = root / name
        subprocess.run(
            [gcc, "-o", str(out), str(src), *flags],
            check=True,
            capture_output=True,
        )
        built[name] = out

    shared = root / "libfixture.so"
    subprocess.run(
        [gcc, "-shared", "-fPIC", "-o", str(shared), str(libsrc)],
        check=True,
        capture_output=True,
    )
    built["sharedlib"] = shared

    obj = root / "fixture.o"
    subprocess.run(
        [gcc, "-c", "-o", str(obj), str(libsrc)], check=True, capture_output=True
    )
    built["object"] = obj

    archive = root / "libfixture.a"
    subprocess.run(
        ["ar", "rcs", str(archive), str(obj)], check=True, capture_output=True
    )
    built["archive"] = archive
    return built


def record(
    manufacturer="ACME",
    model="RT-1000",
    device_class="router",
    sha256=None,
    version="1.0.0",
    release=date(2020, 5, 1),
    url="https://downloads.acme.example/rt-1000/fw.bin",
    size=1024,
    **kwargs,
) -> FirmwareRecord:
    if sha256 is None:
        import hashlib

        sha256 = hashlib.sha256(
            f"{manufacturer}/{model}/{version}".encode()
        ).hexdigest()
    return FirmwareRecord(
        manufacturer=manufacturer,
        model=model,
        device_class=device_class,
        firmware_version=version,
        release_date=release,
        download_url=url,
        sha256=sha256,
        size_bytes=size,
        **kwargs,
    )
