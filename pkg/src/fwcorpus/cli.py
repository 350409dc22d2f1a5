"""Command-line entry point for the corpus pipeline.

Subcommands mirror the pipeline stages: ingest, dedup, unpack, verify,
identify, inventory, harden, score, survey, match, acquire, report.
Exit codes: 0 success, 1 validation failure, 2 I/O failure, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import acquire as acq
from . import mocks, report as rep
from .digest import DigestError, dedup
from .groundtruth import match_exploits, parse_exploit_db
from .harden import TrendJoinError, hardening_trend
from .identify import detect_isas, elf_inventory, scan_kernel_banners
from .manifest import (
    CorpusManifest,
    ManifestError,
    RecordFindings,
    composition_report,
    parse_manifest,
    serialize_manifest,
)
from .soundness import (
    AuditArtifacts,
    DocumentationFlags,
    Status,
    aggregate_by_measure,
    aggregate_by_requirement,
    load_survey_fixture,
    score_corpus_manifest,
    validate_assessment,
)
from .unpack import (
    UnpackLimits,
    UnpackReport,
    default_registry,
    load_registry_config,
    unpack_recursive,
    verify_unpack,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_manifest(path: str) -> CorpusManifest:
    with open(path, "rb") as fh:
        return parse_manifest(fh)


def _emit(headers, rows, args, name: str):
    """Print per --format; write the CSV when an output dir is set."""
    if getattr(args, "format", "table") == "csv":
        import csv as _csv
        import io

        buf = io.StringIO()
        writer = _csv.writer(buf)
        writer.writerow(headers)
        writer.writerows(rows)
        print(buf.getvalue(), end="")
    else:
        print(rep.render_table(headers, rows))
    out = getattr(args, "out", None)
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        rep.write_csv(outdir / f"{name}.csv", headers, rows)


# --- subcommand implementations ------------------------------------------------


def cmd_ingest(args) -> int:
    manifest = _load_manifest(args.manifest)
    print(f"ok: {len(manifest)} records")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(serialize_manifest(manifest), encoding="utf-8")
    return EXIT_OK


def cmd_dedup(args) -> int:
    manifest = _load_manifest(args.manifest)
    result = dedup(manifest.records)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    unique = CorpusManifest(records=tuple(result.unique))
    (outdir / "manifest.dedup.jsonl").write_text(
        serialize_manifest(unique), encoding="utf-8"
    )
    rows = [
        [sha, len(group), ";".join(f"{r.manufacturer}/{r.model}" for r in group)]
        for sha, group in result.duplicate_groups.items()
    ]
    rep.write_csv(
        outdir / "duplicate_groups.csv", ("sha256", "members", "records"), rows
    )
    print(
        f"unique: {len(result.unique)}  "
        f"duplicates folded: {result.duplicate_count}"
    )
    return EXIT_OK


def _iter_firmware_inputs(path: Path):
    if path.is_dir():
        yield from sorted(p for p in path.iterdir() if p.is_file())
    else:
        yield path


def cmd_unpack(args) -> int:
    registry = default_registry()
    if args.registry:
        registry = load_registry_config(
            json.loads(Path(args.registry).read_text(encoding="utf-8"))
        )
    limits = UnpackLimits(
        max_depth=args.max_depth, max_total_bytes=args.max_bytes
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for source in _iter_firmware_inputs(Path(args.input)):
        data = source.read_bytes()

        from .digest import sha256_digest

        fw_sha = sha256_digest(data)
        tree = outdir / fw_sha

        def sink(path, sha, blob, _tree=tree):
            target = _tree / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(blob)

        result = unpack_recursive(data, registry, limits, sink=sink)
        (outdir / f"{fw_sha}.report.json").write_text(
            json.dumps(result.to_dict(), indent=2), encoding="utf-8"
        )
        print(
            f"{source.name}: {len(result.files)} files, "
            f"{len(result.failed_nodes)} failed nodes"
        )
    return EXIT_OK


def _load_reports(path: Path) -> list[UnpackReport]:
    if path.is_dir():
        files = sorted(path.glob("*.report.json"))
    else:
        files = [path]
    return [
        UnpackReport.from_dict(json.loads(f.read_text(encoding="utf-8")))
        for f in files
    ]


def cmd_verify(args) -> int:
    markers = None
    if args.markers:
        markers = [
            line.strip()
            for line in Path(args.markers).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    reports = _load_reports(Path(args.report))
    verified = 0
    for report in reports:
        result = (
            verify_unpack(report, markers) if markers else verify_unpack(report)
        )
        if result.verified:
            verified += 1
        print(
            f"{report.firmware_sha256}: "
            f"{'verified' if result.verified else 'not verified'} "
            f"(markers: {', '.join(result.matched_markers) or '-'})"
        )
    print(f"verified: {verified}/{len(reports)}")
    return EXIT_OK


def _walk_extracted(root: Path):
    """Yield (firmware_sha, path, data) from an unpack output tree."""
    subdirs = [
        d for d in sorted(root.iterdir())
        if d.is_dir() and len(d.name) == 64
    ] if root.is_dir() else []
    if not subdirs and root.is_dir():
        subdirs = [root]
    for tree in subdirs:
        fw_sha = tree.name if len(tree.name) == 64 else "unknown"
        for f in sorted(tree.rglob("*")):
            if f.is_file():
                yield fw_sha, str(f.relative_to(tree)), f.read_bytes()


def cmd_identify(args) -> int:
    banners = []
    isas = []
    findings: dict[str, dict] = {}
    for fw_sha, path, data in _walk_extracted(Path(args.input)):
        per = findings.setdefault(fw_sha, {"kernels": [], "isas": [], "files": 0})
        per["files"] += 1
        for finding in scan_kernel_banners([(path, data)]):
            banners.append([fw_sha, finding.source_path, finding.version,
                            finding.offset, finding.raw_banner])
            per["kernels"].append(finding.version)
        for finding in detect_isas([(path, data)]):
            isas.append([fw_sha, finding.source_path, finding.isa, finding.evidence])
            per["isas"].append(finding.isa)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rep.write_csv(
        outdir / "banners.csv",
        ("firmware_sha256", "path", "version", "offset", "raw_banner"),
        banners,
    )
    rep.write_csv(
        outdir / "isas.csv",
        ("firmware_sha256", "path", "isa", "evidence"),
        isas,
    )
    (outdir / "findings.json").write_text(
        json.dumps(findings, indent=2, sort_keys=True), encoding="utf-8"
    )
    print(f"banners: {len(banners)}  isa findings: {len(isas)}")
    return EXIT_OK


def cmd_inventory(args) -> int:
    inventory = elf_inventory(_walk_extracted(Path(args.input)))
    manifest = _load_manifest(args.manifest) if args.manifest else None
    rows = rep.inventory_rows(inventory, manifest)
    _emit(rep.INVENTORY_HEADERS, rows, args, "inventory")
    print(
        f"raw: {inventory.raw_total}  deduplicated: {inventory.dedup_total}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_harden(args) -> int:
    inventory = elf_inventory(_walk_extracted(Path(args.input)))
    manifest = _load_manifest(args.manifest)
    trend = hardening_trend(inventory, manifest, mode=args.mode)
    rows = rep.trend_rows(trend)
    _emit(rep.TREND_HEADERS, rows, args, f"trend_{args.mode}")
    if args.out:
        from . import figures

        figures.render_trend(
            trend,
            Path(args.out) / f"trend_{args.mode}.png",
            "Hardening adoption per release year"
            if args.mode == "by_method"
            else "NX adoption per release year and ISA family",
        )
    return EXIT_OK


def cmd_score(args) -> int:
    manifest = _load_manifest(args.manifest)
    docs = DocumentationFlags()
    if args.docs_flags:
        raw = json.loads(Path(args.docs_flags).read_text(encoding="utf-8"))
        docs = DocumentationFlags(
            unpack_process=Status(raw.get("unpack_process", "none")),
            reasoning=Status(raw.get("reasoning", "none")),
            acquisition=Status(raw.get("acquisition", "none")),
            note=raw.get("note", ""),
        )
    artifacts = AuditArtifacts(docs=docs)
    if args.dedup:
        artifacts.dedup_result = dedup(manifest.records)
    assessment = score_corpus_manifest(manifest, artifacts)
    problems = validate_assessment(assessment)
    headers, row = rep.audit_summary_row(assessment)
    print(rep.render_table(headers, row))
    print()
    _emit(rep.AUDIT_HEADERS, rep.audit_rows(assessment), args, "self_audit")
    for problem in problems:
        print(f"rubric: {problem}", file=sys.stderr)
    return EXIT_OK if not problems else EXIT_VALIDATION


def cmd_survey(args) -> int:
    if args.assessments:
        from .soundness import assessments_from_payload

        payload = json.loads(Path(args.assessments).read_text(encoding="utf-8"))
        assessments = assessments_from_payload(payload)
    else:
        assessments = load_survey_fixture()
    by_measure = aggregate_by_measure(assessments)
    by_requirement = aggregate_by_requirement(assessments)
    _emit(rep.AGGREGATE_HEADERS, rep.aggregate_rows(by_measure), args, "measures")
    _emit(
        rep.AGGREGATE_HEADERS,
        rep.aggregate_rows(by_requirement),
        args,
        "requirements",
    )
    if args.out:
        from . import figures

        figures.render_status_fractions(
            by_measure,
            Path(args.out) / "measures.png",
            "Documentation status per measure",
        )
        figures.render_status_fractions(
            by_requirement,
            Path(args.out) / "requirements.png",
            "Documentation status per requirement",
        )
    return EXIT_OK


def cmd_match(args) -> int:
    manifest = _load_manifest(args.manifest)
    db = parse_exploit_db(Path(args.exploits).read_text(encoding="utf-8"))
    matches = match_exploits(manifest, db)
    _emit(rep.MATCH_HEADERS, rep.match_rows(matches), args, "matches")
    return EXIT_OK


def cmd_acquire(args) -> int:
    policy = acq.AcquisitionPolicy(
        per_host_rate=args.rate, max_parallel=args.parallel
    )
    if args.mock_scenario:
        scenario = mocks.SCENARIOS[args.mock_scenario]()
        manifest, clients = scenario.manifest, scenario.clients
    else:
        from .netclients import (
            CdxArchiveClient,
            NullHashLookupClient,
            UrllibHttpClient,
        )

        manifest = _load_manifest(args.manifest)
        clients = acq.Clients(
            http=UrllibHttpClient(policy.timeout),
            archive=CdxArchiveClient(policy.timeout),
            hash_lookup=NullHashLookupClient(),
        )
    result = acq.acquire_corpus(manifest, clients, policy)
    _emit(rep.REPLICATION_HEADERS, rep.replication_rows(result), args, "replication")
    if args.out:
        outdir = Path(args.out)
        rep.write_csv(
            outdir / "worklist.csv",
            rep.WORKLIST_HEADERS,
            rep.worklist_rows(result.worklist),
        )
    print(f"duration: {result.duration_seconds:.1f}s", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    manifest = _load_manifest(args.manifest)
    findings = None
    if args.findings:
        raw = json.loads(Path(args.findings).read_text(encoding="utf-8"))
        findings = {
            sha: RecordFindings(
                kernel_versions=tuple(v.get("kernels", [])),
                isas=tuple(v.get("isas", [])),
                file_count=v.get("files"),
            )
            for sha, v in raw.items()
        }
    stats = composition_report(manifest, findings)
    _emit(rep.COMPOSITION_HEADERS, rep.composition_rows(stats), args, "composition")
    if args.out:
        outdir = Path(args.out)
        rep.write_csv(
            outdir / "device_classes.csv",
            ("device_class", "samples"),
            rep.histogram_rows(stats.class_histogram),
        )
        rep.write_csv(
            outdir / "release_years.csv",
            ("year", "samples"),
            rep.histogram_rows(stats.year_histogram),
        )
        if stats.kernel_histogram:
            rep.write_csv(
                outdir / "kernel_versions.csv",
                ("kernel_version", "findings"),
                rep.histogram_rows(stats.kernel_histogram),
            )
        if stats.isa_histogram:
            rep.write_csv(
                outdir / "isas.csv",
                ("isa", "samples"),
                rep.histogram_rows(stats.isa_histogram),
            )
        from . import figures

        figures.render_composition_figures(stats, outdir)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="fwcorpus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--format", choices=("csv", "table"), default="table")
        return p

    p = add("ingest", cmd_ingest, "parse and validate a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")

    p = add("dedup", cmd_dedup, "fold exact duplicates by sha256")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = add("unpack", cmd_unpack, "recursively extract firmware images")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--registry", help="JSON config of external unpackers")
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--max-bytes", type=int, default=512 * 1024 * 1024)

    p = add("verify", cmd_verify, "check reports for rootfs markers")
    p.add_argument("--report", required=True)
    p.add_argument("--markers", help="file with one marker path per line")

    p = add("identify", cmd_identify, "scan extracted trees for kernels/ISAs")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = add("inventory", cmd_inventory, "corpus-wide ELF inventory")
    p.add_argument("--input", required=True)
    p.add_argument("--manifest")
    p.add_argument("--out")

    p = add("harden", cmd_harden, "hardening adoption trend tables")
    p.add_argument("--input", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("by_method", "nx_by_isa"), default="by_method")
    p.add_argument("--out")

    p = add("score", cmd_score, "self-audit a manifest against the measures")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dedup", action="store_true", help="run dedup as evidence")
    p.add_argument("--docs-flags", help="JSON with documentation statuses")
    p.add_argument("--out")

    p = add("survey", cmd_survey, "aggregate measure assessments")
    p.add_argument(
        "--fixture", choices=("builtin",), default="builtin",
        help="use the bundled 44-paper survey",
    )
    p.add_argument("--assessments", help="JSON assessment file (overrides fixture)")
    p.add_argument("--out")

    p = add("match", cmd_match, "exploit-metadata ground-truth candidates")
    p.add_argument("--manifest", required=True)
    p.add_argument("--exploits", required=True)
    p.add_argument("--out")

    p = add("acquire", cmd_acquire, "replicate a corpus via the phase chain")
    p.add_argument("--manifest")
    p.add_argument("--mock-scenario", choices=sorted(mocks.SCENARIOS))
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--out")

    p = add("report", cmd_report, "composition statistics and figures")
    p.add_argument("--manifest", required=True)
    p.add_argument("--findings", help="findings.json from the identify step")
    p.add_argument("--out")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "acquire" and not args.mock_scenario and not args.manifest:
        parser.error("acquire requires --manifest or --mock-scenario")
    try:
        return args.func(args)
    except (ManifestError, DigestError, TrendJoinError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
