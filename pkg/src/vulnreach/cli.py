"""Command line entry point (``sca``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import advisory as adv_mod
from .callgraph import CallGraphStore, stitch
from .dependencies import MAX, DependencyGraph, Registry, as_coordinate, depth_limit, parse_depth, resolve
from .errors import VulnReachError
from .fixtures import PRESETS, CorpusSpec, generate
from .patches import load_manifests
from .pipeline import Analyzer, read_roots
from .reachability import AnalysisSetting, Granularity, coverage_curve
from .report import (
    ExportFormat,
    RunStore,
    load_run,
    load_run_sweeps,
    render_coverage,
    render_impact,
    render_version_dist,
    sweep_summary,
    top_impact,
    version_distribution,
    format_table,
)
from .versioning import affected_versions, parse_version

logger = logging.getLogger("vulnreach")

EXIT_CLEAN, EXIT_VULNERABLE, EXIT_ERROR = 0, 1, 2


def _write(text: str | bytes, out: str | None) -> None:
    data = text.encode() if isinstance(text, str) else text
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------------------- kb


def cmd_kb_load(args: argparse.Namespace) -> int:
    kb = adv_mod.AdvisoryCollection.load_dir(args.advisories)
    if args.out:
        kb.dump_dir(args.out)
    print(f"loaded {len(kb)} advisories covering {len(kb.projects)} projects")
    return EXIT_CLEAN


def cmd_kb_stats(args: argparse.Namespace) -> int:
    kb = adv_mod.AdvisoryCollection.load_dir(args.advisories)
    note = ""
    if args.by == "year":
        header = ("year", "advisories", "projects")
        rows = [(y if y is not None else "unknown", n, p) for y, n, p in adv_mod.stats_by_year(kb)]
    elif args.by == "severity":
        header = ("severity", "advisories")
        rows = [(s.value, n) for s, n in adv_mod.stats_by_severity(kb, args.unified)]
    elif args.by == "year-severity":
        header = ("year", "severity", "advisories")
        rows = [
            (r.year if r.year is not None else "unknown", r.severity.value, r.count)
            for r in adv_mod.stats_by_year_and_severity(kb, args.unified)
        ]
    else:
        freq = adv_mod.cwe_frequency(kb, args.top, args.unified)
        severities = [s for s in adv_mod.SEVERITY_ORDER if any(s in r.count_by_severity for r in freq.rows)]
        header = ("cwe", "advisories", *(s.value for s in severities))
        rows = [(r.cwe_id, r.count, *(r.count_by_severity.get(s, 0) for s in severities)) for r in freq.rows]
        note = f"\n{freq.distinct} distinct CWEs; {freq.excluded} advisories without a CWE tag excluded\n"
    if args.format == "json":
        _write(_json([dict(zip(header, r)) for r in rows]), None)
    else:
        print(format_table(header, rows) + note, end="")
    return EXIT_CLEAN


# ----------------------------------------------------------------- versions


def cmd_affected(args: argparse.Namespace) -> int:
    kb = adv_mod.AdvisoryCollection.load_dir(args.advisories)
    if args.releases:
        lines = Path(args.releases).read_text().splitlines()
        releases = [x.strip() for x in lines if x.strip()]
    elif args.registry:
        releases = Registry.load_dir(args.registry).releases(args.project)
    else:
        raise VulnReachError("pass --releases or --registry")
    advisories = [kb[args.advisory]] if args.advisory else kb.for_project(args.project)
    per_advisory = {
        adv.id: affected_versions(releases, adv.ranges_for(args.project), args.project)
        for adv in advisories
    }
    vulnerable = set().union(*(a.vulnerable_versions for a in per_advisory.values()))
    doc = {
        "project": args.project,
        "total": len({parse_version(str(v)) for v in releases}),
        "vulnerable": [v.original for v in sorted(vulnerable)],
        "advisories": {
            adv_id: {
                "vulnerable": [v.original for v in aff.sorted_vulnerable()],
                "lower_bound_absent": aff.lower_bound_absent,
            }
            for adv_id, aff in sorted(per_advisory.items())
        },
    }
    _write(_json(doc), args.out)
    return EXIT_CLEAN


def cmd_resolve(args: argparse.Namespace) -> int:
    registry = Registry.load_dir(args.registry)
    g = resolve(args.root, registry, include_all_scopes=args.all_scopes)
    if args.format == "tree":
        print(g.render_tree())
        return EXIT_CLEAN
    doc = g.to_json()
    if args.depth != MAX:
        keep = {str(c) for c in depth_limit(g, args.depth)} | {str(g.root)}
        doc["nodes"] = [n for n in doc["nodes"] if n in keep]
        doc["edges"] = [e for e in doc["edges"] if e[0] in keep and e[1] in keep]
    _write(_json(doc), args.out)
    return EXIT_CLEAN


# ----------------------------------------------------------------- graphs


def cmd_stitch(args: argparse.Namespace) -> int:
    store = CallGraphStore(args.graphs)
    deps = DependencyGraph.from_json(json.loads(Path(args.deps).read_text()))
    root = as_coordinate(args.root)
    if deps.root != root:
        raise VulnReachError(f"--deps was resolved for {deps.root}, not {root}")
    root_cg = store.get(root)
    if root_cg is None:
        raise VulnReachError(f"no call graph for {root} in {args.graphs}")
    dep_cgs = []
    for coord in sorted(depth_limit(deps, args.depth)):
        cg = store.get(coord)
        if cg is None:
            logger.warning("no call graph for %s", coord)
        else:
            dep_cgs.append(cg)
    whole, unresolved = stitch(root_cg, dep_cgs, deps.depth)
    _write(_json(whole.to_json(unresolved)), args.out)
    logger.info("%d nodes, %d edges, %d unresolved calls",
                len(whole.nodes), len(whole.edge_list()), len(unresolved))
    return EXIT_CLEAN


def _analyzer(args: argparse.Namespace) -> Analyzer:
    resolved = ()
    if getattr(args, "deps", None):
        resolved = (DependencyGraph.from_json(json.loads(Path(args.deps).read_text())),)
    if getattr(args, "corpus", None):
        return Analyzer.load(args.corpus, resolved=resolved)
    missing = [f"--{n}" for n in ("registry", "advisories", "graphs") if not getattr(args, n)]
    if missing:
        raise VulnReachError(f"missing {', '.join(missing)} (or pass --corpus)")
    return Analyzer(
        Registry.load_dir(args.registry),
        adv_mod.AdvisoryCollection.load_dir(args.advisories),
        CallGraphStore(args.graphs),
        load_manifests(args.patches) if args.patches else (),
        resolved=resolved,
    )


def cmd_analyze(args: argparse.Namespace) -> int:
    analyzer = _analyzer(args)
    setting = AnalysisSetting(Granularity(args.level), args.depth)
    verdict = analyzer.analyze(args.root, setting)
    if args.format == "json":
        _write(_json(verdict.to_json()), None)
    else:
        status = "VULNERABLE" if verdict.vulnerable else "not vulnerable"
        print(f"{verdict.root} [{setting.label}]: {status}")
        for f in verdict.findings:
            line = f"  {f.advisory_id} via {f.coordinate} (depth {f.depth})"
            if f.chain is not None:
                line += f"\n    {f.chain.render()}  [{f.chain.length} hops]"
            print(line)
    return EXIT_VULNERABLE if verdict.vulnerable else EXIT_CLEAN


def cmd_run(args: argparse.Namespace) -> int:
    analyzer = Analyzer.load(args.corpus)
    roots = read_roots(args.roots or Path(args.corpus) / "roots.txt")
    store = RunStore(args.store)
    ks = [parse_depth(k) for k in args.k.split(",")] if args.k else None
    for level in args.levels.split(","):
        setting = AnalysisSetting(Granularity(level), args.depth)
        result = analyzer.analyze_corpus(roots, setting, workers=args.workers)
        sweeps = analyzer.sweep_corpus(roots, ks, setting.granularity, args.workers) if ks else None
        run_dir = store.save(f"{args.name}-{level}", result, sweeps)
        print(f"{run_dir}: {len(result.vulnerable_roots)}/{len(result.verdicts)} roots vulnerable")
    return EXIT_CLEAN


# ----------------------------------------------------------------- reports


def cmd_top_impact(args: argparse.Namespace) -> int:
    rows = top_impact(load_run(args.runs[0]), load_run(args.runs[1]), args.top)
    _write(render_impact(rows, args.format), args.out)
    return EXIT_CLEAN


def cmd_coverage(args: argparse.Namespace) -> int:
    sweeps = load_run_sweeps(args.run)
    text = render_coverage(coverage_curve(sweeps), args.format)
    if args.format == "table":
        text += "\n" + format_table(("k", "vulnerable_roots", "cumulative_advisories", "exact_level_advisories"),
                              sweep_summary(sweeps))
    _write(text, args.out)
    return EXIT_CLEAN


def cmd_version_dist(args: argparse.Namespace) -> int:
    rows = version_distribution(
        adv_mod.AdvisoryCollection.load_dir(args.advisories), Registry.load_dir(args.registry)
    )
    _write(render_version_dist(rows, args.format), args.out)
    return EXIT_CLEAN


def cmd_fixtures(args: argparse.Namespace) -> int:
    if args.preset:
        corpus = PRESETS[args.preset](args.out)
    else:
        spec = CorpusSpec(
            seed=args.seed,
            project_count=args.projects,
            max_releases=args.max_releases,
            max_direct_deps=args.max_direct_deps,
            max_depth_target=args.max_depth,
            vulnerability_rate=args.vulnerability_rate,
            call_density=args.call_density,
            root_count=args.roots,
        )
        corpus = generate(spec, args.out)
    print(f"{corpus.path}: {len(corpus.roots)} roots, {len(corpus.advisories)} advisories")
    return EXIT_CLEAN


# ------------------------------------------------------------------ parser


def _depth(text: str):
    try:
        return parse_depth(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sca", description="Dependency vulnerability reachability analysis")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="advisory knowledge base").add_subparsers(dest="kb_cmd", required=True)
    s = kb.add_parser("load", help="parse and validate advisories")
    s.add_argument("--dir", "--advisories", dest="advisories", required=True)
    s.add_argument("--out", help="write normalized documents here")
    s.set_defaults(func=cmd_kb_load)
    s = kb.add_parser("stats", help="aggregate advisory counts")
    s.add_argument("--dir", "--advisories", dest="advisories", required=True)
    s.add_argument("--format", choices=["json", "table"], default="table")
    s.add_argument("--by", choices=["year", "severity", "year-severity", "cwe"], default="year")
    s.add_argument("--top", type=int, default=10)
    s.add_argument("--unified", action="store_true", help="merge Moderate into Medium")
    s.set_defaults(func=cmd_kb_stats)

    s = sub.add_parser("affected-versions", help="releases of a project matched by advisories")
    s.add_argument("--project", required=True)
    s.add_argument("--releases", help="file with one version per line")
    s.add_argument("--registry", help="take the release list from a registry instead")
    s.add_argument("--advisories", required=True)
    s.add_argument("--advisory", help="restrict to one advisory id")
    s.add_argument("--out")
    s.set_defaults(func=cmd_affected)

    s = sub.add_parser("resolve", help="resolve a dependency graph")
    s.add_argument("--root", required=True)
    s.add_argument("--registry", required=True)
    s.add_argument("--depth", type=_depth, default=MAX)
    s.add_argument("--all-scopes", action="store_true", help="keep test and provided dependencies")
    s.add_argument("--format", choices=["json", "tree"], default="json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_resolve)

    s = sub.add_parser("stitch", help="build a whole-program call graph")
    s.add_argument("--root", required=True)
    s.add_argument("--graphs", required=True)
    s.add_argument("--deps", required=True, help="resolved dependency graph JSON")
    s.add_argument("--depth", type=_depth, default=MAX)
    s.add_argument("--out")
    s.set_defaults(func=cmd_stitch)

    def inputs(s: argparse.ArgumentParser) -> None:
        s.add_argument("--corpus", help="corpus directory (registry/, graphs/, advisories/, patches/)")
        s.add_argument("--registry")
        s.add_argument("--advisories")
        s.add_argument("--graphs")
        s.add_argument("--patches")
        s.add_argument("--deps", help="pre-resolved dependency graph JSON (skips resolution)")

    s = sub.add_parser("analyze", help="analyze one root; exit 1 when vulnerable")
    s.add_argument("--root", required=True)
    s.add_argument("--level", choices=[g.value for g in Granularity], default="method")
    s.add_argument("--depth", type=_depth, default=MAX)
    s.add_argument("--format", choices=["json", "table"], default="table")
    inputs(s)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("run", help="analyze a corpus and store the results")
    s.add_argument("--corpus", required=True)
    s.add_argument("--store", required=True)
    s.add_argument("--name", default="run")
    s.add_argument("--roots", help="roots file (default: <corpus>/roots.txt)")
    s.add_argument("--levels", default="package,method")
    s.add_argument("--depth", type=_depth, default=MAX)
    s.add_argument("--k", default="1,2,3,4,5,max", help="depth sweep values; empty to skip")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="corpus reports").add_subparsers(dest="report_cmd", required=True)
    fmt = [f.value for f in ExportFormat]
    s = rep.add_parser("top-impact")
    s.add_argument("--runs", nargs=2, required=True, metavar=("PKG_RUN", "METHOD_RUN"))
    s.add_argument("--top", type=int, default=10)
    s.add_argument("--format", choices=fmt, default="table")
    s.add_argument("--out")
    s.set_defaults(func=cmd_top_impact)
    s = rep.add_parser("coverage-curve")
    s.add_argument("--run", required=True)
    s.add_argument("--format", choices=fmt, default="table")
    s.add_argument("--out")
    s.set_defaults(func=cmd_coverage)
    s = rep.add_parser("version-dist")
    s.add_argument("--advisories", required=True)
    s.add_argument("--registry", required=True)
    s.add_argument("--format", choices=fmt, default="table")
    s.add_argument("--out")
    s.set_defaults(func=cmd_version_dist)

    fx = sub.add_parser("fixtures", help="synthetic corpora").add_subparsers(dest="fx_cmd", required=True)
    s = fx.add_parser("generate")
    s.add_argument("--out", required=True)
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--projects", type=int, default=40)
    s.add_argument("--roots", type=int, default=20)
    s.add_argument("--max-releases", type=int, default=4)
    s.add_argument("--max-direct-deps", type=int, default=3)
    s.add_argument("--max-depth", type=int, default=4)
    s.add_argument("--vulnerability-rate", type=float, default=0.3)
    s.add_argument("--call-density", type=float, default=0.5)
    s.set_defaults(func=cmd_fixtures)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (VulnReachError, OSError, KeyError, ValueError, LookupError) as exc:
        print(f"sca: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
