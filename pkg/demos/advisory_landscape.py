"""Summarize an advisory directory: years, severities, weakness classes, exposure.

Reads OSV or normalized advisory JSON from ``--advisories``; with ``--registry``
it also reports what share of each project's releases is affected.  Without
arguments it runs on a freshly generated synthetic corpus.

    python demos/advisory_landscape.py --advisories DIR [--registry DIR]
"""

from __future__ import annotations

import argparse
import logging
import tempfile
from pathlib import Path

from vulnreach import AdvisoryCollection, CorpusSpec, Registry, generate
from vulnreach.advisory import cwe_frequency, stats_by_severity, stats_by_year
from vulnreach.report import distribution_medians, format_table, version_distribution


def summarize(advisories: Path, registry: Path | None, top: int) -> None:
    kb = AdvisoryCollection.load_dir(advisories)
    print(f"{len(kb)} advisories over {len(kb.projects)} projects\n")

    print(format_table(("year", "advisories", "projects"),
                       [(y or "unknown", n, p) for y, n, p in stats_by_year(kb)]))
    print(format_table(("severity", "advisories"),
                       [(s.value, n) for s, n in stats_by_severity(kb, unified=True)]))

    freq = cwe_frequency(kb, top)
    print(format_table(("cwe", "advisories"), [(r.cwe_id, r.count) for r in freq.rows]))
    if freq.excluded:
        print(f"({freq.excluded} advisories carry no CWE tag)\n")

    if registry is None:
        return
    rows = [r for r in version_distribution(kb, Registry.load_dir(registry)) if r.vulnerable]
    rows.sort(key=lambda r: (-r.percent, r.project_id))
    print(format_table(("project", "releases", "affected", "percent"),
                       [(r.project_id, r.total, r.vulnerable, f"{r.percent:.1f}") for r in rows]))
    summary = distribution_medians(rows)
    if summary:
        print(f"median affected share across {summary.projects} projects: {summary.median_percent:.1f}%")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--advisories", type=Path)
    parser.add_argument("--registry", type=Path)
    parser.add_argument("--top", type=int, default=10)
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)
    if args.advisories:
        summarize(args.advisories, args.registry, args.top)
        return
    with tempfile.TemporaryDirectory() as tmp:
        corpus = generate(CorpusSpec(seed=1, project_count=60), Path(tmp) / "corpus")
        summarize(corpus.path / "advisories", corpus.path / "registry", args.top)


if __name__ == "__main__":
    main()
