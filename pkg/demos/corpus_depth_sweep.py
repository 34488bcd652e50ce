"""How much of the risk sits in direct dependencies?

Generates a synthetic corpus, sweeps every root over increasing dependency
depth at package and method granularity, and prints the coverage curve plus
the most widespread advisories.

    python demos/corpus_depth_sweep.py --seed 0 --roots 200 --workers 4
"""

from __future__ import annotations

import argparse
import logging
import tempfile
import time
from pathlib import Path

from vulnreach import MAX, AnalysisSetting, Analyzer, CorpusSpec, Granularity, coverage_curve, generate
from vulnreach.report import render_coverage, render_impact, top_impact

log = logging.getLogger("sweep")


def run(args: argparse.Namespace, out: Path) -> None:
    spec = CorpusSpec(seed=args.seed, project_count=args.projects, root_count=args.roots)
    corpus = generate(spec, out)
    analyzer = Analyzer.load(corpus.path)
    depth = analyzer.max_dependency_depth(corpus.roots)
    ks = [*range(1, depth + 1), MAX]
    print(f"{len(corpus.roots)} roots, {len(corpus.advisories)} advisories, deepest dependency at depth {depth}\n")

    for gran in Granularity:
        started = time.perf_counter()
        sweeps = analyzer.sweep_corpus(corpus.roots, ks, gran, workers=args.workers)
        flagged = sum(entries[-1].verdict.vulnerable for entries in sweeps.values())
        print(f"{gran.value} level: {flagged}/{len(sweeps)} roots vulnerable at depth max "
              f"({time.perf_counter() - started:.2f}s)")
        print(render_coverage(coverage_curve(sweeps)))

    pkg = analyzer.analyze_corpus(corpus.roots, AnalysisSetting(Granularity.PACKAGE), args.workers)
    method = analyzer.analyze_corpus(corpus.roots, AnalysisSetting(Granularity.METHOD), args.workers)
    print("Most widespread advisories")
    print(render_impact(top_impact(pkg, method, args.top)))
    log.info("diagnostics: %s", method.diagnostics)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--projects", type=int, default=40)
    parser.add_argument("--roots", type=int, default=200)
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--top", type=int, default=10)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    with tempfile.TemporaryDirectory() as tmp:
        run(args, Path(tmp) / "corpus")


if __name__ == "__main__":
    main()
