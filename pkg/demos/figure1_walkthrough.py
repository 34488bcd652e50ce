"""Walk the three-package example through every stage of the pipeline.

Builds the preset corpus in a temporary directory, then shows the resolved
dependency tree, the patch-derived vulnerable method, the stitched call graph
and the verdicts at increasing depth for both granularities.

    python demos/figure1_walkthrough.py [--keep DIR]
"""

from __future__ import annotations

import argparse
import logging
import tempfile
from pathlib import Path

from vulnreach import MAX, AnalysisSetting, Analyzer, Granularity
from vulnreach.fixtures import FIGURE1_ROOT, figure1

log = logging.getLogger("figure1")


def walkthrough(corpus_dir: Path) -> None:
    figure1(corpus_dir)
    analyzer = Analyzer.load(corpus_dir)

    ctx = analyzer.context(FIGURE1_ROOT)
    print("Dependency tree")
    print(ctx.dep_graph.render_tree())

    print("\nMethods touched by the fix, per affected release")
    for coord, sigs in sorted(analyzer.marks().items()):
        for sig, ids in sorted(sigs.items()):
            print(f"  {coord}  {sig}  <- {', '.join(sorted(ids))}")

    whole = ctx.whole
    print(f"\nStitched call graph: {len(whole.nodes)} methods, {len(whole.edge_list())} calls")
    for a, b, kind in whole.edge_list():
        print(f"  {whole.nodes[a].signature:10} -> {whole.nodes[b].signature:10} ({kind.value})")

    print("\nVerdicts")
    for gran in Granularity:
        for k in (1, 2, MAX):
            verdict = analyzer.analyze(FIGURE1_ROOT, AnalysisSetting(gran, k))
            status = "vulnerable" if verdict.vulnerable else "clean"
            print(f"  {verdict.setting.label:12} {status}")
            for f in verdict.findings:
                if f.chain is not None:
                    print(f"      {f.chain.render()}")

    log.info("corpus written to %s", corpus_dir)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--keep", type=Path, help="write the corpus here instead of a temp dir")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.keep:
        walkthrough(args.keep)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            walkthrough(Path(tmp) / "figure1")


if __name__ == "__main__":
    main()
