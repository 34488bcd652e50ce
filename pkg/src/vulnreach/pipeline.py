"""End-to-end analysis over an on-disk corpus.

A corpus directory holds::

    registry/     one JSON document per project (releases + declared dependencies)
    graphs/       one call-graph exchange document per versioned package
    advisories/   OSV or normalized advisory documents
    patches/      patch manifests and the diff files they reference
    roots.txt     optional list of root coordinates, one per line
"""

from __future__ import annotations

import datetime as dt
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .advisory import AdvisoryCollection
from .callgraph import CallGraphStore, WholeProgramGraph, annotate_vulnerable, stitch
from .dependencies import Coordinate, DependencyGraph, Depth, Registry, as_coordinate, resolve
from .patches import (
    PatchManifest,
    load_manifests,
    locate_vulnerable_callables,
    patch_context,
    propagate_to_affected_versions,
)
from .reachability import (
    AnalysisSetting,
    Granularity,
    RootVerdict,
    SweepEntry,
    analyze_method_level,
    analyze_package_level,
    check_ascending,
)
from .report import CorpusResult, Diagnostics, utc_now
from .versioning import affected_versions

logger = logging.getLogger(__name__)

# coordinate -> signature -> advisory ids
MarkTable = dict[Coordinate, dict[str, set[str]]]


@dataclass(frozen=True)
class RootContext:
    dep_graph: DependencyGraph
    whole: WholeProgramGraph | None
    diagnostics: Diagnostics


class Analyzer:
    """Holds the read-only inputs and caches per-root intermediate graphs.

    Safe to share between worker threads: caches are filled under a lock and
    every cached value is immutable.
    """

    def __init__(
        self,
        registry: Registry,
        kb: AdvisoryCollection,
        graphs: CallGraphStore,
        manifests: Iterable[PatchManifest] = (),
        include_all_scopes: bool = False,
        resolved: Iterable[DependencyGraph] = (),
    ):
        self.registry = registry
        self.kb = kb
        self.graphs = graphs
        self.manifests: dict[tuple[str, str], list[PatchManifest]] = {}
        for m in manifests:
            self.manifests.setdefault((m.advisory_id, m.project_id), []).append(m)
        self.include_all_scopes = include_all_scopes
        # pre-resolved graphs take precedence over the resolver
        self.resolved = {g.root: g for g in resolved}
        self._lock = threading.Lock()
        self._marks: MarkTable | None = None
        self._roots: dict[Coordinate, RootContext] = {}

    @classmethod
    def load(cls, corpus_dir: str | Path, **kwargs) -> Analyzer:
        base = Path(corpus_dir)
        return cls(
            Registry.load_dir(base / "registry"),
            AdvisoryCollection.load_dir(base / "advisories"),
            CallGraphStore(base / "graphs"),
            load_manifests(base / "patches") if (base / "patches").is_dir() else (),
            **kwargs,
        )

    # --------------------------------------------------------------- marks

    def _advisory_marks(self, adv_id: str, project_id: str) -> dict[Coordinate, set[str]]:
        """Vulnerable signatures per affected release for one (advisory, project)."""
        adv = self.kb[adv_id]
        if project_id not in self.registry:
            logger.info("%s: project %s not in registry", adv_id, project_id)
            return {}
        aff = affected_versions(self.registry.releases(project_id), adv.ranges_for(project_id), project_id)
        manifests = self.manifests.get((adv_id, project_id), [])
        if not aff.vulnerable_versions or not manifests:
            return {}
        ctx = manifests[0].context() or patch_context(aff)
        diffs = [fd for m in manifests for fd in m.patch_commit().file_diffs]
        if ctx is None:
            logger.warning("%s: cannot determine last vulnerable / first patched release", adv_id)
            return {}

        def index(coord: Coordinate):
            g = self.graphs.get(coord)
            return None if g is None else g.callable_index()

        signatures = locate_vulnerable_callables(diffs, index(ctx.first_patched), index(ctx.last_vulnerable))
        indices = {}
        for v in aff.vulnerable_versions:
            g = self.graphs.get(Coordinate.of(project_id, v))
            if g is not None:
                indices[v] = g.signatures
        per_version = propagate_to_affected_versions(signatures, aff, indices)
        return {Coordinate.of(project_id, v): set(sigs) for v, sigs in per_version.items() if sigs}

    def marks(self) -> MarkTable:
        with self._lock:
            if self._marks is None:
                table: MarkTable = {}
                for adv in self.kb:
                    for pid in adv.projects:
                        for coord, sigs in self._advisory_marks(adv.id, pid).items():
                            for sig in sigs:
                                table.setdefault(coord, {}).setdefault(sig, set()).add(adv.id)
                self._marks = table
            return self._marks

    # --------------------------------------------------------------- per root

    def context(self, root: Coordinate | str, need_graph: bool = True) -> RootContext:
        root = as_coordinate(root)
        with self._lock:
            cached = self._roots.get(root)
        if cached is not None and (cached.whole is not None or not need_graph):
            return cached
        dep_graph = self.resolved.get(root) or resolve(root, self.registry, self.include_all_scopes)
        whole = None
        diag = Diagnostics()
        if need_graph:
            whole, diag = self._whole_graph(dep_graph)
        ctx = RootContext(dep_graph, whole, diag)
        with self._lock:
            self._roots[root] = ctx
        return ctx

    def _whole_graph(self, dep_graph: DependencyGraph) -> tuple[WholeProgramGraph, Diagnostics]:
        root_cg = self.graphs.get(dep_graph.root)
        skipped = 0
        if root_cg is None:
            raise LookupError(f"no call graph for root {dep_graph.root}")
        deps = []
        for coord in sorted(dep_graph.nodes - {dep_graph.root}):
            cg = self.graphs.get(coord)
            if cg is None:
                logger.info("%s: no call graph for dependency %s", dep_graph.root, coord)
                skipped += 1
            else:
                deps.append(cg)
        whole, unresolved = stitch(root_cg, deps, dep_graph.depth)
        all_marks = self.marks()
        present = {cg.owner for cg in deps}
        marks = {c: {s: ids for s, ids in all_marks[c].items()} for c in present if c in all_marks}
        whole = annotate_vulnerable(whole, marks)
        return whole, Diagnostics(len(unresolved), skipped, whole.unmatched_marks)

    def analyze(self, root: Coordinate | str, setting: AnalysisSetting) -> RootVerdict:
        method = setting.granularity is Granularity.METHOD
        ctx = self.context(root, need_graph=method)
        if method:
            assert ctx.whole is not None
            return analyze_method_level(ctx.whole, setting.depth)
        return analyze_package_level(ctx.dep_graph, self.kb, setting.depth)

    def depth_sweep(
        self, root: Coordinate | str, k_values: Sequence[Depth], granularity: Granularity | str
    ) -> list[SweepEntry]:
        ks = check_ascending(k_values)
        granularity = Granularity(granularity)
        return [SweepEntry(k, self.analyze(root, AnalysisSetting(granularity, k))) for k in ks]

    # --------------------------------------------------------------- corpus

    def _map(self, fn, roots: Sequence[Coordinate], workers: int) -> list:
        if workers <= 1:
            return [fn(r) for r in roots]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, roots))

    def analyze_corpus(
        self,
        roots: Iterable[Coordinate | str],
        setting: AnalysisSetting,
        workers: int = 1,
        created_at: dt.datetime | None = None,
    ) -> CorpusResult:
        """Analyze every root; output order is by root coordinate whatever the schedule."""
        ordered = sorted({as_coordinate(r) for r in roots})
        verdicts = self._map(lambda r: self.analyze(r, setting), ordered, workers)
        diag = Diagnostics()
        if setting.granularity is Granularity.METHOD:
            for r in ordered:
                diag = diag + self.context(r).diagnostics
        return CorpusResult(created_at or utc_now(), setting, tuple(verdicts), diag)

    def sweep_corpus(
        self,
        roots: Iterable[Coordinate | str],
        k_values: Sequence[Depth],
        granularity: Granularity | str,
        workers: int = 1,
    ) -> dict[Coordinate, list[SweepEntry]]:
        ordered = sorted({as_coordinate(r) for r in roots})
        results = self._map(lambda r: self.depth_sweep(r, k_values, granularity), ordered, workers)
        return dict(zip(ordered, results))

    def max_dependency_depth(self, roots: Iterable[Coordinate | str]) -> int:
        return max(
            (max(self.context(r, need_graph=False).dep_graph.depth.values()) for r in roots),
            default=0,
        )


def read_roots(path: str | Path) -> list[Coordinate]:
    lines = Path(path).read_text().splitlines()
    return [as_coordinate(x.strip()) for x in lines if x.strip() and not x.lstrip().startswith("#")]
