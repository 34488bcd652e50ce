"""Package-level presence checks and method-level call-chain search."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .callgraph import WholeProgramGraph
from .dependencies import (
    MAX,
    Coordinate,
    DependencyGraph,
    Depth,
    as_coordinate,
    depth_limit,
    depth_sort_key,
    parse_depth,
    within_depth,
)
from .versioning import is_dependency_affected


class Granularity(str, enum.Enum):
    PACKAGE = "package"
    METHOD = "method"


@dataclass(frozen=True)
class AnalysisSetting:
    granularity: Granularity
    depth: Depth = MAX

    def __post_init__(self) -> None:
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        object.__setattr__(self, "depth", parse_depth(self.depth))

    @property
    def label(self) -> str:
        return f"{self.granularity.value}@{self.depth}"

    @classmethod
    def parse(cls, label: str) -> AnalysisSetting:
        gran, _, depth = label.partition("@")
        return cls(Granularity(gran), depth or MAX)

    def at(self, depth: Depth) -> AnalysisSetting:
        return AnalysisSetting(self.granularity, depth)


@dataclass(frozen=True)
class VulnerableCallChain:
    advisory_id: str
    path: tuple[tuple[Coordinate, str], ...]

    def __post_init__(self) -> None:
        if not self.path:
            raise ValueError("a call chain needs at least one element")

    @property
    def length(self) -> int:
        return len(self.path) - 1

    def render(self) -> str:
        return " -> ".join(sig for _, sig in self.path)


@dataclass(frozen=True)
class Finding:
    advisory_id: str
    coordinate: Coordinate
    depth: int
    chain: VulnerableCallChain | None = None

    def sort_key(self) -> tuple:
        chain = tuple((str(c), s) for c, s in self.chain.path) if self.chain else ()
        return (self.advisory_id, str(self.coordinate), chain)


@dataclass(frozen=True)
class RootVerdict:
    root: Coordinate
    setting: AnalysisSetting
    findings: tuple[Finding, ...] = ()

    def __post_init__(self) -> None:
        want_chain = self.setting.granularity is Granularity.METHOD
        for f in self.findings:
            if (f.chain is not None) != want_chain:
                raise ValueError(
                    f"{self.setting.label} finding for {f.advisory_id} "
                    f"{'lacks' if want_chain else 'carries'} a call chain"
                )
        object.__setattr__(self, "findings", tuple(sorted(self.findings, key=Finding.sort_key)))

    @property
    def vulnerable(self) -> bool:
        return bool(self.findings)

    @property
    def advisory_ids(self) -> list[str]:
        return sorted({f.advisory_id for f in self.findings})

    def advisories_at_depth(self, depth: int) -> list[str]:
        return sorted({f.advisory_id for f in self.findings if f.depth == depth})

    def to_json(self) -> dict[str, Any]:
        return {
            "root": str(self.root),
            "setting": self.setting.label,
            "vulnerable": self.vulnerable,
            "findings": [
                {
                    "advisory_id": f.advisory_id,
                    "coordinate": str(f.coordinate),
                    "depth": f.depth,
                    "chain": (
                        None
                        if f.chain is None
                        else [[str(c), sig] for c, sig in f.chain.path]
                    ),
                }
                for f in self.findings
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> RootVerdict:
        findings = []
        for f in doc["findings"]:
            chain = None
            if f.get("chain") is not None:
                chain = VulnerableCallChain(
                    f["advisory_id"], tuple((as_coordinate(c), s) for c, s in f["chain"])
                )
            findings.append(Finding(f["advisory_id"], as_coordinate(f["coordinate"]), f["depth"], chain))
        verdict = cls(as_coordinate(doc["root"]), AnalysisSetting.parse(doc["setting"]), tuple(findings))
        if "vulnerable" in doc and doc["vulnerable"] != verdict.vulnerable:
            raise ValueError(f"{verdict.root}: vulnerable flag disagrees with findings")
        return verdict


def analyze_package_level(g: DependencyGraph, kb: Any, k: Depth = MAX) -> RootVerdict:
    """Flag the root when a dependency within depth ``k`` is matched by an advisory."""
    setting = AnalysisSetting(Granularity.PACKAGE, k)
    findings = [
        Finding(adv_id, dep, g.depth[dep])
        for dep in depth_limit(g, setting.depth)
        for adv_id in is_dependency_affected(dep, kb)
    ]
    return RootVerdict(g.root, setting, tuple(findings))


def shortest_paths_from_root(whole: WholeProgramGraph, k: Depth = MAX) -> dict[int, int | None]:
    """Multi-source BFS over root-package nodes; returns parent pointers.

    Only nodes whose owner lies within depth ``k`` are visited.  Sources are
    seeded and neighbours expanded in ascending global id order, so the parent
    tree (and every chain read from it) is deterministic.
    """
    k = parse_depth(k)
    allowed = {o for o, d in whole.owner_depth.items() if within_depth(d, k)}
    allowed.add(whole.root)
    parent: dict[int, int | None] = {}
    queue: deque[int] = deque()
    for n in whole.nodes:
        if n.owner == whole.root:
            parent[n.gid] = None
            queue.append(n.gid)
    while queue:
        cur = queue.popleft()
        for nxt in whole.successors(cur):
            if nxt not in parent and whole.nodes[nxt].owner in allowed:
                parent[nxt] = cur
                queue.append(nxt)
    return parent


def _trace(parent: Mapping[int, int | None], gid: int) -> list[int]:
    path = [gid]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])  # type: ignore[arg-type]
    return path[::-1]


def analyze_method_level(whole: WholeProgramGraph, k: Depth = MAX) -> RootVerdict:
    """One shortest chain per (advisory, reachable vulnerable node).

    ``whole`` may be stitched over the full dependency set: owners deeper than
    ``k`` are simply not traversed.  Nodes owned by the root are never findings.
    """
    setting = AnalysisSetting(Granularity.METHOD, k)
    parent = shortest_paths_from_root(whole, setting.depth)
    findings = []
    for gid in sorted(whole.vulnerable):
        node = whole.nodes[gid]
        if node.owner == whole.root or gid not in parent:
            continue
        path = tuple((whole.nodes[i].owner, whole.nodes[i].signature) for i in _trace(parent, gid))
        for adv_id in sorted(whole.vulnerable[gid]):
            findings.append(
                Finding(adv_id, node.owner, whole.owner_depth[node.owner], VulnerableCallChain(adv_id, path))
            )
    return RootVerdict(whole.root, setting, tuple(findings))


def verify_chain(whole: WholeProgramGraph, chain: VulnerableCallChain) -> bool:
    """Edge-by-edge check that ``chain`` is a path of ``whole`` ending at a marked node."""
    by_key = {(n.owner, n.signature): n.gid for n in whole.nodes}
    try:
        gids = [by_key[step] for step in chain.path]
    except KeyError:
        return False
    if whole.nodes[gids[0]].owner != whole.root:
        return False
    if chain.advisory_id not in whole.vulnerable.get(gids[-1], ()):
        return False
    return all(whole.edge_kind(a, b) is not None for a, b in zip(gids, gids[1:]))


# ---------------------------------------------------------------- depth sweeps


@dataclass(frozen=True)
class SweepEntry:
    k: Depth
    verdict: RootVerdict

    @property
    def cumulative_advisories(self) -> int:
        """Distinct advisories reachable through dependencies at depth <= k."""
        return len(self.verdict.advisory_ids)

    @property
    def exact_level_advisories(self) -> int | None:
        """Distinct advisories whose offending package sits exactly at depth k."""
        if self.k == MAX:
            return None
        return len(self.verdict.advisories_at_depth(self.k))  # type: ignore[arg-type]

    def to_json(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "cumulative_advisories": self.cumulative_advisories,
            "exact_level_advisories": self.exact_level_advisories,
            "verdict": self.verdict.to_json(),
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> SweepEntry:
        return cls(parse_depth(doc["k"]), RootVerdict.from_json(doc["verdict"]))


def check_ascending(k_values: Sequence[Depth]) -> list[Depth]:
    ks = [parse_depth(k) for k in k_values]
    keys = [depth_sort_key(k) for k in ks]
    if any(b <= a for a, b in zip(keys, keys[1:])):
        raise ValueError(f"depth values must be strictly ascending, got {k_values}")
    return ks


def depth_sweep(
    root: Coordinate,
    k_values: Sequence[Depth],
    granularity: Granularity,
    *,
    dep_graph: DependencyGraph | None = None,
    kb: Any = None,
    whole: WholeProgramGraph | None = None,
) -> list[SweepEntry]:
    """Verdicts for one root at each depth in ``k_values``.

    Package granularity needs ``dep_graph`` and ``kb``; method granularity needs
    a stitched, annotated ``whole`` graph.
    """
    ks = check_ascending(k_values)
    granularity = Granularity(granularity)
    out = []
    for k in ks:
        if granularity is Granularity.PACKAGE:
            if dep_graph is None or kb is None:
                raise ValueError("package-level sweep needs a dependency graph and advisories")
            verdict = analyze_package_level(dep_graph, kb, k)
        else:
            if whole is None:
                raise ValueError("method-level sweep needs a whole-program graph")
            verdict = analyze_method_level(whole, k)
        if verdict.root != root:
            raise ValueError(f"sweep inputs belong to {verdict.root}, not {root}")
        out.append(SweepEntry(k, verdict))
    return out


@dataclass(frozen=True)
class CoveragePoint:
    k: Depth
    covered: int
    total: int
    ratio: float | None = field(default=None)


def coverage_curve(corpus_sweeps: Mapping[Coordinate, Iterable[SweepEntry]]) -> list[CoveragePoint]:
    """Share of MAX-vulnerable roots already flagged at each depth.

    The ratio is None when no root is vulnerable at MAX.
    """
    flagged: dict[Depth, set[Coordinate]] = {}
    at_max: set[Coordinate] = set()
    for root, entries in corpus_sweeps.items():
        seen_max = False
        for e in entries:
            bucket = flagged.setdefault(e.k, set())
            if e.verdict.vulnerable:
                bucket.add(root)
            if e.k == MAX:
                seen_max = True
                if e.verdict.vulnerable:
                    at_max.add(root)
        if not seen_max:
            raise ValueError(f"{root} was not analyzed at depth {MAX}")
    total = len(at_max)
    return [
        CoveragePoint(k, len(flagged[k]), total, len(flagged[k]) / total if total else None)
        for k in sorted(flagged, key=depth_sort_key)
    ]
