"""Per-package call graphs and whole-program stitching.

Call graphs are produced elsewhere (e.g. by a bytecode analyzer) and exchanged
as one JSON document per package::

    {"coordinate": "g:a:1.0",
     "nodes": [{"id": 0, "signature": "A.Main()", "file": "A.java",
                "start_line": 3, "end_line": 9, "entrypoint": true}],
     "internal_edges": [[0, 1]],
     "external_calls": [[1, "B.Bar()"]]}

Stitching resolves external calls by exact signature against the other packages
of a dependency set; when several packages define the signature, the one
closest to the root wins, then the lowest coordinate string.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .dependencies import Coordinate, as_coordinate
from .errors import DuplicateCoordinate, InvalidCallGraph
from .patches import CallableIndex, CallableSpan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CallableNode:
    id: int
    signature: str
    file: str | None = None
    start_line: int | None = None
    end_line: int | None = None
    entrypoint: bool = False

    def span(self) -> CallableSpan | None:
        if self.file is None or self.start_line is None or self.end_line is None:
            return None
        return CallableSpan(self.signature, self.file, self.start_line, self.end_line)


@dataclass(frozen=True)
class PackageCallGraph:
    owner: Coordinate
    nodes: tuple[CallableNode, ...]
    internal_edges: tuple[tuple[int, int], ...] = ()
    external_calls: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise InvalidCallGraph(f"{self.owner}: duplicate node ids")
        sigs = [n.signature for n in self.nodes]
        if len(set(sigs)) != len(sigs):
            raise InvalidCallGraph(f"{self.owner}: duplicate signatures")
        known = set(ids)
        for a, b in self.internal_edges:
            if a not in known or b not in known:
                raise InvalidCallGraph(f"{self.owner}: edge {a}->{b} has an unknown endpoint")
        for a, _ in self.external_calls:
            if a not in known:
                raise InvalidCallGraph(f"{self.owner}: external call from unknown node {a}")
        for n in self.nodes:
            if n.start_line is not None and n.end_line is not None and n.start_line > n.end_line:
                raise InvalidCallGraph(f"{self.owner}: {n.signature} has start > end")

    @property
    def signatures(self) -> frozenset[str]:
        return frozenset(n.signature for n in self.nodes)

    def callable_index(self) -> CallableIndex:
        return CallableIndex(s for s in (n.span() for n in self.nodes) if s is not None)

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> PackageCallGraph:
        try:
            nodes = tuple(
                CallableNode(
                    int(n["id"]),
                    n["signature"],
                    n.get("file"),
                    n.get("start_line"),
                    n.get("end_line"),
                    bool(n.get("entrypoint", False)),
                )
                for n in doc["nodes"]
            )
            return cls(
                as_coordinate(doc["coordinate"]),
                nodes,
                tuple((int(a), int(b)) for a, b in doc.get("internal_edges", [])),
                tuple((int(a), str(s)) for a, s in doc.get("external_calls", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidCallGraph):
                raise
            raise InvalidCallGraph(f"malformed call graph document: {exc}") from exc

    def to_json(self) -> dict[str, Any]:
        return {
            "coordinate": str(self.owner),
            "nodes": [
                {
                    "id": n.id,
                    "signature": n.signature,
                    "file": n.file,
                    "start_line": n.start_line,
                    "end_line": n.end_line,
                    "entrypoint": n.entrypoint,
                }
                for n in self.nodes
            ],
            "internal_edges": [list(e) for e in self.internal_edges],
            "external_calls": [list(c) for c in self.external_calls],
        }


def graph_filename(coord: Coordinate) -> str:
    return f"{coord.group}__{coord.artifact}__{coord.version.original}.json"


class CallGraphStore:
    """Directory of exchange-format documents, loaded lazily per coordinate."""

    def __init__(self, path: str | Path | None = None, graphs: Iterable[PackageCallGraph] = ()):
        self._cache: dict[Coordinate, PackageCallGraph] = {g.owner: g for g in graphs}
        self._files: dict[Coordinate, Path] = {}
        if path is not None:
            for f in sorted(Path(path).glob("*.json")):
                coord = as_coordinate(json.loads(f.read_text())["coordinate"])
                if coord in self._files:
                    raise DuplicateCoordinate(f"two graphs for {coord}: {self._files[coord]}, {f}")
                self._files[coord] = f

    def __contains__(self, coord: object) -> bool:
        return coord in self._cache or coord in self._files

    def get(self, coord: Coordinate) -> PackageCallGraph | None:
        if coord not in self._cache:
            f = self._files.get(coord)
            if f is None:
                return None
            self._cache[coord] = PackageCallGraph.from_json(json.loads(f.read_text()))
        return self._cache[coord]

    def coordinates(self) -> list[Coordinate]:
        return sorted(set(self._cache) | set(self._files))

    def __iter__(self) -> Iterator[PackageCallGraph]:
        for c in self.coordinates():
            g = self.get(c)
            assert g is not None
            yield g


# --------------------------------------------------------------- whole program


class EdgeKind(str, enum.Enum):
    INTERNAL = "internal"
    EXTERNAL = "external"


@dataclass(frozen=True)
class GlobalNode:
    gid: int
    owner: Coordinate
    signature: str
    file: str | None = None
    start_line: int | None = None
    end_line: int | None = None


@dataclass(frozen=True)
class UnresolvedCall:
    caller: int
    target_signature: str


@dataclass(frozen=True)
class WholeProgramGraph:
    root: Coordinate
    nodes: tuple[GlobalNode, ...]  # indexed by gid
    edges: Mapping[int, Mapping[int, EdgeKind]]
    vulnerable: Mapping[int, frozenset[str]] = field(default_factory=dict)
    owner_depth: Mapping[Coordinate, int] = field(default_factory=dict)
    unmatched_marks: int = 0

    def successors(self, gid: int) -> list[int]:
        return sorted(self.edges.get(gid, {}))

    def edge_kind(self, a: int, b: int) -> EdgeKind | None:
        return self.edges.get(a, {}).get(b)

    def edge_list(self) -> list[tuple[int, int, EdgeKind]]:
        return [(a, b, self.edges[a][b]) for a in sorted(self.edges) for b in sorted(self.edges[a])]

    def nodes_of(self, owner: Coordinate) -> list[GlobalNode]:
        return [n for n in self.nodes if n.owner == owner]

    @property
    def owners(self) -> list[Coordinate]:
        return sorted({n.owner for n in self.nodes})

    def find(self, owner: Coordinate, signature: str) -> GlobalNode | None:
        for n in self.nodes:
            if n.owner == owner and n.signature == signature:
                return n
        return None

    def to_json(self, unresolved: Iterable[UnresolvedCall] = ()) -> dict[str, Any]:
        return {
            "root": str(self.root),
            "nodes": [
                {
                    "gid": n.gid,
                    "coordinate": str(n.owner),
                    "signature": n.signature,
                    "file": n.file,
                    "start_line": n.start_line,
                    "end_line": n.end_line,
                }
                for n in self.nodes
            ],
            "edges": [[a, b, k.value] for a, b, k in self.edge_list()],
            "vulnerable": {str(g): sorted(ids) for g, ids in sorted(self.vulnerable.items())},
            "owner_depth": {str(c): d for c, d in sorted(self.owner_depth.items())},
            "unmatched_marks": self.unmatched_marks,
            "unresolved": [[u.caller, u.target_signature] for u in unresolved],
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> WholeProgramGraph:
        nodes = tuple(
            GlobalNode(
                n["gid"], as_coordinate(n["coordinate"]), n["signature"],
                n.get("file"), n.get("start_line"), n.get("end_line"),
            )
            for n in doc["nodes"]
        )
        edges: dict[int, dict[int, EdgeKind]] = {}
        for a, b, k in doc.get("edges", []):
            edges.setdefault(a, {})[b] = EdgeKind(k)
        return cls(
            as_coordinate(doc["root"]),
            nodes,
            edges,
            {int(g): frozenset(ids) for g, ids in doc.get("vulnerable", {}).items()},
            {as_coordinate(c): d for c, d in doc.get("owner_depth", {}).items()},
            doc.get("unmatched_marks", 0),
        )


def stitch(
    root_cg: PackageCallGraph,
    dep_cgs: Iterable[PackageCallGraph],
    depths: Mapping[Coordinate, int] | None = None,
) -> tuple[WholeProgramGraph, list[UnresolvedCall]]:
    """Union package graphs into one graph and resolve external calls.

    Global ids follow sorted coordinate order, then node id order.  ``depths``
    gives each owner's dependency depth (root is 0); owners missing from it are
    ranked after every known depth.
    """
    graphs = [root_cg, *dep_cgs]
    owners = [g.owner for g in graphs]
    if len(set(owners)) != len(owners):
        dup = sorted({str(o) for o in owners if owners.count(o) > 1})
        raise DuplicateCoordinate(f"more than one call graph for {', '.join(dup)}")
    depths = dict(depths or {})
    depths[root_cg.owner] = 0
    unknown_depth = max(depths.values(), default=0) + 1

    nodes: list[GlobalNode] = []
    local_to_global: dict[tuple[Coordinate, int], int] = {}
    for g in sorted(graphs, key=lambda g: str(g.owner)):
        for n in sorted(g.nodes, key=lambda n: n.id):
            gid = len(nodes)
            local_to_global[(g.owner, n.id)] = gid
            nodes.append(GlobalNode(gid, g.owner, n.signature, n.file, n.start_line, n.end_line))

    # signature -> candidate gids, best first
    candidates: dict[str, list[int]] = {}
    for n in nodes:
        candidates.setdefault(n.signature, []).append(n.gid)
    for gids in candidates.values():
        gids.sort(key=lambda gid: (depths.get(nodes[gid].owner, unknown_depth), str(nodes[gid].owner)))

    edges: dict[int, dict[int, EdgeKind]] = {}
    unresolved: list[UnresolvedCall] = []
    for g in graphs:
        for a, b in g.internal_edges:
            edges.setdefault(local_to_global[(g.owner, a)], {})[local_to_global[(g.owner, b)]] = (
                EdgeKind.INTERNAL
            )
    for g in sorted(graphs, key=lambda g: str(g.owner)):
        for a, sig in g.external_calls:
            caller = local_to_global[(g.owner, a)]
            target = next((t for t in candidates.get(sig, ()) if nodes[t].owner != g.owner), None)
            if target is None:
                unresolved.append(UnresolvedCall(caller, sig))
                continue
            edges.setdefault(caller, {})[target] = EdgeKind.EXTERNAL
    unresolved.sort(key=lambda u: (u.caller, u.target_signature))
    whole = WholeProgramGraph(
        root=root_cg.owner,
        nodes=tuple(nodes),
        edges=edges,
        owner_depth={o: depths.get(o, unknown_depth) for o in owners},
    )
    return whole, unresolved


Marks = Mapping[Coordinate, Mapping[str, Iterable[str]]]


def annotate_vulnerable(g: WholeProgramGraph, marks: Marks) -> WholeProgramGraph:
    """Return a copy of ``g`` with vulnerability marks applied to matching nodes.

    Marks naming a coordinate or signature absent from ``g`` are ignored and
    counted in ``unmatched_marks``.
    """
    by_key = {(n.owner, n.signature): n.gid for n in g.nodes}
    vulnerable: dict[int, set[str]] = {gid: set(ids) for gid, ids in g.vulnerable.items()}
    unmatched = 0
    for coord, sigs in marks.items():
        for sig, advisory_ids in sigs.items():
            gid = by_key.get((coord, sig))
            if gid is None:
                unmatched += 1
                continue
            ids = set(advisory_ids)
            if ids:
                vulnerable.setdefault(gid, set()).update(ids)
    return replace(
        g,
        vulnerable={gid: frozenset(ids) for gid, ids in sorted(vulnerable.items()) if ids},
        unmatched_marks=g.unmatched_marks + unmatched,
    )
