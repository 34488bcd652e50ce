"""Dependency resolution with Maven-style mediation and depth limiting."""

from __future__ import annotations

import enum
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

from .errors import InvalidCoordinate, MalformedRange, MissingProject, UnresolvableVersion
from .versioning import PackageVersion, RangeSyntax, VersionRange, as_version, parse_range

logger = logging.getLogger(__name__)

MAX = "max"
Depth = Union[int, str]  # positive int or MAX


def parse_depth(value: Depth) -> Depth:
    if isinstance(value, str):
        if value.lower() == MAX:
            return MAX
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"depth must be a positive integer or {MAX!r}, got {value!r}")
    return value


def within_depth(depth: int, k: Depth) -> bool:
    return k == MAX or depth <= k  # type: ignore[operator]


def depth_sort_key(k: Depth) -> float:
    return float("inf") if k == MAX else float(k)


@dataclass(frozen=True, order=False)
class Coordinate:
    group: str
    artifact: str
    version: PackageVersion

    def __post_init__(self) -> None:
        if not self.group or not self.artifact or ":" in self.group + self.artifact:
            raise InvalidCoordinate(f"bad coordinate parts {self.group!r}:{self.artifact!r}")

    @classmethod
    def parse(cls, text: str) -> Coordinate:
        parts = text.strip().split(":")
        if len(parts) != 3 or not all(parts):
            raise InvalidCoordinate(f"expected group:artifact:version, got {text!r}")
        return cls(parts[0], parts[1], as_version(parts[2]))

    @classmethod
    def of(cls, project_id: str, version: str | PackageVersion) -> Coordinate:
        group, sep, artifact = project_id.partition(":")
        if not sep:
            raise InvalidCoordinate(f"project id must be group:artifact, got {project_id!r}")
        return cls(group, artifact, as_version(version))

    @property
    def project_id(self) -> str:
        return f"{self.group}:{self.artifact}"

    def __str__(self) -> str:
        return f"{self.group}:{self.artifact}:{self.version.original}"

    def sort_key(self) -> tuple:
        return (self.group, self.artifact, self.version.sort_key)

    def __lt__(self, other: Coordinate) -> bool:
        return self.sort_key() < other.sort_key()


def as_coordinate(value: str | Coordinate) -> Coordinate:
    return value if isinstance(value, Coordinate) else Coordinate.parse(value)


class Scope(str, enum.Enum):
    COMPILE = "compile"
    PROVIDED = "provided"
    TEST = "test"
    RUNTIME = "runtime"


EXCLUDED_SCOPES = frozenset({Scope.TEST, Scope.PROVIDED})


@dataclass(frozen=True)
class Declaration:
    project_id: str
    requirement: str  # pinned version or a range
    scope: Scope = Scope.COMPILE
    optional: bool = False

    def parsed_requirement(self) -> VersionRange | PackageVersion:
        req = self.requirement.strip()
        try:
            if req[:1] in "[(":
                return parse_range(req, RangeSyntax.MAVEN_BRACKET)
            if req[:1] in "<>=" or ";" in req or "," in req:
                return parse_range(req, RangeSyntax.COMPARATOR_LIST)
        except MalformedRange as exc:
            raise UnresolvableVersion(f"{self.project_id}: bad requirement {req!r}") from exc
        return as_version(req)


@dataclass(frozen=True)
class Release:
    version: PackageVersion
    dependencies: tuple[Declaration, ...] = ()


@dataclass
class Project:
    project_id: str
    releases: dict[PackageVersion, Release] = field(default_factory=dict)

    @property
    def versions(self) -> list[PackageVersion]:
        return sorted(self.releases)


class Registry:
    """Release lists and declared dependencies per project."""

    def __init__(self, projects: Iterable[Project] = ()):
        self.projects: dict[str, Project] = {}
        for p in projects:
            self.projects[p.project_id] = p

    def __contains__(self, project_id: object) -> bool:
        return project_id in self.projects

    def __getitem__(self, project_id: str) -> Project:
        try:
            return self.projects[project_id]
        except KeyError:
            raise MissingProject(f"project {project_id} not in registry") from None

    def releases(self, project_id: str) -> list[PackageVersion]:
        return self[project_id].versions

    def release(self, coord: Coordinate) -> Release:
        project = self[coord.project_id]
        try:
            return project.releases[coord.version]
        except KeyError:
            raise UnresolvableVersion(f"{coord} is not a known release") from None

    def coordinates(self) -> list[Coordinate]:
        return [
            Coordinate.of(pid, v)
            for pid in sorted(self.projects)
            for v in self.projects[pid].versions
        ]

    def pick(self, decl: Declaration) -> Coordinate:
        """Choose the release satisfying a declaration (highest match for ranges)."""
        project = self[decl.project_id]
        req = decl.parsed_requirement()
        if isinstance(req, PackageVersion):
            if req not in project.releases:
                raise UnresolvableVersion(f"{decl.project_id}:{req} is not a known release")
            # keep the registry's spelling of the version
            return Coordinate.of(decl.project_id, project.releases[req].version)
        matches = [v for v in project.versions if req.matches(v)]
        if not matches:
            raise UnresolvableVersion(f"no release of {decl.project_id} satisfies {decl.requirement}")
        return Coordinate.of(decl.project_id, project.releases[matches[-1]].version)

    # one JSON document per project
    @staticmethod
    def project_from_json(doc: Mapping[str, Any]) -> Project:
        project = Project(doc["project_id"])
        for rel in doc.get("releases", []):
            version = as_version(rel["version"])
            decls = tuple(
                Declaration(
                    d["project"],
                    str(d["requirement"]),
                    Scope(d.get("scope", "compile")),
                    bool(d.get("optional", False)),
                )
                for d in rel.get("dependencies", [])
            )
            project.releases[version] = Release(version, decls)
        return project

    @staticmethod
    def project_to_json(project: Project) -> dict[str, Any]:
        return {
            "project_id": project.project_id,
            "releases": [
                {
                    "version": rel.version.original,
                    "dependencies": [
                        {
                            "project": d.project_id,
                            "requirement": d.requirement,
                            "scope": d.scope.value,
                            "optional": d.optional,
                        }
                        for d in rel.dependencies
                    ],
                }
                for rel in (project.releases[v] for v in project.versions)
            ],
        }

    @classmethod
    def load_dir(cls, path: str | Path) -> Registry:
        return cls(
            cls.project_from_json(json.loads(f.read_text()))
            for f in sorted(Path(path).glob("*.json"))
        )

    def dump_dir(self, path: str | Path) -> None:
        out = Path(path)
        out.mkdir(parents=True, exist_ok=True)
        for pid in sorted(self.projects):
            doc = self.project_to_json(self.projects[pid])
            (out / f"{pid.replace(':', '__')}.json").write_text(
                json.dumps(doc, indent=2, sort_keys=True) + "\n"
            )


@dataclass(frozen=True)
class DependencyGraph:
    """A mediated dependency graph: one version per project, depth = BFS distance."""

    root: Coordinate
    nodes: frozenset[Coordinate]
    edges: frozenset[tuple[Coordinate, Coordinate]]
    depth: Mapping[Coordinate, int]
    warnings: tuple[str, ...] = ()

    def direct(self) -> set[Coordinate]:
        return depth_limit(self, 1)

    def successors(self, node: Coordinate) -> list[Coordinate]:
        return sorted(b for a, b in self.edges if a == node)

    def to_json(self) -> dict[str, Any]:
        return {
            "root": str(self.root),
            "nodes": sorted(str(n) for n in self.nodes),
            "edges": sorted([str(a), str(b)] for a, b in self.edges),
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> DependencyGraph:
        """Accept a pre-resolved graph; depths are recomputed from the edges."""
        root = Coordinate.parse(doc["root"])
        nodes = {Coordinate.parse(n) for n in doc.get("nodes", [])} | {root}
        edges = {(Coordinate.parse(a), Coordinate.parse(b)) for a, b in doc.get("edges", [])}
        for a, b in edges:
            if a not in nodes or b not in nodes:
                raise ValueError(f"edge {a} -> {b} references an unknown node")
        adj: dict[Coordinate, list[Coordinate]] = {n: [] for n in nodes}
        for a, b in edges:
            adj[a].append(b)
        depth = {root: 0}
        queue = deque([root])
        while queue:
            cur = queue.popleft()
            for nxt in sorted(adj[cur]):
                if nxt not in depth:
                    depth[nxt] = depth[cur] + 1
                    queue.append(nxt)
        unreachable = nodes - set(depth)
        if unreachable:
            raise ValueError(f"nodes not reachable from root: {sorted(map(str, unreachable))}")
        return cls(root, frozenset(nodes), frozenset(edges), depth)

    def render_tree(self) -> str:
        lines: list[str] = []
        seen: set[Coordinate] = set()

        def walk(node: Coordinate, indent: int) -> None:
            mark = " (*)" if node in seen else ""
            lines.append("  " * indent + str(node) + mark)
            if node in seen:
                return
            seen.add(node)
            for child in self.successors(node):
                if self.depth[child] == self.depth[node] + 1:
                    walk(child, indent + 1)

        walk(self.root, 0)
        return "\n".join(lines)


def _reaches(adj: Mapping[Coordinate, list[Coordinate]], src: Coordinate, dst: Coordinate) -> bool:
    stack, seen = [src], {src}
    while stack:
        cur = stack.pop()
        if cur == dst:
            return True
        for nxt in adj.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


def resolve(
    root: Coordinate | str,
    registry: Registry,
    include_all_scopes: bool = False,
) -> DependencyGraph:
    """Resolve the transitive dependency set of ``root``.

    Breadth-first mediation: the nearest declaration of a project wins, and at
    equal depth the first-declared one does.  Test and provided scopes are
    skipped unless ``include_all_scopes``; optional dependencies are only
    followed from the root.  Edges that would close a cycle are dropped with a
    warning.
    """
    root = as_coordinate(root)
    registry.release(root)  # raises for unknown root
    chosen: dict[str, Coordinate] = {root.project_id: root}
    depth = {root: 0}
    adj: dict[Coordinate, list[Coordinate]] = {root: []}
    edges: set[tuple[Coordinate, Coordinate]] = set()
    warnings: list[str] = []
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for decl in registry.release(node).dependencies:
            if not include_all_scopes and decl.scope in EXCLUDED_SCOPES:
                continue
            if decl.optional and node != root:
                continue
            target = chosen.get(decl.project_id)
            if target is None:
                target = registry.pick(decl)
                chosen[decl.project_id] = target
                depth[target] = depth[node] + 1
                adj[target] = []
                queue.append(target)
            if target == node or (node, target) in edges:
                continue
            if _reaches(adj, target, node):
                msg = f"cycle: ignoring back edge {node} -> {target}"
                logger.warning(msg)
                warnings.append(msg)
                continue
            edges.add((node, target))
            adj[node].append(target)
    return DependencyGraph(root, frozenset(depth), frozenset(edges), depth, tuple(warnings))


def depth_limit(g: DependencyGraph, k: Depth) -> set[Coordinate]:
    """Dependencies at depth 1..k (the root itself is excluded)."""
    k = parse_depth(k)
    return {c for c, d in g.depth.items() if d >= 1 and within_depth(d, k)}


def max_depth(g: DependencyGraph) -> int:
    return max(g.depth.values(), default=0)
