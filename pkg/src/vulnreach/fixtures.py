"""Deterministic synthetic corpora for tests and demos.

``generate`` lays libraries out in layers so that dependencies only point to
deeper layers (the dependency graph is a DAG by construction) and adds one
application project per requested root.  Each vulnerable library gets an OSV
advisory, a patch manifest and a real unified diff that replaces lines inside
the vulnerable method, so the whole pipeline can run on the output.
"""

from __future__ import annotations

import difflib
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .dependencies import Declaration, Project, Registry, Release, Scope
from .errors import InvalidSpec
from .versioning import as_version

logger = logging.getLogger(__name__)

LIB_GROUP = "org.synth"
APP_GROUP = "org.synth.app"
_CWES = ("CWE-20", "CWE-22", "CWE-79", "CWE-400", "CWE-502", "CWE-611", "CWE-776", "CWE-918")
_SEVERITIES = ("CRITICAL", "HIGH", "MODERATE", "LOW")


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 0
    project_count: int = 40
    max_releases: int = 4
    max_direct_deps: int = 3
    max_depth_target: int = 4
    vulnerability_rate: float = 0.3
    call_density: float = 0.5
    root_count: int = 20

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidSpec(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        for name in ("project_count", "max_releases", "max_direct_deps", "max_depth_target", "root_count"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise InvalidSpec(f"{name} must be a positive integer, got {value!r}")
        for name in ("vulnerability_rate", "call_density"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidSpec(f"{name} must lie in [0, 1]")
        if self.vulnerability_rate > 0 and self.max_releases < 2:
            raise InvalidSpec("vulnerable projects need a patched release: max_releases must be >= 2")


@dataclass
class _Method:
    name: str
    start: int
    end: int
    introduced: int  # index of the first release that has it


@dataclass
class _Package:
    group: str
    artifact: str
    layer: int
    versions: list[str]
    methods: list[_Method]
    file: str
    internal: list[tuple[int, int]] = field(default_factory=list)
    deps: list[list[Declaration]] = field(default_factory=list)  # per release
    calls: list[list[tuple[int, str]]] = field(default_factory=list)  # per release

    @property
    def project_id(self) -> str:
        return f"{self.group}:{self.artifact}"

    def signature(self, j: int) -> str:
        return f"{self.artifact}.Api.{self.methods[j].name}()"

    def present(self, release: int) -> list[int]:
        return [j for j, m in enumerate(self.methods) if m.introduced <= release]


def _versions(rng: random.Random, n: int) -> list[str]:
    major, minor, patch = 1, 0, 0
    out = []
    for _ in range(n):
        out.append(f"{major}.{minor}" if patch == 0 else f"{major}.{minor}.{patch}")
        roll = rng.random()
        if roll < 0.15:
            major, minor, patch = major + 1, 0, 0
        elif roll < 0.35:
            patch += 1
        else:
            minor, patch = minor + 1, 0
    return out


def _methods(rng: random.Random, n_releases: int, names: list[str]) -> list[_Method]:
    line = 4
    out = []
    for j, name in enumerate(names):
        length = rng.randint(4, 12)
        introduced = 0
        if j > 0 and n_releases > 1 and rng.random() < 0.15:
            introduced = rng.randint(1, n_releases - 1)
        out.append(_Method(name, line, line + length - 1, introduced))
        line += length + 2
    return out


def _source(pkg: _Package, edits: dict[int, str] | None = None) -> list[str]:
    """Synthetic source text for a package file; span lines are stable across releases."""
    last = max(m.end for m in pkg.methods) + 2
    lines = [f"// {pkg.artifact} line {n}" for n in range(1, last + 1)]
    lines[0] = f"package {pkg.group}.{pkg.artifact};"
    for m in pkg.methods:
        lines[m.start - 1] = f"  public void {m.name}() {{"
        for n in range(m.start + 1, m.end):
            lines[n - 1] = f"    step{n}();"
        lines[m.end - 1] = "  }"
    for n, text in (edits or {}).items():
        lines[n - 1] = text
    return lines


def _requirement(rng: random.Random, target: _Package) -> str:
    vs = target.versions
    i = rng.randrange(len(vs))
    roll = rng.random()
    if roll < 0.6 or len(vs) == 1:
        return vs[i]
    if roll < 0.8:
        return f"[{vs[i]},)"
    return f">={vs[i]}"


def _write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _graph_doc(pkg: _Package, release: int) -> dict[str, Any]:
    present = pkg.present(release)
    keep = set(present)
    return {
        "coordinate": f"{pkg.project_id}:{pkg.versions[release]}",
        "nodes": [
            {
                "id": j,
                "signature": pkg.signature(j),
                "file": pkg.file,
                "start_line": pkg.methods[j].start,
                "end_line": pkg.methods[j].end,
                "entrypoint": True,
            }
            for j in present
        ],
        "internal_edges": [[a, b] for a, b in pkg.internal if a in keep and b in keep],
        "external_calls": [[a, s] for a, s in pkg.calls[release] if a in keep],
    }


@dataclass(frozen=True)
class GeneratedCorpus:
    path: Path
    roots: tuple[str, ...]
    advisories: tuple[str, ...]


def _prepare(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        raise FileExistsError(f"{out} is not empty")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_corpus(
    out: Path,
    packages: list[_Package],
    roots: list[str],
    advisories: list[tuple[dict[str, Any], dict[str, Any], list[tuple[str, str]]]],
    meta: dict[str, Any],
) -> GeneratedCorpus:
    registry = Registry()
    for pkg in packages:
        project = Project(pkg.project_id)
        for r, v in enumerate(pkg.versions):
            project.releases[as_version(v)] = Release(as_version(v), tuple(pkg.deps[r]))
        registry.projects[pkg.project_id] = project
        for r in range(len(pkg.versions)):
            name = f"{pkg.group}__{pkg.artifact}__{pkg.versions[r]}.json"
            _write_json(out / "graphs" / name, _graph_doc(pkg, r))
    registry.dump_dir(out / "registry")
    for osv, manifest, diffs in advisories:
        _write_json(out / "advisories" / f"{osv['id']}.json", osv)
        _write_json(out / "patches" / osv["id"] / "manifest.json", manifest)
        for fname, text in diffs:
            (out / "patches" / osv["id"] / fname).write_text(text)
    (out / "roots.txt").write_text("".join(f"{r}\n" for r in sorted(roots)))
    _write_json(out / "corpus.json", meta)
    return GeneratedCorpus(out, tuple(sorted(roots)), tuple(a[0]["id"] for a in advisories))


def _fix_diff(pkg: _Package, lines: list[int]) -> str:
    before = _source(pkg)
    after = _source(pkg, {n: f"    checked{n}();" for n in lines})
    diff = difflib.unified_diff(before, after, f"a/{pkg.file}", f"b/{pkg.file}", lineterm="")
    return "\n".join(diff) + "\n"


def _advisory(
    rng: random.Random, pkg: _Package, adv_id: str
) -> tuple[dict[str, Any], dict[str, Any], list[tuple[str, str]]]:
    n = len(pkg.versions)
    fixed = rng.randint(1, n - 1)
    lower = rng.randint(0, fixed - 1)
    candidates = [j for j, m in enumerate(pkg.methods) if m.introduced <= fixed - 1]
    target = pkg.methods[rng.choice(candidates)]
    interior = list(range(target.start + 1, target.end))
    edited = sorted(rng.sample(interior, rng.randint(1, min(3, len(interior)))))
    # occasionally split the fix over two commits
    commits = [edited]
    if len(edited) > 1 and rng.random() < 0.3:
        commits = [edited[:1], edited[1:]]
    diffs = [(f"fix-{i + 1}.diff", _fix_diff(pkg, lines)) for i, lines in enumerate(commits)]

    introduced = "0" if lower == 0 and rng.random() < 0.5 else pkg.versions[lower]
    sha = f"{rng.getrandbits(160):040x}"
    year = int(adv_id.split("-")[1])
    osv = {
        "id": adv_id,
        "summary": f"Unsafe input handling in {pkg.artifact} {target.name}",
        "published": f"{year}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}T00:00:00Z",
        "modified": f"{year + 1}-01-15T00:00:00Z",
        "affected": [
            {
                "package": {"ecosystem": "Maven", "name": pkg.project_id},
                "ranges": [
                    {
                        "type": "ECOSYSTEM",
                        "events": [{"introduced": introduced}, {"fixed": pkg.versions[fixed]}],
                    }
                ],
            }
        ],
        "references": [
            {"type": "FIX", "url": f"https://github.com/synth/{pkg.artifact}/commit/{sha}"},
            {"type": "WEB", "url": f"https://github.com/synth/{pkg.artifact}/issues/{rng.randint(1, 999)}"},
        ],
        "database_specific": {
            "cwe_ids": sorted(rng.sample(_CWES, rng.randint(1, 2))),
            "severity": rng.choice(_SEVERITIES),
            "cvss_score": round(rng.uniform(2.0, 10.0), 1),
        },
    }
    manifest = {
        "advisory_id": adv_id,
        "project_id": pkg.project_id,
        "last_vulnerable": pkg.versions[fixed - 1],
        "first_patched": pkg.versions[fixed],
        "diff_files": [name for name, _ in diffs],
    }
    return osv, manifest, diffs


def generate(spec: CorpusSpec, out_dir: str | Path) -> GeneratedCorpus:
    """Write a synthetic corpus to ``out_dir`` (which must be empty or absent)."""
    out = _prepare(out_dir)
    rng = random.Random(spec.seed)
    libs: list[_Package] = []
    vulnerable: list[_Package] = []
    for i in range(spec.project_count):
        artifact = f"lib{i:03d}"
        layer = 1 + i * spec.max_depth_target // spec.project_count
        is_vulnerable = rng.random() < spec.vulnerability_rate
        n_rel = rng.randint(2 if is_vulnerable else 1, spec.max_releases)
        names = [f"m{j}" for j in range(rng.randint(2, 6))]
        pkg = _Package(
            LIB_GROUP, artifact, layer, _versions(rng, n_rel), _methods(rng, n_rel, names),
            f"src/main/java/org/synth/{artifact}/Api.java",
        )
        pkg.internal = [
            (a, b) for a in range(len(names)) for b in range(len(names))
            if a != b and rng.random() < spec.call_density * 0.3
        ]
        libs.append(pkg)
        if is_vulnerable:
            vulnerable.append(pkg)

    def wire(pkg: _Package, pool: list[_Package]) -> None:
        chosen = rng.sample(pool, min(len(pool), rng.randint(0, spec.max_direct_deps))) if pool else []
        for r in range(len(pkg.versions)):
            decls = [Declaration(t.project_id, _requirement(rng, t)) for t in chosen]
            calls = []
            for j in pkg.present(r):
                for t in chosen:
                    if rng.random() < spec.call_density:
                        calls.append((j, t.signature(rng.randrange(len(t.methods)))))
            if pool and rng.random() < 0.1:
                extra = rng.choice(pool)
                scope = Scope.TEST if rng.random() < 0.5 else Scope.PROVIDED
                decls.append(Declaration(extra.project_id, extra.versions[-1], scope))
            pkg.deps.append(decls)
            pkg.calls.append(calls)

    for pkg in libs:
        wire(pkg, [t for t in libs if t.layer > pkg.layer])

    apps: list[_Package] = []
    first_layer = [t for t in libs if t.layer == 1]
    for i in range(spec.root_count):
        artifact = f"app{i:03d}"
        names = ["main"] + [f"m{j}" for j in range(1, rng.randint(2, 4))]
        app = _Package(
            APP_GROUP, artifact, 0, ["1.0"], _methods(rng, 1, names),
            f"src/main/java/org/synth/app/{artifact}/Api.java",
        )
        app.internal = [(0, j) for j in range(1, len(names))]
        # mostly first-layer libraries, with some direct links deeper down
        pool = first_layer if rng.random() < 0.7 and first_layer else libs
        wire(app, pool)
        apps.append(app)

    advisories = []
    for n, pkg in enumerate(vulnerable):
        adv_id = f"SYN-{2015 + rng.randint(0, 8)}-{n + 1:04d}"
        advisories.append(_advisory(rng, pkg, adv_id))

    roots = [f"{a.project_id}:{a.versions[0]}" for a in apps]
    meta = {"preset": None, **asdict(spec)}
    corpus = _write_corpus(out, libs + apps, roots, advisories, meta)
    logger.info("generated %d libraries, %d roots, %d advisories in %s",
                len(libs), len(apps), len(advisories), out)
    return corpus


# ---------------------------------------------------------------------- preset

FIGURE1_ROOT = "org.example:a:1.0"
FIGURE1_ADVISORY = "SYN-2021-0001"


def figure1(out_dir: str | Path) -> GeneratedCorpus:
    """Three packages: A.Main() -> A.Foo() -> B.Bar() -> C.Zeta(), with Zeta fixed in C 1.1."""
    out = _prepare(out_dir)
    registry = Registry([
        Project("org.example:a", {as_version("1.0"): Release(
            as_version("1.0"), (Declaration("org.example:b", "1.0"),))}),
        Project("org.example:b", {as_version("1.0"): Release(
            as_version("1.0"), (Declaration("org.example:c", "1.0"),))}),
        Project("org.example:c", {
            as_version("1.0"): Release(as_version("1.0")),
            as_version("1.1"): Release(as_version("1.1")),
        }),
    ])
    registry.dump_dir(out / "registry")

    def node(i: int, sig: str, file: str, start: int, end: int) -> dict[str, Any]:
        return {"id": i, "signature": sig, "file": file, "start_line": start,
                "end_line": end, "entrypoint": True}

    graphs = {
        "org.example:a:1.0": ([node(0, "A.Main()", "A.java", 3, 6), node(1, "A.Foo()", "A.java", 8, 12)],
                              [[0, 1]], [[1, "B.Bar()"]]),
        "org.example:b:1.0": ([node(0, "B.Bar()", "B.java", 3, 7), node(1, "B.Baz()", "B.java", 9, 12)],
                              [], [[0, "C.Zeta()"]]),
    }
    for v in ("1.0", "1.1"):
        graphs[f"org.example:c:{v}"] = (
            [node(0, "C.Zeta()", "C.java", 3, 9), node(1, "C.Other()", "C.java", 11, 14)], [], [])
    for coord, (nodes, internal, external) in graphs.items():
        g, a, v = coord.split(":")
        _write_json(out / "graphs" / f"{g}__{a}__{v}.json", {
            "coordinate": coord, "nodes": nodes,
            "internal_edges": internal, "external_calls": external,
        })

    before = ["class C {", "", "  void Zeta() {", "    String s = input();", "    eval(s);",
              "    log(s);", "    done();", "    return;", "  }", "", "  void Other() {",
              "    noop();", "    noop();", "  }", "}"]
    after = list(before)
    after[4] = "    eval(sanitize(s));"
    diff = "\n".join(difflib.unified_diff(before, after, "a/C.java", "b/C.java", lineterm="")) + "\n"
    osv = {
        "id": FIGURE1_ADVISORY,
        "summary": "Code injection in C.Zeta",
        "published": "2021-03-01T00:00:00Z",
        "modified": "2021-04-01T00:00:00Z",
        "affected": [{
            "package": {"ecosystem": "Maven", "name": "org.example:c"},
            "ranges": [{"type": "ECOSYSTEM", "events": [{"introduced": "0"}, {"fixed": "1.1"}]}],
        }],
        "references": [{"type": "FIX", "url": "https://github.com/example/c/commit/" + "ab" * 20}],
        "database_specific": {"cwe_ids": ["CWE-94"], "severity": "HIGH", "cvss_score": 8.1},
    }
    manifest = {
        "advisory_id": FIGURE1_ADVISORY, "project_id": "org.example:c",
        "last_vulnerable": "1.0", "first_patched": "1.1", "diff_files": ["fix.diff"],
    }
    _write_json(out / "advisories" / f"{FIGURE1_ADVISORY}.json", osv)
    _write_json(out / "patches" / FIGURE1_ADVISORY / "manifest.json", manifest)
    (out / "patches" / FIGURE1_ADVISORY / "fix.diff").write_text(diff)
    (out / "roots.txt").write_text(FIGURE1_ROOT + "\n")
    _write_json(out / "corpus.json", {"preset": "figure1"})
    return GeneratedCorpus(out, (FIGURE1_ROOT,), (FIGURE1_ADVISORY,))


PRESETS = {"figure1": figure1}
