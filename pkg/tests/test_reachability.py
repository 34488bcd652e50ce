from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import shortest_by_enumeration
from vulnreach.advisory import Advisory, AdvisoryCollection
from vulnreach.callgraph import EdgeKind, GlobalNode, WholeProgramGraph
from vulnreach.dependencies import MAX, Coordinate, resolve
from vulnreach.fixtures import FIGURE1_ADVISORY, FIGURE1_ROOT
from vulnreach.pipeline import Analyzer
from vulnreach.reachability import (
    AnalysisSetting,
    CoveragePoint,
    Finding,
    Granularity,
    RootVerdict,
    SweepEntry,
    VulnerableCallChain,
    analyze_method_level,
    analyze_package_level,
    check_ascending,
    coverage_curve,
    depth_sweep,
    verify_chain,
)
from vulnreach.versioning import parse_range

from test_dependencies import make_registry

ROOT = Coordinate.parse("g:root:1")


def whole_graph(owner_depth, node_owners, edge_pairs, vulnerable):
    """Build a stitched graph directly; node_owners[i] is the owner of gid i."""
    nodes = tuple(GlobalNode(i, o, f"{o.artifact}.m{i}()") for i, o in enumerate(node_owners))
    edges: dict[int, dict[int, EdgeKind]] = {}
    for a, b in edge_pairs:
        kind = EdgeKind.INTERNAL if node_owners[a] == node_owners[b] else EdgeKind.EXTERNAL
        edges.setdefault(a, {})[b] = kind
    return WholeProgramGraph(ROOT, nodes, edges, {g: frozenset(ids) for g, ids in vulnerable.items()},
                             dict(owner_depth))


def chain_fixture():
    """root -> d1 -> d2 -> d3, with the only vulnerable method in d3."""
    owners = [ROOT] + [Coordinate.parse(f"g:d{i}:1") for i in (1, 2, 3)]
    depth = {o: i for i, o in enumerate(owners)}
    return whole_graph(depth, owners, [(0, 1), (1, 2), (2, 3)], {3: {"ADV-1"}})


class TestFigure1:
    def test_depth_limits(self, figure1_dir):
        an = Analyzer.load(figure1_dir)
        assert not an.analyze(FIGURE1_ROOT, AnalysisSetting(Granularity.METHOD, 1)).vulnerable
        for k in (2, MAX):
            verdict = an.analyze(FIGURE1_ROOT, AnalysisSetting(Granularity.METHOD, k))
            (f,) = verdict.findings
            assert f.advisory_id == FIGURE1_ADVISORY
            assert f.chain.path[-1] == (Coordinate.parse("org.example:c:1.0"), "C.Zeta()")
            assert f.chain.render() == "A.Foo() -> B.Bar() -> C.Zeta()"
            assert verify_chain(an.context(FIGURE1_ROOT).whole, f.chain)

    def test_package_level(self, figure1_dir):
        an = Analyzer.load(figure1_dir)
        assert not an.analyze(FIGURE1_ROOT, AnalysisSetting(Granularity.PACKAGE, 1)).vulnerable
        (f,) = an.analyze(FIGURE1_ROOT, AnalysisSetting(Granularity.PACKAGE, 2)).findings
        assert (str(f.coordinate), f.depth, f.chain) == ("org.example:c:1.0", 2, None)


class TestMethodLevel:
    def test_unreachable_vulnerable_method(self):
        owners = [ROOT, Coordinate.parse("g:d:1"), Coordinate.parse("g:d:1")]
        g = whole_graph({ROOT: 0, owners[1]: 1}, owners, [(0, 1)], {2: {"ADV-1"}})
        assert not analyze_method_level(g).vulnerable

    def test_root_owned_marks_ignored(self):
        g = whole_graph({ROOT: 0}, [ROOT], [], {0: {"ADV-1"}})
        assert analyze_method_level(g).findings == ()

    def test_chain_fixture_sweep(self):
        g = chain_fixture()
        sweep = depth_sweep(ROOT, [1, 2, 3, MAX], Granularity.METHOD, whole=g)
        assert [e.cumulative_advisories for e in sweep] == [0, 0, 1, 1]
        assert [e.exact_level_advisories for e in sweep] == [0, 0, 1, None]
        (f,) = sweep[-1].verdict.findings
        assert f.chain.length == 3 and f.depth == 3

    def test_one_chain_per_advisory_and_node(self):
        d = Coordinate.parse("g:d:1")
        g = whole_graph({ROOT: 0, d: 1}, [ROOT, ROOT, d, d], [(0, 2), (1, 2), (2, 3), (0, 3)],
                        {2: {"A", "B"}, 3: {"A"}})
        findings = analyze_method_level(g).findings
        assert [(f.advisory_id, f.chain.path[-1][1]) for f in findings] == [
            ("A", "d.m2()"), ("A", "d.m3()"), ("B", "d.m2()")]
        assert all(f.chain.length == 1 for f in findings)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 1_000_000))
def test_method_level_against_enumeration(seed):
    rng = random.Random(seed)
    deps = [Coordinate.parse(f"g:d{i}:1") for i in range(rng.randint(1, 4))]
    depth = {ROOT: 0, **{d: rng.randint(1, 3) for d in deps}}
    n = rng.randint(2, 12)
    owners = [ROOT] + [rng.choice([ROOT, *deps]) for _ in range(n - 1)]
    pairs = {(rng.randrange(n), rng.randrange(n)) for _ in range(rng.randint(0, 30))}
    pairs = {(a, b) for a, b in pairs if a != b}
    vulnerable = {i: {f"ADV-{rng.randint(1, 3)}"} for i in rng.sample(range(n), rng.randint(0, min(3, n)))}
    g = whole_graph(depth, owners, pairs, vulnerable)

    adj: dict[int, list[int]] = {}
    for a, b in pairs:
        adj.setdefault(a, []).append(b)
    sources = [i for i in range(n) if owners[i] == ROOT]
    for k in (1, 2, 3, MAX):
        allowed = {i for i in range(n) if k == MAX or depth[owners[i]] <= k}
        dist = shortest_by_enumeration(adj, sources, allowed)
        expected = {(adv, i) for i, ids in vulnerable.items() if owners[i] != ROOT and i in dist for adv in ids}
        verdict = analyze_method_level(g, k)
        got = {(f.advisory_id, g.find(*f.chain.path[-1]).gid) for f in verdict.findings}
        assert got == expected
        for f in verdict.findings:
            gids = [g.find(*step).gid for step in f.chain.path]
            assert f.chain.length == dist[gids[-1]]
            assert gids[0] in sources
            assert all(b in adj.get(a, ()) for a, b in zip(gids, gids[1:]))
            assert all(i in allowed for i in gids)
            assert verify_chain(g, f.chain)


def test_verify_chain_rejects_bad_chains():
    g = chain_fixture()
    path = tuple((n.owner, n.signature) for n in g.nodes)
    assert verify_chain(g, VulnerableCallChain("ADV-1", path))
    assert not verify_chain(g, VulnerableCallChain("ADV-2", path))  # wrong advisory
    assert not verify_chain(g, VulnerableCallChain("ADV-1", path[1:]))  # does not start in root
    assert not verify_chain(g, VulnerableCallChain("ADV-1", (path[0], path[3])))  # missing edge
    assert not verify_chain(g, VulnerableCallChain("ADV-1", (path[0], (ROOT, "nope()"))))


# ----------------------------------------------------------------- package level


def test_package_level_against_brute_force():
    rng = random.Random(4)
    for _ in range(40):
        names = [f"g:p{i}" for i in range(6)]
        spec = {"g:root": {"1": [(p, "1.0") for p in rng.sample(names, 2)]}}
        for i, p in enumerate(names):
            later = names[i + 1:]
            spec[p] = {"1.0": [(q, "1.0") for q in rng.sample(later, min(len(later), rng.randint(0, 2)))]}
        reg = make_registry(spec)
        kb = AdvisoryCollection(
            Advisory(f"ADV-{j}", affected_ranges=((rng.choice(names), parse_range(rng.choice(["<2", ">1.0", "*"]))),))
            for j in range(4)
        )
        dep = resolve("g:root:1", reg)
        for k in (1, 2, 3, MAX):
            want = {
                (a.id, c)
                for c, d in dep.depth.items()
                if 1 <= d and (k == MAX or d <= k)
                for a in kb
                for pid, r in a.affected_ranges
                if pid == c.project_id and r.matches(c.version)
            }
            got = {(f.advisory_id, f.coordinate) for f in analyze_package_level(dep, kb, k).findings}
            assert got == want


# --------------------------------------------------------------------- verdicts


class TestVerdict:
    def test_chain_required_for_method_findings(self):
        with pytest.raises(ValueError):
            RootVerdict(ROOT, AnalysisSetting(Granularity.METHOD), (Finding("A", ROOT, 1),))
        chain = VulnerableCallChain("A", ((ROOT, "x()"),))
        with pytest.raises(ValueError):
            RootVerdict(ROOT, AnalysisSetting(Granularity.PACKAGE), (Finding("A", ROOT, 1, chain),))

    def test_json_round_trip(self):
        verdict = analyze_method_level(chain_fixture())
        doc = json.loads(json.dumps(verdict.to_json()))
        assert RootVerdict.from_json(doc) == verdict
        doc["vulnerable"] = False
        with pytest.raises(ValueError):
            RootVerdict.from_json(doc)
        entry = SweepEntry(2, verdict)
        assert SweepEntry.from_json(json.loads(json.dumps(entry.to_json()))) == entry

    def test_setting_labels(self):
        s = AnalysisSetting.parse("method@3")
        assert s == AnalysisSetting(Granularity.METHOD, 3) and s.label == "method@3"
        assert AnalysisSetting.parse("package").depth == MAX
        with pytest.raises(ValueError):
            AnalysisSetting.parse("file@2")

    def test_ascending_k(self):
        assert check_ascending([1, "2", "max"]) == [1, 2, MAX]
        for bad in ([2, 1], [1, 1], [MAX, 3]):
            with pytest.raises(ValueError):
                check_ascending(bad)


# ---------------------------------------------------------------------- coverage


def _entries(flags):
    """flags: vulnerable-or-not at k = 1, 2, MAX."""
    out = []
    for k, flag in zip((1, 2, MAX), flags):
        setting = AnalysisSetting(Granularity.PACKAGE, k)
        findings = (Finding("A", Coordinate.parse("g:x:1"), 1),) if flag else ()
        out.append(SweepEntry(k, RootVerdict(ROOT, setting, findings)))
    return out


class TestCoverage:
    def test_curve(self):
        sweeps = {Coordinate.parse(f"g:r{i}:1"): _entries(f) for i, f in enumerate(
            [(False, True, True), (True, True, True), (False, False, False), (False, False, True)])}
        assert [(p.covered, p.total, p.ratio) for p in coverage_curve(sweeps)] == [
            (1, 3, 1 / 3), (2, 3, 2 / 3), (3, 3, 1.0)]

    def test_all_at_depth_one(self):
        curve = coverage_curve({ROOT: _entries((True, True, True))})
        assert [p.ratio for p in curve] == [1.0, 1.0, 1.0]

    def test_undefined_when_nothing_vulnerable(self):
        curve = coverage_curve({ROOT: _entries((False, False, False))})
        assert curve[-1] == CoveragePoint(MAX, 0, 0, None)
        assert coverage_curve({}) == []

    def test_missing_max_rejected(self):
        with pytest.raises(ValueError):
            coverage_curve({ROOT: _entries((True, True, True))[:2]})


def test_method_findings_within_package_findings(seed0_analyzer, seed0_corpus):
    for root in seed0_corpus.roots[:40]:
        for k in (1, 2, MAX):
            pkg = seed0_analyzer.analyze(root, AnalysisSetting(Granularity.PACKAGE, k))
            meth = seed0_analyzer.analyze(root, AnalysisSetting(Granularity.METHOD, k))
            assert {(f.advisory_id, f.coordinate) for f in meth.findings} <= {
                (f.advisory_id, f.coordinate) for f in pkg.findings}
