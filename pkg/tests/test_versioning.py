from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import maven_compare
from vulnreach.advisory import Advisory, AdvisoryCollection
from vulnreach.dependencies import Coordinate
from vulnreach.errors import EmptyVersion, MalformedRange, MalformedVersion
from vulnreach.versioning import (
    Ordering,
    RangeSyntax,
    VersionRange,
    affected_versions,
    compare,
    is_dependency_affected,
    parse_range,
    parse_version,
)

V = parse_version

# arbitrary version-ish strings: digits, letters, separators
_token = st.one_of(
    st.integers(0, 20).map(str),
    st.sampled_from(["alpha", "beta", "a", "b", "m", "rc", "cr", "snapshot", "ga", "final",
                     "release", "sp", "foo", "x"]),
)
any_version = st.builds(
    lambda toks, seps: "".join(t + s for t, s in zip(toks, seps + [""])),
    st.lists(_token, min_size=1, max_size=6),
    st.lists(st.sampled_from([".", "-", ""]), min_size=5, max_size=5),
).filter(bool)

# numeric dots plus an optional hyphen qualifier: Maven's comparator is a total order here
_qual = st.sampled_from(["alpha", "beta", "milestone", "rc", "cr", "snapshot", "ga", "final", "sp", "foo"])
well_formed = st.builds(
    lambda nums, q, qn: ".".join(map(str, nums)) + (f"-{q}{qn}" if q else ""),
    st.lists(st.integers(0, 12), min_size=1, max_size=4),
    st.one_of(st.none(), _qual),
    st.sampled_from(["", "1", "2", "10"]),
)


class TestOrder:
    @pytest.mark.parametrize("a,b", [("1.0", "1.0.0"), ("1", "1.0.0.0"), ("1.0-ga", "1.0"),
                                     ("1.0-final", "1"), ("1.0-cr1", "1.0-rc1"), ("1.0a1", "1.0-alpha-1")])
    def test_equal_forms(self, a, b):
        assert V(a) == V(b)
        assert hash(V(a)) == hash(V(b))
        assert compare(a, b) is Ordering.EQ

    @pytest.mark.parametrize("chain", [
        ["1.0-alpha", "1.0-beta", "1.0-milestone", "1.0-rc", "1.0-snapshot", "1.0", "1.0-sp", "1.0-zzz", "1.0.1"],
        ["1.9.9", "2.0"],
        ["1.0-alpha1", "1.0-alpha2", "1.0-alpha10"],
        ["1.0-rc", "1.0", "1.0-sp"],
    ])
    def test_strict_chains(self, chain):
        parsed = [V(x) for x in chain]
        assert parsed == sorted(parsed)
        for a, b in zip(parsed, parsed[1:]):
            assert a < b and compare(a, b) is Ordering.LT and compare(b, a) is Ordering.GT

    def test_original_is_preserved(self):
        assert V("1.0.0-RC1").original == "1.0.0-RC1"
        assert str(V("2.0")) == "2.0"

    def test_reflexive(self):
        assert compare("3.2-sp1", "3.2-sp1") is Ordering.EQ

    @pytest.mark.parametrize("bad,exc", [("", EmptyVersion), ("1. 0", MalformedVersion), (" 1", MalformedVersion)])
    def test_rejects(self, bad, exc):
        with pytest.raises(exc):
            V(bad)

    @settings(max_examples=400)
    @given(any_version, any_version, any_version)
    def test_order_axioms(self, a, b, c):
        va, vb, vc = V(a), V(b), V(c)
        assert (va < vb) + (va == vb) + (va > vb) == 1
        if va <= vb and vb <= va:
            assert va == vb
        if va <= vb <= vc:
            assert va <= vc
        if va == vb:
            assert hash(va) == hash(vb)

    @settings(max_examples=500)
    @given(well_formed, well_formed)
    def test_agrees_with_maven_on_well_formed_versions(self, a, b):
        assert int(compare(a, b)) == maven_compare(a, b)

    def test_maven_vectors(self):
        # qualifier and number sequences from Maven's own ComparableVersion test suite
        qualifier_seq = ["1-alpha2snapshot", "1-alpha2", "1-alpha-123", "1-beta-2", "1-beta123", "1-m2",
                         "1-m11", "1-rc", "1-cr2", "1-rc123", "1-SNAPSHOT", "1", "1-sp", "1-sp2", "1-sp123",
                         "1-abc", "1-def", "1-pom-1", "1-1-snapshot", "1-1", "1-2", "1-123"]
        number_seq = ["2.0", "2.0.a", "2-1", "2.0.2", "2.0.123", "2.1.0", "2.1-a", "2.1b", "2.1-c",
                      "2.1-1", "2.1.0.1", "2.2", "2.123", "11.a2", "11.a11", "11.b2", "11.b11",
                      "11.m2", "11.m11", "11", "11.a", "11b", "11c", "11m"]
        for seq in (qualifier_seq, number_seq):
            parsed = [V(x) for x in seq]
            for i, j in itertools.combinations(range(len(seq)), 2):
                assert parsed[i] < parsed[j], (seq[i], seq[j])

    def test_maven_reference_is_cyclic_where_ours_is_total(self):
        # the reference comparator cycles on this mixed-separator triple
        a, b, c = "1.sp", "1-alpha", "1"
        assert maven_compare(a, b) < 0 and maven_compare(b, c) < 0 and maven_compare(c, a) < 0
        ordered = sorted([V(a), V(b), V(c)])
        assert ordered[0] < ordered[1] < ordered[2]


class TestRanges:
    def test_comparator_clause(self):
        r = parse_range(">1.0,<2.0")
        (c,) = r.clauses
        assert (c.lower.version, c.lower.inclusive) == (V("1.0"), False)
        assert (c.upper.version, c.upper.inclusive) == (V("2.0"), False)

    def test_unbounded_below_bracket(self):
        r = parse_range("(,1.4]", RangeSyntax.MAVEN_BRACKET)
        (c,) = r.clauses
        assert c.lower is None and c.upper.inclusive and c.upper.version == V("1.4")
        assert r.unbounded_below
        assert r.matches("0.1") and r.matches("1.4") and not r.matches("1.4.1")

    @pytest.mark.parametrize("text,syntax", [
        ("[2.0,1.0]", RangeSyntax.MAVEN_BRACKET),
        ("[1.0,2.0", RangeSyntax.MAVEN_BRACKET),
        ("[1.0,1.0)", RangeSyntax.MAVEN_BRACKET),
        ("[,1.0]", RangeSyntax.MAVEN_BRACKET),
        ("[1.0,2.0),", RangeSyntax.MAVEN_BRACKET),
        (">2.0,<1.0", RangeSyntax.COMPARATOR_LIST),
        (">=1 0", RangeSyntax.COMPARATOR_LIST),
        ("", RangeSyntax.COMPARATOR_LIST),
        ("~>1.0", RangeSyntax.COMPARATOR_LIST),
    ])
    def test_malformed(self, text, syntax):
        with pytest.raises(MalformedRange):
            parse_range(text, syntax)

    def test_bracket_union_and_pin(self):
        r = parse_range("[1.0,1.2),[1.5],(2.0,)", RangeSyntax.MAVEN_BRACKET)
        hits = [v for v in ["0.9", "1.0", "1.1", "1.2", "1.5", "1.6", "2.0", "2.1"] if r.matches(v)]
        assert hits == ["1.0", "1.1", "1.5", "2.1"]

    def test_comparator_or_and_star(self):
        r = parse_range("<1.0;>=2.0,<=2.2;=3.0")
        hits = [v for v in ["0.5", "1.0", "2.0", "2.2", "2.3", "3.0"] if r.matches(v)]
        assert hits == ["0.5", "2.0", "2.2", "3.0"]
        assert parse_range("*").matches("99")

    def test_empty_clause_list_matches_nothing(self):
        assert not VersionRange(()).matches("1.0")

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9), st.booleans(), st.booleans(),
                              st.booleans(), st.booleans()), min_size=1, max_size=3))
    def test_text_round_trip(self, specs):
        parts = []
        for lo, hi, lo_inc, hi_inc, has_lo, has_hi in specs:
            lo, hi = min(lo, hi), max(lo, hi)
            if lo == hi:
                lo_inc = hi_inc = True
            left = ("[" if lo_inc else "(") + f"1.{lo}" if has_lo else "("
            right = f"1.{hi}" + ("]" if hi_inc else ")") if has_hi else ")"
            parts.append(f"{left},{right}")
        text = ",".join(parts)
        r = parse_range(text, RangeSyntax.MAVEN_BRACKET)
        for syntax in RangeSyntax:
            again = parse_range(r.to_text(syntax), syntax)
            for n in range(12):
                for v in (f"1.{n}", f"1.{n}.5", f"1.{n}-rc"):
                    assert again.matches(v) == r.matches(v)


def _brute_force_affected(versions, ranges):
    hit = set()
    for v in versions:
        for r in ranges:
            for c in r.clauses:
                lo_ok = c.lower is None or compare(v, c.lower.version) in (
                    (Ordering.GT, Ordering.EQ) if c.lower.inclusive else (Ordering.GT,))
                hi_ok = c.upper is None or compare(v, c.upper.version) in (
                    (Ordering.LT, Ordering.EQ) if c.upper.inclusive else (Ordering.LT,))
                if lo_ok and hi_ok:
                    hit.add(V(v))
    return hit


class TestAffected:
    def test_strict_bounds(self):
        aff = affected_versions(["0.9", "1.0", "1.5", "2.0"], [parse_range(">1.0,<2.0")], "g:a")
        assert aff.vulnerable_versions == {V("1.5")}
        assert not aff.lower_bound_absent

    def test_empty_inputs(self):
        assert affected_versions(["1.0"], []).vulnerable_versions == frozenset()
        assert affected_versions([], [parse_range("*")]).vulnerable_versions == frozenset()

    def test_lower_bound_flag(self):
        aff = affected_versions(["1.0", "2.0"], [parse_range("<1.5")])
        assert aff.lower_bound_absent and aff.vulnerable_versions == {V("1.0")}

    def test_random_against_brute_force(self):
        rng = random.Random(7)
        for _ in range(50):
            versions = {f"{rng.randint(0, 4)}.{rng.randint(0, 9)}" for _ in range(50)}
            ranges = []
            for _ in range(5):
                a, b = sorted(rng.sample(sorted(versions, key=V), 2), key=V) if len(versions) > 1 else (None, None)
                ranges.append(parse_range(f">={a},<{b}" if a and V(a) < V(b) else f"={a}"))
            got = affected_versions(versions, ranges).vulnerable_versions
            assert got == _brute_force_affected(versions, ranges)

    @given(st.lists(st.integers(0, 30), min_size=1, max_size=20), st.integers(0, 30), st.integers(0, 30))
    def test_monotone_in_ranges(self, nums, lo, hi):
        versions = [f"1.{n}" for n in nums]
        base = [parse_range(f"<=1.{lo}")]
        more = base + [parse_range(f">=1.{hi}")]
        a = affected_versions(versions, base).vulnerable_versions
        b = affected_versions(versions, more).vulnerable_versions
        assert a <= b <= affected_versions(versions, more).all_versions


def test_is_dependency_affected():
    kb = AdvisoryCollection([
        Advisory("ADV-1", affected_ranges=(("g:a", parse_range(">=1.0,<1.4")),)),
        Advisory("ADV-2", affected_ranges=(("g:a", parse_range("<=1.2")), ("g:b", parse_range("*")))),
    ])
    assert is_dependency_affected(Coordinate.parse("g:a:1.2"), kb) == ["ADV-1", "ADV-2"]
    assert is_dependency_affected(Coordinate.parse("g:a:1.4"), kb) == []
    assert is_dependency_affected(Coordinate.parse("g:zzz:1.0"), kb) == []
