"""Version ordering and range constraints.

Versions follow the Maven token/qualifier convention: a version string is split
on ``.``, ``-`` and digit/letter transitions, qualifiers are ranked
``alpha < beta < milestone < rc == cr < snapshot < "" < sp < other``, and
numeric tokens outrank qualifiers.  Maven's own comparator is not transitive on
some mixed forms (``1.sp < 1-alpha < 1 < 1.sp``), so comparison here goes through
a flattened sort key that agrees with Maven on well-formed releases while being a
strict total order on everything else.

    >>> parse_version("1.0-alpha") < parse_version("1.0") < parse_version("1.0-sp")
    True
    >>> parse_version("1.0") == parse_version("1.0.0")
    True
    >>> sorted(affected_versions(["0.9", "1.0", "1.5", "2.0"],
    ...                          [parse_range(">1.0,<2.0")]).vulnerable_versions)
    [PackageVersion('1.5')]
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

from .errors import EmptyVersion, MalformedRange, MalformedVersion

_QUALIFIERS = ("alpha", "beta", "milestone", "rc", "snapshot", "", "sp")
_RELEASE = _QUALIFIERS.index("")
_ALIASES = {"ga": "", "final": "", "release": "", "cr": "rc"}
_SHORT = {"a": "alpha", "b": "beta", "m": "milestone"}

# Sort-key groups for one position of the flattened token stream.
_PRE_QUALIFIER = 0  # alpha .. snapshot
_SUBLIST_BELOW = 1  # hyphen segment whose content sorts before a release
_END = 2  # end of version, equivalent to trailing zeros / "ga"
_POST_QUALIFIER = 3  # sp, then unknown qualifiers lexicographically
_SUBLIST_ABOVE = 4
_NUMBER = 5

_END_KEY = (_END, 0, "")


def _qualifier(text: str, followed_by_digit: bool) -> str:
    if followed_by_digit and len(text) == 1:
        text = _SHORT.get(text, text)
    return _ALIASES.get(text, text)


def _is_null(token: int | str) -> bool:
    return token == 0 or token == ""


def _segments(text: str) -> list[list[int | str]]:
    """Split into hyphen/transition segments of numeric and qualifier tokens."""
    segments: list[list[int | str]] = [[]]
    current = segments[0]
    start = 0
    digits = False

    def token(buf: str, numeric: bool, followed_by_digit: bool = False) -> int | str:
        return int(buf) if numeric else _qualifier(buf, followed_by_digit)

    def new_segment() -> list[int | str]:
        segments.append([])
        return segments[-1]

    for i, c in enumerate(text):
        if c == "." or c == "-":
            current.append(0 if i == start else token(text[start:i], digits))
            start = i + 1
            if c == "-":
                current = new_segment()
        elif "0" <= c <= "9":
            if not digits and i > start:
                current.append(token(text[start:i], False, followed_by_digit=True))
                start = i
                current = new_segment()
            digits = True
        else:
            if digits and i > start:
                current.append(token(text[start:i], True))
                start = i
                current = new_segment()
            digits = False
    if len(text) > start:
        current.append(token(text[start:], digits))
    return segments


def _canonical(segments: list[list[int | str]]) -> list[list[int | str]]:
    """Drop null runs that end a segment or precede a qualifier.

    Retained null runs always precede a non-zero number and are rewritten to 0.
    """
    out = []
    for seg in segments:
        kept: list[int | str] = []
        run = 0
        for tok in seg:
            if _is_null(tok):
                run += 1
                continue
            if isinstance(tok, int):
                kept.extend([0] * run)
            run = 0
            kept.append(tok)
        out.append(kept)
    while out and not out[-1]:
        out.pop()
    return [seg for i, seg in enumerate(out) if seg or i == 0]


def _token_key(tok: int | str) -> tuple[int, int, str]:
    if isinstance(tok, int):
        return (_NUMBER, tok, "")
    if tok in _QUALIFIERS:
        rank = _QUALIFIERS.index(tok)
        if rank < _RELEASE:
            return (_PRE_QUALIFIER, rank, "")
        return (_POST_QUALIFIER, 0, "")
    return (_POST_QUALIFIER, 1, tok)


def _flatten(segments: list[list[int | str]]) -> tuple[tuple, tuple]:
    keys: list[tuple[int, int, str]] = []
    tokens: list[int | str] = []
    for i, seg in enumerate(segments):
        if i > 0:
            # a hyphen segment runs to the end of the version, so it sorts
            # against END by its first token
            above = _token_key(seg[0]) > _END_KEY
            keys.append((_SUBLIST_ABOVE if above else _SUBLIST_BELOW, 0, ""))
            tokens.append("-")
        for tok in seg:
            keys.append(_token_key(tok))
            tokens.append(tok)
    keys.append(_END_KEY)
    return tuple(keys), tuple(tokens)


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class PackageVersion:
    """A release identifier with a total order.

    Equality and hashing follow the normalized tokens, so ``1.0`` and ``1.0.0``
    are the same version even though ``original`` differs.
    """

    original: str
    tokens: tuple = field(repr=False)
    _key: tuple = field(repr=False, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PackageVersion):
            return NotImplemented
        return self._key == other._key

    def __lt__(self, other: PackageVersion) -> bool:
        if not isinstance(other, PackageVersion):
            return NotImplemented
        return self._key < other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __str__(self) -> str:
        return self.original

    def __repr__(self) -> str:
        return f"PackageVersion({self.original!r})"

    @property
    def sort_key(self) -> tuple:
        return self._key


@functools.lru_cache(maxsize=65536)
def parse_version(text: str) -> PackageVersion:
    if not text:
        raise EmptyVersion("version string is empty")
    if any(c.isspace() for c in text):
        raise MalformedVersion(f"whitespace in version {text!r}")
    key, tokens = _flatten(_canonical(_segments(text.lower())))
    return PackageVersion(text, tokens, key)


def as_version(value: str | PackageVersion) -> PackageVersion:
    return value if isinstance(value, PackageVersion) else parse_version(value)


class Ordering(enum.IntEnum):
    LT = -1
    EQ = 0
    GT = 1


def compare(a: PackageVersion | str, b: PackageVersion | str) -> Ordering:
    ka, kb = as_version(a).sort_key, as_version(b).sort_key
    if ka < kb:
        return Ordering.LT
    return Ordering.GT if ka > kb else Ordering.EQ


# --------------------------------------------------------------------------- ranges


class RangeSyntax(str, enum.Enum):
    MAVEN_BRACKET = "maven"  # [1.0,2.0) (,1.4] [1.5]
    COMPARATOR_LIST = "comparator"  # >1.0,<2.0 ; =1.4


@dataclass(frozen=True)
class Bound:
    version: PackageVersion
    inclusive: bool


@dataclass(frozen=True)
class Clause:
    """A single interval; missing bounds are unbounded."""

    lower: Bound | None = None
    upper: Bound | None = None

    def __post_init__(self) -> None:
        lo, hi = self.lower, self.upper
        if lo is not None and hi is not None:
            if lo.version > hi.version or (
                lo.version == hi.version and not (lo.inclusive and hi.inclusive)
            ):
                raise MalformedRange(f"empty or reversed interval {self.to_text()}")

    def matches(self, v: PackageVersion) -> bool:
        lo, hi = self.lower, self.upper
        if lo is not None and (v < lo.version or (v == lo.version and not lo.inclusive)):
            return False
        if hi is not None and (v > hi.version or (v == hi.version and not hi.inclusive)):
            return False
        return True

    def to_text(self, syntax: RangeSyntax = RangeSyntax.COMPARATOR_LIST) -> str:
        lo, hi = self.lower, self.upper
        if syntax is RangeSyntax.MAVEN_BRACKET:
            if lo and hi and lo.version == hi.version:
                return f"[{lo.version}]"
            left = ("[" if lo.inclusive else "(") + str(lo.version) if lo else "("
            right = str(hi.version) + ("]" if hi.inclusive else ")") if hi else ")"
            return f"{left},{right}"
        if lo and hi and lo.version == hi.version:
            return f"={lo.version}"
        parts = []
        if lo:
            parts.append((">=" if lo.inclusive else ">") + str(lo.version))
        if hi:
            parts.append(("<=" if hi.inclusive else "<") + str(hi.version))
        return ",".join(parts) or "*"


@dataclass(frozen=True)
class VersionRange:
    """Union of clauses; an empty clause tuple matches nothing."""

    clauses: tuple[Clause, ...] = ()

    def matches(self, v: PackageVersion | str) -> bool:
        v = as_version(v)
        return any(c.matches(v) for c in self.clauses)

    @property
    def unbounded_below(self) -> bool:
        return any(c.lower is None for c in self.clauses)

    def to_text(self, syntax: RangeSyntax = RangeSyntax.COMPARATOR_LIST) -> str:
        sep = "," if syntax is RangeSyntax.MAVEN_BRACKET else ";"
        return sep.join(c.to_text(syntax) for c in self.clauses)

    def __str__(self) -> str:
        return self.to_text()

    @classmethod
    def exact(cls, v: PackageVersion | str) -> VersionRange:
        b = Bound(as_version(v), True)
        return cls((Clause(b, b),))


_OPERATOR_CHARS = set("<>=~^!*,;[]()")


def _version_in_range(text: str, source: str) -> PackageVersion:
    if _OPERATOR_CHARS & set(text):
        raise MalformedRange(f"unsupported operator in {text!r} of range {source!r}")
    try:
        return parse_version(text.strip())
    except (EmptyVersion, MalformedVersion) as exc:
        raise MalformedRange(f"bad version {text!r} in range {source!r}") from exc


_BRACKET_RE = re.compile(r"\s*([\[(])([^\[\]()]*)([\])])\s*(?:,|$)")
_COMPARATOR_RE = re.compile(r"^\s*(>=|<=|==|=|>|<)?\s*(\S+)\s*$")


def _parse_bracket(text: str) -> VersionRange:
    stripped = text.strip()
    if not stripped:
        raise MalformedRange("empty range")
    if stripped[0] not in "[(":
        # bare version: treated as a pin
        return VersionRange.exact(_version_in_range(stripped, text))
    clauses = []
    pos = 0
    while pos < len(stripped):
        m = _BRACKET_RE.match(stripped, pos)
        if not m or m.end() == pos:
            raise MalformedRange(f"unbalanced or malformed range {text!r}")
        left, body, right = m.groups()
        pos = m.end()
        if "," not in body:
            if left != "[" or right != "]" or not body.strip():
                raise MalformedRange(f"single-version range must be [v] in {text!r}")
            clauses.append(Clause(*([Bound(_version_in_range(body, text), True)] * 2)))
            continue
        lo_text, _, hi_text = body.partition(",")
        if "," in hi_text:
            raise MalformedRange(f"too many bounds in {text!r}")
        lo = Bound(_version_in_range(lo_text, text), left == "[") if lo_text.strip() else None
        hi = Bound(_version_in_range(hi_text, text), right == "]") if hi_text.strip() else None
        if lo is None and left == "[" or hi is None and right == "]":
            raise MalformedRange(f"unbounded side cannot be inclusive in {text!r}")
        clauses.append(Clause(lo, hi))
    if stripped.endswith(","):
        raise MalformedRange(f"trailing comma in {text!r}")
    return VersionRange(tuple(clauses))


def _tighter_lower(a: Bound | None, b: Bound) -> Bound:
    if a is None or b.version > a.version:
        return b
    if b.version == a.version and not b.inclusive:
        return b
    return a


def _tighter_upper(a: Bound | None, b: Bound) -> Bound:
    if a is None or b.version < a.version:
        return b
    if b.version == a.version and not b.inclusive:
        return b
    return a


def _parse_comparators(text: str) -> VersionRange:
    if not text.strip():
        raise MalformedRange("empty range")
    clauses = []
    for clause_text in text.split(";"):
        lower: Bound | None = None
        upper: Bound | None = None
        parts = clause_text.split(",")
        if len(parts) == 1 and parts[0].strip() == "*":
            clauses.append(Clause())
            continue
        for part in parts:
            m = _COMPARATOR_RE.match(part)
            if not m:
                raise MalformedRange(f"malformed comparator {part!r} in {text!r}")
            op, vtext = m.groups()
            v = _version_in_range(vtext, text)
            if op in (None, "=", "=="):
                lower = _tighter_lower(lower, Bound(v, True))
                upper = _tighter_upper(upper, Bound(v, True))
            elif op in (">", ">="):
                lower = _tighter_lower(lower, Bound(v, op == ">="))
            else:
                upper = _tighter_upper(upper, Bound(v, op == "<="))
        clauses.append(Clause(lower, upper))
    return VersionRange(tuple(clauses))


def parse_range(
    text: str, syntax: RangeSyntax | str = RangeSyntax.COMPARATOR_LIST
) -> VersionRange:
    """Parse a constraint.

    ``COMPARATOR_LIST`` ANDs comma-separated comparators inside a clause and ORs
    clauses separated by ``;``.  ``MAVEN_BRACKET`` ORs comma-separated intervals.
    Reversed or empty intervals raise :class:`MalformedRange`.
    """
    syntax = RangeSyntax(syntax)
    if syntax is RangeSyntax.MAVEN_BRACKET:
        return _parse_bracket(text)
    return _parse_comparators(text)


# ------------------------------------------------------------------ affected sets


@dataclass(frozen=True)
class AffectedVersions:
    project_id: str
    all_versions: frozenset[PackageVersion]
    vulnerable_versions: frozenset[PackageVersion]
    # set when a matching constraint had no lower bound, i.e. older releases were
    # assumed vulnerable and callable-level evidence should confirm them
    lower_bound_absent: bool = False

    def __post_init__(self) -> None:
        if not self.vulnerable_versions <= self.all_versions:
            raise ValueError("vulnerable versions must be a subset of all versions")

    def sorted_vulnerable(self) -> list[PackageVersion]:
        return sorted(self.vulnerable_versions)


def affected_versions(
    all_versions: Iterable[PackageVersion | str],
    ranges: Sequence[VersionRange],
    project_id: str = "",
) -> AffectedVersions:
    every = frozenset(as_version(v) for v in all_versions)
    hit = frozenset(v for v in every if any(r.matches(v) for r in ranges))
    return AffectedVersions(
        project_id,
        every,
        hit,
        lower_bound_absent=bool(hit) and any(r.unbounded_below for r in ranges),
    )


class _Versioned(Protocol):
    project_id: str
    version: PackageVersion


class _AdvisorySource(Protocol):
    def for_project(self, project_id: str) -> Iterable: ...


def is_dependency_affected(dep: _Versioned, kb: _AdvisorySource) -> list[str]:
    """Ids of advisories whose ranges for ``dep``'s project include its version.

    A project without advisories yields an empty list.
    """
    hits = set()
    for adv in kb.for_project(dep.project_id):
        for project_id, rng in adv.affected_ranges:
            if project_id == dep.project_id and rng.matches(dep.version):
                hits.add(adv.id)
    return sorted(hits)
