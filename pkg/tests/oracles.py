"""Independent reference implementations used by the tests.

Nothing here imports the package under test.
"""

from __future__ import annotations

import difflib
import itertools
from typing import Iterable, Mapping, Sequence

# --------------------------------------------------------------------------
# Maven ComparableVersion, ported item-for-item (list items compare against
# "null" padding).  It is not a total order on arbitrary strings, so tests only
# compare against it on a grammar where it is well behaved.

_QUALIFIERS = ["alpha", "beta", "milestone", "rc", "snapshot", "", "sp"]
_ALIASES = {"ga": "", "final": "", "release": "", "cr": "rc"}


def _qualifier_rank(q: str) -> str:
    return str(_QUALIFIERS.index(q)) if q in _QUALIFIERS else f"{len(_QUALIFIERS)}-{q}"


def _sign(x) -> int:
    return (x > 0) - (x < 0)


class _Int:
    def __init__(self, value: int):
        self.value = value

    def is_null(self) -> bool:
        return self.value == 0

    def compare(self, other) -> int:
        if other is None:
            return 0 if self.value == 0 else 1
        if isinstance(other, _Int):
            return _sign(self.value - other.value)
        return 1  # numbers beat qualifiers and lists


class _Str:
    def __init__(self, value: str, followed_by_digit: bool):
        if followed_by_digit and len(value) == 1:
            value = {"a": "alpha", "b": "beta", "m": "milestone"}.get(value, value)
        self.value = _ALIASES.get(value, value)

    def is_null(self) -> bool:
        return _qualifier_rank(self.value) == _qualifier_rank("")

    def compare(self, other) -> int:
        mine = _qualifier_rank(self.value)
        if other is None:
            theirs = _qualifier_rank("")
        elif isinstance(other, _Str):
            theirs = _qualifier_rank(other.value)
        else:
            return -1
        return (mine > theirs) - (mine < theirs)


class _List(list):
    def is_null(self) -> bool:
        return not self

    def normalize(self) -> None:
        for i in range(len(self) - 1, -1, -1):
            if self[i].is_null():
                del self[i]
            elif not isinstance(self[i], _List):
                break

    def compare(self, other) -> int:
        if other is None:
            for item in self:
                r = item.compare(None)
                if r:
                    return r
            return 0
        if isinstance(other, _Int):
            return -1
        if isinstance(other, _Str):
            return 1
        for left, right in itertools.zip_longest(self, other):
            if left is None:
                r = -right.compare(None)
            else:
                r = left.compare(right)
            if r:
                return r
        return 0


def maven_parse(text: str) -> _List:
    text = text.lower()
    items = current = _List()
    stack = [current]
    digit = False
    start = 0

    def item(is_digit: bool, buf: str):
        return _Int(int(buf)) if is_digit else _Str(buf, False)

    def push_list() -> None:
        nonlocal current
        sub = _List()
        current.append(sub)
        current = sub
        stack.append(sub)

    for i, c in enumerate(text):
        if c == ".":
            current.append(_Int(0) if i == start else item(digit, text[start:i]))
            start = i + 1
        elif c == "-":
            current.append(_Int(0) if i == start else item(digit, text[start:i]))
            start = i + 1
            push_list()
        elif c.isdigit():
            if not digit and i > start:
                current.append(_Str(text[start:i], True))
                start = i
                push_list()
            digit = True
        else:
            if digit and i > start:
                current.append(item(True, text[start:i]))
                start = i
                push_list()
            digit = False
    if len(text) > start:
        current.append(item(digit, text[start:]))
    while stack:
        stack.pop().normalize()
    return items


def maven_compare(a: str, b: str) -> int:
    return maven_parse(a).compare(maven_parse(b))


# --------------------------------------------------------------------------
# graphs


def all_simple_paths(adj: Mapping[int, Iterable[int]], src: int) -> Iterable[list[int]]:
    """Every simple path starting at ``src`` (including the trivial one)."""
    stack = [[src]]
    while stack:
        path = stack.pop()
        yield path
        for nxt in adj.get(path[-1], ()):
            if nxt not in path:
                stack.append(path + [nxt])


def shortest_by_enumeration(
    adj: Mapping[int, Iterable[int]], sources: Iterable[int], allowed: set[int] | None = None
) -> dict[int, int]:
    """Minimum hop count to every node reachable from any source, by enumerating paths."""
    best: dict[int, int] = {}
    for s in sources:
        if allowed is not None and s not in allowed:
            continue
        for path in all_simple_paths(adj, s):
            if allowed is not None and any(n not in allowed for n in path):
                continue
            end = path[-1]
            if end not in best or len(path) - 1 < best[end]:
                best[end] = len(path) - 1
    return best


# --------------------------------------------------------------------------
# diffs and spans


def changed_lines(before: Sequence[str], after: Sequence[str]) -> tuple[set[int], set[int]]:
    """1-based line numbers removed from ``before`` and added in ``after``."""
    removed: set[int] = set()
    added: set[int] = set()
    matcher = difflib.SequenceMatcher(a=list(before), b=list(after), autojunk=False)
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag in ("replace", "delete"):
            removed.update(range(i1 + 1, i2 + 1))
        if tag in ("replace", "insert"):
            added.update(range(j1 + 1, j2 + 1))
    return removed, added


def apply_unified_diff(before: Sequence[str], diff_text: str) -> list[str]:
    """Apply a single-file unified diff (no fuzz) and return the new lines."""
    out: list[str] = []
    src = 0
    lines = diff_text.splitlines()
    i = 0
    while i < len(lines) and not lines[i].startswith("@@"):
        i += 1
    while i < len(lines):
        header = lines[i]
        old_start = int(header.split()[1][1:].split(",")[0])
        # hunks with zero old lines name the line *before* the insertion point
        old_len = header.split()[1][1:].split(",")
        if len(old_len) == 2 and old_len[1] == "0":
            old_start += 1
        out.extend(before[src:old_start - 1])
        src = old_start - 1
        i += 1
        while i < len(lines) and not lines[i].startswith("@@"):
            tag, text = lines[i][:1], lines[i][1:]
            if tag == " ":
                assert before[src] == text, (src, before[src], text)
                out.append(text)
                src += 1
            elif tag == "-":
                assert before[src] == text, (src, before[src], text)
                src += 1
            elif tag == "+":
                out.append(text)
            i += 1
    out.extend(before[src:])
    return out


def scan_spans(
    lines_by_file: Mapping[str, Iterable[int]],
    spans: Iterable[tuple[str, str, int, int]],
) -> set[str]:
    """Signatures of spans (signature, file, start, end) containing any given line."""
    hits = set()
    for sig, file, start, end in spans:
        for line in lines_by_file.get(file, ()):
            if start <= line <= end:
                hits.add(sig)
    return hits
