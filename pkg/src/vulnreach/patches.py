"""Patch commits to vulnerable callables.

A fix commit is reduced to (file, modified line) pairs.  Lines removed by the fix
are looked up in the last vulnerable release, lines added in the first patched
release, and every callable whose span contains one of them is marked.  The
marks are then carried over to each affected release that still has a callable
with the identical signature.
"""

from __future__ import annotations

import bisect
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .dependencies import Coordinate, as_coordinate
from .errors import MalformedDiff, OverlappingSpans
from .versioning import AffectedVersions, PackageVersion

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FileDiff:
    path: str
    modified_lines_pre: frozenset[int] = frozenset()
    modified_lines_post: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if any(n < 1 for n in self.modified_lines_pre | self.modified_lines_post):
            raise MalformedDiff(f"{self.path}: line numbers must be >= 1")

    def merged(self, other: FileDiff) -> FileDiff:
        return FileDiff(
            self.path,
            self.modified_lines_pre | other.modified_lines_pre,
            self.modified_lines_post | other.modified_lines_post,
        )


@dataclass(frozen=True)
class PatchCommit:
    advisory_id: str
    project_id: str
    file_diffs: tuple[FileDiff, ...]

    def __post_init__(self) -> None:
        if not self.file_diffs:
            raise MalformedDiff(f"{self.advisory_id}: patch touches no files")


@dataclass(frozen=True)
class PatchContext:
    last_vulnerable: Coordinate
    first_patched: Coordinate

    def __post_init__(self) -> None:
        if not self.last_vulnerable.version < self.first_patched.version:
            raise ValueError(
                f"last vulnerable {self.last_vulnerable} must precede first patched "
                f"{self.first_patched}"
            )


@dataclass(frozen=True)
class CallableSpan:
    signature: str
    file: str
    start_line: int
    end_line: int

    def __post_init__(self) -> None:
        if not 1 <= self.start_line <= self.end_line:
            raise ValueError(f"bad span {self.start_line}..{self.end_line} for {self.signature}")

    def contains(self, line: int) -> bool:
        return self.start_line <= line <= self.end_line


class CallableIndex:
    """Per-file callable spans; spans within one file may not overlap."""

    def __init__(self, spans: Iterable[CallableSpan] = ()):
        by_file: dict[str, list[CallableSpan]] = {}
        for span in spans:
            by_file.setdefault(span.file, []).append(span)
        self._files: dict[str, list[CallableSpan]] = {}
        self._starts: dict[str, list[int]] = {}
        self._signatures: set[str] = set()
        for path, group in by_file.items():
            group.sort(key=lambda s: (s.start_line, s.end_line))
            for a, b in zip(group, group[1:]):
                if b.start_line <= a.end_line:
                    raise OverlappingSpans(
                        f"{path}: {a.signature} [{a.start_line},{a.end_line}] overlaps "
                        f"{b.signature} [{b.start_line},{b.end_line}]"
                    )
            self._files[path] = group
            self._starts[path] = [s.start_line for s in group]
            self._signatures.update(s.signature for s in group)

    @property
    def files(self) -> list[str]:
        return sorted(self._files)

    @property
    def signatures(self) -> frozenset[str]:
        return frozenset(self._signatures)

    def spans(self, path: str) -> list[CallableSpan]:
        return list(self._files.get(path, ()))

    def _resolve_path(self, path: str) -> str | None:
        if path in self._files:
            return path
        # diff paths are repository-relative; index paths may be source-root relative
        hits = [f for f in self._files if path.endswith("/" + f) or f.endswith("/" + path)]
        return hits[0] if len(hits) == 1 else None

    def enclosing(self, path: str, line: int) -> CallableSpan | None:
        key = self._resolve_path(path)
        if key is None:
            return None
        i = bisect.bisect_right(self._starts[key], line) - 1
        if i >= 0 and self._files[key][i].contains(line):
            return self._files[key][i]
        return None


# ----------------------------------------------------------------------- diffs

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


def _strip_prefix(path: str) -> str:
    path = path.split("\t")[0].strip()
    if path.startswith('"') and path.endswith('"'):
        path = path[1:-1]
    if path[:2] in ("a/", "b/"):
        path = path[2:]
    return path


def parse_unified_diff(text: bytes | str) -> list[FileDiff]:
    """Extract modified line numbers per file from a unified or git-format diff.

    Removed lines go to ``modified_lines_pre`` (old numbering), added lines to
    ``modified_lines_post`` (new numbering).  Context lines are skipped.  Several
    sections for the same path are merged.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    lines = text.splitlines()
    result: dict[str, FileDiff] = {}
    old_path: str | None = None
    i = 0
    saw_header = False
    while i < len(lines):
        line = lines[i]
        if line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ "):
            old_path = _strip_prefix(line[4:])
            new_path = _strip_prefix(lines[i + 1][4:])
            path = old_path if new_path == "/dev/null" else new_path
            saw_header = True
            i += 2
            pre: set[int] = set()
            post: set[int] = set()
            while i < len(lines) and lines[i].startswith("@@"):
                m = _HUNK_RE.match(lines[i])
                if not m:
                    raise MalformedDiff(f"bad hunk header {lines[i]!r}")
                old_no, old_len = int(m.group(1)), int(m.group(2) or 1)
                new_no, new_len = int(m.group(3)), int(m.group(4) or 1)
                i += 1
                while old_len > 0 or new_len > 0:
                    if i >= len(lines):
                        raise MalformedDiff(f"{path}: hunk truncated")
                    body = lines[i]
                    tag = body[:1]
                    if tag == "\\":
                        i += 1
                        continue
                    if tag == "-" and old_len > 0:
                        pre.add(old_no)
                        old_no += 1
                        old_len -= 1
                    elif tag == "+" and new_len > 0:
                        post.add(new_no)
                        new_no += 1
                        new_len -= 1
                    elif (tag == " " or body == "") and old_len > 0 and new_len > 0:
                        old_no += 1
                        new_no += 1
                        old_len -= 1
                        new_len -= 1
                    else:
                        raise MalformedDiff(f"{path}: line {body!r} does not fit hunk counts")
                    i += 1
                while i < len(lines) and lines[i].startswith("\\"):
                    i += 1
            fd = FileDiff(path, frozenset(pre), frozenset(post))
            result[path] = result[path].merged(fd) if path in result else fd
            continue
        if line.startswith("@@"):
            raise MalformedDiff(f"hunk without file header: {line!r}")
        i += 1
    if not saw_header and text.strip():
        raise MalformedDiff("no file sections found")
    return [result[p] for p in sorted(result)]


def render_unified_diff(diffs: Iterable[FileDiff]) -> str:
    """Render line sets back into a diff with placeholder content.

    Parsing the output yields the same pre/post line sets.
    """
    out: list[str] = []
    for fd in sorted(diffs, key=lambda d: d.path):
        out.append(f"--- a/{fd.path}")
        out.append(f"+++ b/{fd.path}")
        pre, post = fd.modified_lines_pre, fd.modified_lines_post
        if not pre and not post:
            continue
        last_pre, last_post = max(pre, default=0), max(post, default=0)
        body: list[str] = []
        i = j = 1
        n_old = n_new = 0
        while i <= last_pre or j <= last_post:
            if i in pre:
                body.append(f"-old line {i}")
                i += 1
                n_old += 1
            elif j in post:
                body.append(f"+new line {j}")
                j += 1
                n_new += 1
            else:
                body.append(f" context {i}")
                i += 1
                j += 1
                n_old += 1
                n_new += 1
        out.append(f"@@ -1,{n_old} +1,{n_new} @@")
        out.extend(body)
    return "\n".join(out) + "\n"


def merge_file_diffs(groups: Iterable[Iterable[FileDiff]]) -> tuple[FileDiff, ...]:
    """Union several commits' diffs per path."""
    merged: dict[str, FileDiff] = {}
    for group in groups:
        for fd in group:
            merged[fd.path] = merged[fd.path].merged(fd) if fd.path in merged else fd
    return tuple(merged[p] for p in sorted(merged))


# ------------------------------------------------------------------- callables


def locate_vulnerable_callables(
    diffs: Iterable[FileDiff],
    spans_fp: CallableIndex | None,
    spans_lv: CallableIndex | None,
) -> set[str]:
    """Signatures whose span contains a modified line.

    Added lines are matched against the first patched release and removed lines
    against the last vulnerable release; the two results are unioned.
    """
    found: set[str] = set()
    for fd in diffs:
        for index, lines in ((spans_fp, fd.modified_lines_post), (spans_lv, fd.modified_lines_pre)):
            if index is None:
                continue
            for line in lines:
                span = index.enclosing(fd.path, line)
                if span is not None:
                    found.add(span.signature)
    return found


def propagate_to_affected_versions(
    signatures: Iterable[str],
    affected: AffectedVersions,
    callable_indices: Mapping[PackageVersion, CallableIndex | Iterable[str]],
) -> dict[PackageVersion, frozenset[str]]:
    """Map each affected release to the vulnerable signatures it actually has.

    Releases without a callable index are skipped with a warning.
    """
    wanted = frozenset(signatures)
    out: dict[PackageVersion, frozenset[str]] = {}
    for version in sorted(affected.vulnerable_versions):
        index = callable_indices.get(version)
        if index is None:
            logger.warning("%s %s: no callable index, skipping", affected.project_id, version)
            continue
        present = index.signatures if isinstance(index, CallableIndex) else frozenset(index)
        out[version] = wanted & present
    return out


def patch_context(affected: AffectedVersions) -> PatchContext | None:
    """Last vulnerable release and the first release after it that is not affected."""
    if not affected.vulnerable_versions:
        return None
    lv = max(affected.vulnerable_versions)
    later = sorted(v for v in affected.all_versions - affected.vulnerable_versions if v > lv)
    if not later:
        return None
    return PatchContext(Coordinate.of(affected.project_id, lv), Coordinate.of(affected.project_id, later[0]))


# ------------------------------------------------------------------- manifests


@dataclass(frozen=True)
class PatchManifest:
    advisory_id: str
    project_id: str
    last_vulnerable: Coordinate | None
    first_patched: Coordinate | None
    diff_files: tuple[Path, ...] = field(default=())

    @classmethod
    def load(cls, path: str | Path) -> PatchManifest:
        path = Path(path)
        doc = json.loads(path.read_text())
        project_id = doc["project_id"]

        def coord(value: str | None) -> Coordinate | None:
            if not value:
                return None
            # accept a bare version or a full coordinate
            return as_coordinate(value) if value.count(":") == 2 else Coordinate.of(project_id, value)

        return cls(
            doc["advisory_id"],
            project_id,
            coord(doc.get("last_vulnerable")),
            coord(doc.get("first_patched")),
            tuple(path.parent / f for f in doc.get("diff_files", [])),
        )

    def context(self) -> PatchContext | None:
        if self.last_vulnerable and self.first_patched:
            return PatchContext(self.last_vulnerable, self.first_patched)
        return None

    def patch_commit(self) -> PatchCommit:
        diffs = merge_file_diffs(parse_unified_diff(f.read_bytes()) for f in self.diff_files)
        return PatchCommit(self.advisory_id, self.project_id, diffs)


def load_manifests(path: str | Path) -> list[PatchManifest]:
    """Every ``manifest.json`` (or ``*.manifest.json``) below ``path``."""
    root = Path(path)
    files = sorted(set(root.rglob("manifest.json")) | set(root.rglob("*.manifest.json")))
    return [PatchManifest.load(f) for f in files]

