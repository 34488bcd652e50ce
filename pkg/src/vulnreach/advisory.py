"""Advisory knowledge base.

Advisories arrive either as OSV-style JSON (the GitHub advisory database export)
or in the normalized form that :func:`emit_advisory` writes.  Both parse into the
same :class:`Advisory` record.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, NamedTuple
from urllib.parse import urlsplit

from .errors import DuplicateAdvisory, InvalidUrl, MalformedDocument, MissingId
from .versioning import (
    Bound,
    Clause,
    MalformedRange,
    RangeSyntax,
    VersionRange,
    parse_range,
    parse_version,
)

logger = logging.getLogger(__name__)


class Severity(str, enum.Enum):
    CRITICAL = "Critical"
    HIGH = "High"
    MODERATE = "Moderate"
    MEDIUM = "Medium"
    LOW = "Low"
    UNKNOWN = "Unknown"

    @classmethod
    def from_label(cls, label: str | None) -> Severity:
        if not label:
            return cls.UNKNOWN
        for sev in cls:
            if sev.value.lower() == label.strip().lower():
                return sev
        return cls.UNKNOWN

    def unified(self) -> Severity:
        # GitHub says Moderate where NVD says Medium
        return Severity.MEDIUM if self is Severity.MODERATE else self


SEVERITY_ORDER = list(Severity)


class SourceFormat(str, enum.Enum):
    OSV = "osv"
    NORMALIZED = "normalized"


class ReferenceKind(str, enum.Enum):
    COMMIT = "CommitLink"
    PULL_REQUEST = "PullRequest"
    ISSUE = "Issue"
    TRACKER_ITEM = "IssueTrackerItem"
    REVISION = "RevisionLink"
    OTHER = "Other"


@dataclass(frozen=True)
class ReferenceClass:
    url: str
    kind: ReferenceKind


PATCH_KINDS = frozenset({ReferenceKind.COMMIT, ReferenceKind.PULL_REQUEST, ReferenceKind.REVISION})

_SHA_RE = re.compile(r"^[0-9a-f]{6,40}$", re.I)
_JIRA_KEY_RE = re.compile(r"/browse/[A-Z][A-Z0-9_]*-\d+", re.I)


def classify_reference(url: str) -> ReferenceClass:
    """Classify a reference URL by its shape alone.

    Commit links are recognized on any host (GitHub/GitLab ``/commit/<sha>``,
    Bitbucket ``/commits/<sha>``, gitweb ``a=commit``); pull and merge requests
    and issues by their path segments; Bugzilla and Jira by host or path; SVN and
    Mercurial revisions by their query or ``/rev/`` segment.
    """
    if not isinstance(url, str) or not url.strip():
        raise InvalidUrl(f"not a URL: {url!r}")
    parts = urlsplit(url.strip())
    if parts.scheme.lower() not in ("http", "https", "git", "svn", "ssh") or not parts.netloc:
        raise InvalidUrl(f"not an absolute URL: {url!r}")
    host = parts.hostname or ""
    path = parts.path
    segs = [s for s in path.split("/") if s]
    query = parts.query.lower()

    def after(name: str) -> str | None:
        if name in segs:
            i = segs.index(name)
            return segs[i + 1] if i + 1 < len(segs) else ""
        return None

    kind = ReferenceKind.OTHER
    commit = after("commit")
    commits = after("commits")
    if (commit is not None and (commit == "" or _SHA_RE.match(commit) or "id=" in query)) or (
        commits is not None and _SHA_RE.match(commits)
    ):
        kind = ReferenceKind.COMMIT
    elif "a=commit" in query or "a=commitdiff" in query:
        kind = ReferenceKind.COMMIT
    elif after("pull") is not None or after("merge_requests") is not None or after(
        "pull-requests"
    ) is not None:
        kind = ReferenceKind.PULL_REQUEST
    elif "bugzilla" in host or path.endswith("show_bug.cgi"):
        kind = ReferenceKind.TRACKER_ITEM
    elif "jira" in host or "jira" in segs or _JIRA_KEY_RE.search(path):
        kind = ReferenceKind.TRACKER_ITEM
    elif after("issues") is not None:
        kind = ReferenceKind.ISSUE
    elif re.search(r"(^|[&;])(rev|revision|r)=\d+", query) or "viewvc" in path or "svn" in host:
        kind = ReferenceKind.REVISION
    elif after("rev") is not None or after("changeset") is not None:
        kind = ReferenceKind.REVISION
    return ReferenceClass(url, kind)


_EXPLOIT_HOSTS = ("exploit-db.com", "packetstormsecurity.com", "packetstormsecurity.org")


def _is_exploit(url: str, ref_type: str | None) -> bool:
    if ref_type and ref_type.upper() == "EVIDENCE":
        return True
    host = (urlsplit(url).hostname or "").lower()
    return any(host == h or host.endswith("." + h) for h in _EXPLOIT_HOSTS)


@dataclass(frozen=True)
class Advisory:
    """Normalized vulnerability record."""

    id: str
    purls: tuple[str, ...] = ()
    cpe: tuple[str, ...] | None = None
    cvss_score: float | None = None
    cwe_ids: tuple[str, ...] = ()
    severity: Severity = Severity.UNKNOWN
    published: dt.date | None = None
    last_modified: dt.date | None = None
    description: str = ""
    references: tuple[str, ...] = ()
    patch_links: tuple[str, ...] = ()
    exploit_links: tuple[str, ...] = ()
    affected_ranges: tuple[tuple[str, VersionRange], ...] = ()
    aliases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.id:
            raise MissingId("advisory without an id")
        if self.cvss_score is not None and not 0.0 <= self.cvss_score <= 10.0:
            raise MalformedDocument(f"{self.id}: cvss_score {self.cvss_score} outside [0, 10]")
        if self.published and self.last_modified and self.last_modified < self.published:
            raise MalformedDocument(f"{self.id}: last_modified precedes published")
        missing = set(self.patch_links) - set(self.references)
        if missing:
            raise MalformedDocument(f"{self.id}: patch links not in references: {sorted(missing)}")

    @property
    def projects(self) -> list[str]:
        return sorted({p for p, _ in self.affected_ranges})

    def ranges_for(self, project_id: str) -> list[VersionRange]:
        return [r for p, r in self.affected_ranges if p == project_id]


# ------------------------------------------------------------------------ parsing


def _date(value: Any, field_name: str, adv_id: str) -> dt.date | None:
    if value in (None, ""):
        return None
    if not isinstance(value, str):
        raise MalformedDocument(f"{adv_id}: {field_name} is not a string")
    text = value.strip().replace("Z", "+00:00")
    try:
        stamp = dt.datetime.fromisoformat(text)
    except ValueError:
        try:
            return dt.date.fromisoformat(text[:10])
        except ValueError as exc:
            raise MalformedDocument(f"{adv_id}: bad {field_name} {value!r}") from exc
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(dt.timezone.utc)
    return stamp.date()


def _score(value: Any, adv_id: str, strict: bool = False) -> float | None:
    if value is None or value == "":
        return None
    try:
        score = float(value)
    except (TypeError, ValueError):
        if strict:
            raise MalformedDocument(f"{adv_id}: cvss_score {value!r} is not numeric") from None
        return None  # CVSS vectors are not interpreted
    if not 0.0 <= score <= 10.0:
        raise MalformedDocument(f"{adv_id}: cvss_score {score} outside [0, 10]")
    return score


def _split_refs(urls: Iterable[tuple[str, str | None]]) -> tuple[tuple, tuple, tuple]:
    refs: list[str] = []
    patches: list[str] = []
    exploits: list[str] = []
    for url, ref_type in urls:
        if url in refs:
            continue
        refs.append(url)
        try:
            kind = classify_reference(url).kind
        except InvalidUrl:
            logger.warning("skipping classification of invalid reference %r", url)
            continue
        if kind in PATCH_KINDS or (ref_type or "").upper() == "FIX":
            patches.append(url)
        if _is_exploit(url, ref_type):
            exploits.append(url)
    return tuple(refs), tuple(patches), tuple(exploits)


def _osv_events_to_range(events: list[Mapping[str, str]], adv_id: str) -> VersionRange:
    clauses = []
    lower: Bound | None = None
    open_interval = False
    try:
        for ev in events:
            if "introduced" in ev:
                intro = str(ev["introduced"])
                lower = None if intro in ("0", "") else Bound(parse_version(intro), True)
                open_interval = True
            elif "fixed" in ev or "last_affected" in ev or "limit" in ev:
                if not open_interval:
                    continue
                if "fixed" in ev:
                    upper = Bound(parse_version(str(ev["fixed"])), False)
                elif "last_affected" in ev:
                    upper = Bound(parse_version(str(ev["last_affected"])), True)
                else:
                    if ev["limit"] == "*":
                        continue
                    upper = Bound(parse_version(str(ev["limit"])), False)
                clauses.append(Clause(lower, upper))
                open_interval = False
        if open_interval:
            clauses.append(Clause(lower, None))
    except (ValueError, MalformedRange) as exc:
        raise MalformedDocument(f"{adv_id}: bad range events: {exc}") from exc
    return VersionRange(tuple(clauses))


def _maven_purl(name: str) -> str:
    group, _, artifact = name.partition(":")
    return f"pkg:maven/{group}/{artifact}" if artifact else f"pkg:maven/{name}"


def _parse_osv(doc: Mapping[str, Any]) -> Advisory:
    adv_id = doc.get("id")
    if not adv_id:
        raise MissingId("OSV record without id")
    dbs = doc.get("database_specific") or {}
    score = _score(dbs.get("cvss_score"), adv_id)
    for sev in doc.get("severity") or []:
        if score is None and isinstance(sev, Mapping):
            score = _score(sev.get("score"), adv_id)
    severity = Severity.from_label(dbs.get("severity"))

    purls: list[str] = []
    ranges: list[tuple[str, VersionRange]] = []
    for aff in doc.get("affected") or []:
        pkg = aff.get("package") or {}
        name = pkg.get("name")
        if not name:
            raise MalformedDocument(f"{adv_id}: affected entry without package name")
        purl = pkg.get("purl") or (
            _maven_purl(name) if (pkg.get("ecosystem") or "Maven") == "Maven" else name
        )
        if purl not in purls:
            purls.append(purl)
        for rng in aff.get("ranges") or []:
            if rng.get("type", "ECOSYSTEM") == "GIT":
                continue
            ranges.append((name, _osv_events_to_range(rng.get("events") or [], adv_id)))
        explicit = aff.get("versions") or []
        if explicit:
            try:
                exact = tuple(Clause(*(Bound(parse_version(v), True),) * 2) for v in explicit)
            except ValueError as exc:
                raise MalformedDocument(f"{adv_id}: bad version list") from exc
            ranges.append((name, VersionRange(exact)))

    refs, patches, exploits = _split_refs(
        (r["url"], r.get("type")) for r in doc.get("references") or [] if r.get("url")
    )
    cwes = dbs.get("cwe_ids") or []
    return Advisory(
        id=adv_id,
        purls=tuple(purls),
        cpe=tuple(dbs["cpe"]) if dbs.get("cpe") else None,
        cvss_score=score,
        cwe_ids=tuple(dict.fromkeys(cwes)),
        severity=severity,
        published=_date(doc.get("published"), "published", adv_id),
        last_modified=_date(doc.get("modified"), "modified", adv_id),
        description=doc.get("details") or doc.get("summary") or "",
        references=refs,
        patch_links=patches,
        exploit_links=exploits,
        affected_ranges=tuple(ranges),
        aliases=tuple(doc.get("aliases") or ()),
    )


def _parse_normalized(doc: Mapping[str, Any]) -> Advisory:
    adv_id = doc.get("id")
    if not adv_id:
        raise MissingId("normalized record without id")
    try:
        ranges = tuple(
            (r["project_id"], parse_range(r["range"], RangeSyntax.COMPARATOR_LIST))
            for r in doc.get("affected_ranges") or []
        )
    except (KeyError, TypeError, MalformedRange) as exc:
        raise MalformedDocument(f"{adv_id}: bad affected_ranges: {exc}") from exc
    cpe = doc.get("cpe")
    return Advisory(
        id=adv_id,
        purls=tuple(doc.get("purls") or ()),
        cpe=tuple(cpe) if cpe is not None else None,
        cvss_score=_score(doc.get("cvss_score"), adv_id, strict=True),
        cwe_ids=tuple(doc.get("cwe_ids") or ()),
        severity=Severity.from_label(doc.get("severity")),
        published=_date(doc.get("published"), "published", adv_id),
        last_modified=_date(doc.get("last_modified"), "last_modified", adv_id),
        description=doc.get("description") or "",
        references=tuple(doc.get("references") or ()),
        patch_links=tuple(doc.get("patch_links") or ()),
        exploit_links=tuple(doc.get("exploit_links") or ()),
        affected_ranges=ranges,
        aliases=tuple(doc.get("aliases") or ()),
    )


def detect_format(doc: Mapping[str, Any]) -> SourceFormat:
    if "affected_ranges" in doc or "patch_links" in doc or "last_modified" in doc:
        return SourceFormat.NORMALIZED
    return SourceFormat.OSV


def parse_advisory(
    raw_document: bytes | str | Mapping[str, Any], source_format: SourceFormat | str | None = None
) -> Advisory:
    """Parse one advisory document.

    ``source_format`` may be omitted to sniff it from the field names.  Raises
    :class:`MalformedDocument` for unparseable input or out-of-range values and
    :class:`MissingId` when no identifier is present.
    """
    if isinstance(raw_document, Mapping):
        doc = raw_document
    else:
        try:
            doc = json.loads(raw_document)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise MalformedDocument("advisory document must be a JSON object")
    fmt = SourceFormat(source_format) if source_format else detect_format(doc)
    try:
        if fmt is SourceFormat.OSV:
            return _parse_osv(doc)
        return _parse_normalized(doc)
    except (AttributeError, TypeError, KeyError) as exc:
        raise MalformedDocument(f"unexpected document structure: {exc}") from exc


def advisory_to_dict(adv: Advisory) -> dict[str, Any]:
    return {
        "id": adv.id,
        "purls": list(adv.purls),
        "cpe": list(adv.cpe) if adv.cpe is not None else None,
        "cvss_score": adv.cvss_score,
        "cwe_ids": list(adv.cwe_ids),
        "severity": adv.severity.value,
        "published": adv.published.isoformat() if adv.published else None,
        "last_modified": adv.last_modified.isoformat() if adv.last_modified else None,
        "description": adv.description,
        "references": list(adv.references),
        "patch_links": list(adv.patch_links),
        "exploit_links": list(adv.exploit_links),
        "affected_ranges": [
            {"project_id": p, "range": r.to_text(RangeSyntax.COMPARATOR_LIST)}
            for p, r in adv.affected_ranges
        ],
        "aliases": list(adv.aliases),
    }


def emit_advisory(adv: Advisory) -> bytes:
    """Serialize to the normalized JSON format."""
    return json.dumps(advisory_to_dict(adv), indent=2, sort_keys=False).encode() + b"\n"


# ------------------------------------------------------------------ the collection


class AdvisoryCollection:
    """Write-once, read-many store of advisories indexed by project."""

    def __init__(self, advisories: Iterable[Advisory] = ()):
        self._by_id: dict[str, Advisory] = {}
        self._by_project: dict[str, list[Advisory]] = defaultdict(list)
        for adv in advisories:
            self.add(adv)

    def add(self, adv: Advisory) -> None:
        if adv.id in self._by_id:
            raise DuplicateAdvisory(f"duplicate advisory id {adv.id}")
        self._by_id[adv.id] = adv
        for project in adv.projects:
            self._by_project[project].append(adv)

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[Advisory]:
        return iter(sorted(self._by_id.values(), key=lambda a: a.id))

    def __contains__(self, adv_id: object) -> bool:
        return adv_id in self._by_id

    def __getitem__(self, adv_id: str) -> Advisory:
        return self._by_id[adv_id]

    def for_project(self, project_id: str) -> list[Advisory]:
        return list(self._by_project.get(project_id, ()))

    @property
    def projects(self) -> list[str]:
        return sorted(self._by_project)

    @classmethod
    def load_dir(cls, path: str | Path) -> AdvisoryCollection:
        """Load every ``*.json`` file below ``path`` (one advisory per file)."""
        kb = cls()
        for file in sorted(Path(path).rglob("*.json")):
            try:
                kb.add(parse_advisory(file.read_bytes()))
            except MalformedDocument as exc:
                raise MalformedDocument(f"{file}: {exc}") from exc
        return kb

    def dump_dir(self, path: str | Path) -> None:
        out = Path(path)
        out.mkdir(parents=True, exist_ok=True)
        for adv in self:
            (out / f"{adv.id}.json").write_bytes(emit_advisory(adv))


# ------------------------------------------------------------------- aggregations


class YearSeverityCount(NamedTuple):
    year: int | None
    severity: Severity
    count: int


class CweRow(NamedTuple):
    cwe_id: str
    count: int
    count_by_severity: dict[Severity, int]


@dataclass
class CweFrequency:
    rows: list[CweRow]
    # advisories carrying no CWE tag at all; they are left out of ``rows``
    excluded: int = 0
    distinct: int = 0
    tagged_total: int = field(default=0)


def _severity(adv: Advisory, unified: bool) -> Severity:
    return adv.severity.unified() if unified else adv.severity


def stats_by_year_and_severity(
    kb: Iterable[Advisory], unified: bool = False
) -> list[YearSeverityCount]:
    """Count advisories per (publication year, severity).

    Advisories of unknown severity are left out; a missing publication date puts
    the advisory in the ``year=None`` bucket, which sorts last.
    """
    counts = Counter(
        (adv.published.year if adv.published else None, _severity(adv, unified))
        for adv in kb
        if adv.severity is not Severity.UNKNOWN
    )
    return [
        YearSeverityCount(year, sev, n)
        for (year, sev), n in sorted(
            counts.items(),
            key=lambda kv: (kv[0][0] is None, kv[0][0] or 0, SEVERITY_ORDER.index(kv[0][1])),
        )
    ]


def stats_by_year(kb: Iterable[Advisory]) -> list[tuple[int | None, int, int]]:
    """Per year: (year, advisories, distinct affected projects)."""
    advs: Counter = Counter()
    projects: dict[int | None, set[str]] = defaultdict(set)
    for adv in kb:
        year = adv.published.year if adv.published else None
        advs[year] += 1
        projects[year].update(adv.projects)
    return [
        (y, advs[y], len(projects[y]))
        for y in sorted(advs, key=lambda y: (y is None, y or 0))
    ]


def stats_by_severity(kb: Iterable[Advisory], unified: bool = False) -> list[tuple[Severity, int]]:
    counts = Counter(_severity(a, unified) for a in kb)
    return [(s, counts[s]) for s in SEVERITY_ORDER if counts[s]]


def _cwe_sort_key(cwe: str) -> tuple[str, int, str]:
    m = re.match(r"^(.*?)(\d+)$", cwe)
    if m:
        return (m.group(1), int(m.group(2)), cwe)
    return (cwe, -1, cwe)


def cwe_frequency(kb: Iterable[Advisory], top_n: int, unified: bool = False) -> CweFrequency:
    """Most frequent CWE tags, each broken down by severity.

    An advisory with several CWE tags counts once for each tag.  Rows are sorted
    by count descending, then CWE id ascending (numerically).
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    per_cwe: dict[str, Counter] = defaultdict(Counter)
    excluded = 0
    for adv in kb:
        if not adv.cwe_ids:
            excluded += 1
            continue
        for cwe in dict.fromkeys(adv.cwe_ids):
            per_cwe[cwe][_severity(adv, unified)] += 1
    rows = [
        CweRow(cwe, sum(c.values()), {s: c[s] for s in SEVERITY_ORDER if c[s]})
        for cwe, c in per_cwe.items()
    ]
    rows.sort(key=lambda r: (-r.count, _cwe_sort_key(r.cwe_id)))
    return CweFrequency(
        rows=rows[:top_n],
        excluded=excluded,
        distinct=len(rows),
        tagged_total=sum(r.count for r in rows),
    )
