"""Run persistence, corpus aggregates and report rendering."""

from __future__ import annotations

import datetime as dt
import enum
import io
import json
import logging
import os
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .dependencies import MAX, Coordinate, Registry, as_coordinate, depth_sort_key
from .errors import CorpusMismatch
from .reachability import (
    AnalysisSetting,
    CoveragePoint,
    Granularity,
    RootVerdict,
    SweepEntry,
)
from .versioning import affected_versions

logger = logging.getLogger(__name__)

_TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def utc_now() -> dt.datetime:
    """Current time, or SOURCE_DATE_EPOCH when set (reproducible builds)."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return dt.datetime.fromtimestamp(int(epoch), tz=dt.timezone.utc)
    return dt.datetime.now(tz=dt.timezone.utc).replace(microsecond=0)


@dataclass(frozen=True)
class Diagnostics:
    unresolved_calls: int = 0
    skipped_packages: int = 0
    unmatched_marks: int = 0

    def __post_init__(self) -> None:
        for name in ("unresolved_calls", "skipped_packages", "unmatched_marks"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __add__(self, other: Diagnostics) -> Diagnostics:
        return Diagnostics(
            self.unresolved_calls + other.unresolved_calls,
            self.skipped_packages + other.skipped_packages,
            self.unmatched_marks + other.unmatched_marks,
        )


@dataclass(frozen=True)
class CorpusResult:
    created_at: dt.datetime
    setting: AnalysisSetting
    verdicts: tuple[RootVerdict, ...]
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self) -> None:
        roots = [v.root for v in self.verdicts]
        if len(set(roots)) != len(roots):
            raise ValueError("verdict roots must be unique")
        for v in self.verdicts:
            if v.setting != self.setting:
                raise ValueError(f"{v.root}: verdict setting {v.setting.label} != {self.setting.label}")
        object.__setattr__(self, "verdicts", tuple(sorted(self.verdicts, key=lambda v: v.root)))
        ts = self.created_at
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=dt.timezone.utc)
        object.__setattr__(self, "created_at", ts.astimezone(dt.timezone.utc).replace(microsecond=0))

    @property
    def roots(self) -> list[Coordinate]:
        return [v.root for v in self.verdicts]

    @property
    def vulnerable_roots(self) -> list[Coordinate]:
        return [v.root for v in self.verdicts if v.vulnerable]

    def to_json(self) -> dict[str, Any]:
        return {
            "created_at": self.created_at.strftime(_TS_FORMAT),
            "setting": self.setting.label,
            "diagnostics": {
                "unresolved_calls": self.diagnostics.unresolved_calls,
                "skipped_packages": self.diagnostics.skipped_packages,
                "unmatched_marks": self.diagnostics.unmatched_marks,
            },
            "verdicts": [v.to_json() for v in self.verdicts],
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> CorpusResult:
        return cls(
            dt.datetime.strptime(doc["created_at"], _TS_FORMAT).replace(tzinfo=dt.timezone.utc),
            AnalysisSetting.parse(doc["setting"]),
            tuple(RootVerdict.from_json(v) for v in doc.get("verdicts", [])),
            Diagnostics(**doc.get("diagnostics", {})),
        )


# -------------------------------------------------------------------- export


class ExportFormat(str, enum.Enum):
    JSON = "json"
    TSV = "tsv"
    TABLE = "table"


def _dumps(doc: Any) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def format_table(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for n, r in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _tsv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    out = io.StringIO()
    out.write("\t".join(header) + "\n")
    for r in rows:
        out.write("\t".join(str(c) for c in r) + "\n")
    return out.getvalue()


_VERDICT_COLUMNS = ("root", "setting", "vulnerable", "findings", "advisories", "shortest_chain")


def _verdict_row(v: RootVerdict) -> tuple:
    chains = [f.chain.length for f in v.findings if f.chain is not None]
    return (
        str(v.root),
        v.setting.label,
        "yes" if v.vulnerable else "no",
        len(v.findings),
        ",".join(v.advisory_ids) or "-",
        min(chains) if chains else "-",
    )


def export(result: CorpusResult, fmt: ExportFormat | str = ExportFormat.JSON) -> bytes:
    fmt = ExportFormat(fmt)
    if fmt is ExportFormat.JSON:
        return _dumps(result.to_json())
    rows = [_verdict_row(v) for v in result.verdicts]
    if fmt is ExportFormat.TSV:
        return _tsv(_VERDICT_COLUMNS, rows).encode()
    d = result.diagnostics
    footer = (
        f"\n{len(result.vulnerable_roots)}/{len(result.verdicts)} roots vulnerable "
        f"({result.setting.label}); unresolved calls {d.unresolved_calls}, "
        f"skipped packages {d.skipped_packages}, unmatched marks {d.unmatched_marks}\n"
    )
    return (format_table(_VERDICT_COLUMNS, rows) + footer).encode()


def import_json(data: bytes | str) -> CorpusResult:
    return CorpusResult.from_json(json.loads(data))


# ---------------------------------------------------------------- run storage


class RunStore:
    """Directory-per-run storage with an index file at the top level.

    Layout::

        <base>/index.json
        <base>/<run>/result.json
        <base>/<run>/sweep.json      (optional)
    """

    INDEX = "index.json"

    def __init__(self, base: str | Path):
        self.base = Path(base)

    def _index(self) -> dict[str, Any]:
        path = self.base / self.INDEX
        return json.loads(path.read_text()) if path.exists() else {"runs": {}}

    def runs(self) -> list[str]:
        return sorted(self._index()["runs"])

    def save(
        self,
        name: str,
        result: CorpusResult,
        sweeps: Mapping[Coordinate, Sequence[SweepEntry]] | None = None,
    ) -> Path:
        run_dir = self.base / name
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "result.json").write_bytes(export(result))
        if sweeps is not None:
            (run_dir / "sweep.json").write_bytes(dump_sweeps(sweeps))
        index = self._index()
        index["runs"][name] = {
            "created_at": result.created_at.strftime(_TS_FORMAT),
            "setting": result.setting.label,
            "roots": len(result.verdicts),
            "vulnerable": len(result.vulnerable_roots),
            "has_sweep": sweeps is not None,
        }
        (self.base / self.INDEX).write_bytes(_dumps(index))
        return run_dir

    def load(self, name: str) -> CorpusResult:
        return load_run(self.base / name)

    def load_sweeps(self, name: str) -> dict[Coordinate, list[SweepEntry]]:
        return load_run_sweeps(self.base / name)


def load_run(run_dir: str | Path) -> CorpusResult:
    return import_json((Path(run_dir) / "result.json").read_bytes())


def dump_sweeps(sweeps: Mapping[Coordinate, Sequence[SweepEntry]]) -> bytes:
    return _dumps({
        "roots": [
            {"root": str(root), "entries": [e.to_json() for e in sweeps[root]]}
            for root in sorted(sweeps)
        ]
    })


def load_sweeps(data: bytes | str) -> dict[Coordinate, list[SweepEntry]]:
    doc = json.loads(data)
    return {
        as_coordinate(r["root"]): [SweepEntry.from_json(e) for e in r["entries"]]
        for r in doc["roots"]
    }


def load_run_sweeps(run_dir: str | Path) -> dict[Coordinate, list[SweepEntry]]:
    return load_sweeps((Path(run_dir) / "sweep.json").read_bytes())


# ---------------------------------------------------------------- aggregates


@dataclass(frozen=True)
class ImpactRow:
    advisory_id: str
    project: str
    potentially_affected: int
    actually_affected: int
    proportion_pkg: float
    proportion_method: float


IMPACT_COLUMNS = ("CVE", "project", "potential", "actual", "proportion_pkg", "proportion_method")


def top_impact(results_pkg: CorpusResult, results_method: CorpusResult, n: int = 10) -> list[ImpactRow]:
    """Advisories hitting the most roots under package- and method-level analysis.

    Proportions are percentages of each result's own vulnerable-root set.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if results_pkg.setting.granularity is not Granularity.PACKAGE:
        raise CorpusMismatch(f"first result is {results_pkg.setting.label}, expected package level")
    if results_method.setting.granularity is not Granularity.METHOD:
        raise CorpusMismatch(f"second result is {results_method.setting.label}, expected method level")
    if results_pkg.setting.depth != results_method.setting.depth:
        raise CorpusMismatch("results were produced at different depths")
    if set(results_pkg.roots) != set(results_method.roots):
        raise CorpusMismatch("results cover different root sets")

    def tally(result: CorpusResult) -> tuple[dict[str, int], dict[str, set[str]]]:
        counts: dict[str, int] = {}
        projects: dict[str, set[str]] = {}
        for v in result.verdicts:
            for adv_id in v.advisory_ids:
                counts[adv_id] = counts.get(adv_id, 0) + 1
            for f in v.findings:
                projects.setdefault(f.advisory_id, set()).add(f.coordinate.project_id)
        return counts, projects

    pot, proj = tally(results_pkg)
    act, proj_m = tally(results_method)
    for adv_id, ps in proj_m.items():
        proj.setdefault(adv_id, set()).update(ps)
    n_pkg = len(results_pkg.vulnerable_roots)
    n_method = len(results_method.vulnerable_roots)
    rows = [
        ImpactRow(
            adv_id,
            ",".join(sorted(proj[adv_id])),
            pot.get(adv_id, 0),
            act.get(adv_id, 0),
            100.0 * pot.get(adv_id, 0) / n_pkg if n_pkg else 0.0,
            100.0 * act.get(adv_id, 0) / n_method if n_method else 0.0,
        )
        for adv_id in set(pot) | set(act)
    ]
    rows.sort(key=lambda r: (-r.potentially_affected, r.advisory_id))
    return rows[:n]


def _impact_cells(r: ImpactRow) -> tuple:
    return (
        r.advisory_id,
        r.project,
        r.potentially_affected,
        r.actually_affected,
        f"{r.proportion_pkg:.2f}",
        f"{r.proportion_method:.2f}",
    )


def render_impact(rows: Sequence[ImpactRow], fmt: ExportFormat | str = ExportFormat.TABLE) -> str:
    fmt = ExportFormat(fmt)
    if fmt is ExportFormat.JSON:
        return _dumps([dict(zip(IMPACT_COLUMNS, _impact_cells(r))) for r in rows]).decode()
    cells = [_impact_cells(r) for r in rows]
    if fmt is ExportFormat.TSV:
        return _tsv(IMPACT_COLUMNS, cells)
    note = "proportions: percent of roots flagged vulnerable by each analysis\n"
    return format_table(IMPACT_COLUMNS, cells) + note


@dataclass(frozen=True)
class VersionDistRow:
    project_id: str
    total: int
    vulnerable: int

    @property
    def percent(self) -> float:
        return 100.0 * self.vulnerable / self.total if self.total else 0.0


VERSION_DIST_COLUMNS = ("project", "total", "vulnerable", "percent")


def version_distribution(kb: Any, registry: Registry) -> list[VersionDistRow]:
    """Per project: release count, releases matched by any advisory, and their share."""
    rows = []
    for pid in sorted(registry.projects):
        versions = registry.releases(pid)
        ranges = [r for adv in kb.for_project(pid) for r in adv.ranges_for(pid)]
        hit = affected_versions(versions, ranges, pid).vulnerable_versions if ranges else frozenset()
        rows.append(VersionDistRow(pid, len(versions), len(hit)))
    missing = sorted(set(kb.projects) - set(registry.projects))
    if missing:
        logger.warning("advisory projects missing from registry: %s", ", ".join(missing))
    return rows


@dataclass(frozen=True)
class DistributionSummary:
    projects: int
    median_total: float
    median_vulnerable: float
    median_percent: float


def distribution_medians(rows: Sequence[VersionDistRow], vulnerable_only: bool = True) -> DistributionSummary | None:
    picked = [r for r in rows if r.vulnerable or not vulnerable_only]
    if not picked:
        return None
    return DistributionSummary(
        len(picked),
        statistics.median(r.total for r in picked),
        statistics.median(r.vulnerable for r in picked),
        statistics.median(r.percent for r in picked),
    )


def render_version_dist(rows: Sequence[VersionDistRow], fmt: ExportFormat | str = ExportFormat.TABLE) -> str:
    fmt = ExportFormat(fmt)
    cells = [(r.project_id, r.total, r.vulnerable, f"{r.percent:.2f}") for r in rows]
    if fmt is ExportFormat.JSON:
        return _dumps([dict(zip(VERSION_DIST_COLUMNS, c)) for c in cells]).decode()
    if fmt is ExportFormat.TSV:
        return _tsv(VERSION_DIST_COLUMNS, cells)
    text = format_table(VERSION_DIST_COLUMNS, cells)
    summary = distribution_medians(rows)
    if summary:
        text += (
            f"\nmedians over {summary.projects} affected projects: total {summary.median_total:g}, "
            f"vulnerable {summary.median_vulnerable:g}, percent {summary.median_percent:.2f}\n"
        )
    return text


COVERAGE_COLUMNS = ("k", "covered", "total", "ratio")


def render_coverage(points: Sequence[CoveragePoint], fmt: ExportFormat | str = ExportFormat.TABLE) -> str:
    fmt = ExportFormat(fmt)
    cells = [
        (p.k, p.covered, p.total, "undefined" if p.ratio is None else f"{p.ratio:.4f}")
        for p in points
    ]
    if fmt is ExportFormat.JSON:
        return _dumps([
            {"k": p.k, "covered": p.covered, "total": p.total, "ratio": p.ratio} for p in points
        ]).decode()
    if fmt is ExportFormat.TSV:
        return _tsv(COVERAGE_COLUMNS, cells)
    return format_table(COVERAGE_COLUMNS, cells)


SWEEP_COLUMNS = ("k", "vulnerable_roots", "cumulative_advisories", "exact_level_advisories")


def sweep_summary(sweeps: Mapping[Coordinate, Sequence[SweepEntry]]) -> list[tuple]:
    """Per k: roots flagged, distinct advisories up to k, distinct advisories exactly at k."""
    by_k: dict[Any, list[SweepEntry]] = {}
    for entries in sweeps.values():
        for e in entries:
            by_k.setdefault(e.k, []).append(e)
    rows = []
    for k in sorted(by_k, key=depth_sort_key):
        entries = by_k[k]
        cumulative = {a for e in entries for a in e.verdict.advisory_ids}
        exact = None if k == MAX else {a for e in entries for a in e.verdict.advisories_at_depth(k)}
        rows.append((k, sum(e.verdict.vulnerable for e in entries), len(cumulative),
                     "-" if exact is None else len(exact)))
    return rows

