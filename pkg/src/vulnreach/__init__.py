"""Vulnerability reachability analysis for dependency graphs.

Package-level checks flag a versioned package when any (transitive) dependency
falls inside an advisory's affected range.  Method-level checks additionally
require a call chain from the package's own code to a method changed by the
advisory's fix commit.
"""

from .advisory import Advisory, AdvisoryCollection, parse_advisory
from .callgraph import PackageCallGraph, WholeProgramGraph, annotate_vulnerable, stitch
from .dependencies import MAX, Coordinate, DependencyGraph, Registry, depth_limit, resolve
from .fixtures import CorpusSpec, generate
from .patches import locate_vulnerable_callables, parse_unified_diff, propagate_to_affected_versions
from .pipeline import Analyzer
from .reachability import (
    AnalysisSetting,
    Granularity,
    RootVerdict,
    analyze_method_level,
    analyze_package_level,
    coverage_curve,
)
from .report import CorpusResult, export, top_impact, version_distribution
from .versioning import PackageVersion, affected_versions, parse_range, parse_version

__version__ = "0.1.0"
