"""Exception hierarchy shared across the analysis modules."""


class VulnReachError(Exception):
    """Base class for all errors raised by this package."""


# advisories
class MalformedDocument(VulnReachError, ValueError):
    pass


class MissingId(MalformedDocument):
    pass


class DuplicateAdvisory(VulnReachError, ValueError):
    pass


class InvalidUrl(VulnReachError, ValueError):
    pass


# versions and ranges
class EmptyVersion(VulnReachError, ValueError):
    pass


class MalformedVersion(VulnReachError, ValueError):
    pass


class MalformedRange(VulnReachError, ValueError):
    pass


# dependency resolution
class ResolutionError(VulnReachError):
    pass


class MissingProject(ResolutionError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class UnresolvableVersion(ResolutionError, LookupError):
    pass


class InvalidCoordinate(VulnReachError, ValueError):
    pass


# patches
class MalformedDiff(VulnReachError, ValueError):
    pass


class OverlappingSpans(VulnReachError, ValueError):
    pass


# call graphs
class InvalidCallGraph(VulnReachError, ValueError):
    pass


class DuplicateCoordinate(VulnReachError, ValueError):
    pass


# reports and fixtures
class CorpusMismatch(VulnReachError, ValueError):
    pass


class InvalidSpec(VulnReachError, ValueError):
    pass
