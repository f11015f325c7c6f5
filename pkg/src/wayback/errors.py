"""Exception hierarchy.

Every error raised on purpose by the package derives from ``WaybackError`` so
the CLI can map it to an exit code. ``DataError`` covers malformed or
inconsistent input data, ``NetworkError`` covers the REST client.
"""

from __future__ import annotations


class WaybackError(Exception):
    """Base class for all package errors."""


class DataError(WaybackError, ValueError):
    """Input data violates a documented contract."""


class NetworkError(WaybackError):
    """Remote tracker unreachable after retries."""


class AuthRequired(NetworkError):
    """The tracker refused the request for lack of credentials."""


# core model
class DanglingBugId(DataError):
    pass


class SelfLoopEvent(DataError):
    pass


class UnknownSeverity(DataError):
    pass


class UnknownPriority(DataError):
    pass


# graph
class GraphError(DataError):
    pass


class DuplicateNode(GraphError):
    pass


class MissingNode(GraphError):
    pass


class MissingEndpoint(GraphError):
    pass


class DuplicateArc(GraphError):
    pass


class WouldCreateCycle(GraphError):
    pass


# replay / evaluation
class EmptyWindow(DataError):
    pass


class EmptyDeveloperPool(DataError):
    pass


# text models and statistics
class EmptyCorpus(DataError):
    pass


class DegenerateSeries(DataError):
    pass
