"""Deterministic replay of issue-tracker history with bug prioritization and triage simulation."""

from .errors import DataError, NetworkError, WaybackError
from .graph import DependencyGraph, build_graph, recompute_caches
from .model import BugRecord, DeveloperProfile, Event, EventKind, EventLog, Priority, Severity, sort_log
from .replay import Snapshot, WaybackMachine, conservation_check, run, state_at

__all__ = [
    "BugRecord",
    "DataError",
    "DependencyGraph",
    "DeveloperProfile",
    "Event",
    "EventKind",
    "EventLog",
    "NetworkError",
    "Priority",
    "Severity",
    "Snapshot",
    "WaybackError",
    "WaybackMachine",
    "build_graph",
    "conservation_check",
    "recompute_caches",
    "run",
    "sort_log",
    "state_at",
]
