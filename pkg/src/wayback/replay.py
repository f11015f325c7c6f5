"""Event replay: drives an event log through the dependency graph.

``WaybackMachine`` applies events one at a time. Resolved bugs leave the graph
and are archived together with their detached arcs so that a reopen can put
them back. ``run`` yields one ``Snapshot`` per day bucket and ``state_at``
answers the wayback query: the graph exactly as it stood after the last event
at or before a timestamp.

Dirty input never aborts a replay. Events that cannot be applied are skipped
and tallied in ``WaybackMachine.warnings`` by reason.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import astuple, dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import IO, Iterable, Iterator

from .errors import DuplicateArc, EmptyWindow, WouldCreateCycle
from .graph import DependencyGraph, NodeInfo
from .model import BugRecord, Event, EventKind, EventLog, day_of

logger = logging.getLogger(__name__)

SNAPSHOT_HEADER = (
    "date", "n", "m", "fixed_today", "max_deg_c", "max_depth_c", "mean_sub_depth",
    "mean_sev", "mean_prio", "mean_comments", "mean_auth", "max_auth", "mean_hub",
    "max_hub", "max_harmonic",
)

_STATUS_KINDS = (EventKind.RESOLVED, EventKind.CLOSED, EventKind.REOPENED)


@dataclass
class ArchivedBug:
    info: NodeInfo
    arcs: set[tuple[int, int]]
    resolved_at: datetime


class ResolvedStore(dict):
    """bug id -> ArchivedBug for every bug currently resolved."""

    def park_arc(self, bug: int, arc: tuple[int, int]) -> None:
        self[bug].arcs.add(arc)


@dataclass
class BugLedger:
    introduced_at: datetime
    assigned_at: list[datetime] = field(default_factory=list)
    resolved_at: list[datetime] = field(default_factory=list)
    reopened_at: list[datetime] = field(default_factory=list)
    open_since: datetime | None = None
    solving: timedelta = timedelta(0)


class SolvedTracker:
    """Per-bug life-cycle ledger with cumulative open (solving) time."""

    def __init__(self) -> None:
        self.ledgers: dict[int, BugLedger] = {}

    def introduce(self, bug: int, at: datetime) -> None:
        self.ledgers[bug] = BugLedger(introduced_at=at, open_since=at)

    def assign(self, bug: int, at: datetime) -> None:
        self.ledgers[bug].assigned_at.append(at)

    def resolve(self, bug: int, at: datetime) -> None:
        led = self.ledgers[bug]
        led.resolved_at.append(at)
        if led.open_since is not None:
            led.solving += at - led.open_since
            led.open_since = None

    def reopen(self, bug: int, at: datetime) -> None:
        led = self.ledgers[bug]
        led.reopened_at.append(at)
        led.open_since = at

    def solving_time(self, bug: int, now: datetime | None = None) -> timedelta:
        led = self.ledgers[bug]
        extra = (now - led.open_since) if (now is not None and led.open_since is not None) else timedelta(0)
        return led.solving + extra


@dataclass(frozen=True)
class FixRecord:
    """Attributes of a bug captured at the moment it was first fixed."""

    day: date
    bug: int
    degree: int
    depth: int
    severity: int
    priority: int


@dataclass(frozen=True)
class Snapshot:
    date: date
    n: int
    m: int
    fixed_today: int
    max_degree_centrality: float
    max_depth_centrality: float
    mean_subgraph_depth: float
    mean_severity_open: float
    mean_priority_open: float
    mean_comments_open: float
    mean_authority: float
    max_authority: float
    mean_hub: float
    max_hub: float
    max_harmonic: float

    def csv_row(self) -> list[str]:
        out = []
        for value in astuple(self):
            if isinstance(value, float):
                out.append(_fmt_float(value))
            else:
                out.append(str(value))
        return out


@dataclass(frozen=True)
class ConservationReport:
    ok: bool
    expected_n: int
    actual_n: int
    overlap: tuple[int, ...]

    def __bool__(self) -> bool:
        return self.ok

    def diagnostic(self) -> str:
        if self.ok:
            return "ok"
        parts = []
        if self.expected_n != self.actual_n:
            parts.append(f"node count {self.actual_n} != expected {self.expected_n}")
        if self.overlap:
            parts.append(f"bugs both open and archived: {list(self.overlap)}")
        return "; ".join(parts)


def _fmt_float(x: float) -> str:
    # 9 decimals keeps CSV output stable across BLAS/libm builds
    r = round(x, 9)
    return repr(r + 0.0)


class WaybackMachine:
    """Replays an ``EventLog`` event by event."""

    def __init__(self, log: EventLog) -> None:
        self.log = log
        self.bugs = log.bugs
        self.graph = DependencyGraph()
        self.resolved = ResolvedStore()
        self.tracker = SolvedTracker()
        self.counts: Counter = Counter()
        self.warnings: Counter = Counter()
        self.fixes: list[FixRecord] = []
        self.assignments: list[tuple[datetime, int, str]] = []
        self.clock: datetime | None = None
        self.cursor = 0
        # bugs whose status events are parked until release()
        self.held: set[int] = set()
        self.deferred: dict[int, list[Event]] = {}
        # bugs taken over by a simulation; later status events are ignored
        self.suppressed: set[int] = set()
        self._fixed_since_snapshot = 0
        self._ever_fixed: set[int] = set()
        comment_events = Counter(ev.bug for ev in log.events if ev.kind is EventKind.COMMENTED)
        self._initial_comments = {
            b: max(0, rec.comment_count - comment_events.get(b, 0)) for b, rec in log.bugs.items()
        }

    # --- status of a bug --------------------------------------------------

    def is_open(self, bug: int) -> bool:
        return bug in self.graph

    def is_archived(self, bug: int) -> bool:
        return bug in self.resolved

    def open_bugs(self) -> dict[int, BugRecord]:
        return {b: self.bugs[b] for b in self.graph.nodes()}

    # --- driving the log --------------------------------------------------

    def advance(self, until: datetime) -> int:
        """Apply every pending log event with ``at <= until``; return how many."""
        events = self.log.events
        start = self.cursor
        while self.cursor < len(events) and events[self.cursor].at <= until:
            self.step(events[self.cursor])
            self.cursor += 1
        return self.cursor - start

    def advance_day(self, day: date) -> int:
        return self.advance(end_of_day(day))

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.log.events)

    def step(self, ev: Event) -> None:
        """Apply one event."""
        self.clock = ev.at
        if ev.bug not in self.bugs or (ev.target is not None and ev.target not in self.bugs):
            self.warnings["unknown_bug"] += 1
            return
        kind = ev.kind
        if kind in _STATUS_KINDS:
            if ev.bug in self.suppressed:
                self.counts["suppressed"] += 1
                return
            if ev.bug in self.held:
                self.deferred.setdefault(ev.bug, []).append(ev)
                return
        if kind is EventKind.INTRODUCED:
            self._introduce(ev)
        elif kind is EventKind.BLOCKS or kind is EventKind.DEPENDS_ON:
            self._link(*ev.arc)
        elif kind is EventKind.RESOLVED or kind is EventKind.CLOSED:
            self._resolve(ev.bug, ev.at, kind)
        elif kind is EventKind.REOPENED:
            self._reopen(ev.bug, ev.at)
        elif kind is EventKind.ASSIGNED:
            self._assign(ev)
        elif kind is EventKind.COMMENTED:
            self._comment(ev.bug)

    def _introduce(self, ev: Event) -> None:
        bug = ev.bug
        if bug in self.tracker.ledgers:
            self.warnings["duplicate_introduced"] += 1
            return
        rec = self.bugs[bug]
        info = NodeInfo(int(rec.severity), int(rec.priority), self._initial_comments[bug])
        self.graph.add_node(bug, info)
        self.tracker.introduce(bug, ev.at)
        self.counts["introduced"] += 1

    def _link(self, blocking: int, blocked: int) -> None:
        if blocking == blocked:
            self.warnings["self_loop"] += 1
            return
        open_u, open_v = blocking in self.graph, blocked in self.graph
        if open_u and open_v:
            try:
                self.graph.add_arc(blocking, blocked)
                self.counts["arcs_added"] += 1
            except WouldCreateCycle:
                self.warnings["cycle"] += 1
            except DuplicateArc:
                self.counts["duplicate_arc"] += 1
            return
        parked_in = next((b for b in (blocking, blocked) if b in self.resolved), None)
        if parked_in is None or not all(b in self.graph or b in self.resolved for b in (blocking, blocked)):
            self.warnings["endpoint_not_introduced"] += 1
            return
        # one endpoint resolved: keep the arc for its reopen
        self.resolved.park_arc(parked_in, (blocking, blocked))
        self.counts["arcs_parked"] += 1

    def _resolve(self, bug: int, at: datetime, kind: EventKind) -> None:
        if bug in self.resolved:
            self.counts["noop_" + kind.value] += 1
            return
        if bug not in self.graph:
            self.warnings["not_open"] += 1
            return
        g = self.graph
        if bug not in self._ever_fixed:
            self._ever_fixed.add(bug)
            info = g.info(bug)
            self.fixes.append(FixRecord(day_of(at), bug, g.degree(bug), g.depth(bug), info.severity, info.priority))
            self._fixed_since_snapshot += 1
        info = g.info(bug)
        detached = g.remove_node(bug)
        self.resolved[bug] = ArchivedBug(info=info, arcs=set(detached), resolved_at=at)
        self.tracker.resolve(bug, at)
        self.counts[kind.value] += 1

    def _reopen(self, bug: int, at: datetime) -> None:
        if bug not in self.resolved:
            self.warnings["reopen_not_resolved"] += 1
            return
        archived = self.resolved.pop(bug)
        self.graph.add_node(bug, archived.info)
        for arc in sorted(archived.arcs):
            other = arc[1] if arc[0] == bug else arc[0]
            if other in self.graph:
                try:
                    self.graph.add_arc(*arc)
                except WouldCreateCycle:
                    self.warnings["cycle"] += 1
                except DuplicateArc:
                    self.counts["duplicate_arc"] += 1
            elif other in self.resolved:
                self.resolved.park_arc(other, arc)
        self.tracker.reopen(bug, at)
        self.counts["reopened"] += 1

    def _assign(self, ev: Event) -> None:
        if ev.bug not in self.tracker.ledgers:
            self.warnings["assign_not_introduced"] += 1
            return
        self.tracker.assign(ev.bug, ev.at)
        self.assignments.append((ev.at, ev.bug, ev.developer or ""))

    def _comment(self, bug: int) -> None:
        if bug in self.graph:
            info = self.graph.info(bug)
            info.comment_count += 1
        elif bug in self.resolved:
            self.resolved[bug].info.comment_count += 1
        else:
            self.warnings["comment_not_introduced"] += 1

    # --- simulation hooks -------------------------------------------------

    def hold(self, bugs: Iterable[int]) -> None:
        """Park resolve/close/reopen events of ``bugs`` until released."""
        self.held.update(bugs)

    def release(self, bug: int) -> None:
        """Stop holding ``bug`` and apply its parked status events in order."""
        self.held.discard(bug)
        for ev in self.deferred.pop(bug, []):
            self.step(ev)

    def force_resolve(self, bug: int, at: datetime) -> None:
        """Resolve ``bug`` on behalf of a simulation and ignore its later status events."""
        self.held.discard(bug)
        self.deferred.pop(bug, None)
        self.suppressed.add(bug)
        if bug in self.graph:
            self._resolve(bug, at, EventKind.RESOLVED)

    # --- measurements -----------------------------------------------------

    def snapshot(self, day: date) -> Snapshot:
        g = self.graph
        n = g.n
        infos = [g.info(v) for v in g.nodes()]
        auth, hub = g.hits()
        fixed, self._fixed_since_snapshot = self._fixed_since_snapshot, 0
        return Snapshot(
            date=day,
            n=n,
            m=g.m,
            fixed_today=fixed,
            max_degree_centrality=g.degree_centrality_max(),
            max_depth_centrality=g.depth_centrality_max(),
            mean_subgraph_depth=g.mean_subgraph_depth(),
            mean_severity_open=_mean(i.severity for i in infos),
            mean_priority_open=_mean(i.priority for i in infos),
            mean_comments_open=_mean(i.comment_count for i in infos),
            mean_authority=_mean(auth.values()),
            max_authority=max(auth.values(), default=0.0),
            mean_hub=_mean(hub.values()),
            max_hub=max(hub.values(), default=0.0),
            max_harmonic=g.max_harmonic(),
        )

    def open_attribute_mean(self, attribute: str) -> float | None:
        """Mean of degree/depth/severity/priority over open bugs, None when empty."""
        g = self.graph
        values = [bug_attribute(g, v, attribute) for v in g.nodes()]
        return sum(values) / len(values) if values else None


def bug_attribute(g: DependencyGraph, bug: int, attribute: str) -> int:
    if attribute == "degree":
        return g.degree(bug)
    if attribute == "depth":
        return g.depth(bug)
    if attribute == "severity":
        return g.info(bug).severity
    if attribute == "priority":
        return g.info(bug).priority
    raise ValueError(f"unknown attribute {attribute!r}")


def _mean(values: Iterable[float]) -> float:
    total = 0.0
    count = 0
    for v in values:
        total += v
        count += 1
    return total / count if count else 0.0


def end_of_day(day: date) -> datetime:
    return datetime(day.year, day.month, day.day, 23, 59, 59, tzinfo=timezone.utc)


def start_of_day(day: date) -> datetime:
    return datetime(day.year, day.month, day.day, tzinfo=timezone.utc)


def day_range(start: date, end: date, step: int = 1) -> Iterator[date]:
    d = start
    while d <= end:
        yield d
        d += timedelta(days=step)


def run(
    log: EventLog,
    start: date,
    end: date,
    granularity: int = 1,
    machine: WaybackMachine | None = None,
) -> Iterator[Snapshot]:
    """Replay ``log`` and yield a snapshot at the end of every bucket of ``granularity`` days.

    Events before ``start`` are applied silently first, so the first snapshot
    reflects the whole history up to that day. Pass ``machine`` to inspect the
    replay state between snapshots.
    """
    if start > end:
        raise EmptyWindow(f"window start {start} is after end {end}")
    if granularity < 1:
        raise ValueError("granularity must be at least one day")
    m = machine if machine is not None else WaybackMachine(log)
    m.advance(end_of_day(start - timedelta(days=1)))
    m._fixed_since_snapshot = 0
    for bucket_start in day_range(start, end, granularity):
        bucket_end = min(end, bucket_start + timedelta(days=granularity - 1))
        m.advance_day(bucket_end)
        yield m.snapshot(bucket_end)


def state_at(log: EventLog, t: datetime) -> WaybackMachine:
    """The replay state after every event with ``at <= t``."""
    m = WaybackMachine(log)
    m.advance(t)
    return m


def conservation_check(m: WaybackMachine) -> ConservationReport:
    """Bookkeeping identity: open = introduced - resolved - closed + reopened."""
    c = m.counts
    expected = c["introduced"] - c["resolved"] - c["closed"] + c["reopened"]
    overlap = tuple(sorted(b for b in m.resolved if b in m.graph))
    actual = m.graph.n
    return ConservationReport(ok=(expected == actual and not overlap), expected_n=expected, actual_n=actual, overlap=overlap)


def write_snapshots(fh: IO[str], snapshots: Iterable[Snapshot]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SNAPSHOT_HEADER)
    for snap in snapshots:
        writer.writerow(snap.csv_row())


def snapshots_csv(snapshots: Iterable[Snapshot]) -> str:
    buf = io.StringIO()
    write_snapshots(buf, snapshots)
    return buf.getvalue()

