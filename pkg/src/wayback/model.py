"""Domain types shared by every module: bugs, events, event logs, developers."""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import DanglingBugId, DataError, SelfLoopEvent, UnknownPriority, UnknownSeverity


class Severity(enum.IntEnum):
    ENHANCEMENT = 0
    TRIVIAL = 1
    MINOR = 2
    NORMAL = 3
    MAJOR = 4
    CRITICAL = 5
    BLOCKER = 6

    @property
    def label(self) -> str:
        return self.name.lower()


class Priority(enum.IntEnum):
    MISSING = 0
    P5 = 1
    P4 = 2
    P3 = 3
    P2 = 4
    P1 = 5

    @property
    def label(self) -> str:
        return "" if self is Priority.MISSING else self.name


_MISSING_PRIORITY_LABELS = {"", "--", "---", "missing", "none"}


def severity_ordinal(name: str) -> Severity:
    """Map a tracker severity label (case-insensitive) to its ordinal."""
    try:
        return Severity[name.strip().upper()]
    except (KeyError, AttributeError):
        raise UnknownSeverity(f"unknown severity label {name!r}") from None


def priority_ordinal(name: str | None) -> Priority:
    """Map a tracker priority label to its ordinal; an absent label is ``MISSING``."""
    if name is None or name.strip().lower() in _MISSING_PRIORITY_LABELS:
        return Priority.MISSING
    try:
        return Priority[name.strip().upper()]
    except KeyError:
        raise UnknownPriority(f"unknown priority label {name!r}") from None


# --- time helpers -----------------------------------------------------------

def parse_ts(text: str | datetime) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime (second granularity)."""
    if isinstance(text, datetime):
        ts = text
    else:
        s = text.strip()
        if s.endswith("Z"):
            s = s[:-1] + "+00:00"
        ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def day_of(ts: datetime) -> date:
    """UTC calendar day of a timestamp."""
    return ts.astimezone(timezone.utc).date()


def parse_day(text: str | date) -> date:
    if isinstance(text, datetime):
        return day_of(text)
    if isinstance(text, date):
        return text
    return date.fromisoformat(text.strip()[:10])


# --- bugs and events --------------------------------------------------------

class Status(str, enum.Enum):
    OPEN = "open"
    RESOLVED = "resolved"
    CLOSED = "closed"


@dataclass(frozen=True)
class BugRecord:
    id: int
    created_at: datetime
    component: str = ""
    product: str = ""
    summary: str = ""
    description: str = ""
    severity: Severity = Severity.NORMAL
    priority: Priority = Priority.MISSING
    comment_count: int = 0
    assignee: str | None = None
    assigned_at: datetime | None = None
    resolved_at: datetime | None = None
    status: Status = Status.OPEN

    def __post_init__(self) -> None:
        if self.id <= 0:
            raise DataError(f"bug id must be positive, got {self.id}")
        if self.comment_count < 0:
            raise DataError(f"bug {self.id}: negative comment count")
        if self.assigned_at is not None and self.assigned_at < self.created_at:
            raise DataError(f"bug {self.id}: assigned before creation")
        if (
            self.assigned_at is not None
            and self.resolved_at is not None
            and self.resolved_at < self.assigned_at
        ):
            raise DataError(f"bug {self.id}: resolved before assignment")

    @property
    def text(self) -> str:
        """Title and description, the input of every text model."""
        return f"{self.summary} {self.description}".strip()

    @property
    def is_resolved(self) -> bool:
        return self.status is not Status.OPEN

    def fixing_days(self) -> int | None:
        """Fixing time in days: fixing date minus assignment date plus one."""
        if self.assigned_at is None or self.resolved_at is None:
            return None
        return (day_of(self.resolved_at) - day_of(self.assigned_at)).days + 1

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "created_at": format_ts(self.created_at),
            "component": self.component,
            "product": self.product,
            "summary": self.summary,
            "description": self.description,
            "severity": self.severity.label,
            "priority": self.priority.label,
            "comment_count": self.comment_count,
            "assignee": self.assignee,
            "assigned_at": format_ts(self.assigned_at) if self.assigned_at else None,
            "resolved_at": format_ts(self.resolved_at) if self.resolved_at else None,
            "status": self.status.value,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "BugRecord":
        return cls(
            id=int(obj["id"]),
            created_at=parse_ts(obj["created_at"]),
            component=obj.get("component") or "",
            product=obj.get("product") or "",
            summary=obj.get("summary") or "",
            description=obj.get("description") or "",
            severity=severity_ordinal(obj.get("severity") or "normal"),
            priority=priority_ordinal(obj.get("priority")),
            comment_count=int(obj.get("comment_count") or 0),
            assignee=obj.get("assignee"),
            assigned_at=parse_ts(obj["assigned_at"]) if obj.get("assigned_at") else None,
            resolved_at=parse_ts(obj["resolved_at"]) if obj.get("resolved_at") else None,
            status=Status(obj.get("status") or "open"),
        )


class EventKind(str, enum.Enum):
    INTRODUCED = "introduced"
    BLOCKS = "blocks"
    DEPENDS_ON = "depends_on"
    ASSIGNED = "assigned"
    RESOLVED = "resolved"
    REOPENED = "reopened"
    CLOSED = "closed"
    COMMENTED = "commented"


_ARC_KINDS = (EventKind.BLOCKS, EventKind.DEPENDS_ON)


@dataclass(frozen=True)
class Event:
    at: datetime
    seq: int
    bug: int
    kind: EventKind
    target: int | None = None  # other endpoint of blocks / depends_on
    developer: str | None = None  # assignee of an assigned event

    @property
    def key(self) -> tuple[datetime, int]:
        return (self.at, self.seq)

    @property
    def arc(self) -> tuple[int, int] | None:
        """(blocking, blocked) for dependency events, else None."""
        if self.kind is EventKind.BLOCKS:
            return (self.bug, self.target)
        if self.kind is EventKind.DEPENDS_ON:
            return (self.target, self.bug)
        return None

    def to_json(self) -> dict:
        obj: dict = {"at": format_ts(self.at), "seq": self.seq, "bug": self.bug, "kind": self.kind.value}
        if self.target is not None:
            obj["target"] = self.target
        if self.developer is not None:
            obj["developer"] = self.developer
        return obj

    @classmethod
    def from_json(cls, obj: Mapping) -> "Event":
        target = obj.get("target")
        return cls(
            at=parse_ts(obj["at"]),
            seq=int(obj["seq"]),
            bug=int(obj["bug"]),
            kind=EventKind(obj["kind"]),
            target=int(target) if target is not None else None,
            developer=obj.get("developer"),
        )


@dataclass(frozen=True)
class EventLog:
    """Chronologically sorted events plus the bug table they refer to."""

    events: tuple[Event, ...]
    bugs: Mapping[int, BugRecord]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def start(self) -> datetime | None:
        return self.events[0].at if self.events else None

    @property
    def end(self) -> datetime | None:
        return self.events[-1].at if self.events else None

    def arcs(self) -> list[tuple[int, int]]:
        """Every (blocking, blocked) pair mentioned by a dependency event, in log order."""
        return [ev.arc for ev in self.events if ev.kind in _ARC_KINDS]


def sort_log(events: Iterable[Event], bugs: Mapping[int, BugRecord]) -> EventLog:
    """Stable-sort events on (at, seq) and validate them against the bug table."""
    ordered = sorted(events, key=lambda ev: ev.key)
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.key == cur.key:
            raise DataError(f"duplicate event key at={format_ts(cur.at)} seq={cur.seq}")
    for ev in ordered:
        if ev.bug not in bugs:
            raise DanglingBugId(f"event seq={ev.seq} references unknown bug {ev.bug}")
        if ev.kind in _ARC_KINDS:
            if ev.target is None:
                raise DataError(f"event seq={ev.seq}: {ev.kind.value} without target")
            if ev.target == ev.bug:
                raise SelfLoopEvent(f"event seq={ev.seq}: bug {ev.bug} blocks itself")
            if ev.target not in bugs:
                raise DanglingBugId(f"event seq={ev.seq} references unknown bug {ev.target}")
    return EventLog(events=tuple(ordered), bugs=dict(bugs))


@dataclass
class DeveloperProfile:
    id: str
    components_fixed: Counter = field(default_factory=Counter)
    fixes_count: int = 0
    topic_mean_cost: dict[int, float] = field(default_factory=dict)
    busy_until: date | None = None
    queue: list[tuple[int, date, date]] = field(default_factory=list)

    def is_idle(self, today: date) -> bool:
        return self.busy_until is None or self.busy_until <= today

    def book(self, bug: int, start: date, finish: date) -> None:
        """Reserve [start, finish] for ``bug``; the developer is free again the next day."""
        if self.queue and start <= self.queue[-1][2]:
            raise DataError(f"developer {self.id}: overlapping assignment for bug {bug}")
        self.queue.append((bug, start, finish))
        free = date.fromordinal(finish.toordinal() + 1)
        if self.busy_until is None or free > self.busy_until:
            self.busy_until = free


# --- JSONL persistence ------------------------------------------------------

def _read_jsonl(path: Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON in {path}:{line_no}") from exc


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=False, ensure_ascii=False))
            fh.write("\n")


def read_bugs(path: str | Path) -> dict[int, BugRecord]:
    bugs: dict[int, BugRecord] = {}
    for obj in _read_jsonl(Path(path)):
        bug = BugRecord.from_json(obj)
        if bug.id in bugs:
            raise DataError(f"duplicate bug id {bug.id} in {path}")
        bugs[bug.id] = bug
    return bugs


def write_bugs(path: str | Path, bugs: Mapping[int, BugRecord]) -> None:
    _write_jsonl(Path(path), (bugs[k].to_json() for k in sorted(bugs)))


def read_events(path: str | Path) -> list[Event]:
    return [Event.from_json(obj) for obj in _read_jsonl(Path(path))]


def write_events(path: str | Path, events: Iterable[Event]) -> None:
    _write_jsonl(Path(path), (ev.to_json() for ev in events))


def load_log(directory: str | Path) -> EventLog:
    """Load ``events.jsonl`` and ``bugs.jsonl`` from a normalized data directory."""
    directory = Path(directory)
    bugs = read_bugs(directory / "bugs.jsonl")
    return sort_log(read_events(directory / "events.jsonl"), bugs)


def save_log(directory: str | Path, log: EventLog) -> None:
    directory = Path(directory)
    write_events(directory / "events.jsonl", log.events)
    write_bugs(directory / "bugs.jsonl", log.bugs)
