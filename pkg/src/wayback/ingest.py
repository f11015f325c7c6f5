"""Bugzilla ingestion: REST fetch, normalization into an event log, feasibility filters."""

from __future__ import annotations

import json
import logging
import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import requests

from .errors import AuthRequired, DataError, NetworkError, UnknownPriority, UnknownSeverity
from .model import (
    BugRecord,
    Event,
    EventKind,
    EventLog,
    Priority,
    Severity,
    Status,
    day_of,
    parse_day,
    parse_ts,
    priority_ordinal,
    severity_ordinal,
    sort_log,
)

logger = logging.getLogger(__name__)

RAW_BATCH = 500
RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})
SKIP_STATUSES = frozenset({403, 404})
# Bugzilla error codes returned with HTTP 200: 101 invalid id, 102 access denied
SKIP_API_CODES = frozenset({101, 102})

_RESOLVED_STATES = {"RESOLVED", "VERIFIED", "CLOSED"}
_OPEN_STATES = {"UNCONFIRMED", "NEW", "ASSIGNED", "REOPENED", "CONFIRMED", "IN_PROGRESS"}

# event order among equal timestamps
_KIND_RANK = {
    EventKind.INTRODUCED: 0,
    EventKind.BLOCKS: 1,
    EventKind.DEPENDS_ON: 1,
    EventKind.ASSIGNED: 2,
    EventKind.COMMENTED: 3,
    EventKind.REOPENED: 4,
    EventKind.RESOLVED: 5,
    EventKind.CLOSED: 6,
}


def is_placeholder_assignee(who: str | None) -> bool:
    """Default assignees that mean "nobody owns this bug yet"."""
    if not who:
        return True
    who = who.strip().lower()
    return who.startswith("nobody@") or who in {"nobody", "none"} or who.endswith("-bugs@lists.freedesktop.org")


# --- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class IngestConfig:
    base_url: str = "https://bugzilla.mozilla.org"
    product: str = ""
    window_start: date | None = None
    window_end: date | None = None
    offline_dir: Path | None = None
    id_start: int | None = None
    id_end: int | None = None
    api_key: str | None = None
    workers: int = 4
    max_retries: int = 10
    backoff: float = 1.0
    timeout: float = 30.0
    page_size: int = 500

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any]) -> "IngestConfig":
        def opt_int(key: str) -> int | None:
            return int(cfg[key]) if cfg.get(key) not in (None, "") else None

        def opt_day(key: str) -> date | None:
            return parse_day(cfg[key]) if cfg.get(key) else None

        return cls(
            base_url=str(cfg.get("base_url") or cls.base_url).rstrip("/"),
            product=str(cfg.get("product") or ""),
            window_start=opt_day("window_start"),
            window_end=opt_day("window_end"),
            offline_dir=Path(cfg["offline_dir"]) if cfg.get("offline_dir") else None,
            id_start=opt_int("id_start"),
            id_end=opt_int("id_end"),
            api_key=cfg.get("api_key") or None,
            workers=opt_int("workers") or 4,
            max_retries=opt_int("max_retries") if cfg.get("max_retries") not in (None, "") else 10,
            backoff=float(cfg.get("backoff") or 1.0),
            timeout=float(cfg.get("timeout") or 30.0),
        )


# --- fetching ---------------------------------------------------------------

@dataclass
class FetchResult:
    bugs: list[dict]
    histories: dict[int, list[dict]]
    skipped: Counter = field(default_factory=Counter)
    retries: int = 0


class BugzillaClient:
    """Minimal REST client with exponential backoff on 429 and 5xx."""

    def __init__(
        self,
        config: IngestConfig,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self.session = session or requests.Session()
        self.sleep = sleep
        self.retries = 0

    def get_json(self, path: str, params: Mapping[str, Any] | None = None) -> dict | None:
        """GET ``path``; None when the resource is private or missing."""
        cfg = self.config
        url = f"{cfg.base_url}/rest/{path.lstrip('/')}"
        query = dict(params or {})
        if cfg.api_key:
            query["api_key"] = cfg.api_key
        last = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            retry_after = None
            try:
                resp = self.session.get(url, params=query, timeout=cfg.timeout)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                status = resp.status_code
                if status == 200:
                    body = resp.json()
                    if isinstance(body, dict) and body.get("error") and body.get("code") in SKIP_API_CODES:
                        return None
                    return body
                if status == 401:
                    raise AuthRequired(f"{url}: HTTP 401")
                if status in SKIP_STATUSES:
                    return None
                if status not in RETRY_STATUSES:
                    raise NetworkError(f"{url}: unexpected HTTP {status}")
                last = f"HTTP {status}"
                retry_after = _retry_after(resp)
            if attempt == cfg.max_retries:
                break
            self.retries += 1
            self.sleep(retry_after if retry_after is not None else cfg.backoff * 2**attempt)
        raise NetworkError(f"{url}: giving up after {cfg.max_retries} retries ({last})")

    def search_ids(self) -> list[int]:
        """Ids of ``product`` bugs created inside the configured window, paginated."""
        cfg = self.config
        ids: list[int] = []
        offset = 0
        while True:
            params: dict[str, Any] = {"include_fields": "id", "limit": cfg.page_size, "offset": offset}
            if cfg.product:
                params["product"] = cfg.product
            if cfg.window_start:
                params["creation_time"] = cfg.window_start.isoformat()
            body = self.get_json("bug", params) or {}
            page = [int(b["id"]) for b in body.get("bugs", [])]
            ids.extend(page)
            if len(page) < cfg.page_size:
                break
            offset += cfg.page_size
        return sorted(set(ids))

    def fetch_one(self, bug_id: int) -> tuple[int, dict | None, list[dict] | None]:
        body = self.get_json(f"bug/{bug_id}")
        bugs = (body or {}).get("bugs") or []
        if not bugs:
            return bug_id, None, None
        hist_body = self.get_json(f"bug/{bug_id}/history")
        hist = ((hist_body or {}).get("bugs") or [{}])[0].get("history", [])
        return bug_id, bugs[0], hist


def _retry_after(resp: requests.Response) -> float | None:
    value = resp.headers.get("Retry-After") if resp.headers else None
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


def fetch(
    config: IngestConfig,
    ids: Iterable[int] | None = None,
    *,
    session: requests.Session | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> FetchResult:
    """Download bugs and their histories, or read them from ``config.offline_dir``.

    Bugs referenced through blocks/depends_on but outside the requested ids are
    fetched as well (one hop) so normalization can keep links to older bugs.
    """
    if config.offline_dir is not None:
        return _read_offline(config.offline_dir, ids)
    client = BugzillaClient(config, session=session, sleep=sleep)
    if ids is None:
        if config.id_start is not None and config.id_end is not None:
            ids = range(config.id_start, config.id_end + 1)
        else:
            ids = client.search_ids()
    wanted = sorted(set(ids))
    result = FetchResult(bugs=[], histories={})
    seen: set[int] = set()
    for hop in range(2):
        batch = [i for i in wanted if i not in seen]
        seen.update(batch)
        with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
            fetched = list(pool.map(client.fetch_one, batch))
        for bug_id, bug, hist in fetched:
            if bug is None:
                logger.info("bug %d not accessible, skipped", bug_id)
                result.skipped["inaccessible"] += 1
                continue
            result.bugs.append(bug)
            result.histories[bug_id] = hist or []
        if hop == 0:
            wanted = sorted({r for b in result.bugs for r in _linked_ids(b)} - seen)
    result.bugs.sort(key=lambda b: int(b["id"]))
    result.retries = client.retries
    return result


def _linked_ids(bug: Mapping) -> set[int]:
    out = {int(x) for x in bug.get("blocks") or []} | {int(x) for x in bug.get("depends_on") or []}
    if bug.get("dupe_of"):
        out.add(int(bug["dupe_of"]))
    return out


def _read_offline(directory: Path, ids: Iterable[int] | None) -> FetchResult:
    directory = Path(directory)
    wanted = set(ids) if ids is not None else None
    result = FetchResult(bugs=[], histories={})
    bug_files = sorted(directory.glob("bugs*.jsonl"))
    hist_files = sorted(directory.glob("history*.jsonl"))
    if not bug_files:
        raise DataError(f"no bugs*.jsonl files in offline directory {directory}")
    histories: dict[int, list[dict]] = {}
    for path in hist_files:
        for obj in _iter_jsonl(path):
            histories[int(obj["id"])] = obj.get("history", [])
    for path in bug_files:
        for obj in _iter_jsonl(path):
            bug_id = int(obj["id"])
            if wanted is not None and bug_id not in wanted:
                continue
            if obj.get("error"):
                logger.info("bug %d not accessible, skipped", bug_id)
                result.skipped["inaccessible"] += 1
                continue
            result.bugs.append(obj)
            result.histories[bug_id] = histories.get(bug_id, [])
    result.bugs.sort(key=lambda b: int(b["id"]))
    return result


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"invalid JSON in {path}:{line_no}") from exc


def write_raw(result: FetchResult, raw_dir: str | Path) -> list[Path]:
    """Persist raw payloads untouched, ``RAW_BATCH`` bugs per file."""
    raw_dir = Path(raw_dir)
    raw_dir.mkdir(parents=True, exist_ok=True)
    for stale in list(raw_dir.glob("bugs_*.jsonl")) + list(raw_dir.glob("history_*.jsonl")):
        stale.unlink()
    written = []
    for start in range(0, max(len(result.bugs), 1), RAW_BATCH):
        chunk = result.bugs[start:start + RAW_BATCH]
        tag = f"{start // RAW_BATCH:04d}"
        bug_path = raw_dir / f"bugs_{tag}.jsonl"
        hist_path = raw_dir / f"history_{tag}.jsonl"
        with open(bug_path, "w", encoding="utf-8", newline="\n") as fh:
            for bug in chunk:
                fh.write(json.dumps(bug, ensure_ascii=False) + "\n")
        with open(hist_path, "w", encoding="utf-8", newline="\n") as fh:
            for bug in chunk:
                bug_id = int(bug["id"])
                fh.write(json.dumps({"id": bug_id, "history": result.histories.get(bug_id, [])}, ensure_ascii=False) + "\n")
        written += [bug_path, hist_path]
    return written


def read_raw(raw_dir: str | Path) -> FetchResult:
    return _read_offline(Path(raw_dir), None)


# --- normalization ----------------------------------------------------------

@dataclass
class _Work:
    id: int
    created: datetime
    raw: dict
    blocks: set[int]
    depends_on: set[int]
    history: list[dict]
    extra_links: list[tuple[int, int, datetime | None]] = field(default_factory=list)
    comment_count: int = 0


def _split_ids(value: str | None) -> list[int]:
    if not value:
        return []
    return [int(tok) for tok in str(value).replace(",", " ").split() if tok.strip().isdigit()]


def normalize(
    raw_bugs: Sequence[Mapping],
    histories: Mapping[int, Sequence[Mapping]],
    window_start: date | None = None,
    window_end: date | None = None,
    stats: Counter | None = None,
) -> EventLog:
    """Turn raw Bugzilla payloads into a validated ``EventLog``.

    Duplicates are folded into their originals, enhancements dropped, and bugs
    created before ``window_start`` kept only when linked to a bug created
    inside the window. Events after ``window_end`` are cut. Contradictions are
    settled latest-wins and tallied in ``stats``.
    """
    stats = stats if stats is not None else Counter()
    work: dict[int, _Work] = {}
    for raw in raw_bugs:
        if raw.get("error"):
            stats["inaccessible"] += 1
            continue
        bug_id = int(raw["id"])
        if bug_id in work:
            stats["duplicate_record"] += 1
        work[bug_id] = _Work(
            id=bug_id,
            created=parse_ts(raw["creation_time"]),
            raw=dict(raw),
            blocks={int(x) for x in raw.get("blocks") or []},
            depends_on={int(x) for x in raw.get("depends_on") or []},
            history=sorted(histories.get(bug_id, []), key=lambda h: parse_ts(h["when"])),
            comment_count=int(raw.get("comment_count") or 0),
        )

    alias = _merge_duplicates(work, stats)
    _drop_enhancements(work, stats)
    links = _collect_links(work, alias, stats)
    targeted, kept = _apply_window(work, links, window_start, stats)
    cutoff = _end_of(window_end)

    events: list[Event] = []
    arc_times: dict[tuple[int, int], datetime] = {}
    for (u, v), at in links.items():
        if u not in kept or v not in kept:
            continue
        if u not in targeted and v not in targeted:
            stats["old_old_arc"] += 1
            continue
        at = max(at, work[u].created, work[v].created)
        if cutoff is not None and at > cutoff:
            continue
        arc_times[(u, v)] = at
    for (u, v), at in arc_times.items():
        events.append(Event(at=at, seq=0, bug=u, kind=EventKind.BLOCKS, target=v))

    bugs: dict[int, BugRecord] = {}
    for bug_id in sorted(kept):
        w = work[bug_id]
        bug_events, record = _bug_timeline(w, cutoff, stats)
        events.extend(bug_events)
        bugs[bug_id] = record
    return clean_log(events, bugs)


def _end_of(day: date | None) -> datetime | None:
    if day is None:
        return None
    return parse_ts(f"{day.isoformat()}T23:59:59Z")


def _merge_duplicates(work: dict[int, _Work], stats: Counter) -> dict[int, int]:
    """Fold every DUPLICATE bug into its original; returns dup id -> original id."""
    def root_of(bug_id: int) -> int | None:
        seen = set()
        cur = bug_id
        while True:
            w = work.get(cur)
            if w is None:
                return None
            target = w.raw.get("dupe_of")
            if (w.raw.get("resolution") or "").upper() != "DUPLICATE" or not target:
                return cur
            if cur in seen:
                return None
            seen.add(cur)
            cur = int(target)

    alias: dict[int, int] = {}
    for bug_id in sorted(work):
        w = work[bug_id]
        if (w.raw.get("resolution") or "").upper() != "DUPLICATE" or not w.raw.get("dupe_of"):
            continue
        root = root_of(bug_id)
        if root is None or root == bug_id:
            stats["duplicate_orphan"] += 1
            alias[bug_id] = -1
            continue
        alias[bug_id] = root
    for dup, root in alias.items():
        w = work[dup]
        if root < 0:
            continue
        original = work[root]
        original.blocks |= w.blocks
        original.depends_on |= w.depends_on
        for entry in w.history:
            when = parse_ts(entry["when"])
            for ch in entry.get("changes", []):
                name = ch.get("field_name")
                for other in _split_ids(ch.get("added")):
                    if name == "blocks":
                        original.extra_links.append((root, other, when))
                    elif name == "depends_on":
                        original.extra_links.append((other, root, when))
        original.extra_links.extend(w.extra_links)
        for key in ("summary", "description"):
            if len(str(w.raw.get(key) or "")) > len(str(original.raw.get(key) or "")):
                original.raw[key] = w.raw[key]
        if _priority_or_missing(original.raw.get("priority"), None) is Priority.MISSING:
            if _priority_or_missing(w.raw.get("priority"), None) is not Priority.MISSING:
                original.raw["priority"] = w.raw["priority"]
        for key in ("component", "product"):
            if not original.raw.get(key) and w.raw.get(key):
                original.raw[key] = w.raw[key]
        original.comment_count += w.comment_count
        stats["duplicate_merged"] += 1
    for dup in alias:
        del work[dup]
    return {d: r for d, r in alias.items() if r >= 0}


def _is_enhancement(raw: Mapping) -> bool:
    return str(raw.get("severity") or "").lower() == "enhancement" or str(raw.get("type") or "").lower() == "enhancement"


def _drop_enhancements(work: dict[int, _Work], stats: Counter) -> None:
    for bug_id in [b for b, w in work.items() if _is_enhancement(w.raw)]:
        del work[bug_id]
        stats["enhancement_dropped"] += 1


def _collect_links(work: dict[int, _Work], alias: Mapping[int, int], stats: Counter) -> dict[tuple[int, int], datetime]:
    """Every (blocking, blocked) arc with its earliest known time."""
    stamped: dict[tuple[int, int], datetime] = {}
    unstamped: set[tuple[int, int]] = set()

    def add(u: int, v: int, when: datetime | None) -> None:
        u, v = alias.get(u, u), alias.get(v, v)
        if u == v:
            stats["self_loop_dropped"] += 1
            return
        if u not in work or v not in work:
            stats["arc_endpoint_missing"] += 1
            return
        if when is None:
            unstamped.add((u, v))
        elif (u, v) not in stamped or when < stamped[(u, v)]:
            stamped[(u, v)] = when

    for bug_id in sorted(work):
        w = work[bug_id]
        for entry in w.history:
            when = parse_ts(entry["when"])
            for ch in entry.get("changes", []):
                name = ch.get("field_name")
                if name not in ("blocks", "depends_on"):
                    continue
                if _split_ids(ch.get("removed")):
                    stats["arc_removal_ignored"] += 1
                for other in _split_ids(ch.get("added")):
                    if name == "blocks":
                        add(bug_id, other, when)
                    else:
                        add(other, bug_id, when)
        for u, v, when in w.extra_links:
            add(u, v, when)
        for other in w.blocks:
            add(bug_id, other, None)
        for other in w.depends_on:
            add(other, bug_id, None)
    for u, v in sorted(unstamped - stamped.keys()):
        # known only from the current fields: assume it appeared with the later bug
        stamped[(u, v)] = max(work[u].created, work[v].created)
        stats["arc_unstamped"] += 1
    return stamped


def _apply_window(
    work: dict[int, _Work],
    links: Mapping[tuple[int, int], datetime],
    window_start: date | None,
    stats: Counter,
) -> tuple[set[int], set[int]]:
    """(targeted, kept): bugs created in the window, plus older bugs linked to them."""
    if window_start is None:
        everything = set(work)
        return everything, everything
    targeted = {b for b, w in work.items() if day_of(w.created) >= window_start}
    kept = set(targeted)
    for u, v in links:
        if (u in targeted) != (v in targeted):
            kept.add(u)
            kept.add(v)
    stats["old_bug_kept"] += len(kept - targeted)
    stats["old_bug_dropped"] += len(set(work) - kept)
    return targeted, kept


def _priority_or_missing(label: str | None, stats: Counter | None) -> Priority:
    try:
        return priority_ordinal(label)
    except UnknownPriority:
        if stats is not None:
            stats["unknown_priority"] += 1
        return Priority.MISSING


def _severity_or_normal(label: str | None, stats: Counter) -> Severity:
    try:
        return severity_ordinal(label or "normal")
    except UnknownSeverity:
        stats["unknown_severity"] += 1
        return Severity.NORMAL


def _bug_timeline(w: _Work, cutoff: datetime | None, stats: Counter) -> tuple[list[Event], BugRecord]:
    """Status and assignment events of one bug plus its final record."""
    created = w.created
    events = [Event(at=created, seq=0, bug=w.id, kind=EventKind.INTRODUCED)]
    raw = w.raw

    def clamp(at: datetime) -> datetime:
        if at < created:
            stats["event_before_creation"] += 1
            return created
        return at

    status_events: list[tuple[datetime, EventKind]] = []
    assigns: list[tuple[datetime, str]] = []
    for entry in w.history:
        when = clamp(parse_ts(entry["when"]))
        if cutoff is not None and when > cutoff:
            continue
        for ch in entry.get("changes", []):
            name = ch.get("field_name")
            added = str(ch.get("added") or "").strip().upper()
            removed = str(ch.get("removed") or "").strip().upper()
            if name == "status":
                if added == "RESOLVED":
                    status_events.append((when, EventKind.RESOLVED))
                elif added == "CLOSED":
                    status_events.append((when, EventKind.CLOSED))
                elif added in _OPEN_STATES and removed in _RESOLVED_STATES:
                    status_events.append((when, EventKind.REOPENED))
            elif name == "assigned_to":
                who = str(ch.get("added") or "").strip()
                if not is_placeholder_assignee(who):
                    assigns.append((when, who))

    # reconcile against the current status when the whole history is in range
    current = str(raw.get("status") or "").upper()
    final_resolved = _final_resolved(status_events)
    in_range_now = cutoff is None or parse_ts(raw.get("last_change_time") or raw["creation_time"]) <= cutoff
    if in_range_now and current in _RESOLVED_STATES and not final_resolved:
        when = clamp(parse_ts(raw.get("cf_last_resolved") or raw.get("last_change_time") or raw["creation_time"]))
        status_events.append((when, EventKind.CLOSED if current == "CLOSED" else EventKind.RESOLVED))
        stats["status_synthesized"] += 1
    elif in_range_now and current in _OPEN_STATES and final_resolved:
        when = clamp(parse_ts(raw.get("last_change_time") or raw["creation_time"]))
        status_events.append((max(when, max(at for at, _ in status_events)), EventKind.REOPENED))
        stats["status_synthesized"] += 1
    status_events.sort(key=lambda se: (se[0], _KIND_RANK[se[1]]))

    # final assignee: the current field wins over history
    current_owner = raw.get("assigned_to")
    if isinstance(current_owner, Mapping):
        current_owner = current_owner.get("name")
    assignee = None if is_placeholder_assignee(current_owner) else str(current_owner)
    if not in_range_now:
        assignee = assigns[-1][1] if assigns else None
    if assignee is not None and not assigns:
        assigns.append((created, assignee))
        stats["assigned_at_creation"] += 1
    elif assignee is not None and assigns[-1][1] != assignee:
        stats["assignee_contradiction"] += 1

    resolved_at = None
    status = Status.OPEN
    for at, kind in status_events:
        if kind is EventKind.REOPENED:
            if status is not Status.OPEN:
                resolved_at, status = None, Status.OPEN
        elif status is Status.OPEN:
            resolved_at = at
            status = Status.CLOSED if kind is EventKind.CLOSED else Status.RESOLVED
        elif kind is EventKind.CLOSED:
            status = Status.CLOSED
    assigned_at = None
    if assignee is not None:
        limit = resolved_at
        times = [at for at, who in assigns if who == assignee and (limit is None or at <= limit)]
        assigned_at = times[-1] if times else None

    for at, kind in status_events:
        events.append(Event(at=at, seq=0, bug=w.id, kind=kind))
    for at, who in assigns:
        events.append(Event(at=at, seq=0, bug=w.id, kind=EventKind.ASSIGNED, developer=who))

    record = BugRecord(
        id=w.id,
        created_at=created,
        component=str(raw.get("component") or ""),
        product=str(raw.get("product") or ""),
        summary=str(raw.get("summary") or ""),
        description=str(raw.get("description") or ""),
        severity=_severity_or_normal(raw.get("severity"), stats),
        priority=_priority_or_missing(raw.get("priority"), stats),
        comment_count=w.comment_count,
        assignee=assignee,
        assigned_at=assigned_at,
        resolved_at=resolved_at,
        status=status,
    )
    return events, record


def _final_resolved(status_events: list[tuple[datetime, EventKind]]) -> bool:
    resolved = False
    for _, kind in sorted(status_events, key=lambda se: (se[0], _KIND_RANK[se[1]])):
        resolved = kind is not EventKind.REOPENED
    return resolved


def _event_sort_key(ev: Event) -> tuple:
    return (ev.at, _KIND_RANK[ev.kind], ev.bug, ev.target if ev.target is not None else -1, ev.developer or "")


def clean_log(events: Iterable[Event], bugs: Mapping[int, BugRecord]) -> EventLog:
    """Canonical form of a log; applying it twice changes nothing.

    Drops enhancements and events on unknown bugs or self-loops, rewrites
    dependencies as earliest-time ``blocks`` events, orders events by
    (time, kind, bug, target) and renumbers ``seq``.
    """
    keep = {b: rec for b, rec in bugs.items() if rec.severity is not Severity.ENHANCEMENT}
    first_arc: dict[tuple[int, int], datetime] = {}
    others: list[Event] = []
    for ev in events:
        if ev.bug not in keep:
            continue
        arc = ev.arc
        if arc is None:
            others.append(ev)
            continue
        u, v = arc
        if u == v or u not in keep or v not in keep:
            continue
        if arc not in first_arc or ev.at < first_arc[arc]:
            first_arc[arc] = ev.at
    merged = others + [Event(at=at, seq=0, bug=u, kind=EventKind.BLOCKS, target=v) for (u, v), at in first_arc.items()]
    merged.sort(key=_event_sort_key)
    renumbered = [
        Event(at=ev.at, seq=i, bug=ev.bug, kind=ev.kind, target=ev.target, developer=ev.developer)
        for i, ev in enumerate(merged)
    ]
    return sort_log(renumbered, keep)


# --- feasibility ------------------------------------------------------------

def quantile(sorted_values: Sequence[float], p: float) -> float:
    """Linear interpolation at rank (n - 1) * p of ascending ``sorted_values``."""
    n = len(sorted_values)
    if n == 0:
        raise DataError("quantile of an empty sequence")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    h = (n - 1) * p
    lo = math.floor(h)
    if lo >= n - 1:
        return float(sorted_values[-1])
    frac = h - lo
    a, b = float(sorted_values[lo]), float(sorted_values[lo + 1])
    return a + frac * (b - a)


def iqr(values: Iterable[float]) -> tuple[float, float, float]:
    """(Q1, Q3, Q3 - Q1)."""
    ordered = sorted(values)
    q1, q3 = quantile(ordered, 0.25), quantile(ordered, 0.75)
    return q1, q3, q3 - q1


def outlier_threshold(values: Iterable[float]) -> float:
    """Q3 + 1.5 IQR; values at or above it are outliers."""
    _, q3, spread = iqr(values)
    return q3 + 1.5 * spread


@dataclass(frozen=True)
class Feasibility:
    feasible: frozenset[int]
    active: frozenset[str]
    fix_counts: dict[str, int]
    fixing_threshold: float
    fix_count_iqr: float


def feasibility_filter(log: EventLog, window_end: date | None = None) -> Feasibility:
    """Feasible bugs and active developers among bugs resolved by ``window_end``.

    A developer is active when their fix count is above the IQR of all fix
    counts. A bug is feasible when it is resolved, has a recorded assignment
    date, belongs to an active developer and its fixing time is below
    Q3 + 1.5 IQR of all fixing times.
    """
    resolved = [
        b for b in log.bugs.values()
        if b.is_resolved and b.resolved_at is not None
        and (window_end is None or day_of(b.resolved_at) <= window_end)
    ]
    fix_counts = Counter(b.assignee for b in resolved if b.assignee)
    times = [b.fixing_days() for b in resolved if b.fixing_days() is not None]
    if not fix_counts or not times:
        return Feasibility(frozenset(), frozenset(), dict(fix_counts), math.inf, 0.0)
    _, _, count_spread = iqr(fix_counts.values())
    active = frozenset(d for d, c in fix_counts.items() if c > count_spread)
    threshold = outlier_threshold(times)
    feasible = frozenset(
        b.id for b in resolved
        if b.assignee in active and b.assigned_at is not None and b.fixing_days() < threshold
    )
    return Feasibility(feasible, active, dict(sorted(fix_counts.items())), threshold, count_spread)


def fixing_times(bugs: Iterable[BugRecord]) -> list[int]:
    return [d for d in (b.fixing_days() for b in bugs) if d is not None]
