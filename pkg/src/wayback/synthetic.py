"""Synthetic stress data: denser dependency graphs and severity-conditioned bug samples."""

from __future__ import annotations

import bisect
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .model import Event, EventKind, EventLog, Severity, sort_log

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 3.0
DEFAULT_DELTAS = (-2, -1, 0, 1, 2)
MAX_REDRAWS = 20


def target_out_degree(n: int, gamma: float, delta: int) -> int:
    """n' = max(0, round(n * gamma + delta)), rounding halves up."""
    return max(0, math.floor(n * gamma + delta + 0.5))


@dataclass
class DensifyStats:
    added: int = 0
    skipped: int = 0  # arcs given up after the redraw budget
    redraws: int = 0
    per_bug: dict[int, int] = field(default_factory=dict)  # bug -> n'


class _OpenIntervals:
    """When each bug is open, from its introduced/resolved/closed/reopened events."""

    def __init__(self, log: EventLog) -> None:
        spans: dict[int, list[list[datetime | None]]] = defaultdict(list)
        for ev in log.events:
            cur = spans[ev.bug]
            if ev.kind is EventKind.INTRODUCED and not cur:
                cur.append([ev.at, None])
            elif ev.kind in (EventKind.RESOLVED, EventKind.CLOSED) and cur and cur[-1][1] is None:
                cur[-1][1] = ev.at
            elif ev.kind is EventKind.REOPENED and cur and cur[-1][1] is not None:
                cur.append([ev.at, None])
        self.spans = spans

    def open_at(self, at: datetime) -> list[int]:
        """Bugs open once every event at instant ``at`` has been applied."""
        out = []
        for bug, spans in self.spans.items():
            for lo, hi in spans:
                if lo <= at and (hi is None or hi > at):
                    out.append(bug)
                    break
        return sorted(out)


def densify(
    log: EventLog,
    gamma: float = DEFAULT_GAMMA,
    deltas: Sequence[int] = DEFAULT_DELTAS,
    seed: int = 0,
    stats: DensifyStats | None = None,
) -> EventLog:
    """Multiply the blocking arcs of every blocking bug.

    A bug that blocks n > 0 bugs gets n' - n extra outgoing arcs, with the
    intercept drawn per bug from ``deltas``. New arcs appear when the bug's
    first dependency appeared and point at bugs open at that instant. A target
    that would close a cycle in the union of all arcs, or duplicate an arc, is
    redrawn up to ``MAX_REDRAWS`` times before the arc is skipped. Bugs
    without outgoing arcs are left alone.
    """
    if gamma <= 0:
        raise DataError("gamma must be positive")
    if not deltas:
        raise DataError("need at least one intercept")
    stats = stats if stats is not None else DensifyStats()
    rng = np.random.default_rng(seed)
    deltas = list(deltas)

    first_arc_at: dict[int, datetime] = {}
    succ: dict[int, set[int]] = defaultdict(set)
    for ev in log.events:
        arc = ev.arc
        if arc is None:
            continue
        u, v = arc
        if v not in succ[u]:
            succ[u].add(v)
        first_arc_at.setdefault(u, ev.at)
    intervals = _OpenIntervals(log)

    def reaches(src: int, dst: int) -> bool:
        stack, seen = [src], {src}
        while stack:
            x = stack.pop()
            if x == dst:
                return True
            for y in succ.get(x, ()):
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return False

    new_events: list[tuple[datetime, Event]] = []
    for bug in sorted(succ):
        n = len(succ[bug])
        if n == 0:
            continue
        delta = deltas[int(rng.integers(len(deltas)))]
        want = target_out_degree(n, gamma, delta)
        stats.per_bug[bug] = want
        at = first_arc_at[bug]
        candidates = [b for b in intervals.open_at(at) if b != bug]
        for _ in range(max(0, want - n)):
            placed = False
            for attempt in range(MAX_REDRAWS + 1):
                if not candidates:
                    break
                target = candidates[int(rng.integers(len(candidates)))]
                if target not in succ[bug] and not reaches(target, bug):
                    succ[bug].add(target)
                    new_events.append((at, Event(at=at, seq=0, bug=bug, kind=EventKind.BLOCKS, target=target)))
                    placed = True
                    break
                stats.redraws += 1
            if placed:
                stats.added += 1
            else:
                stats.skipped += 1

    # new arcs go after every original event at the same instant
    merged: list[tuple[datetime, int, int, Event]] = [(ev.at, 0, i, ev) for i, ev in enumerate(log.events)]
    merged += [(at, 1, i, ev) for i, (at, ev) in enumerate(new_events)]
    merged.sort(key=lambda t: (t[0], t[1], t[2]))
    events = [
        Event(at=ev.at, seq=i, bug=ev.bug, kind=ev.kind, target=ev.target, developer=ev.developer)
        for i, (_, _, _, ev) in enumerate(merged)
    ]
    logger.info("densify: %d arcs added, %d skipped after redraws", stats.added, stats.skipped)
    return sort_log(events, log.bugs)


def count_arcs(log: EventLog) -> int:
    return len(set(log.arcs()))


# --- severity-conditioned sampler -------------------------------------------

@dataclass(frozen=True)
class SeverityRow:
    share: float  # percent of bugs
    blocks_mu: float
    blocks_sigma: float
    depends_mu: float
    depends_sigma: float
    solve_days: float


def _dhms(days: int, h: int, m: int, s: int) -> float:
    return days + (h * 3600 + m * 60 + s) / 86400.0


FIREFOX_PROFILE: dict[Severity, SeverityRow] = {
    Severity.BLOCKER: SeverityRow(0.41, 0.714, 1.254, 0.143, 0.378, _dhms(1, 12, 21, 23)),
    Severity.CRITICAL: SeverityRow(5.49, 0.817, 3.210, 2.032, 16.296, _dhms(5, 20, 17, 14)),
    Severity.MAJOR: SeverityRow(6.43, 0.477, 1.309, 0.165, 0.553, _dhms(5, 14, 21, 6)),
    Severity.NORMAL: SeverityRow(85.3, 1.017, 1.827, 4.167, 44.139, _dhms(5, 12, 54, 49)),
    Severity.MINOR: SeverityRow(2.13, 1.139, 3.523, 1.083, 5.823, _dhms(8, 13, 6, 9)),
    Severity.TRIVIAL: SeverityRow(0.24, 0.750, 1.500, 0.000, 0.000, _dhms(3, 5, 16, 17)),
}


@dataclass(frozen=True)
class SyntheticBug:
    severity: Severity
    blocks: int
    depends_on: int
    solve_days: float


def rounded_clamped_mean(loc: float, sigma: float) -> float:
    """E[round(max(0, X))] for X ~ N(loc, sigma^2)."""
    if sigma == 0:
        return float(max(0, math.floor(loc + 0.5)))
    total = 0.0
    k = 1
    while True:
        # P(X >= k - 1/2)
        p = 0.5 * math.erfc((k - 0.5 - loc) / (sigma * math.sqrt(2.0)))
        total += p
        if p < 1e-16 and k > loc:
            return total
        k += 1


def calibrate_location(mean: float, sigma: float) -> float:
    """Location of N(loc, sigma^2) whose clamped, rounded draws average ``mean``."""
    if mean < 0:
        raise DataError("count means must be nonnegative")
    if sigma == 0 or mean == 0:
        return mean if sigma == 0 else -math.inf
    lo, hi = -10.0 * sigma - 10.0, mean + 10.0 * sigma + 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rounded_clamped_mean(mid, sigma) < mean:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _draw_counts(rng: np.random.Generator, loc: float, sigma: float, size: int) -> np.ndarray:
    if sigma == 0:
        return np.full(size, max(0, math.floor(loc + 0.5)), dtype=np.int64)
    if loc == -math.inf:
        return np.zeros(size, dtype=np.int64)
    draws = rng.normal(loc, sigma, size)
    return np.floor(np.maximum(draws, 0.0) + 0.5).astype(np.int64)


def sample_bugs(profile: Mapping[Severity, SeverityRow], count: int, seed: int = 0) -> list[SyntheticBug]:
    """Draw ``count`` bugs: severity by share, dependency counts per severity, mean solve time.

    Counts are normal draws clamped at zero and rounded; the normal's location
    is shifted so the counts keep the profile's mean.
    """
    if count < 0:
        raise DataError("count must be nonnegative")
    if count == 0:
        return []
    levels = sorted(profile)
    shares = np.array([profile[s].share for s in levels], dtype=float)
    if shares.sum() <= 0:
        raise DataError("severity shares must sum to a positive value")
    cdf = np.cumsum(shares / shares.sum())
    rng = np.random.default_rng(seed)
    picks = [min(bisect.bisect_right(cdf.tolist(), u), len(levels) - 1) for u in rng.random(count)]
    by_level = Counter(picks)
    blocks = np.zeros(count, dtype=np.int64)
    depends = np.zeros(count, dtype=np.int64)
    index = np.array(picks)
    for li in sorted(by_level):
        row = profile[levels[li]]
        where = np.flatnonzero(index == li)
        blocks[where] = _draw_counts(rng, calibrate_location(row.blocks_mu, row.blocks_sigma), row.blocks_sigma, len(where))
        depends[where] = _draw_counts(rng, calibrate_location(row.depends_mu, row.depends_sigma), row.depends_sigma, len(where))
    return [
        SyntheticBug(levels[li], int(blocks[i]), int(depends[i]), profile[levels[li]].solve_days)
        for i, li in enumerate(picks)
    ]
