"""Prioritization strategies and the day-by-day evaluation protocol.

A strategy scores every bug of the current pool; the harness takes the
highest scores, breaking ties towards the lowest bug id. Evaluation replays
the log and, on each day with k actual assignments of feasible bugs, lets the
strategy pick k bugs of its own. The day a bug is picked is compared with the
day it was really assigned.
"""

from __future__ import annotations

import csv
import logging
import math
import statistics
from collections import Counter, deque
from dataclasses import dataclass, field
from datetime import date
from typing import IO, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, EmptyWindow
from .graph import DependencyGraph
from .model import BugRecord, EventLog, Priority, day_of
from .replay import WaybackMachine, day_range, end_of_day
from .textmodel import (
    COST_FLOOR,
    LinearModel,
    TopicModel,
    Vectorizer,
    dominant_topic,
    estimate_cost,
    fit_costs,
    fit_lda,
    fit_vectorizer,
    predict,
    train_classifier,
    transform_dense,
    transform,
)

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.5
RANDOM_REPEATS = 3


@dataclass
class DecisionView:
    """What a strategy may look at when it scores the pool on ``day``."""

    graph: DependencyGraph
    bugs: Mapping[int, BugRecord]
    pool: list[int]
    day: date
    rng: np.random.Generator
    actual_day: Mapping[int, date] = field(default_factory=dict)


@dataclass
class TextContext:
    """Models fitted on the training window, with per-bug caches."""

    vectorizer: Vectorizer | None = None
    priority_model: LinearModel | None = None
    topic_model: TopicModel | None = None
    _topic: dict[int, int | None] = field(default_factory=dict)
    _priority: dict[int, float] = field(default_factory=dict)

    def topic(self, bug: BugRecord) -> int | None:
        if bug.id not in self._topic:
            self._topic[bug.id] = dominant_topic(self.topic_model, bug.text) if self.topic_model else None
        return self._topic[bug.id]

    def cost(self, bug: BugRecord) -> float:
        if self.topic_model is None:
            raise DataError("cost-aware strategy needs a topic model")
        return estimate_cost(self.topic_model, self.topic(bug))

    def estimated_priority(self, bug: BugRecord) -> float:
        if self.vectorizer is None or self.priority_model is None:
            raise DataError("estimated-priority strategy needs a priority classifier")
        if bug.id not in self._priority:
            self._priority[bug.id] = float(predict(self.priority_model, transform(self.vectorizer, bug.text)))
        return self._priority[bug.id]


def build_text_context(
    training: Iterable[BugRecord],
    *,
    n_topics: int = 20,
    lda_iters: int = 500,
    seed: int = 0,
) -> TextContext:
    """Fit the priority classifier and the cost model on training-window bugs."""
    training = sorted(training, key=lambda b: b.id)
    if not training:
        raise DataError("no training bugs before the evaluation window")
    corpus = [b.text for b in training]
    vectorizer = fit_vectorizer(corpus)
    labelled = [b for b in training if b.priority is not Priority.MISSING]
    priority_model = None
    if labelled:
        X = transform_dense(vectorizer, [b.text for b in labelled])
        priority_model = train_classifier(X, [int(b.priority) for b in labelled], seed=seed)
    tm = fit_lda(corpus, n_topics=n_topics, iters=lda_iters, seed=seed)
    tm = fit_costs(tm, training)
    return TextContext(vectorizer=vectorizer, priority_model=priority_model, topic_model=tm)


# --- per-bug scores ---------------------------------------------------------

def score_max_degree(g: DependencyGraph, bug: int) -> float:
    return float(g.degree(bug))


def score_max_depth(g: DependencyGraph, bug: int) -> float:
    return float(g.depth(bug))


def score_degree_plus_depth(g: DependencyGraph, bug: int) -> float:
    return float(g.degree(bug) + g.depth(bug))


def score_max_severity(g: DependencyGraph, bug: int) -> float:
    return float(g.info(bug).severity)


def score_degree_plus_severity(g: DependencyGraph, bug: int) -> float:
    return float(g.degree(bug) + g.info(bug).severity)


def score_max_priority(g: DependencyGraph, bug: int) -> float:
    return float(g.info(bug).priority)


def _level_discounted(g: DependencyGraph, bug: int, value: Callable[[int], float]) -> float:
    """Sum of value(u) / e^level over ``bug`` and its descendants, each at its BFS level."""
    level = {bug: 0}
    queue = deque([bug])
    total = 0.0
    while queue:
        u = queue.popleft()
        total += value(u) * math.exp(-level[u])
        for w in sorted(g.successors(u)):
            if w not in level:
                level[w] = level[u] + 1
                queue.append(w)
    return total


def score_childrens_degree(g: DependencyGraph, bug: int) -> float:
    return _level_discounted(g, bug, g.degree)


def score_childrens_severity(g: DependencyGraph, bug: int) -> float:
    return _level_discounted(g, bug, lambda u: g.info(u).severity)


def cost_and_priority(priorities: Sequence[float], costs: Sequence[float], alpha: float) -> list[float]:
    """alpha * p / max p + (1 - alpha) * min c / c over one pool.

    Costs are floored at half a day. A pool whose estimated priorities are
    all zero contributes nothing through the priority term.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    costs = [max(COST_FLOOR, c) for c in costs]
    top = max(priorities, default=0.0)
    cheapest = min(costs, default=1.0)
    out = []
    for p, c in zip(priorities, costs):
        p_term = p / top if top > 0 else 0.0
        out.append(alpha * p_term + (1.0 - alpha) * (cheapest / c))
    return out


# --- strategies -------------------------------------------------------------

class Strategy:
    """Scores a pool; higher is picked first, ties go to the lowest bug id."""

    name = "strategy"
    randomized = False

    def scores(self, view: DecisionView) -> dict[int, float]:
        raise NotImplementedError

    def select(self, view: DecisionView, k: int) -> list[int]:
        if k <= 0 or not view.pool:
            return []
        scored = self.scores(view)
        ranked = sorted(view.pool, key=lambda b: (-scored[b], b))
        return ranked[:k]


class GraphStrategy(Strategy):
    def __init__(self, name: str, fn: Callable[[DependencyGraph, int], float]) -> None:
        self.name = name
        self.fn = fn

    def scores(self, view: DecisionView) -> dict[int, float]:
        return {b: self.fn(view.graph, b) for b in view.pool}


class RandomStrategy(Strategy):
    name = "random"
    randomized = True

    def scores(self, view: DecisionView) -> dict[int, float]:
        draws = view.rng.random(len(view.pool))
        return dict(zip(view.pool, (float(x) for x in draws)))


class ActualStrategy(Strategy):
    """Picks exactly the bugs that were really assigned today."""

    name = "actual"

    def scores(self, view: DecisionView) -> dict[int, float]:
        return {b: 1.0 if view.actual_day.get(b) == view.day else 0.0 for b in view.pool}


class CostOrientedStrategy(Strategy):
    name = "cost_oriented"

    def __init__(self, context: TextContext) -> None:
        self.context = context

    def scores(self, view: DecisionView) -> dict[int, float]:
        return {b: -max(COST_FLOOR, self.context.cost(view.bugs[b])) for b in view.pool}


class EstimatedPriorityStrategy(Strategy):
    name = "estimated_priority"

    def __init__(self, context: TextContext) -> None:
        self.context = context

    def scores(self, view: DecisionView) -> dict[int, float]:
        return {b: self.context.estimated_priority(view.bugs[b]) for b in view.pool}


class CostPriorityStrategy(Strategy):
    name = "cost_priority"

    def __init__(self, context: TextContext, alpha: float = DEFAULT_ALPHA) -> None:
        self.context = context
        self.alpha = alpha

    def scores(self, view: DecisionView) -> dict[int, float]:
        bugs = [view.bugs[b] for b in view.pool]
        p = [self.context.estimated_priority(b) for b in bugs]
        c = [self.context.cost(b) for b in bugs]
        return dict(zip(view.pool, cost_and_priority(p, c, self.alpha)))


class TransformedStrategy(Strategy):
    """Applies ``transform`` to another strategy's scores."""

    def __init__(self, base: Strategy, transform_fn: Callable[[float], float]) -> None:
        self.base = base
        self.transform_fn = transform_fn
        self.name = f"{base.name}~"
        self.randomized = base.randomized

    def scores(self, view: DecisionView) -> dict[int, float]:
        return {b: self.transform_fn(s) for b, s in self.base.scores(view).items()}


GRAPH_STRATEGIES: dict[str, Callable[[DependencyGraph, int], float]] = {
    "max_degree": score_max_degree,
    "max_depth": score_max_depth,
    "max_degree_depth": score_degree_plus_depth,
    "max_severity": score_max_severity,
    "max_degree_severity": score_degree_plus_severity,
    "childrens_degree": score_childrens_degree,
    "childrens_severity": score_childrens_severity,
    "max_priority": score_max_priority,
}
TEXT_STRATEGIES = ("cost_oriented", "estimated_priority", "cost_priority")
STRATEGY_NAMES = ("actual", "random", *GRAPH_STRATEGIES, *TEXT_STRATEGIES)


def make_strategy(name: str, context: TextContext | None = None, alpha: float = DEFAULT_ALPHA) -> Strategy:
    if name == "actual":
        return ActualStrategy()
    if name == "random":
        return RandomStrategy()
    if name in GRAPH_STRATEGIES:
        return GraphStrategy(name, GRAPH_STRATEGIES[name])
    if name in TEXT_STRATEGIES:
        if context is None:
            raise DataError(f"strategy {name!r} needs fitted text models")
        if name == "cost_oriented":
            return CostOrientedStrategy(context)
        if name == "estimated_priority":
            return EstimatedPriorityStrategy(context)
        return CostPriorityStrategy(context, alpha)
    raise ValueError(f"unknown strategy {name!r}; valid: {', '.join(STRATEGY_NAMES)}")


# --- evaluation -------------------------------------------------------------

@dataclass(frozen=True)
class PrioritizationReport:
    strategy: str
    n_assigned: float
    early: float
    on_time: float
    late: float
    divergence: float
    details: dict[int, tuple[date, date]] = field(default_factory=dict)

    def csv_row(self) -> list[str]:
        return [
            self.strategy,
            _count(self.n_assigned),
            _count(self.early),
            _count(self.on_time),
            _count(self.late),
            repr(round(float(self.divergence), 9)),
        ]


REPORT_HEADER = ("strategy", "n_assigned", "early", "on_time", "late", "divergence_days")


def _count(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(round(float(x), 9))


def actual_assignment_days(log: EventLog, feasible: Iterable[int], start: date, end: date) -> dict[int, date]:
    """Feasible bugs whose recorded assignment day falls in [start, end]."""
    out = {}
    for b in sorted(feasible):
        rec = log.bugs.get(b)
        if rec is None or rec.assigned_at is None:
            continue
        d = day_of(rec.assigned_at)
        if start <= d <= end:
            out[b] = d
    return out


def simulate_selection(
    log: EventLog,
    strategy: Strategy,
    actual: Mapping[int, date],
    start: date,
    end: date,
    seed: int = 0,
    on_select: Callable[[date, list[int]], None] | None = None,
) -> dict[int, date]:
    """Day each bug of ``actual`` is picked by ``strategy``; unpicked bugs get ``end``.

    The bugs under evaluation stay open in the replay until picked; their
    recorded status changes are applied when they are released.
    """
    if start > end:
        raise EmptyWindow(f"window start {start} is after end {end}")
    machine = WaybackMachine(log)
    machine.hold(actual)
    per_day = Counter(actual.values())
    rng = np.random.default_rng(seed)
    picked: dict[int, date] = {}
    slots = 0
    for day in day_range(start, end):
        machine.advance(end_of_day(day))
        slots += per_day.get(day, 0)
        if slots == 0:
            continue
        pool = [b for b in sorted(actual) if b not in picked and machine.is_open(b)]
        view = DecisionView(machine.graph, log.bugs, pool, day, rng, actual)
        chosen = strategy.select(view, slots)
        slots -= len(chosen)
        for b in chosen:
            picked[b] = day
        if on_select is not None:
            on_select(day, chosen)
        for b in chosen:
            machine.release(b)
    for b in actual:
        picked.setdefault(b, end)
    return picked


def summarize(name: str, actual: Mapping[int, date], picked: Mapping[int, date]) -> PrioritizationReport:
    diffs = [(picked[b] - actual[b]).days for b in sorted(actual)]
    early = sum(1 for d in diffs if d < 0)
    late = sum(1 for d in diffs if d > 0)
    divergence = statistics.stdev(diffs) if len(diffs) >= 2 else 0.0
    return PrioritizationReport(
        strategy=name,
        n_assigned=len(diffs),
        early=early,
        on_time=len(diffs) - early - late,
        late=late,
        divergence=divergence,
        details={b: (actual[b], picked[b]) for b in sorted(actual)},
    )


def evaluate_prioritization(
    log: EventLog,
    strategy: Strategy,
    start: date,
    end: date,
    feasible: Iterable[int],
    seed: int = 0,
    repeats: int = RANDOM_REPEATS,
) -> PrioritizationReport:
    """Score ``strategy`` against the real assignment days in [start, end].

    Randomized strategies run ``repeats`` times with seeds ``seed, seed+1, ...``
    and the counts and divergence are averaged.
    """
    actual = actual_assignment_days(log, feasible, start, end)
    runs = repeats if strategy.randomized else 1
    reports = [
        summarize(strategy.name, actual, simulate_selection(log, strategy, actual, start, end, seed + r))
        for r in range(max(1, runs))
    ]
    if len(reports) == 1:
        return reports[0]
    return PrioritizationReport(
        strategy=strategy.name,
        n_assigned=reports[0].n_assigned,
        early=statistics.fmean(r.early for r in reports),
        on_time=statistics.fmean(r.on_time for r in reports),
        late=statistics.fmean(r.late for r in reports),
        divergence=statistics.fmean(r.divergence for r in reports),
        details=reports[0].details,
    )


def write_reports(fh: IO[str], reports: Iterable[PrioritizationReport]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for rep in reports:
        writer.writerow(rep.csv_row())


def write_details(fh: IO[str], report: PrioritizationReport) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("bug", "actual_day", "strategy_day", "difference_days"))
    for bug, (actual, chosen) in sorted(report.details.items()):
        writer.writerow((bug, actual.isoformat(), chosen.isoformat(), (chosen - actual).days))
