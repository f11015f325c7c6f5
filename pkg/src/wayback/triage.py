"""Daily triage simulation: who fixes which bug, one bug per developer at a time.

Every day the loop first closes the bugs whose simulated work is over, then
applies the day's recorded events, then lets the algorithm hand open feasible
bugs to idle developers until one of the two runs out. Bugs under simulation
are held open in the replay; their recorded resolutions are ignored once a
simulated developer takes them.
"""

from __future__ import annotations

import csv
import logging
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, EmptyDeveloperPool, EmptyWindow
from .graph import DependencyGraph
from .model import BugRecord, DeveloperProfile, EventLog, day_of
from .replay import WaybackMachine, day_range, end_of_day
from .textmodel import (
    LinearModel,
    TopicModel,
    Vectorizer,
    dominant_topic,
    estimate_cost,
    fit_costs,
    fit_lda,
    fit_vectorizer,
    train_classifier,
    transform,
    transform_dense,
)

logger = logging.getLogger(__name__)

DEFAULT_RELEASE_DAYS = 28
DEFAULT_ALPHA = 0.5
RANDOM_REPEATS = 5
ALGORITHMS = ("actual", "cbr", "costriage", "random")


# --- models -----------------------------------------------------------------

@dataclass
class TriageContext:
    """Developer classifier, cost model and training-window profiles."""

    vectorizer: Vectorizer
    classifier: LinearModel
    topic_model: TopicModel
    profiles: dict[str, DeveloperProfile]
    _suitability: dict[int, dict[str, float]] = field(default_factory=dict)
    _topic: dict[int, int | None] = field(default_factory=dict)

    def suitability(self, bug: BugRecord) -> dict[str, float]:
        """Softmax of the classifier scores over developers; unknown developers get 0."""
        if bug.id not in self._suitability:
            raw = self.classifier.scores(transform(self.vectorizer, bug.text))
            if len(self.classifier.classes) == 0:
                self._suitability[bug.id] = {}
            else:
                shifted = np.exp(raw - raw.max())
                probs = shifted / shifted.sum()
                self._suitability[bug.id] = {d: float(p) for d, p in zip(self.classifier.classes, probs)}
        return self._suitability[bug.id]

    def topic(self, bug: BugRecord) -> int | None:
        if bug.id not in self._topic:
            self._topic[bug.id] = dominant_topic(self.topic_model, bug.text)
        return self._topic[bug.id]

    def cost(self, bug: BugRecord, developer: str) -> float:
        return estimate_cost(self.topic_model, self.topic(bug), developer)


def developer_profiles(training: Iterable[BugRecord]) -> dict[str, DeveloperProfile]:
    profiles: dict[str, DeveloperProfile] = {}
    for bug in sorted(training, key=lambda b: b.id):
        if not bug.assignee or not bug.is_resolved:
            continue
        prof = profiles.setdefault(bug.assignee, DeveloperProfile(id=bug.assignee))
        prof.components_fixed[bug.component] += 1
        prof.fixes_count += 1
    return profiles


def build_triage_context(
    training: Iterable[BugRecord],
    developers: Iterable[str],
    *,
    n_topics: int = 20,
    lda_iters: int = 500,
    seed: int = 0,
) -> TriageContext:
    """Fit who-fixes-what and fixing-cost models on resolved training bugs."""
    training = sorted(training, key=lambda b: b.id)
    if not training:
        raise DataError("no training bugs before the evaluation window")
    pool = set(developers)
    corpus = [b.text for b in training]
    vectorizer = fit_vectorizer(corpus)
    labelled = [b for b in training if b.is_resolved and b.assignee in pool]
    if labelled:
        X = transform_dense(vectorizer, [b.text for b in labelled])
        classifier = train_classifier(X, [b.assignee for b in labelled], seed=seed)
    else:
        classifier = LinearModel(classes=(), weights=np.zeros((0, vectorizer.size + 1)))
    tm = fit_costs(fit_lda(corpus, n_topics=n_topics, iters=lda_iters, seed=seed), training)
    profiles = developer_profiles(training)
    for dev, prof in profiles.items():
        prof.topic_mean_cost = {k: v for (d, k), v in tm.developer_topic_cost.items() if d == dev}
    return TriageContext(vectorizer, classifier, tm, profiles)


# --- pair selection ---------------------------------------------------------

def pick_cbr(bugs: Sequence[BugRecord], devs: Sequence[str], ctx: TriageContext) -> tuple[int, str]:
    """Most suitable (bug, developer) pair; ties to the lowest bug id, then developer id."""
    best_key, best = None, None
    for bug in bugs:
        s = ctx.suitability(bug)
        for dev in devs:
            key = (s.get(dev, 0.0), -bug.id)
            if best_key is None or key > best_key or (key == best_key and dev < best[1]):
                best_key, best = key, (bug.id, dev)
    return best


def costriage_scores(suitability: Sequence[float], costs: Sequence[float], alpha: float) -> list[float]:
    """alpha * s / max s + (1 - alpha) * min c / c across the candidate developers of one bug."""
    top = max(suitability, default=0.0)
    cheapest = min(costs, default=1.0)
    return [
        alpha * (s / top if top > 0 else 0.0) + (1.0 - alpha) * (cheapest / c)
        for s, c in zip(suitability, costs)
    ]


def pick_costriage(
    bugs: Sequence[BugRecord], devs: Sequence[str], ctx: TriageContext, alpha: float = DEFAULT_ALPHA
) -> tuple[int, str]:
    """Best trade-off pair; ties fall back to raw suitability, then the CBR order."""
    best_key, best = None, None
    for bug in bugs:
        s_all = ctx.suitability(bug)
        s = [s_all.get(d, 0.0) for d in devs]
        c = [ctx.cost(bug, d) for d in devs]
        for dev, score, raw in zip(devs, costriage_scores(s, c, alpha), s):
            key = (score, raw, -bug.id)
            if best_key is None or key > best_key or (key == best_key and dev < best[1]):
                best_key, best = key, (bug.id, dev)
    return best


def pick_random(bugs: Sequence[BugRecord], devs: Sequence[str], rng: np.random.Generator) -> tuple[int, str]:
    bug = bugs[int(rng.integers(len(bugs)))]
    dev = devs[int(rng.integers(len(devs)))]
    return bug.id, dev


# --- run --------------------------------------------------------------------

@dataclass(frozen=True)
class Assignment:
    bug: int
    developer: str
    day: date
    cost: float
    completion: date
    infeasible: bool
    picked: int  # the bug the algorithm chose; differs from ``bug`` after substitution


@dataclass
class TriageRun:
    algorithm: str
    start: date
    end: date
    release_interval: int
    substitution_enabled: bool
    assignments: list[Assignment] = field(default_factory=list)
    blocked_at_assignment: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class TriageReport:
    algorithm: str
    mean_fixing_time: float
    n_assigned_developers: float  # fractional once averaged over runs
    concentration_mu: float
    concentration_sigma: float
    accuracy: float
    overdue_pct: float
    infeasible_pct: float

    def csv_row(self) -> list[str]:
        def num(x: float) -> str:
            return repr(round(float(x), 9))

        return [
            self.algorithm,
            num(self.mean_fixing_time),
            str(int(self.n_assigned_developers)) if float(self.n_assigned_developers).is_integer() else num(self.n_assigned_developers),
            num(self.concentration_mu),
            num(self.concentration_sigma),
            num(self.accuracy),
            num(self.overdue_pct),
            num(self.infeasible_pct),
        ]


REPORT_HEADER = ("algorithm", "mean_fixing_time", "n_devs", "conc_mu", "conc_sigma", "accuracy", "overdue_pct", "infeasible_pct")
ASSIGNMENT_HEADER = ("bug", "developer", "day", "cost", "completion", "infeasible")


def work_days(cost: float) -> int:
    """Whole days of work for an estimated cost: rounded half up, at least one."""
    return max(1, math.floor(cost + 0.5))


def substitute_root(g: DependencyGraph, bug: int, available: set[int]) -> int | None:
    """Available root ancestor standing in for a blocked ``bug``.

    Walks up through the lowest-id blocking parent until a bug with no parent
    is reached. If that root cannot be assigned, the lowest-id available root
    above ``bug`` is used instead; None when there is none.
    """
    cur = bug
    while g.predecessors(cur):
        cur = min(g.predecessors(cur))
    if cur in available:
        return cur
    for root in g.roots_above(bug):
        if root in available:
            return root
    return None


def run_triage(
    log: EventLog,
    algorithm: str,
    start: date,
    end: date,
    developers: Iterable[str],
    feasible: Iterable[int],
    ctx: TriageContext | None = None,
    *,
    alpha: float = DEFAULT_ALPHA,
    release_interval: int = DEFAULT_RELEASE_DAYS,
    substitute: bool = False,
    seed: int = 0,
) -> TriageRun:
    """Simulate ``algorithm`` over [start, end] and return every assignment made."""
    if start > end:
        raise EmptyWindow(f"window start {start} is after end {end}")
    devs = sorted(set(developers))
    if not devs:
        raise EmptyDeveloperPool("no developers to triage to")
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown triage algorithm {algorithm!r}; valid: {', '.join(ALGORITHMS)}")
    if algorithm != "actual" and ctx is None:
        raise DataError(f"{algorithm} needs a fitted triage context")
    feasible = set(feasible)
    targets = {
        b for b in feasible
        if log.bugs[b].assigned_at is not None and start <= day_of(log.bugs[b].assigned_at) <= end
    }
    run = TriageRun(algorithm, start, end, release_interval, substitute)
    if algorithm == "actual":
        return _run_actual(log, run, targets, set(devs))

    machine = WaybackMachine(log)
    machine.hold(targets)
    rng = np.random.default_rng(seed)
    profiles = {d: DeveloperProfile(id=d) for d in devs}
    working: dict[str, int] = {}
    done: set[int] = set()
    machine.advance(end_of_day(start - timedelta(days=1)))
    for day in day_range(start, end):
        for dev in devs:
            prof = profiles[dev]
            if dev in working and prof.is_idle(day):
                bug = working.pop(dev)
                machine.force_resolve(bug, end_of_day(day - timedelta(days=1)))
        machine.advance(end_of_day(day))
        idle = [d for d in devs if profiles[d].is_idle(day) and d not in working]
        pool = {b for b in targets if b not in done and machine.is_open(b)}
        skipped: set[int] = set()
        g = machine.graph
        while idle:
            candidates = sorted(pool - skipped)
            if not candidates:
                break
            records = [log.bugs[b] for b in candidates]
            if algorithm == "cbr":
                chosen, dev = pick_cbr(records, idle, ctx)
            elif algorithm == "costriage":
                chosen, dev = pick_costriage(records, idle, ctx, alpha)
            else:
                chosen, dev = pick_random(records, idle, rng)
            blocked = g.is_blocked(chosen)
            bug = chosen
            if blocked and substitute:
                bug = substitute_root(g, chosen, pool - skipped)
                if bug is None:
                    skipped.add(chosen)
                    continue
            if g.is_blocked(bug):
                run.blocked_at_assignment.append(bug)
            cost = ctx.cost(log.bugs[bug], dev)
            length = work_days(cost)
            finish = day + timedelta(days=length - 1)
            profiles[dev].book(bug, day, finish)
            working[dev] = bug
            run.assignments.append(Assignment(bug, dev, day, cost, finish, blocked, chosen))
            done.add(bug)
            pool.discard(bug)
            idle.remove(dev)
    return run


def _run_actual(log: EventLog, run: TriageRun, targets: set[int], devs: set[str]) -> TriageRun:
    """Replay of history: the recorded assignee, assignment day and fixing day."""
    machine = WaybackMachine(log)
    by_day: dict[date, list[int]] = {}
    for b in sorted(targets):
        by_day.setdefault(day_of(log.bugs[b].assigned_at), []).append(b)
    machine.advance(end_of_day(run.start - timedelta(days=1)))
    for day in day_range(run.start, run.end):
        # assignments happen at their recorded instant, before later events of the day
        for b in sorted(by_day.get(day, []), key=lambda x: (log.bugs[x].assigned_at, x)):
            rec = log.bugs[b]
            machine.advance(rec.assigned_at)
            blocked = machine.is_open(b) and machine.graph.is_blocked(b)
            if blocked:
                run.blocked_at_assignment.append(b)
            completion = day_of(rec.resolved_at)
            run.assignments.append(Assignment(b, rec.assignee, day, float(rec.fixing_days()), completion, blocked, b))
        machine.advance(end_of_day(day))
    return run


def release_boundary(start: date, day: date, interval: int) -> date:
    """First release day strictly after ``day``; releases fall every ``interval`` days from ``start``."""
    offset = (day - start).days
    return start + timedelta(days=(offset // interval + 1) * interval)


def report_metrics(run: TriageRun, profiles: Mapping[str, DeveloperProfile], log: EventLog) -> TriageReport:
    """Scorecard of one run; percentages are in [0, 100]."""
    a = run.assignments
    if not a:
        return TriageReport(run.algorithm, 0.0, 0, 0.0, 0.0, 0.0, 0.0, 0.0)
    fixing = [(x.completion - x.day).days + 1 for x in a]
    per_dev = Counter(x.developer for x in a)
    counts = list(per_dev.values())
    sigma = statistics.stdev(counts) if len(counts) >= 2 else 0.0
    accurate = sum(
        1 for x in a
        if x.developer in profiles and profiles[x.developer].components_fixed.get(log.bugs[x.bug].component, 0) > 0
    )
    overdue = sum(1 for x in a if x.completion > release_boundary(run.start, x.day, run.release_interval))
    infeasible = sum(1 for x in a if x.infeasible)
    n = len(a)
    return TriageReport(
        algorithm=run.algorithm,
        mean_fixing_time=statistics.fmean(fixing),
        n_assigned_developers=len(per_dev),
        concentration_mu=statistics.fmean(counts),
        concentration_sigma=sigma,
        accuracy=100.0 * accurate / n,
        overdue_pct=100.0 * overdue / n,
        infeasible_pct=100.0 * infeasible / n,
    )


def average_reports(reports: Sequence[TriageReport]) -> TriageReport:
    if len(reports) == 1:
        return reports[0]
    return TriageReport(
        algorithm=reports[0].algorithm,
        mean_fixing_time=statistics.fmean(r.mean_fixing_time for r in reports),
        n_assigned_developers=statistics.fmean(r.n_assigned_developers for r in reports),
        concentration_mu=statistics.fmean(r.concentration_mu for r in reports),
        concentration_sigma=statistics.fmean(r.concentration_sigma for r in reports),
        accuracy=statistics.fmean(r.accuracy for r in reports),
        overdue_pct=statistics.fmean(r.overdue_pct for r in reports),
        infeasible_pct=statistics.fmean(r.infeasible_pct for r in reports),
    )


def write_reports(fh: IO[str], reports: Iterable[TriageReport]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for rep in reports:
        writer.writerow(rep.csv_row())


def write_assignments(fh: IO[str], run: TriageRun) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ASSIGNMENT_HEADER)
    for x in run.assignments:
        writer.writerow((x.bug, x.developer, x.day.isoformat(), repr(round(x.cost, 9)), x.completion.isoformat(), int(x.infeasible)))
