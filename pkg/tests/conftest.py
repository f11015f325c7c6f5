from __future__ import annotations

import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from wayback.cli import read_config
from wayback.graph import build_graph
from wayback.ingest import feasibility_filter, normalize, read_raw
from wayback.model import BugRecord, Event, EventKind, EventLog, Severity, Status, parse_day, sort_log
from wayback.prioritize import actual_assignment_days, simulate_selection

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "fixture"
FIXTURE_CONF = FIXTURE / "wayback.conf"
GOLDEN = DATA / "golden"

SAMPLE_NODES = list(range(1, 10))
SAMPLE_ARCS = [(1, 3), (3, 6), (1, 4), (4, 6), (2, 4), (7, 8)]

T0 = datetime(2010, 1, 4, 9, 0, tzinfo=timezone.utc)

GOLDEN_FILES = ("snapshots.csv", "prioritization.csv", "triage.csv")

ACCEPTANCE_LINES: list[str] = []  # filled by test_acceptance, echoed in the terminal summary


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def run_golden_pipeline(out: Path) -> None:
    """ingest --offline, replay, prioritize and triage on the fixture, writing into ``out``."""
    from wayback.cli import main

    base = ["--config", str(FIXTURE_CONF), "--out", str(out)]
    for step in (["ingest", "--offline"], ["replay"], ["prioritize"], ["triage"]):
        code = main([*base, *step])
        if code != 0:
            raise RuntimeError(f"{step[0]} exited with {code}")


def sample_graph():
    return build_graph(SAMPLE_NODES, SAMPLE_ARCS)


class LogBuilder:
    """Small hand-written logs: bugs plus events in the order they are added."""

    def __init__(self) -> None:
        self.bugs: dict[int, BugRecord] = {}
        self.events: list[Event] = []

    def bug(self, bug_id: int, at: datetime, **fields) -> "LogBuilder":
        self.bugs[bug_id] = BugRecord(id=bug_id, created_at=at, **fields)
        self.add(at, bug_id, EventKind.INTRODUCED)
        return self

    def add(self, at: datetime, bug: int, kind: EventKind, target: int | None = None, developer: str | None = None):
        self.events.append(Event(at=at, seq=len(self.events), bug=bug, kind=kind, target=target, developer=developer))
        return self

    def build(self) -> EventLog:
        return sort_log(self.events, self.bugs)


def sample_log() -> EventLog:
    lb = LogBuilder()
    for i in SAMPLE_NODES:
        lb.bug(i, T0 + timedelta(minutes=i))
    for j, (u, v) in enumerate(SAMPLE_ARCS):
        lb.add(T0 + timedelta(hours=1, minutes=j), u, EventKind.BLOCKS, v)
    return lb.build()


def resolved_bug(bug_id: int, created: datetime, assigned: datetime, resolved: datetime, **fields) -> BugRecord:
    return BugRecord(
        id=bug_id, created_at=created, assigned_at=assigned, resolved_at=resolved,
        status=Status.RESOLVED, severity=fields.pop("severity", Severity.NORMAL), **fields,
    )


@pytest.fixture(scope="session")
def fixture_config() -> dict[str, str]:
    return read_config(FIXTURE_CONF)


@pytest.fixture(scope="session")
def fixture_log(fixture_config) -> EventLog:
    raw = read_raw(fixture_config["offline_dir"])
    return normalize(
        raw.bugs, raw.histories,
        parse_day(fixture_config["window_start"]), parse_day(fixture_config["window_end"]), Counter(),
    )


@pytest.fixture(scope="session")
def fixture_window(fixture_config):
    return parse_day(fixture_config["from"]), parse_day(fixture_config["to"])


@pytest.fixture(scope="session")
def fixture_feasibility(fixture_log, fixture_window):
    return feasibility_filter(fixture_log, fixture_window[1])


def random_mutation(g, rng, max_nodes: int = 50) -> str:
    """Apply one random add_node / add_arc / remove_node to ``g``; return what was tried.

    Rejected arcs (cycle or duplicate) must leave ``g`` untouched; the caller
    checks the caches afterwards.
    """
    from wayback.errors import DuplicateArc, WouldCreateCycle

    nodes = g.nodes()
    r = rng.random()
    if not nodes or (r < 0.25 and len(nodes) < max_nodes):
        free = [i for i in range(1, 2 * max_nodes + 1) if i not in g]
        g.add_node(rng.choice(free))
        return "add_node"
    if r < 0.8 and len(nodes) >= 2:
        u, v = rng.sample(nodes, 2)
        before = g.copy()
        try:
            g.add_arc(u, v)
        except (WouldCreateCycle, DuplicateArc):
            assert g == before
            return "rejected_arc"
        return "add_arc"
    g.remove_node(rng.choice(nodes))
    return "remove_node"


def nx_digraph(g):
    import networkx as nx

    G = nx.DiGraph()
    G.add_nodes_from(g.nodes())
    G.add_edges_from(g.arcs())
    return G


def oracle_caches(g):
    """Depth, degree and components from networkx, independent of the package."""
    import networkx as nx

    from wayback.graph import GraphCaches

    G = nx_digraph(g)
    depth = {}
    for v in nx.topological_sort(G):
        depth[v] = max((depth[p] + 1 for p in G.predecessors(v)), default=0)
    return GraphCaches(
        depth=depth,
        degree={v: G.out_degree(v) for v in G},
        components=frozenset(frozenset(c) for c in nx.weakly_connected_components(G)),
    )


def random_dag(rng, n: int, p: float):
    """Random DAG on 1..n: arcs only from lower to higher rank of a random permutation."""
    from wayback.graph import build_graph

    order = list(range(1, n + 1))
    rng.shuffle(order)
    arcs = [(order[i], order[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return build_graph(range(1, n + 1), arcs)


# --- shared by unit and acceptance tests -----------------------------------

def two_topic_corpus(seed: int, docs: int = 200, length: int = 15):
    """Alternating documents over two disjoint 16-word vocabularies."""
    rng = np.random.default_rng(1000 + seed)
    vocab = ([f"alpha{c}x" for c in "abcdefghijklmnop"], [f"beta{c}y" for c in "abcdefghijklmnop"])
    labels = [i % 2 for i in range(docs)]
    return [" ".join(rng.choice(vocab[lab], length)) for lab in labels], labels


def purity(assigned, labels) -> float:
    assigned, labels = np.asarray(assigned), np.asarray(labels)
    hits = sum(max(np.sum((assigned == k) & (labels == c)) for c in set(labels)) for k in set(assigned))
    return hits / len(labels)


def separable_toy(seed: int = 0, n: int = 20):
    """Two classes split by the sign of the first feature, with a noise feature."""
    rng = np.random.default_rng(seed)
    y = np.array([i % 2 for i in range(n)])
    X = np.column_stack([np.where(y == 1, 1.0, -1.0) + rng.uniform(-0.4, 0.4, n), rng.uniform(-1, 1, n)])
    return X, y


def random_assignment_log(seed: int, n: int = 40):
    """Bugs created over 20 days, most assigned and resolved later, arcs low id -> high id."""
    rng = random.Random(seed)
    lb = LogBuilder()
    created = {}
    for i in range(1, n + 1):
        created[i] = T0 + timedelta(hours=rng.randint(0, 20 * 24))
    for i in sorted(created, key=lambda b: (created[b], b)):
        at = created[i]
        kw = {}
        if rng.random() < 0.7:
            kw["assignee"] = f"dev{rng.randint(1, 4)}"
            kw["assigned_at"] = at + timedelta(hours=rng.randint(0, 72))
            kw["resolved_at"] = kw["assigned_at"] + timedelta(hours=rng.randint(1, 200))
        lb.bug(i, at, status=Status.RESOLVED if "resolved_at" in kw else Status.OPEN,
               severity=Severity(rng.randint(1, 6)), **kw)
        if kw:
            lb.add(kw["assigned_at"], i, EventKind.ASSIGNED, developer=kw["assignee"])
            lb.add(kw["resolved_at"], i, EventKind.RESOLVED)
    for _ in range(n // 2):
        u, v = sorted(rng.sample(range(1, n + 1), 2))
        at = max(created[u], created[v]) + timedelta(minutes=1)
        if lb.bugs[u].resolved_at and lb.bugs[u].resolved_at <= at or lb.bugs[v].resolved_at and lb.bugs[v].resolved_at <= at:
            continue
        lb.add(at, u, EventKind.BLOCKS, v)
    log = lb.build()
    feasible = {b for b, r in log.bugs.items() if r.assigned_at is not None}
    return log, feasible


def selection_trace(log, strategy, window, feasible, seed=0):
    """(day, bugs picked) for every day a strategy made picks."""
    actual = actual_assignment_days(log, feasible, *window)
    trace = []
    simulate_selection(log, strategy, actual, *window, seed=seed, on_select=lambda d, c: trace.append((d, list(c))))
    return trace


MONOTONE_TRANSFORMS = [
    lambda x: 3.0 * x + 1.0,
    lambda x: 0.01 * x - 7.0,
    lambda x: math.exp(0.2 * x),
    lambda x: x**3 + x,
    lambda x: math.atan(0.1 * x),
    lambda x: math.sinh(0.3 * x),
    lambda x: x + 1000.0,
    lambda x: -1.0 / (1.0 + math.exp(0.5 * x)),
    lambda x: 2.0 ** (0.5 * x),
    lambda x: x**5 + 2 * x,
]


@dataclass
class StubContext:
    """Fixed suitability and cost tables standing in for fitted models."""

    suit: dict[int, dict[str, float]] = field(default_factory=dict)
    costs: dict[tuple[int, str], float] = field(default_factory=dict)
    default_cost: float = 1.0

    def suitability(self, bug):
        return self.suit.get(bug.id, {})

    def cost(self, bug, developer):
        return self.costs.get((bug.id, developer), self.default_cost)


def assigned_log(nodes, arcs, assignee="ann", component=""):
    """Bugs created at T0, assigned on day 0 and resolved much later, plus the given arcs."""
    lb = LogBuilder()
    for i in nodes:
        at = T0 + timedelta(minutes=i)
        lb.bug(i, at, assignee=assignee, assigned_at=at + timedelta(hours=1),
               resolved_at=at + timedelta(days=60), component=component)
    for j, (u, v) in enumerate(arcs):
        lb.add(T0 + timedelta(minutes=30 + j), u, EventKind.BLOCKS, v)
    return lb.build()


def assert_no_overlap(run):
    """Each developer's [day, completion] intervals are pairwise disjoint."""
    by_dev = defaultdict(list)
    for a in run.assignments:
        assert a.completion >= a.day
        by_dev[a.developer].append((a.day, a.completion))
    for dev, spans in by_dev.items():
        spans.sort()
        for (_, end), (nxt, _) in zip(spans, spans[1:]):
            assert nxt > end, f"{dev} double-booked"
