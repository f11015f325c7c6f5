import io
import math
import random
from datetime import date, timedelta

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import (
    MONOTONE_TRANSFORMS,
    T0,
    LogBuilder,
    nx_digraph,
    random_assignment_log,
    random_dag,
    sample_graph,
    selection_trace,
)
from wayback.errors import DataError, EmptyWindow
from wayback.graph import DependencyGraph, NodeInfo, build_graph
from wayback.model import Severity, day_of
from wayback.prioritize import (
    REPORT_HEADER,
    STRATEGY_NAMES,
    DecisionView,
    TransformedStrategy,
    actual_assignment_days,
    build_text_context,
    cost_and_priority,
    evaluate_prioritization,
    make_strategy,
    score_childrens_degree,
    score_childrens_severity,
    score_degree_plus_depth,
    score_max_degree,
    score_max_severity,
    simulate_selection,
    summarize,
    write_details,
    write_reports,
)


def children_oracle(g: DependencyGraph, bug: int, value) -> float:
    """Level-discounted sum computed from networkx shortest-path lengths."""
    levels = nx.single_source_shortest_path_length(nx_digraph(g), bug)
    return sum(value(u) * math.exp(-lvl) for u, lvl in levels.items())


def chain_with_severities(*sev: Severity) -> DependencyGraph:
    g = DependencyGraph()
    for i, s in enumerate(sev, start=1):
        g.add_node(i, NodeInfo(severity=int(s)))
    for i in range(1, len(sev)):
        g.add_arc(i, i + 1)
    return g


# --- per-bug scores ---------------------------------------------------------

def test_degree_plus_depth_three_way_tie_on_sample_graph():
    g = sample_graph()
    assert [score_degree_plus_depth(g, b) for b in (1, 6, 4)] == [2.0, 2.0, 2.0]
    view = DecisionView(g, {}, [6, 4, 1], date(2010, 1, 1), np.random.default_rng(0))
    assert make_strategy("max_degree_depth").select(view, 1) == [1]


def test_arc_free_graph_is_pure_tie():
    g = build_graph([5, 3, 8], [])
    assert {score_max_degree(g, b) for b in g.nodes()} == {0.0}
    view = DecisionView(g, {}, [8, 5, 3], date(2010, 1, 1), np.random.default_rng(0))
    assert make_strategy("max_degree").select(view, 2) == [3, 5]


def test_severity_ordinal():
    g = chain_with_severities(Severity.BLOCKER, Severity.TRIVIAL)
    assert (score_max_severity(g, 1), score_max_severity(g, 2)) == (6.0, 1.0)


def test_childrens_degree_examples():
    g = sample_graph()
    assert score_childrens_degree(g, 1) == pytest.approx(2 + 2 / math.e, abs=1e-12)
    assert round(score_childrens_degree(g, 1), 4) == 2.7358
    assert score_childrens_degree(g, 6) == 0.0
    assert score_childrens_degree(build_graph([1, 2], [(1, 2)]), 1) == 1.0


def test_childrens_severity_examples():
    g = chain_with_severities(Severity.NORMAL, Severity.BLOCKER)
    assert score_childrens_severity(g, 1) == pytest.approx(3 + 6 / math.e, abs=1e-12)
    assert round(score_childrens_severity(g, 1), 3) == 5.207
    assert score_childrens_severity(g, 2) == 6.0
    # 2 -> 4 -> 6 in the sample graph, all normal
    assert score_childrens_severity(sample_graph(), 2) == pytest.approx(3 + 3 / math.e + 3 / math.e**2, abs=1e-12)
    assert round(score_childrens_severity(sample_graph(), 2), 3) == 4.510


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_childrens_scores_match_bfs_oracle(seed):
    rng = random.Random(seed)
    g = random_dag(rng, rng.randint(1, 20), 0.25)
    for b in g.nodes():
        assert score_childrens_degree(g, b) == pytest.approx(children_oracle(g, b, g.degree), abs=1e-12)
        sev = lambda u: g.info(u).severity  # noqa: E731
        assert score_childrens_severity(g, b) == pytest.approx(children_oracle(g, b, sev), abs=1e-12)


def test_cost_and_priority_example():
    assert cost_and_priority([4, 2], [1, 2], 0.5) == [1.0, 0.5]
    assert cost_and_priority([0, 0], [1, 4], 1.0) == [0.0, 0.0]
    assert cost_and_priority([1], [0.0], 0.0) == [1.0]  # floored cost
    with pytest.raises(ValueError):
        cost_and_priority([1], [1], 1.5)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 5), st.floats(0.1, 50)), min_size=1, max_size=20))
def test_cost_and_priority_limits_rank_like_components(items):
    p, c = zip(*items)
    ids = list(range(len(items)))
    by = lambda s: sorted(ids, key=lambda i: (-s[i], i))  # noqa: E731
    assert by(cost_and_priority(p, c, 1.0)) == by([float(x) for x in p])
    assert by(cost_and_priority(p, c, 0.0)) == by([-max(0.5, x) for x in c])


# --- protocol ---------------------------------------------------------------

def test_summarize_example():
    actual = {1: date(2010, 1, 5), 2: date(2010, 1, 5), 3: date(2010, 1, 5)}
    picked = {1: date(2010, 1, 4), 2: date(2010, 1, 5), 3: date(2010, 1, 7)}
    rep = summarize("x", actual, picked)
    assert (rep.n_assigned, rep.early, rep.on_time, rep.late) == (3, 1, 1, 1)
    assert rep.divergence == pytest.approx(math.sqrt(7 / 3), abs=1e-12)
    assert round(rep.divergence, 3) == 1.528
    single = summarize("x", {1: date(2010, 1, 5)}, {1: date(2010, 1, 9)})
    assert single.divergence == 0.0 and single.late == 1


@pytest.mark.parametrize("seed", range(8))
def test_actual_strategy_is_perfect_on_random_logs(seed):
    log, feasible = random_assignment_log(seed)
    start, end = day_of(T0), day_of(T0) + timedelta(days=25)
    rep = evaluate_prioritization(log, make_strategy("actual"), start, end, feasible)
    assert rep.n_assigned == len(actual_assignment_days(log, feasible, start, end)) > 0
    assert (rep.early, rep.on_time, rep.late, rep.divergence) == (0, rep.n_assigned, 0, 0.0)


@pytest.fixture(scope="module")
def text_context(fixture_log, fixture_window):
    training = [b for b in fixture_log.bugs.values() if b.resolved_at and day_of(b.resolved_at) < fixture_window[0]]
    return build_text_context(training, n_topics=5, lda_iters=100, seed=7)


def test_all_strategies_share_n_assigned(fixture_log, fixture_window, fixture_feasibility, text_context):
    reports = [
        evaluate_prioritization(fixture_log, make_strategy(n, text_context), *fixture_window, fixture_feasibility.feasible)
        for n in STRATEGY_NAMES
    ]
    assert len({r.n_assigned for r in reports}) == 1 and reports[0].n_assigned > 0
    for r in reports:
        assert r.early + r.on_time + r.late == pytest.approx(r.n_assigned)
    assert reports[0].csv_row() == ["actual", "10", "0", "10", "0", "0.0"]
    buf = io.StringIO()
    write_reports(buf, reports)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER) and len(lines) == 1 + len(STRATEGY_NAMES)


@pytest.mark.parametrize("name", ["max_degree", "max_severity", "childrens_degree", "childrens_severity", "cost_priority"])
def test_strictly_monotone_transforms_keep_selection_trace(name, fixture_log, fixture_window, fixture_feasibility, text_context):
    base = make_strategy(name, text_context)
    reference = selection_trace(fixture_log, base, fixture_window, fixture_feasibility.feasible)
    for fn in MONOTONE_TRANSFORMS:
        got = selection_trace(fixture_log, TransformedStrategy(base, fn), fixture_window, fixture_feasibility.feasible)
        assert got == reference


def test_alpha_limits_on_fixture(fixture_log, fixture_window, fixture_feasibility, text_context):
    feas = fixture_feasibility.feasible
    run = lambda s: selection_trace(fixture_log, s, fixture_window, feas)  # noqa: E731
    assert run(make_strategy("cost_priority", text_context, 1.0)) == run(make_strategy("estimated_priority", text_context))
    assert run(make_strategy("cost_priority", text_context, 0.0)) == run(make_strategy("cost_oriented", text_context))


def test_random_strategy_seeding(fixture_log, fixture_window, fixture_feasibility):
    feas = fixture_feasibility.feasible
    strat = make_strategy("random")
    a = selection_trace(fixture_log, strat, fixture_window, feas, seed=1)
    assert a == selection_trace(fixture_log, strat, fixture_window, feas, seed=1)
    others = [selection_trace(fixture_log, strat, fixture_window, feas, seed=s) for s in range(2, 8)]
    assert any(o != a for o in others)


def test_selection_is_deterministic(fixture_log, fixture_window, fixture_feasibility, text_context):
    for name in ("childrens_severity", "cost_oriented"):
        s = make_strategy(name, text_context)
        a = evaluate_prioritization(fixture_log, s, *fixture_window, fixture_feasibility.feasible)
        b = evaluate_prioritization(fixture_log, s, *fixture_window, fixture_feasibility.feasible)
        assert a == b


def test_slots_carry_forward_and_unpicked_get_last_day():
    # bug 1 assigned day 0 but created day 2: its slot waits until it exists
    lb = LogBuilder()
    day0 = day_of(T0)
    lb.bug(2, T0, assignee="a", assigned_at=T0)
    lb.bug(1, T0 + timedelta(days=2))
    log = lb.build()
    actual = {1: day0, 2: day0}
    picked = simulate_selection(log, make_strategy("max_degree"), actual, day0, day0 + timedelta(days=5))
    assert picked == {2: day0, 1: day0 + timedelta(days=2)}
    short = simulate_selection(log, make_strategy("max_degree"), actual, day0, day0 + timedelta(days=1))
    assert short[1] == day0 + timedelta(days=1)


def test_errors():
    with pytest.raises(ValueError, match="valid"):
        make_strategy("nope")
    with pytest.raises(DataError):
        make_strategy("cost_oriented")
    with pytest.raises(EmptyWindow):
        simulate_selection(LogBuilder().build(), make_strategy("actual"), {}, date(2010, 2, 1), date(2010, 1, 1))


def test_details_csv():
    rep = summarize("x", {4: date(2010, 1, 5)}, {4: date(2010, 1, 3)})
    buf = io.StringIO()
    write_details(buf, rep)
    assert buf.getvalue().splitlines() == ["bug,actual_day,strategy_day,difference_days", "4,2010-01-05,2010-01-03,-2"]
