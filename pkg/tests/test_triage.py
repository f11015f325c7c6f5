import io
from collections import Counter
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import (
    SAMPLE_ARCS,
    SAMPLE_NODES,
    T0,
    StubContext,
    assert_no_overlap,
    assigned_log,
    resolved_bug,
    sample_graph,
)
from wayback.errors import DataError, EmptyDeveloperPool, EmptyWindow
from wayback.model import DeveloperProfile, day_of
from wayback.triage import (
    ALGORITHMS,
    ASSIGNMENT_HEADER,
    REPORT_HEADER,
    Assignment,
    TriageRun,
    average_reports,
    build_triage_context,
    costriage_scores,
    pick_cbr,
    pick_costriage,
    pick_random,
    release_boundary,
    report_metrics,
    run_triage,
    substitute_root,
    work_days,
    write_assignments,
    write_reports,
)

DAY0 = day_of(T0)


def bugs(*ids):
    return [resolved_bug(i, T0, T0, T0 + timedelta(days=1)) for i in ids]



# --- pickers ----------------------------------------------------------------

def test_costriage_example():
    x, y = costriage_scores([0.9, 0.6], [4.0, 2.0], 0.5)
    assert x == pytest.approx(0.75, abs=1e-12)
    assert y == pytest.approx(0.5 * 0.6 / 0.9 + 0.5, abs=1e-12)
    assert round(y, 3) == 0.833
    ctx = StubContext({1: {"X": 0.9, "Y": 0.6}}, {(1, "X"): 4.0, (1, "Y"): 2.0})
    assert pick_costriage(bugs(1), ["X", "Y"], ctx, 0.5) == (1, "Y")
    assert pick_cbr(bugs(1), ["X", "Y"], ctx) == (1, "X")
    assert pick_costriage(bugs(1), ["X", "Y"], ctx, 0.0) == (1, "Y")


score_tables = st.dictionaries(
    st.integers(1, 6),
    st.fixed_dictionaries({d: st.floats(0, 1) for d in "abcd"}),
    min_size=1,
)


@settings(max_examples=200)
@given(score_tables, st.integers(0, 2**16))
def test_costriage_alpha_one_equals_cbr(suit, seed):
    rng = np.random.default_rng(seed)
    costs = {(b, d): float(rng.uniform(0.5, 20)) for b in suit for d in "abcd"}
    ctx = StubContext(suit, costs)
    devs = sorted(rng.choice(list("abcd"), size=int(rng.integers(1, 5)), replace=False).tolist())
    recs = bugs(*sorted(suit))
    assert pick_costriage(recs, devs, ctx, 1.0) == pick_cbr(recs, devs, ctx)


def test_costriage_alpha_zero_picks_cheapest_developer():
    ctx = StubContext({1: {"a": 0.9, "b": 0.1, "c": 0.5}}, {(1, "a"): 5.0, (1, "b"): 1.0, (1, "c"): 3.0})
    assert pick_costriage(bugs(1), ["a", "b", "c"], ctx, 0.0) == (1, "b")


def test_single_pair_is_forced():
    ctx = StubContext()
    rng = np.random.default_rng(0)
    for pick in (lambda: pick_cbr(bugs(7), ["z"], ctx), lambda: pick_costriage(bugs(7), ["z"], ctx),
                 lambda: pick_random(bugs(7), ["z"], rng)):
        assert pick() == (7, "z")


def test_random_picks_are_uniform_and_seeded():
    rng = np.random.default_rng(2024)
    devs = ["a", "b", "c", "d"]
    counts = Counter(pick_random(bugs(1, 2, 3), devs, rng)[1] for _ in range(10_000))
    for d in devs:
        assert abs(counts[d] / 10_000 - 0.25) <= 0.02
    a = [pick_random(bugs(1, 2, 3), devs, np.random.default_rng(5)) for _ in range(3)]
    assert len(set(a)) == 1


def test_cbr_learns_who_fixes_what():
    crash = "crash segfault null pointer crash"
    css = "layout css margin overflow render"
    training = [
        resolved_bug(i, T0, T0, T0 + timedelta(days=2), summary=crash if i % 2 else css,
                     assignee="ann" if i % 2 else "bob", component="Core" if i % 2 else "Layout")
        for i in range(1, 21)
    ]
    ctx = build_triage_context(training, ["ann", "bob"], n_topics=2, lda_iters=50, seed=1)
    fresh = resolved_bug(99, T0, T0, T0, summary="another crash with a null pointer")
    assert pick_cbr([fresh], ["ann", "bob"], ctx) == (99, "ann")
    assert ctx.profiles["bob"].components_fixed == Counter({"Layout": 10})
    assert ctx.cost(fresh, "ann") == 3.0


# --- scheduling -------------------------------------------------------------

def test_work_days_rounding():
    assert [work_days(c) for c in (0.0, 0.4, 0.5, 1.49, 1.5, 2.6, 10.0)] == [1, 1, 1, 1, 2, 3, 10]


def test_substitute_root_on_sample_graph():
    g = sample_graph()
    assert substitute_root(g, 6, set(SAMPLE_NODES)) == 1
    assert substitute_root(g, 6, {2, 3, 4, 6}) == 2
    assert substitute_root(g, 6, {6}) is None
    assert substitute_root(g, 1, {1}) == 1


def test_sample_graph_substitution_in_loop():
    log = assigned_log(SAMPLE_NODES, SAMPLE_ARCS)
    ctx = StubContext({6: {"ann": 1.0}}, default_cost=1.0)
    for b in SAMPLE_NODES:
        ctx.suit.setdefault(b, {"ann": 0.1})
    run = run_triage(log, "cbr", DAY0, DAY0, ["ann"], SAMPLE_NODES, ctx, substitute=True)
    first = run.assignments[0]
    assert (first.picked, first.bug, first.infeasible) == (6, 1, True)
    assert run.blocked_at_assignment == []
    plain = run_triage(log, "cbr", DAY0, DAY0, ["ann"], SAMPLE_NODES, ctx)
    assert (plain.assignments[0].bug, plain.assignments[0].infeasible) == (6, True)
    assert plain.blocked_at_assignment == [6]


def test_one_developer_long_costs_overdue():
    log = assigned_log([1, 2], [])
    ctx = StubContext(default_cost=30.0)
    run = run_triage(log, "cbr", DAY0, DAY0 + timedelta(days=89), ["solo"], [1, 2], ctx, release_interval=28)
    assert [a.bug for a in run.assignments] == [1, 2]
    assert run.assignments[1].day == DAY0 + timedelta(days=30)
    assert_no_overlap(run)
    rep = report_metrics(run, {}, log)
    assert rep.overdue_pct >= 50.0
    assert rep.mean_fixing_time == 30.0


def test_release_boundary_rule():
    assert release_boundary(DAY0, DAY0 + timedelta(days=25), 28) == DAY0 + timedelta(days=28)
    assert release_boundary(DAY0, DAY0 + timedelta(days=28), 28) == DAY0 + timedelta(days=56)
    log = assigned_log([1, 2], [])
    run = TriageRun("x", DAY0, DAY0 + timedelta(days=60), 28, False, [
        Assignment(1, "a", DAY0 + timedelta(days=25), 10.0, DAY0 + timedelta(days=34), False, 1),
        Assignment(2, "b", DAY0 + timedelta(days=1), 2.0, DAY0 + timedelta(days=2), False, 2),
    ])
    rep = report_metrics(run, {}, log)
    assert rep.overdue_pct == 50.0


def test_concentration_and_accuracy():
    log = assigned_log(range(1, 7), [], component="Core")
    counts = {"a": 3, "b": 1, "c": 2}
    spans, bug = [], 1
    for dev, k in counts.items():
        for j in range(k):
            spans.append(Assignment(bug, dev, DAY0 + timedelta(days=j), 1.0, DAY0 + timedelta(days=j), bug == 6, bug))
            bug += 1
    run = TriageRun("x", DAY0, DAY0 + timedelta(days=10), 28, False, spans)
    profiles = {"a": DeveloperProfile("a", Counter({"Core": 2})), "b": DeveloperProfile("b", Counter({"UI": 1}))}
    rep = report_metrics(run, profiles, log)
    assert (rep.concentration_mu, rep.concentration_sigma) == (2.0, 1.0)
    assert rep.n_assigned_developers == 3
    assert rep.accuracy == 50.0
    assert rep.infeasible_pct == pytest.approx(100 / 6)
    assert rep.mean_fixing_time == 1.0
    empty = report_metrics(TriageRun("x", DAY0, DAY0, 28, False), {}, log)
    assert empty.accuracy == 0.0 and empty.n_assigned_developers == 0


def test_average_reports_keeps_fraction():
    log = assigned_log([1, 2], [])
    one = report_metrics(TriageRun("r", DAY0, DAY0, 28, False, [Assignment(1, "a", DAY0, 1.0, DAY0, False, 1)]), {}, log)
    two = report_metrics(TriageRun("r", DAY0, DAY0, 28, False, [
        Assignment(1, "a", DAY0, 1.0, DAY0, False, 1), Assignment(2, "b", DAY0, 1.0, DAY0, False, 2)]), {}, log)
    avg = average_reports([one, two])
    assert avg.n_assigned_developers == 1.5
    assert avg.csv_row()[2] == "1.5" and one.csv_row()[2] == "1"


def test_run_errors():
    log = assigned_log([1], [])
    with pytest.raises(EmptyDeveloperPool):
        run_triage(log, "actual", DAY0, DAY0, [], [1])
    with pytest.raises(ValueError, match="valid"):
        run_triage(log, "fifo", DAY0, DAY0, ["a"], [1])
    with pytest.raises(EmptyWindow):
        run_triage(log, "actual", DAY0, DAY0 - timedelta(days=1), ["a"], [1])
    with pytest.raises(DataError):
        run_triage(log, "cbr", DAY0, DAY0, ["a"], [1])


# --- fixture runs -----------------------------------------------------------

@pytest.fixture(scope="module")
def triage_setup(fixture_log, fixture_window, fixture_feasibility):
    start = fixture_window[0]
    training = [b for b in fixture_log.bugs.values() if b.resolved_at and day_of(b.resolved_at) < start]
    ctx = build_triage_context(training, fixture_feasibility.active, n_topics=5, lda_iters=100, seed=7)
    return fixture_log, fixture_window, fixture_feasibility, ctx


def _run(setup, algorithm, **kw):
    log, window, feas, ctx = setup
    return run_triage(log, algorithm, *window, feas.active, feas.feasible, ctx, **kw)


@pytest.mark.parametrize("algorithm", ["cbr", "costriage", "random"])
@pytest.mark.parametrize("substitute", [False, True])
def test_no_double_booking_on_fixture(triage_setup, algorithm, substitute):
    run = _run(triage_setup, algorithm, substitute=substitute, seed=3)
    assert run.assignments
    assert_no_overlap(run)
    assert len({a.bug for a in run.assignments}) == len(run.assignments)
    if substitute:
        assert run.blocked_at_assignment == []


def test_costriage_alpha_one_matches_cbr_on_fixture(triage_setup):
    assert _run(triage_setup, "costriage", alpha=1.0).assignments == _run(triage_setup, "cbr").assignments


def test_triage_is_deterministic(triage_setup):
    for alg in ALGORITHMS:
        assert _run(triage_setup, alg, seed=11).assignments == _run(triage_setup, alg, seed=11).assignments


def test_actual_replays_history(triage_setup):
    log, window, feas, ctx = triage_setup
    run = _run(triage_setup, "actual")
    assert run.assignments
    for a in run.assignments:
        rec = log.bugs[a.bug]
        assert (a.developer, a.day, a.completion) == (rec.assignee, day_of(rec.assigned_at), day_of(rec.resolved_at))
    rep = report_metrics(run, ctx.profiles, log)
    for pct in (rep.accuracy, rep.overdue_pct, rep.infeasible_pct):
        assert 0.0 <= pct <= 100.0


def test_report_csvs(triage_setup):
    log, _, _, ctx = triage_setup
    run = _run(triage_setup, "cbr")
    buf = io.StringIO()
    write_reports(buf, [report_metrics(run, ctx.profiles, log)])
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER) and lines[1].startswith("cbr,")
    buf = io.StringIO()
    write_assignments(buf, run)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(ASSIGNMENT_HEADER) and len(lines) == 1 + len(run.assignments)
