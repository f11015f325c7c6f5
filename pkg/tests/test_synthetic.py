import statistics
from datetime import datetime, timedelta, timezone

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from conftest import SAMPLE_NODES, T0, LogBuilder, sample_log
from wayback.errors import DataError
from wayback.model import EventKind, Severity
from wayback.replay import state_at
from wayback.synthetic import (
    FIREFOX_PROFILE,
    DensifyStats,
    SeverityRow,
    calibrate_location,
    count_arcs,
    densify,
    rounded_clamped_mean,
    sample_bugs,
    target_out_degree,
)

FAR_FUTURE = datetime(9999, 1, 1, tzinfo=timezone.utc)


def test_target_out_degree_examples():
    assert target_out_degree(2, 3.0, -2) == 4
    assert target_out_degree(0, 3.0, -2) == 0
    assert target_out_degree(1, 0.5, 0) == 1  # half rounds up
    assert target_out_degree(1, 1.0, -5) == 0


@given(st.integers(0, 50), st.floats(0.01, 10), st.integers(-5, 5))
def test_target_out_degree_is_clamped_rounding(n, gamma, delta):
    got = target_out_degree(n, gamma, delta)
    assert got >= 0
    assert got == 0 or abs(got - (n * gamma + delta)) <= 0.5


def _non_arc_events(log):
    return [(ev.at, ev.bug, ev.kind, ev.developer) for ev in log.events if ev.kind is not EventKind.BLOCKS]


@pytest.mark.parametrize("seed", range(10))
def test_densified_fixture(fixture_log, seed):
    stats = DensifyStats()
    dense = densify(fixture_log, seed=seed, stats=stats)
    base = count_arcs(fixture_log)
    assert abs(count_arcs(dense) - 3 * base) <= 0.1 * 3 * base
    assert dense.bugs == fixture_log.bugs
    assert _non_arc_events(dense) == _non_arc_events(fixture_log)
    assert set(fixture_log.arcs()) <= set(dense.arcs())
    assert nx.is_directed_acyclic_graph(nx.DiGraph(dense.arcs()))
    m = state_at(dense, FAR_FUTURE)
    assert sum(m.warnings.values()) == 0
    assert m.counts["duplicate_arc"] == state_at(fixture_log, FAR_FUTURE).counts["duplicate_arc"]
    # only bugs that already blocked something gain arcs
    blockers = {u for u, _ in fixture_log.arcs()}
    assert {u for u, _ in dense.arcs()} == blockers
    assert set(stats.per_bug) == blockers


def test_densify_is_seeded(fixture_log):
    assert densify(fixture_log, seed=4) == densify(fixture_log, seed=4)
    assert densify(fixture_log, seed=4) != densify(fixture_log, seed=5)


def test_new_arcs_target_bugs_open_at_first_arc_time():
    log = sample_log()
    dense = densify(log, gamma=3.0, deltas=[0], seed=0)
    first = {}
    for ev in log.events:
        if ev.arc:
            first.setdefault(ev.bug, ev.at)
    created = {b: r.created_at for b, r in log.bugs.items()}
    for ev in dense.events:
        if ev.arc and ev.arc not in set(log.arcs()):
            assert ev.at == first[ev.bug]
            assert created[ev.target] <= ev.at
    assert set(dense.bugs) == set(SAMPLE_NODES)


def test_densify_gives_up_when_no_targets():
    lb = LogBuilder()
    lb.bug(1, T0).bug(2, T0 + timedelta(minutes=1))
    lb.add(T0 + timedelta(minutes=2), 1, EventKind.BLOCKS, 2)
    stats = DensifyStats()
    dense = densify(lb.build(), gamma=3.0, deltas=[0], seed=0, stats=stats)
    assert count_arcs(dense) == 1
    assert stats.skipped == 2 and stats.added == 0


def test_densify_rejects_bad_parameters():
    with pytest.raises(DataError):
        densify(sample_log(), gamma=0)
    with pytest.raises(DataError):
        densify(sample_log(), deltas=[])


# --- sampler ----------------------------------------------------------------

def test_all_blocker_profile_keeps_mean():
    profile = {Severity.BLOCKER: FIREFOX_PROFILE[Severity.BLOCKER]}
    drawn = sample_bugs(profile, 10_000, seed=3)
    assert {b.severity for b in drawn} == {Severity.BLOCKER}
    assert abs(statistics.fmean(b.blocks for b in drawn) - 0.714) <= 0.05
    assert abs(statistics.fmean(b.depends_on for b in drawn) - 0.143) <= 0.05
    assert all(b.blocks >= 0 and b.depends_on >= 0 for b in drawn)
    assert drawn[0].solve_days == pytest.approx(1 + (12 * 3600 + 21 * 60 + 23) / 86400)


def test_sampler_edge_cases():
    assert sample_bugs(FIREFOX_PROFILE, 0) == []
    assert sample_bugs(FIREFOX_PROFILE, 50, seed=9) == sample_bugs(FIREFOX_PROFILE, 50, seed=9)
    with pytest.raises(DataError):
        sample_bugs(FIREFOX_PROFILE, -1)
    fixed = {Severity.MINOR: SeverityRow(1.0, 2.0, 0.0, 0.0, 0.0, 3.0)}
    assert {(b.blocks, b.depends_on) for b in sample_bugs(fixed, 20)} == {(2, 0)}


def test_severity_shares_follow_profile():
    drawn = sample_bugs(FIREFOX_PROFILE, 20_000, seed=1)
    levels = sorted(FIREFOX_PROFILE)
    observed = [sum(1 for b in drawn if b.severity == s) for s in levels]
    shares = np.array([FIREFOX_PROFILE[s].share for s in levels])
    expected = shares / shares.sum() * len(drawn)
    assert sps.chisquare(observed, expected).pvalue > 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 5), st.floats(0.1, 5))
def test_calibrated_location_hits_mean(mean, sigma):
    loc = calibrate_location(mean, sigma)
    assert rounded_clamped_mean(loc, sigma) == pytest.approx(mean, rel=1e-9)


def test_rounded_clamped_mean_against_monte_carlo():
    rng = np.random.default_rng(0)
    x = rng.normal(0.3, 1.2, 400_000)
    mc = np.floor(np.maximum(x, 0) + 0.5).mean()
    assert rounded_clamped_mean(0.3, 1.2) == pytest.approx(mc, abs=0.01)
