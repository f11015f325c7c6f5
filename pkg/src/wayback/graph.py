"""Bug dependency graph with incrementally maintained depth, degree and components.

Arcs point from a blocking bug to the bug it blocks. The graph is kept
acyclic: an arc that would close a directed cycle is rejected and leaves the
graph untouched.

``depth(v)`` is the arc length of the longest directed path ending at ``v``
(the length of its longest ancestor chain); ``degree(v)`` is its out-degree.
Weakly connected components are labelled by their smallest bug id.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, replace
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import DuplicateArc, DuplicateNode, MissingEndpoint, MissingNode, WouldCreateCycle
from .model import BugRecord, Priority, Severity

HITS_TOL = 1e-10
HITS_MAX_ITER = 1000

EXPORT_HEADER = ("bug_id", "depth", "degree", "component_id", "severity", "priority")


@dataclass
class NodeInfo:
    severity: int = int(Severity.NORMAL)
    priority: int = int(Priority.MISSING)
    comment_count: int = 0


@dataclass(frozen=True)
class GraphCaches:
    """Per-node depth/degree and the component partition, comparable with ``==``."""

    depth: dict[int, int]
    degree: dict[int, int]
    components: frozenset[frozenset[int]]


class DependencyGraph:
    def __init__(self) -> None:
        self._succ: dict[int, set[int]] = {}
        self._pred: dict[int, set[int]] = {}
        self._depth: dict[int, int] = {}
        self._info: dict[int, NodeInfo] = {}
        self._comp: dict[int, int] = {}
        # component label is an arbitrary member; _cmin holds its smallest id
        self._members: dict[int, set[int]] = {}
        self._cmin: dict[int, int] = {}
        self._m = 0

    # --- basic queries ----------------------------------------------------

    @property
    def n(self) -> int:
        return len(self._succ)

    @property
    def m(self) -> int:
        return self._m

    def __contains__(self, node: object) -> bool:
        return node in self._succ

    def __len__(self) -> int:
        return len(self._succ)

    def nodes(self) -> list[int]:
        return sorted(self._succ)

    def arcs(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u, vs in self._succ.items() for v in vs)

    def successors(self, node: int) -> set[int]:
        return self._succ[node]

    def predecessors(self, node: int) -> set[int]:
        return self._pred[node]

    def depth(self, node: int) -> int:
        return self._depth[node]

    def degree(self, node: int) -> int:
        return len(self._succ[node])

    def info(self, node: int) -> NodeInfo:
        return self._info[node]

    def component_of(self, node: int) -> int:
        """Component id of ``node``: the smallest bug id in its weak component."""
        return self._cmin[self._comp[node]]

    def has_arc(self, blocking: int, blocked: int) -> bool:
        return blocking in self._succ and blocked in self._succ[blocking]

    def is_blocked(self, node: int) -> bool:
        """True when some open bug still blocks ``node``."""
        return bool(self._pred[node])

    # --- mutations --------------------------------------------------------

    def add_node(self, bug: BugRecord | int, info: NodeInfo | None = None) -> None:
        if isinstance(bug, BugRecord):
            node = bug.id
            if info is None:
                info = NodeInfo(int(bug.severity), int(bug.priority), bug.comment_count)
        else:
            node = int(bug)
        if node in self._succ:
            raise DuplicateNode(f"bug {node} already in graph")
        self._succ[node] = set()
        self._pred[node] = set()
        self._depth[node] = 0
        self._info[node] = replace(info) if info is not None else NodeInfo()
        self._comp[node] = node
        self._members[node] = {node}
        self._cmin[node] = node

    def add_arc(self, blocking: int, blocked: int) -> None:
        for node in (blocking, blocked):
            if node not in self._succ:
                raise MissingEndpoint(f"bug {node} not in graph")
        if blocking == blocked:
            raise WouldCreateCycle(f"bug {blocking} cannot block itself")
        if blocked in self._succ[blocking]:
            raise DuplicateArc(f"arc {blocking}->{blocked} already present")
        if self._reaches(blocked, blocking):
            raise WouldCreateCycle(f"arc {blocking}->{blocked} closes a cycle")

        self._succ[blocking].add(blocked)
        self._pred[blocked].add(blocking)
        self._m += 1
        self._merge(self._comp[blocking], self._comp[blocked])

        # push depth increases down the descendants of `blocked`
        if self._depth[blocked] > self._depth[blocking]:
            return
        self._depth[blocked] = self._depth[blocking] + 1
        stack = [blocked]
        while stack:
            u = stack.pop()
            du = self._depth[u] + 1
            for w in self._succ[u]:
                if self._depth[w] < du:
                    self._depth[w] = du
                    stack.append(w)

    def remove_node(self, node: int) -> list[tuple[int, int]]:
        """Remove ``node`` and its incident arcs; return the detached arcs."""
        if node not in self._succ:
            raise MissingNode(f"bug {node} not in graph")
        descendants = self._descendants(node)
        detached = [(p, node) for p in sorted(self._pred[node])]
        detached += [(node, s) for s in sorted(self._succ[node])]
        for p in self._pred[node]:
            self._succ[p].discard(node)
        for s in self._succ[node]:
            self._pred[s].discard(node)
        self._m -= len(detached)
        del self._succ[node], self._pred[node], self._depth[node], self._info[node]

        label = self._comp.pop(node)
        members = self._members.pop(label)
        del self._cmin[label]
        members.discard(node)
        self._relabel(members)
        self._refresh_depths(descendants)
        return detached

    def set_comment_count(self, node: int, count: int) -> None:
        self._info[node].comment_count = count

    # --- incremental helpers ----------------------------------------------

    def _reaches(self, source: int, target: int) -> bool:
        """Is there a directed path source -> target?"""
        if self._comp[source] != self._comp[target]:
            return False
        limit = self._depth[target]
        if self._depth[source] >= limit:
            return source == target
        seen = {source}
        stack = [source]
        while stack:
            u = stack.pop()
            for w in self._succ[u]:
                if w == target:
                    return True
                # every node on a path to `target` is strictly shallower than it
                if w not in seen and self._depth[w] < limit:
                    seen.add(w)
                    stack.append(w)
        return False

    def _descendants(self, node: int) -> set[int]:
        seen: set[int] = set()
        stack = list(self._succ[node])
        while stack:
            u = stack.pop()
            if u not in seen:
                seen.add(u)
                stack.extend(self._succ[u])
        return seen

    def _refresh_depths(self, affected: set[int]) -> None:
        # Kahn order inside the affected set; outside nodes keep valid depths
        indeg = {v: sum(1 for p in self._pred[v] if p in affected) for v in affected}
        queue = deque(sorted(v for v, d in indeg.items() if d == 0))
        while queue:
            v = queue.popleft()
            preds = self._pred[v]
            self._depth[v] = max((self._depth[p] for p in preds), default=-1) + 1
            for w in self._succ[v]:
                if w in indeg:
                    indeg[w] -= 1
                    if indeg[w] == 0:
                        queue.append(w)

    def _merge(self, a: int, b: int) -> None:
        if a == b:
            return
        big, small = (a, b) if len(self._members[a]) >= len(self._members[b]) else (b, a)
        moved = self._members.pop(small)
        for v in moved:
            self._comp[v] = big
        self._members[big] |= moved
        self._cmin[big] = min(self._cmin[big], self._cmin.pop(small))

    def _relabel(self, nodes: set[int]) -> None:
        remaining = set(nodes)
        while remaining:
            start = min(remaining)
            part = {start}
            queue = deque([start])
            while queue:
                u = queue.popleft()
                for w in self._succ[u] | self._pred[u]:
                    if w not in part:
                        part.add(w)
                        queue.append(w)
            remaining -= part
            for v in part:
                self._comp[v] = start
            self._members[start] = part
            self._cmin[start] = start

    # --- cache views ------------------------------------------------------

    def caches(self) -> GraphCaches:
        """The incrementally maintained caches."""
        return GraphCaches(
            depth=dict(self._depth),
            degree={v: len(s) for v, s in self._succ.items()},
            components=frozenset(frozenset(ms) for ms in self._members.values()),
        )

    def recompute_all(self) -> GraphCaches:
        """Depth, degree and components rebuilt from the arc set alone."""
        return recompute_caches(self._succ.keys(), self.arcs())

    # --- equality and copying ---------------------------------------------

    def copy(self) -> "DependencyGraph":
        g = DependencyGraph()
        g._succ = {k: set(v) for k, v in self._succ.items()}
        g._pred = {k: set(v) for k, v in self._pred.items()}
        g._depth = dict(self._depth)
        g._info = {k: replace(v) for k, v in self._info.items()}
        g._comp = dict(self._comp)
        g._members = {k: set(v) for k, v in self._members.items()}
        g._cmin = dict(self._cmin)
        g._m = self._m
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DependencyGraph):
            return NotImplemented
        return (
            self._succ == other._succ
            and self._info == other._info
            and self._depth == other._depth
            and self.caches().components == other.caches().components
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"DependencyGraph(n={self.n}, m={self.m})"

    # --- structure --------------------------------------------------------

    def subgraphs(self) -> list[list[int]]:
        """Weakly connected components, each sorted, ordered by smallest id."""
        return sorted(sorted(ms) for ms in self._members.values())

    def roots_above(self, node: int) -> list[int]:
        """Ancestors of ``node`` that have no blocking parent, sorted by id."""
        seen: set[int] = set()
        stack = list(self._pred[node])
        roots = []
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            if self._pred[u]:
                stack.extend(self._pred[u])
            else:
                roots.append(u)
        return sorted(roots)

    # --- graph-level metrics ----------------------------------------------

    def max_degree(self) -> int:
        return max((len(s) for s in self._succ.values()), default=0)

    def max_depth(self) -> int:
        return max(self._depth.values(), default=0)

    def degree_centrality_max(self) -> float:
        n = self.n
        return self.max_degree() / (n - 1) if n >= 2 else 0.0

    def depth_centrality_max(self) -> float:
        n = self.n
        return self.max_depth() / (n - 1) if n >= 2 else 0.0

    def mean_subgraph_depth(self) -> float:
        if not self._members:
            return 0.0
        total = sum(max(self._depth[v] for v in ms) for ms in self._members.values())
        return total / len(self._members)

    def hits(
        self, tol: float = HITS_TOL, max_iter: int = HITS_MAX_ITER, init: Mapping[int, float] | None = None
    ) -> tuple[dict[int, float], dict[int, float]]:
        """Authority and hub scores by power iteration, from the all-ones vector unless ``init`` is given.

        Each round sets ``a = A^T h`` then ``h = A a`` and rescales both to unit
        L2 norm; iteration stops once neither vector moves by more than ``tol``
        in the max norm. A graph without arcs scores zero everywhere.
        """
        nodes = self.nodes()
        if self._m == 0:
            zeros = {v: 0.0 for v in nodes}
            return zeros, dict(zeros)
        index = {v: i for i, v in enumerate(nodes)}
        arcs = self.arcs()
        src = np.fromiter((index[u] for u, _ in arcs), dtype=np.intp, count=len(arcs))
        dst = np.fromiter((index[v] for _, v in arcs), dtype=np.intp, count=len(arcs))
        start = np.ones(len(nodes)) if init is None else np.array([float(init[v]) for v in nodes])
        return _hits_power(src, dst, nodes, start, tol, max_iter)

    def harmonic_centrality(self, node: int) -> float:
        """Mean reciprocal shortest-path distance from ``node``; unreachable pairs add 0."""
        if node not in self._succ:
            raise MissingNode(f"bug {node} not in graph")
        n = self.n
        if n < 2:
            return 0.0
        total = 0.0
        dist = {node: 0}
        queue = deque([node])
        while queue:
            u = queue.popleft()
            du = dist[u] + 1
            for w in self._succ[u]:
                if w not in dist:
                    dist[w] = du
                    total += 1.0 / du
                    queue.append(w)
        return total / (n - 1)

    def harmonic_all(self) -> dict[int, float]:
        return {v: self.harmonic_centrality(v) for v in self.nodes()}

    def max_harmonic(self) -> float:
        # only nodes with outgoing arcs can score above zero
        return max((self.harmonic_centrality(v) for v, s in self._succ.items() if s), default=0.0)

    # --- export -----------------------------------------------------------

    def export_rows(self) -> list[tuple]:
        return [
            (v, self._depth[v], len(self._succ[v]), self.component_of(v), self._info[v].severity, self._info[v].priority)
            for v in self.nodes()
        ]

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EXPORT_HEADER)
        writer.writerows(self.export_rows())

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _hits_power(src: np.ndarray, dst: np.ndarray, nodes: list[int], start: np.ndarray, tol: float, max_iter: int):
    n = len(nodes)
    hub = start.copy()
    auth = start.copy()
    for _ in range(max_iter):
        # A^T h and A a over the arc list
        new_auth = np.bincount(dst, weights=hub[src], minlength=n)
        new_auth /= np.sqrt(np.sum(new_auth * new_auth))
        new_hub = np.bincount(src, weights=new_auth[dst], minlength=n)
        new_hub /= np.sqrt(np.sum(new_hub * new_hub))
        delta = max(np.max(np.abs(new_auth - auth)), np.max(np.abs(new_hub - hub)))
        auth, hub = new_auth, new_hub
        if delta < tol:
            break
    return (
        {v: float(x) for v, x in zip(nodes, auth)},
        {v: float(x) for v, x in zip(nodes, hub)},
    )


def recompute_caches(nodes: Iterable[int], arcs: Iterable[tuple[int, int]]) -> GraphCaches:
    """Full recomputation from a node set and arc list (the reference for the incremental path)."""
    nodes = list(nodes)
    succ: dict[int, list[int]] = {v: [] for v in nodes}
    indeg = {v: 0 for v in nodes}
    parent = {v: v for v in nodes}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in arcs:
        succ[u].append(v)
        indeg[v] += 1
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv

    depth = {v: 0 for v in nodes}
    queue = deque(v for v in nodes if indeg[v] == 0)
    seen = 0
    while queue:
        u = queue.popleft()
        seen += 1
        for w in succ[u]:
            depth[w] = max(depth[w], depth[u] + 1)
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if seen != len(nodes):
        raise WouldCreateCycle("arc set contains a directed cycle")

    groups: dict[int, set[int]] = {}
    for v in nodes:
        groups.setdefault(find(v), set()).add(v)
    return GraphCaches(
        depth=depth,
        degree={v: len(succ[v]) for v in nodes},
        components=frozenset(frozenset(g) for g in groups.values()),
    )


def build_graph(nodes: Iterable[int], arcs: Iterable[tuple[int, int]]) -> DependencyGraph:
    g = DependencyGraph()
    for v in nodes:
        g.add_node(v)
    for u, v in arcs:
        g.add_arc(u, v)
    return g
