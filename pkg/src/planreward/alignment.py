"""Exact graph edit distance and maximum common subgraph matching between plan DAGs.

Nodes are unlabeled: substituting one subgoal for another is free, so the
edit distance measures topology only. Both searches are exact depth-first
branch-and-bound over injective node mappings, capped at ``max_nodes`` nodes.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass

from .errors import GraphTooLarge
from .plan_graph import PlanGraph

DEFAULT_MAX_NODES = 10

# (node count, directed edges as index pairs)
Topology = tuple[int, Iterable[tuple[int, int]]]


@dataclass(frozen=True)
class EditCosts:
    node_insert: float = 1.0
    node_delete: float = 1.0
    edge_insert: float = 1.0
    edge_delete: float = 1.0

    def __post_init__(self) -> None:
        for name in ("node_insert", "node_delete", "edge_insert", "edge_delete"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")


UNIT_COSTS = EditCosts()


@dataclass(frozen=True)
class Matching:
    """Injective, edge-consistent pairs ``(rollout_index, gold_index)``."""

    pairs: frozenset[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.pairs)

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)

    def is_valid(self, g: Topology, gold: Topology) -> bool:
        return is_valid_matching(self.pairs, g, gold)


def topology(g: PlanGraph | Topology) -> tuple[int, frozenset[tuple[int, int]]]:
    if isinstance(g, PlanGraph):
        return len(g.nodes), g.edges
    n, edges = g
    return n, frozenset(edges)


def _adjacency(n: int, edges: frozenset[tuple[int, int]]) -> list[list[bool]]:
    adj = [[False] * n for _ in range(n)]
    for u, v in edges:
        adj[u][v] = True
    return adj


def _check_size(n: int, limit: int) -> None:
    if n > limit:
        raise GraphTooLarge(n, limit)


def is_valid_matching(pairs: Iterable[tuple[int, int]], g: Topology, gold: Topology) -> bool:
    """Injective both ways, and edges among matched nodes agree in both directions."""
    pairs = list(pairs)
    _, e1 = topology(g)
    _, e2 = topology(gold)
    if len({u for u, _ in pairs}) != len(pairs) or len({x for _, x in pairs}) != len(pairs):
        return False
    for u, x in pairs:
        for v, y in pairs:
            if u != v and ((u, v) in e1) != ((x, y) in e2):
                return False
    return True


def empty_graph_distance(gold: PlanGraph | Topology, costs: EditCosts = UNIT_COSTS) -> float:
    """Cost of building ``gold`` from nothing."""
    n, edges = topology(gold)
    return n * costs.node_insert + len(edges) * costs.edge_insert


def graph_edit_distance(
    g: PlanGraph | Topology,
    gold: PlanGraph | Topology,
    costs: EditCosts = UNIT_COSTS,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> float:
    """Minimum total cost of node/edge insertions and deletions turning ``g`` into ``gold``.

    An edit path is described by a partial injective mapping from ``g`` to
    ``gold``: unmapped rollout nodes are deleted with their edges, unmapped gold
    nodes are inserted with theirs, and an edge between mapped nodes survives
    only when its image is also an edge.
    """
    n1, e1 = topology(g)
    n2, e2 = topology(gold)
    _check_size(n1, max_nodes)
    _check_size(n2, max_nodes)
    return _GedSearch(n1, e1, n2, e2, costs).run()


class _GedSearch:
    def __init__(self, n1, e1, n2, e2, costs: EditCosts) -> None:
        self.n1, self.n2 = n1, n2
        self.A = _adjacency(n1, e1)
        self.B = _adjacency(n2, e2)
        self.m1, self.m2 = len(e1), len(e2)
        self.c = costs
        deg = [0] * n1
        for u, v in e1:
            deg[u] += 1
            deg[v] += 1
        # Dense nodes first: their edges constrain the partial cost early.
        self.order = sorted(range(n1), key=lambda u: (-deg[u], u))
        self.image = [-1] * n1  # -1 = not yet processed or deleted; see self.deleted
        self.deleted = [False] * n1
        self.used = [False] * n2
        self.best = math.inf

    def _lower_bound(self, k: int, n_used: int, eg_done: int, eh_done: int) -> float:
        c = self.c
        rg = self.n1 - k
        rh = self.n2 - n_used
        eg = self.m1 - eg_done
        eh = self.m2 - eh_done
        lb = c.node_delete * (rg - rh) if rg > rh else c.node_insert * (rh - rg)
        lb += c.edge_delete * (eg - eh) if eg > eh else c.edge_insert * (eh - eg)
        return lb

    def run(self) -> float:
        self._dfs(0, 0.0, 0, 0, 0)
        return self.best

    def _dfs(self, k: int, cost: float, n_used: int, eg_done: int, eh_done: int) -> None:
        if cost + self._lower_bound(k, n_used, eg_done, eh_done) >= self.best:
            return
        c = self.c
        if k == self.n1:
            total = cost + c.node_insert * (self.n2 - n_used) + c.edge_insert * (self.m2 - eh_done)
            if total < self.best:
                self.best = total
            return
        u = self.order[k]
        A, B = self.A, self.B
        done = self.order[:k]
        for x in range(self.n2):
            if self.used[x]:
                continue
            step = 0.0
            g_new = 0
            h_new = 0
            for w in done:
                auw, awu = A[u][w], A[w][u]
                g_new += auw + awu
                if self.deleted[w]:
                    step += c.edge_delete * (auw + awu)
                    continue
                y = self.image[w]
                bxy, byx = B[x][y], B[y][x]
                h_new += bxy + byx
                if auw != bxy:
                    step += c.edge_delete if auw else c.edge_insert
                if awu != byx:
                    step += c.edge_delete if awu else c.edge_insert
            self.used[x] = True
            self.image[u] = x
            self._dfs(k + 1, cost + step, n_used + 1, eg_done + g_new, eh_done + h_new)
            self.used[x] = False
            self.image[u] = -1
        # Delete u.
        g_new = sum(A[u][w] + A[w][u] for w in done)
        self.deleted[u] = True
        self._dfs(k + 1, cost + c.node_delete + c.edge_delete * g_new, n_used, eg_done + g_new, eh_done)
        self.deleted[u] = False


def structural_reward(
    g: PlanGraph | None,
    gold: PlanGraph,
    costs: EditCosts = UNIT_COSTS,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> float:
    """``exp(-d_edit)``; an absent plan is scored as the empty graph."""
    if g is None:
        _check_size(len(gold.nodes), max_nodes)
        d = empty_graph_distance(gold, costs)
    else:
        d = graph_edit_distance(g, gold, costs, max_nodes)
    return math.exp(-d)


def max_common_subgraph(
    g: PlanGraph | Topology,
    gold: PlanGraph | Topology,
    node_affinity: Callable[[int, int], float] | None = None,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> Matching:
    """Largest edge-consistent injective matching, ties broken by total affinity.

    Among maximum-cardinality matchings the one with the largest sum of
    ``node_affinity(rollout_index, gold_index)`` wins; remaining ties go to the
    lexicographically smallest sorted pair list.
    """
    n1, e1 = topology(g)
    n2, e2 = topology(gold)
    _check_size(n1, max_nodes)
    _check_size(n2, max_nodes)
    if n1 == 0 or n2 == 0:
        return Matching(frozenset())
    aff = [[float(node_affinity(u, x)) if node_affinity else 0.0 for x in range(n2)] for u in range(n1)]
    return Matching(frozenset(_McsSearch(n1, e1, n2, e2, aff).run()))


class _McsSearch:
    def __init__(self, n1, e1, n2, e2, aff: list[list[float]]) -> None:
        self.n1, self.n2 = n1, n2
        self.A = _adjacency(n1, e1)
        self.B = _adjacency(n2, e2)
        self.aff = aff
        # suffix[k]: optimistic affinity still obtainable from nodes k..n1-1
        self.suffix = [0.0] * (n1 + 1)
        for u in range(n1 - 1, -1, -1):
            self.suffix[u] = self.suffix[u + 1] + max(0.0, max(aff[u]))
        self.image = [-1] * n1
        self.used = [False] * n2
        self.best_size = -1
        self.best_aff = -math.inf
        self.best: list[tuple[int, int]] = []

    def run(self) -> list[tuple[int, int]]:
        self._dfs(0, 0, 0.0, [])
        return self.best

    def _dfs(self, u: int, size: int, score: float, pairs: list[tuple[int, int]]) -> None:
        size_bound = size + min(self.n1 - u, self.n2 - size)
        if size_bound < self.best_size:
            return
        if size_bound == self.best_size and score + self.suffix[u] <= self.best_aff:
            return
        if u == self.n1:
            if size > self.best_size or (size == self.best_size and score > self.best_aff):
                self.best_size, self.best_aff, self.best = size, score, list(pairs)
            return
        A, B = self.A, self.B
        for x in range(self.n2):
            if self.used[x]:
                continue
            ok = True
            for w, y in pairs:
                if A[u][w] != B[x][y] or A[w][u] != B[y][x]:
                    ok = False
                    break
            if not ok:
                continue
            self.used[x] = True
            pairs.append((u, x))
            self._dfs(u + 1, size + 1, score + self.aff[u][x], pairs)
            pairs.pop()
            self.used[x] = False
        self._dfs(u + 1, size, score, pairs)
