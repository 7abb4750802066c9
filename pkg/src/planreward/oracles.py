"""Brute-force reference computations used to cross-check the exact searches.

These enumerate every partial injective node mapping and score each one
straight from the definition, sharing no code with :mod:`planreward.alignment`.
They are exponential and meant for graphs of at most five or six nodes.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterator

from .alignment import EditCosts, UNIT_COSTS


def partial_injections(n1: int, n2: int) -> Iterator[dict[int, int]]:
    for k in range(min(n1, n2) + 1):
        for src in itertools.combinations(range(n1), k):
            for dst in itertools.permutations(range(n2), k):
                yield dict(zip(src, dst))


def edit_cost_of_mapping(
    mapping: dict[int, int],
    n1: int,
    e1: set[tuple[int, int]],
    n2: int,
    e2: set[tuple[int, int]],
    costs: EditCosts = UNIT_COSTS,
) -> float:
    inverse = {x: u for u, x in mapping.items()}
    deleted_edges = sum(
        1 for u, v in e1 if not (u in mapping and v in mapping and (mapping[u], mapping[v]) in e2)
    )
    inserted_edges = sum(
        1 for x, y in e2 if not (x in inverse and y in inverse and (inverse[x], inverse[y]) in e1)
    )
    k = len(mapping)
    return (
        costs.node_delete * (n1 - k)
        + costs.node_insert * (n2 - k)
        + costs.edge_delete * deleted_edges
        + costs.edge_insert * inserted_edges
    )


def brute_force_ged(n1, e1, n2, e2, costs: EditCosts = UNIT_COSTS) -> float:
    e1, e2 = set(e1), set(e2)
    return min(edit_cost_of_mapping(m, n1, e1, n2, e2, costs) for m in partial_injections(n1, n2))


def is_edge_consistent(mapping: dict[int, int], e1: set, e2: set) -> bool:
    items = list(mapping.items())
    for u, x in items:
        for v, y in items:
            if u != v and ((u, v) in e1) != ((x, y) in e2):
                return False
    return True


def brute_force_mcs_size(n1, e1, n2, e2) -> int:
    e1, e2 = set(e1), set(e2)
    best = 0
    for m in partial_injections(n1, n2):
        if len(m) > best and is_edge_consistent(m, e1, e2):
            best = len(m)
    return best


def brute_force_mcs(n1, e1, n2, e2, affinity) -> list[tuple[int, int]]:
    """Full objective: cardinality, then affinity sum, then smallest sorted pair list."""
    e1, e2 = set(e1), set(e2)
    best_key = None
    best: list[tuple[int, int]] = []
    for m in partial_injections(n1, n2):
        if not is_edge_consistent(m, e1, e2):
            continue
        pairs = sorted(m.items())
        score = 0.0
        for u, x in pairs:
            score += affinity(u, x)
        key = (len(pairs), score)
        if best_key is None or key > best_key or (key == best_key and pairs < best):
            best_key, best = key, pairs
    return best


def all_topological_orders(n: int, edges: set[tuple[int, int]]) -> list[tuple[int, ...]]:
    return [
        perm
        for perm in itertools.permutations(range(n))
        if all(perm.index(u) < perm.index(v) for u, v in edges)
    ]
