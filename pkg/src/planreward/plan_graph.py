"""Plan DAG model: subgoals, ``#k`` placeholders and the dependency edges they induce.

A plan is written as a JSON object such as::

    {"Q1": ["For what river does Toongabbie Creek serve as the mouth?", "#1"],
     "Q2": ["Into what does #1 flow?", "#2"]}

Each entry declares a subgoal whose answer is bound to an output placeholder.
A subgoal whose question mentions another subgoal's placeholder depends on it,
which gives the edge ``producer -> consumer``. Node identity is positional;
the ``Q1`` style keys are labels only.
"""

from __future__ import annotations

import heapq
import json
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Union

from .errors import (
    CycleDetected,
    DanglingReference,
    DuplicatePlaceholder,
    DuplicateSubgoalId,
    EmptyPlan,
    PlanError,
    UnboundPlaceholder,
)

# Greedy digit run: "#12" is always read as placeholder 12, never "#1" + "2".
PLACEHOLDER_RE = re.compile(r"#([1-9][0-9]*)")
_EXACT_PLACEHOLDER_RE = re.compile(r"\s*#([1-9][0-9]*)\s*")


@dataclass(frozen=True, order=True)
class Placeholder:
    index: int

    def __post_init__(self) -> None:
        if isinstance(self.index, bool) or not isinstance(self.index, int) or self.index < 1:
            raise ValueError(f"placeholder index must be a positive integer, got {self.index!r}")

    def __str__(self) -> str:
        return f"#{self.index}"

    @classmethod
    def parse(cls, text: str) -> Placeholder:
        """Parse ``"#k"`` (surrounding whitespace allowed)."""
        m = _EXACT_PLACEHOLDER_RE.fullmatch(text)
        if m is None:
            raise ValueError(f"not a placeholder: {text!r}")
        return cls(int(m.group(1)))

    @classmethod
    def coerce(cls, value: PlaceholderLike) -> Placeholder:
        if isinstance(value, Placeholder):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            return cls(value)
        if isinstance(value, str):
            return cls.parse(value)
        raise TypeError(f"cannot interpret {value!r} as a placeholder")


PlaceholderLike = Union[Placeholder, int, str]


def find_placeholders(text: str) -> list[Placeholder]:
    """All placeholder references in ``text``, in order of appearance (repeats kept)."""
    return [Placeholder(int(m.group(1))) for m in PLACEHOLDER_RE.finditer(text)]


@dataclass(frozen=True)
class Subgoal:
    id: str
    question_text: str
    output_placeholder: Placeholder

    @cached_property
    def references(self) -> frozenset[Placeholder]:
        return frozenset(find_placeholders(self.question_text))


@dataclass(frozen=True)
class PlanGraph:
    """Immutable DAG of subgoals.

    ``edges`` holds positional ``(producer_index, consumer_index)`` pairs. Use
    :func:`build_plan_graph` to construct one; the constructor trusts its input.
    """

    nodes: tuple[Subgoal, ...]
    edges: frozenset[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def placeholders(self) -> list[Placeholder]:
        return [n.output_placeholder for n in self.nodes]

    @cached_property
    def producer_of(self) -> dict[Placeholder, int]:
        return {n.output_placeholder: i for i, n in enumerate(self.nodes)}

    def edge_ids(self) -> list[tuple[str, str]]:
        return [(self.nodes[u].id, self.nodes[v].id) for u, v in sorted(self.edges)]

    def to_json_obj(self) -> dict[str, list[str]]:
        return {n.id: [n.question_text, str(n.output_placeholder)] for n in self.nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), ensure_ascii=False)


def induced_edges(nodes: Sequence[Subgoal]) -> frozenset[tuple[int, int]]:
    """Edges implied by placeholder references.

    Raises DanglingReference for a reference with no producer and CycleDetected
    for a self-reference.
    """
    producer = {n.output_placeholder: i for i, n in enumerate(nodes)}
    edges = set()
    for v, node in enumerate(nodes):
        for ref in sorted(node.references):
            u = producer.get(ref)
            if u is None:
                raise DanglingReference(f"{node.id} references {ref} which no subgoal produces")
            if u == v:
                raise CycleDetected([node.id, node.id])
            edges.add((u, v))
    return frozenset(edges)


def build_plan_graph(entries: Iterable[tuple[str, str, PlaceholderLike]]) -> PlanGraph:
    """Build and validate a plan graph from ``(id, question_text, output_placeholder)`` rows.

    Node order follows the input. Raises EmptyPlan, DuplicateSubgoalId,
    DuplicatePlaceholder, DanglingReference or CycleDetected.
    """
    nodes: list[Subgoal] = []
    seen_ids: set[str] = set()
    seen_ph: set[Placeholder] = set()
    for sid, question, ph in entries:
        if not isinstance(sid, str) or not sid:
            raise PlanError(f"subgoal id must be a non-empty string, got {sid!r}")
        if not isinstance(question, str) or not question.strip():
            raise PlanError(f"subgoal {sid} has an empty question")
        if sid in seen_ids:
            raise DuplicateSubgoalId(f"subgoal id {sid} appears twice")
        placeholder = Placeholder.coerce(ph)
        if placeholder in seen_ph:
            raise DuplicatePlaceholder(f"placeholder {placeholder} is produced twice")
        seen_ids.add(sid)
        seen_ph.add(placeholder)
        nodes.append(Subgoal(sid, question, placeholder))
    if not nodes:
        raise EmptyPlan("a plan needs at least one subgoal")
    edges = induced_edges(nodes)
    graph = PlanGraph(tuple(nodes), edges)
    _kahn(graph)  # raises CycleDetected
    return graph


def _kahn(g: PlanGraph) -> list[int]:
    n = len(g.nodes)
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for u, v in g.edges:
        indeg[v] += 1
        succ[u].append(v)
    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if len(order) != n:
        raise CycleDetected(_find_cycle(g, {i for i in range(n) if indeg[i] > 0}))
    return order


def _find_cycle(g: PlanGraph, stuck: set[int]) -> list[str]:
    # Every stuck node has a stuck predecessor, so walking predecessors must revisit a node.
    preds: dict[int, list[int]] = {v: [] for v in stuck}
    for u, v in g.edges:
        if u in stuck and v in stuck:
            preds[v].append(u)
    node = min(stuck)
    path: list[int] = []
    pos: dict[int, int] = {}
    while node not in pos:
        pos[node] = len(path)
        path.append(node)
        node = min(preds[node])
    cycle = path[pos[node]:][::-1]
    return [g.nodes[i].id for i in cycle + [cycle[0]]]


def topological_order(g: PlanGraph) -> list[str]:
    """Subgoal ids with producers first; ties broken by original node order."""
    return [g.nodes[i].id for i in _kahn(g)]


def topological_indices(g: PlanGraph) -> list[int]:
    return _kahn(g)


def placeholder_substitute(question_text: str, bindings: Mapping[PlaceholderLike, str]) -> str:
    """Replace every ``#k`` in ``question_text`` by its bound answer."""
    table = {Placeholder.coerce(k): v for k, v in bindings.items()}

    def repl(m: re.Match[str]) -> str:
        ph = Placeholder(int(m.group(1)))
        try:
            return table[ph]
        except KeyError:
            raise UnboundPlaceholder(f"{ph} is referenced but not bound") from None

    return PLACEHOLDER_RE.sub(repl, question_text)


def plan_from_json_obj(obj: Any) -> PlanGraph:
    """Build a plan from the canonical ``{"Q1": ["question", "#1"], ...}`` object."""
    if not isinstance(obj, Mapping):
        raise PlanError("plan JSON must be an object")
    entries = []
    for key, value in obj.items():
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 2
            or not all(isinstance(x, str) for x in value)
        ):
            raise PlanError(f"plan entry {key!r} must be [question, placeholder]")
        try:
            ph = Placeholder.parse(value[1])
        except ValueError as exc:
            raise PlanError(f"plan entry {key!r}: {exc}") from None
        entries.append((key, value[0].strip(), ph))
    return build_plan_graph(entries)


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in pairs:
        if k in out:
            raise DuplicateSubgoalId(f"subgoal id {k} appears twice")
        out[k] = v
    return out


def parse_plan_json(text: str) -> PlanGraph:
    """Parse plan text (JSON object) into a PlanGraph; raises PlanError on any defect."""
    try:
        obj = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise PlanError(f"plan is not valid JSON: {exc.msg}") from None
    return plan_from_json_obj(obj)
