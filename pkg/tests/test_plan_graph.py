import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import scan_indices, scan_substitute
from planreward.errors import (
    CycleDetected,
    DanglingReference,
    DuplicatePlaceholder,
    DuplicateSubgoalId,
    EmptyPlan,
    PlanError,
    UnboundPlaceholder,
)
from planreward.oracles import all_topological_orders
from planreward.plan_graph import (
    Placeholder,
    build_plan_graph,
    find_placeholders,
    induced_edges,
    parse_plan_json,
    placeholder_substitute,
    plan_from_json_obj,
    topological_indices,
    topological_order,
)

WORKED_PLAN = [
    ("Q1", "For what river does Toongabbie Creek serve as the mouth?", "#1"),
    ("Q2", "Into what does #1 flow?", "#2"),
]


def dag_entries(n, edges):
    """Plan rows whose placeholder references induce exactly ``edges``."""
    rows = []
    for v in range(n):
        refs = " ".join(f"#{u + 1}" for u in sorted(u for u, w in edges if w == v))
        rows.append((f"Q{v + 1}", f"step {v} uses {refs}".strip(), v + 1))
    return rows


@st.composite
def dags(draw, max_nodes=7):
    n = draw(st.integers(1, max_nodes))
    perm = draw(st.permutations(range(n)))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True) if pairs else st.just([]))
    return n, {(perm[i], perm[j]) for i, j in chosen}


class TestPlaceholder:
    def test_render_and_parse(self):
        assert str(Placeholder(12)) == "#12"
        assert Placeholder.parse("#7") == Placeholder(7)
        assert Placeholder.coerce(3) == Placeholder.coerce("#3")

    @pytest.mark.parametrize("bad", [0, -1])
    def test_index_must_be_positive(self, bad):
        with pytest.raises(ValueError):
            Placeholder(bad)

    @pytest.mark.parametrize("text", ["#0", "#01", "# 1", "1", "#1a"])
    def test_parse_rejects_noncanonical(self, text):
        with pytest.raises(ValueError):
            Placeholder.parse(text)

    def test_longest_index_wins(self):
        assert find_placeholders("join #1 and #12") == [Placeholder(1), Placeholder(12)]


class TestBuild:
    def test_worked_plan(self):
        g = build_plan_graph(WORKED_PLAN)
        assert g.ids == ["Q1", "Q2"]
        assert g.edge_ids() == [("Q1", "Q2")]

    def test_single_node(self):
        g = build_plan_graph([("Q1", "What is X?", "#1")])
        assert len(g) == 1 and not g.edges

    def test_mutual_reference_is_a_cycle(self):
        with pytest.raises(CycleDetected) as info:
            build_plan_graph([("Q1", "What is #2?", "#1"), ("Q2", "What is #1?", "#2")])
        assert set(info.value.cycle_ids) == {"Q1", "Q2"}

    def test_self_reference_is_a_cycle(self):
        with pytest.raises(CycleDetected):
            build_plan_graph([("Q1", "What is #1?", "#1")])

    def test_errors(self):
        with pytest.raises(EmptyPlan):
            build_plan_graph([])
        with pytest.raises(DuplicatePlaceholder):
            build_plan_graph([("Q1", "a", "#1"), ("Q2", "b", "#1")])
        with pytest.raises(DuplicateSubgoalId):
            build_plan_graph([("Q1", "a", "#1"), ("Q1", "b", "#2")])
        with pytest.raises(DanglingReference):
            build_plan_graph([("Q1", "uses #3", "#1")])
        with pytest.raises(PlanError):
            build_plan_graph([("Q1", "   ", "#1")])

    def test_repeated_reference_gives_one_edge(self):
        g = build_plan_graph([("Q1", "a", "#1"), ("Q2", "#1 vs #1", "#2")])
        assert g.edges == frozenset({(0, 1)})

    @given(dags())
    def test_edges_recomputed_from_text(self, dag):
        n, edges = dag
        g = build_plan_graph(dag_entries(n, edges))
        assert g.edges == frozenset(edges)
        assert induced_edges(g.nodes) == g.edges


class TestTopologicalOrder:
    def test_examples(self):
        chain = build_plan_graph([("Q1", "a", 1), ("Q2", "#1", 2), ("Q3", "#2", 3)])
        assert topological_order(chain) == ["Q1", "Q2", "Q3"]
        independent = build_plan_graph([("Q1", "a", 1), ("Q2", "b", 2)])
        assert topological_order(independent) == ["Q1", "Q2"]
        diamond = build_plan_graph([("Q1", "a", 1), ("Q2", "#1", 2), ("Q3", "#1", 3), ("Q4", "#2 #3", 4)])
        assert topological_order(diamond) == ["Q1", "Q2", "Q3", "Q4"]

    def test_diamond_matches_smallest_valid_order(self):
        edges = {(0, 1), (0, 2), (1, 3), (2, 3)}
        assert tuple(topological_indices(build_plan_graph(dag_entries(4, edges)))) == min(
            all_topological_orders(4, edges)
        )

    def test_tie_break_prefers_input_order(self):
        g = build_plan_graph([("A", "#3", 1), ("B", "b", 2), ("C", "c", 3)])
        assert topological_order(g) == ["B", "C", "A"]

    @given(dags())
    def test_respects_every_edge(self, dag):
        n, edges = dag
        order = topological_indices(build_plan_graph(dag_entries(n, edges)))
        assert sorted(order) == list(range(n))
        pos = {v: i for i, v in enumerate(order)}
        assert all(pos[u] < pos[v] for u, v in edges)

    @given(dags(max_nodes=6))
    def test_is_lexicographically_smallest_valid_order(self, dag):
        n, edges = dag
        order = tuple(topological_indices(build_plan_graph(dag_entries(n, edges))))
        assert order == min(all_topological_orders(n, edges))


class TestSubstitute:
    def test_examples(self):
        assert placeholder_substitute("Into what does #1 flow?", {"#1": "Parramatta River"}) == (
            "Into what does Parramatta River flow?"
        )
        assert placeholder_substitute("no refs here", {}) == "no refs here"
        assert placeholder_substitute("join #1 and #12", {"#1": "a", "#12": "b"}) == "join a and b"

    def test_unbound(self):
        with pytest.raises(UnboundPlaceholder):
            placeholder_substitute("what is #2", {"#1": "x"})

    @given(
        st.lists(st.one_of(st.text(alphabet="ab #0", max_size=3), st.integers(1, 30).map(lambda k: f"#{k}"))),
        st.text(alphabet="xyz ", max_size=5),
    )
    def test_matches_scanner_oracle(self, parts, value):
        text = "".join(parts)
        bindings = {Placeholder(k): f"{value}{k}" for k in scan_indices(text)}
        assert placeholder_substitute(text, bindings) == scan_substitute(text, bindings)

    @given(st.text(alphabet="ab #123", max_size=20))
    def test_idempotent_when_answers_have_no_placeholders(self, text):
        bindings = {Placeholder(k): "ans" for k in scan_indices(text)}
        once = placeholder_substitute(text, bindings)
        assert placeholder_substitute(once, bindings) == once


class TestJson:
    def test_round_trip(self):
        g = build_plan_graph(WORKED_PLAN)
        assert parse_plan_json(g.to_json()) == g
        assert plan_from_json_obj(g.to_json_obj()) == g

    @pytest.mark.parametrize(
        "text",
        [
            "not json",
            "[]",
            "{}",
            '{"Q1": ["a"]}',
            '{"Q1": ["a", 1]}',
            '{"Q1": ["a", "#1"], "Q1": ["b", "#2"]}',
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(PlanError):
            parse_plan_json(text)

    def test_node_order_follows_keys(self):
        g = parse_plan_json('{"Q2": ["#1 later", "#2"], "Q1": ["first", "#1"]}')
        assert g.ids == ["Q2", "Q1"]
        assert topological_order(g) == ["Q1", "Q2"]


def test_all_orders_oracle_sanity():
    assert sorted(all_topological_orders(3, set())) == sorted(itertools.permutations(range(3)))
