import math
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from planreward.alignment import Matching
from planreward.errors import GraphTooLarge, PlanError
from planreward.perturb import TOPOLOGIES, generate_gold
from planreward.plan_graph import Placeholder, build_plan_graph
from planreward.protocol import parse_trajectory, serialize_trajectory
from planreward.rewards import (
    COMPONENT_NAMES,
    AnnealConfig,
    Embedder,
    GoldRecord,
    HashingEmbedder,
    answer_similarity_phi,
    anneal_weight,
    cosine,
    outcome_reward,
    plan_matching,
    score_trajectory,
    semantic_reward,
    subgoal_reward,
    total_reward,
)

CFG = AnnealConfig(total_steps=200)
unit = st.floats(0, 1, allow_nan=False)
binary = st.sampled_from([0, 1])


class TableEmbedder:
    """Fixed vectors per text, for exact cosine examples."""

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}

    def embed(self, text):
        return self.table[text]


class TestEmbedder:
    def test_protocol_and_determinism(self):
        e = HashingEmbedder()
        assert isinstance(e, Embedder)
        a = e.embed("Into what does #1 flow?")
        b = HashingEmbedder().embed("Into what does #1 flow?")
        assert a.shape == (256,) and np.array_equal(a, b)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)

    @given(st.text(min_size=1).filter(lambda s: s.strip()))
    def test_nonzero_for_nonempty_input(self, text):
        assert np.linalg.norm(HashingEmbedder().embed(text)) > 0

    def test_normalization_insensitive(self):
        e = HashingEmbedder()
        assert cosine(e.embed("The Sydney Harbour."), e.embed("sydney harbour")) == pytest.approx(1.0, abs=1e-12)

    def test_cosine_zero_vector(self):
        assert cosine(np.zeros(3), np.ones(3)) == 0.0


def two_plans():
    gold = build_plan_graph([("Q1", "g1", 1), ("Q2", "g2", 2), ("Q3", "g3", 3)])
    pred = build_plan_graph([("Q1", "p1", 1), ("Q2", "p2", 2)])
    e = TableEmbedder({
        "g1": [1, 0], "g2": [1, 0], "g3": [0, 1],
        "p1": [1, 0], "p2": [math.cos(math.pi / 3), math.sin(math.pi / 3)],
    })
    return pred, gold, e


class TestSemantic:
    def test_identical_plans(self, worked_gold):
        e = HashingEmbedder()
        plan = worked_gold.gold_plan
        m = plan_matching(plan, plan, e)
        assert semantic_reward(m, plan, plan, e) == 1.0

    def test_partial_example(self):
        pred, gold, e = two_plans()
        # cos(p1, g1) = 1 and cos(p2, g2) = cos(60 degrees) = 0.5 over three gold nodes
        m = Matching(frozenset({(0, 0), (1, 1)}))
        assert semantic_reward(m, pred, gold, e) == pytest.approx(0.5, abs=1e-12)

    def test_empty_matching(self):
        pred, gold, e = two_plans()
        assert semantic_reward(Matching(frozenset()), pred, gold, e) == 0.0

    def test_negative_cosine_clamps(self):
        gold = build_plan_graph([("Q1", "g", 1)])
        pred = build_plan_graph([("Q1", "p", 1)])
        e = TableEmbedder({"g": [1, 0], "p": [-1, 0]})
        assert semantic_reward(Matching(frozenset({(0, 0)})), pred, gold, e) == 0.0


class TestPhiAndOutcome:
    @pytest.mark.parametrize(
        "pred, gold, want",
        [
            ("Parramatta River", "Parramatta River", 1.0),
            ("Helen Mirren", "Susan Gilroy", 0.0),
            ("the Sydney Harbour area", "Sydney Harbour", 0.8),
            ("", "", 1.0),
            ("", "x", 0.0),
        ],
    )
    def test_phi(self, pred, gold, want):
        assert answer_similarity_phi(pred, gold) == pytest.approx(want, abs=1e-12)

    def test_outcome(self):
        assert outcome_reward("Sydney Harbour", ["Sydney Harbour"]) == 1
        assert outcome_reward("Parramatta River", ["Sydney Harbour"]) == 0
        assert outcome_reward(None, ["x"]) == 0
        assert outcome_reward("NYC", ["New York City", "nyc"]) == 1


class TestSubgoal:
    def test_worked_trace(self, worked_trace, worked_gold):
        m = plan_matching(worked_trace.plan, worked_gold.gold_plan, HashingEmbedder())
        assert subgoal_reward(m, worked_trace, worked_gold) == 1.0

    def test_half(self, worked_trace, worked_gold):
        assert subgoal_reward(Matching(frozenset({(0, 0)})), worked_trace, worked_gold) == 0.5

    def test_no_subanswers(self, worked_gold):
        t = parse_trajectory('<plan>{"Q1": ["a", "#1"], "Q2": ["#1", "#2"]}</plan>')
        m = Matching(frozenset({(0, 0), (1, 1)}))
        assert subgoal_reward(m, t, worked_gold) == 0.0

    def test_last_binding_wins(self, worked_trace_text, worked_trace, worked_gold):
        raw = worked_trace_text.replace("<answer>", "<subPlan><think>t</think><search>s</search>"
                                       "<information>i</information><subAnswer>#1 = wrong</subAnswer>"
                                       "</subPlan><answer>")
        t = parse_trajectory(raw)
        assert t.sub_answer_map()[Placeholder(1)] == "wrong"
        m = plan_matching(t.plan, worked_gold.gold_plan, HashingEmbedder())
        assert subgoal_reward(m, t, worked_gold) == 0.5


class TestAnneal:
    def test_examples(self):
        assert anneal_weight(180, 200) == 0.5
        assert anneal_weight(9, 10) == 0.5
        assert anneal_weight(200, 200) == pytest.approx(1 / (1 + math.e**2), abs=1e-15)
        assert anneal_weight(200, 200) == pytest.approx(0.119203, abs=1e-6)
        assert anneal_weight(0, 200) == pytest.approx(0.999999985, abs=1e-9)

    def test_bounds(self):
        with pytest.raises(ValueError):
            anneal_weight(-1, 10)
        with pytest.raises(ValueError):
            anneal_weight(11, 10)
        with pytest.raises(ValueError):
            anneal_weight(0, 0)

    @given(st.integers(1, 5000), st.data())
    def test_monotone_and_bounded(self, T, data):
        t = data.draw(st.integers(0, T - 1))
        a, b = anneal_weight(t, T), anneal_weight(t + 1, T)
        assert 0 < b <= a <= 1
        # Consecutive steps differ by about 0.095*exp(x); below x = -30 that nears one ulp of 1.
        if (t + 1 - 0.9 * T) / 10 > -30:
            assert b < a
        assert anneal_weight(0, T) > anneal_weight(T, T)


class TestTotal:
    def test_examples(self):
        assert total_reward((1, 1, 1, 1, 1), 180, CFG).total == 1.8
        for t in (0, 57, 180, 200):
            assert total_reward((0, 0, 0, 0, 1), t, CFG).total == 1.0
        assert total_reward((0, 0, 0, 0, 0), 3, CFG).total == 0.0

    def test_range_checks(self):
        with pytest.raises(ValueError):
            total_reward((0.5, 1, 1, 1, 1), 0, CFG)
        with pytest.raises(ValueError):
            total_reward((1, 1.5, 1, 1, 1), 0, CFG)

    @given(binary, unit, unit, unit, binary, st.integers(0, 200))
    def test_recomputable(self, f, s, m, p, a, t):
        b = total_reward((f, s, m, p, a), t, CFG)
        assert b.total == pytest.approx(b.recompute_total(), abs=1e-15)
        assert b.components == (f, s, m, p, a)

    @given(st.lists(unit, min_size=5, max_size=5), st.integers(0, 4), unit, st.integers(0, 200))
    def test_monotone_in_each_component(self, comps, i, bump, t):
        comps = [float(c) for c in comps]
        comps[0] = 0.0 if comps[0] < 0.5 else 1.0
        comps[4] = 0.0 if comps[4] < 0.5 else 1.0
        higher = list(comps)
        higher[i] = 1.0 if i in (0, 4) else max(comps[i], bump)
        assert total_reward(higher, t, CFG).total >= total_reward(comps, t, CFG).total


class TestScore:
    def test_worked_trace(self, worked_trace, worked_gold):
        b = score_trajectory(worked_trace, worked_gold, 180, CFG, HashingEmbedder())
        assert b.components == (1, 1.0, 1.0, 1.0, 1)
        assert abs(b.total - 1.8) <= 1e-12
        assert b.violations == () and len(b.matching) == 2

    def test_empty_rollout(self, worked_gold):
        b = score_trajectory("", worked_gold, 180, CFG, HashingEmbedder())
        assert b.components == (0, math.exp(-3), 0.0, 0.0, 0)

    def test_wrong_final_answer(self, worked_trace_text, worked_gold):
        raw = worked_trace_text.replace("<answer> Sydney Harbour </answer>", "<answer> Parramatta River </answer>")
        b = score_trajectory(raw, worked_gold, 180, CFG, HashingEmbedder())
        assert b.components == (1, 1.0, 1.0, 1.0, 0)
        assert abs(b.total - 0.8) <= 1e-12

    def test_graph_too_large_propagates(self, worked_trace, worked_gold):
        with pytest.raises(GraphTooLarge):
            score_trajectory(worked_trace, worked_gold, 0, CFG, HashingEmbedder(), max_ged_nodes=1)

    @pytest.mark.parametrize("topology", TOPOLOGIES)
    @pytest.mark.parametrize("n", range(1, 7))
    def test_golden_self_scores_to_ones(self, topology, n):
        gold, traj = generate_gold(n * 31, n, topology)
        b = score_trajectory(traj, gold, 0, CFG, HashingEmbedder())
        assert b.components == (1, 1.0, 1.0, 1.0, 1)

    @pytest.mark.parametrize("seed", range(8))
    def test_whitespace_reformatting(self, seed):
        gold, traj = generate_gold(seed, 4, "random-dag")
        e = HashingEmbedder()
        base = score_trajectory(traj, gold, 100, CFG, e)
        squeezed = re.sub(r">\s+<", "><", traj.raw_text)
        spread = re.sub(r">\s*<", ">\n\n  \t<", traj.raw_text)
        for raw in (squeezed, spread, serialize_trajectory(traj)):
            b = score_trajectory(raw, gold, 100, CFG, e)
            assert b.components == base.components and b.total == base.total


class TestGoldRecord:
    def test_round_trip(self, worked_gold_row):
        g = GoldRecord.from_dict(worked_gold_row)
        assert g.to_dict() == worked_gold_row
        assert g.gold_sub_answers[Placeholder(2)] == "Sydney Harbour"

    def test_sub_answers_must_cover_plan(self, worked_gold_row):
        row = dict(worked_gold_row, sub_answers={"#1": "x"})
        with pytest.raises(PlanError):
            GoldRecord.from_dict(row)

    def test_needs_an_answer(self, worked_gold_row):
        with pytest.raises(ValueError):
            GoldRecord.from_dict(dict(worked_gold_row, answers=[]))


def test_component_names():
    assert COMPONENT_NAMES == ("r_form", "r_str", "r_sem", "r_step", "r_answ")
