"""Synthetic gold records and controlled trajectory corruptions.

``generate_gold`` builds a seeded plan of a requested topology together with a
fully compliant golden rollout that scores 1 on every reward component.
``perturb`` applies exactly one named corruption to a compliant rollout.
``EFFECTS`` records, per corruption, the direction each component may move
when the input is a golden rollout; the property suite checks it.
"""

from __future__ import annotations

import enum
import random
import re
from collections.abc import Sequence
from typing import Literal

from .errors import NotApplicable
from .plan_graph import (
    PLACEHOLDER_RE,
    PlanGraph,
    Placeholder,
    build_plan_graph,
    placeholder_substitute,
    topological_indices,
)
from .protocol import Block, Kind, Trajectory, parse_trajectory, render_blocks, to_blocks
from .rewards import COMPONENT_NAMES, GoldRecord, HashingEmbedder

Topology = Literal["chain", "tree", "diamond", "random-dag"]
TOPOLOGIES: tuple[str, ...] = ("chain", "tree", "diamond", "random-dag")

# Three disjoint vocabularies: questions, gold answers, corruptions.
RELATIONS = (
    "founder", "capital", "mayor", "spouse", "producer", "director", "author", "composer",
    "birthplace", "headquarters", "successor", "predecessor", "publisher", "architect",
    "owner", "coach", "language", "currency", "river", "mountain",
)
ENTITIES = (
    "Oakridge", "Brindle Creek", "Castor Hall", "Denholm Abbey", "Elswick Bridge", "Farrow Isle",
    "Glenmoor", "Harwick Tower", "Ivel Valley", "Juniper Court", "Kestrel Bay", "Larkspur Mill",
)
ANSWER_WORDS = (
    "amber", "basalt", "cobalt", "dune", "ember", "fjord", "garnet", "harbor", "indigo", "jasper",
    "kelp", "lagoon", "marble", "nectar", "onyx", "pebble", "quartz", "russet", "sable", "topaz",
    "umber", "violet", "willow", "xenon", "yarrow", "zinnia", "alder", "birch", "cedar", "delta",
)
CORRUPT_WORDS = (
    "nowhere", "unknown", "mistaken", "bogus", "phantom", "spurious", "nothing", "decoy",
    "fiction", "rumor", "guesswork", "placebo",
)


_REFERENCE_EMBEDDER = HashingEmbedder()


class PerturbationKind(str, enum.Enum):
    DROP_SUBGOAL = "DropSubgoal"
    ADD_SPURIOUS_SUBGOAL = "AddSpuriousSubgoal"
    REWIRE_DEPENDENCY = "RewireDependency"
    CORRUPT_SUB_ANSWER = "CorruptSubAnswer"
    CORRUPT_FINAL_ANSWER = "CorruptFinalAnswer"
    BREAK_TAG = "BreakTag"
    SHUFFLE_PLAN_ORDER = "ShufflePlanOrder"


COMPONENTS = COMPONENT_NAMES
_K = PerturbationKind

TARGET: dict[PerturbationKind, str] = {
    _K.DROP_SUBGOAL: "r_str",
    _K.ADD_SPURIOUS_SUBGOAL: "r_str",
    _K.REWIRE_DEPENDENCY: "r_str",
    _K.CORRUPT_SUB_ANSWER: "r_step",
    _K.CORRUPT_FINAL_ANSWER: "r_answ",
    _K.BREAK_TAG: "r_form",
    _K.SHUFFLE_PLAN_ORDER: "r_str",
}

# Direction relative to the golden score: "lt" strictly lower, "le" not higher, "eq" unchanged.
EFFECTS: dict[PerturbationKind, dict[str, str]] = {
    _K.DROP_SUBGOAL: {"r_form": "eq", "r_str": "lt", "r_sem": "le", "r_step": "le", "r_answ": "eq"},
    _K.ADD_SPURIOUS_SUBGOAL: {"r_form": "eq", "r_str": "lt", "r_sem": "eq", "r_step": "eq", "r_answ": "eq"},
    _K.REWIRE_DEPENDENCY: {"r_form": "eq", "r_str": "le", "r_sem": "le", "r_step": "le", "r_answ": "eq"},
    _K.CORRUPT_SUB_ANSWER: {"r_form": "eq", "r_str": "eq", "r_sem": "eq", "r_step": "lt", "r_answ": "eq"},
    _K.CORRUPT_FINAL_ANSWER: {"r_form": "eq", "r_str": "eq", "r_sem": "eq", "r_step": "eq", "r_answ": "lt"},
    _K.BREAK_TAG: {"r_form": "lt", "r_str": "le", "r_sem": "le", "r_step": "le", "r_answ": "le"},
    _K.SHUFFLE_PLAN_ORDER: {c: "eq" for c in COMPONENTS},
}


def _rng(*parts: object) -> random.Random:
    return random.Random(":".join(str(p) for p in parts))


def topology_edges(n: int, topology: str, rng: random.Random) -> set[tuple[int, int]]:
    """Edges between positional indices; every edge points from a lower to a higher index.

    ``diamond`` fans out from the first node to all middle nodes and back into
    the last one; below three nodes it degenerates to a chain.
    """
    if topology == "chain":
        return {(i, i + 1) for i in range(n - 1)}
    if topology == "tree":
        return {(rng.randrange(i), i) for i in range(1, n)}
    if topology == "diamond":
        if n < 3:
            return {(i, i + 1) for i in range(n - 1)}
        return {(0, i) for i in range(1, n - 1)} | {(i, n - 1) for i in range(1, n - 1)}
    if topology == "random-dag":
        return {(i, j) for j in range(1, n) for i in range(j) if rng.random() < 0.5}
    raise ValueError(f"unknown topology {topology!r}")


def _question(rng_rel: str, producers: Sequence[int], entity: str) -> str:
    if not producers:
        return f"What is the {rng_rel} of {entity}?"
    refs = " and ".join(f"#{p + 1}" for p in producers)
    return f"What is the {rng_rel} associated with {refs}?"


def _subplan(question: str, ph: Placeholder, answer: str) -> Block:
    return (
        Kind.SUBPLAN,
        [
            (Kind.THINK, f" I need to resolve {ph}. "),
            (Kind.SEARCH, f" {question} "),
            (Kind.INFORMATION, f" Doc 1: records state that the answer is {answer}. "),
            (Kind.THINK, f" The documents give {answer}. "),
            (Kind.SUBANSWER, f" {ph} = {answer} "),
        ],
    )


def generate_gold(seed: int, n_subgoals: int, topology: str) -> tuple[GoldRecord, Trajectory]:
    """Deterministic gold record plus a compliant golden rollout that self-scores to all ones."""
    if not 1 <= n_subgoals <= 6:
        raise ValueError("n_subgoals must be in [1, 6]")
    if topology not in TOPOLOGIES:
        raise ValueError(f"topology must be one of {TOPOLOGIES}")
    rng = _rng("gold", seed, n_subgoals, topology)
    edges = topology_edges(n_subgoals, topology, rng)
    # Distinct hash buckets keep every synthetic question distinguishable under
    # the reference embedder, so the golden matching is unique.
    while True:
        relations = rng.sample(RELATIONS, n_subgoals)
        if len({_REFERENCE_EMBEDDER._bucket(r) for r in relations}) == n_subgoals:
            break
    words = rng.sample(ANSWER_WORDS, 2 * n_subgoals)
    answers = [f"{words[2 * i].title()} {words[2 * i + 1].title()}" for i in range(n_subgoals)]

    entries = []
    for i in range(n_subgoals):
        producers = sorted(u for u, v in edges if v == i)
        question = _question(relations[i], producers, rng.choice(ENTITIES))
        entries.append((f"Q{i + 1}", question, Placeholder(i + 1)))
    plan = build_plan_graph(entries)

    order = topological_indices(plan)
    final = answers[order[-1]]
    bindings = {Placeholder(i + 1): answers[i] for i in range(n_subgoals)}
    question = f"[synthetic {seed}/{topology}/{n_subgoals}] " + placeholder_substitute(
        plan.nodes[order[-1]].question_text, {k: f"the {relations[k.index - 1]} item" for k in bindings}
    )
    gold = GoldRecord(
        question=question,
        gold_plan=plan,
        gold_sub_answers=bindings,
        gold_final_answers=(final,),
        id=f"gold-{seed}-{topology}-{n_subgoals}",
    )

    blocks: list[Block] = [
        (Kind.THINK, " I will decompose the question into sub-questions. "),
        (Kind.PLAN, " " + plan.to_json() + " "),
    ]
    resolved: dict[Placeholder, str] = {}
    for i in order:
        node = plan.nodes[i]
        search = placeholder_substitute(node.question_text, resolved)
        blocks.append(_subplan(search, node.output_placeholder, answers[i]))
        resolved[node.output_placeholder] = answers[i]
    blocks.append((Kind.THINK, " Combining the sub-answers gives the final answer. "))
    blocks.append((Kind.ANSWER, f" {final} "))
    return gold, parse_trajectory(render_blocks(blocks))


# --- corruptions -------------------------------------------------------------


def _replace_ref(text: str, ph: Placeholder, literal: str) -> str:
    return PLACEHOLDER_RE.sub(lambda m: literal if int(m.group(1)) == ph.index else m.group(0), text)


def _plan_block(entries: Sequence[tuple[str, str, Placeholder]]) -> Block:
    return (Kind.PLAN, " " + build_plan_graph(entries).to_json() + " ")


def _entries(plan: PlanGraph) -> list[tuple[str, str, Placeholder]]:
    return [(n.id, n.question_text, n.output_placeholder) for n in plan.nodes]


def _binding_of(subplan: Block) -> Placeholder | None:
    for kind, body in subplan[1]:
        if kind is Kind.SUBANSWER and isinstance(body, str):
            m = re.match(r"\s*#([1-9][0-9]*)\s*=", body)
            if m:
                return Placeholder(int(m.group(1)))
    return None


def _index_of(blocks: Sequence[Block], kind: Kind) -> list[int]:
    return [i for i, (k, _) in enumerate(blocks) if k is kind]


def _corrupt_phrase(rng: random.Random) -> str:
    a, b = rng.sample(CORRUPT_WORDS, 2)
    return f"{a.title()} {b.title()}"


def perturb(traj: Trajectory, gold: GoldRecord, kind: PerturbationKind | str, seed: int) -> Trajectory:
    """Apply one named corruption to a compliant rollout; deterministic per seed.

    Raises NotApplicable when the corruption makes no sense for this rollout
    (e.g. dropping the only subgoal).
    """
    kind = PerturbationKind(kind)
    rng = _rng("perturb", seed, kind.value)
    if kind is _K.BREAK_TAG:
        return _break_tag(traj, rng)

    plan = traj.plan
    if plan is None:
        raise NotApplicable("trajectory has no parsed plan")
    blocks = to_blocks(traj.segments)
    plan_at = _index_of(blocks, Kind.PLAN)
    answer_at = _index_of(blocks, Kind.ANSWER)
    if len(plan_at) != 1 or len(answer_at) != 1:
        raise NotApplicable("trajectory is not compliant")
    n = len(plan.nodes)
    answers = traj.sub_answer_map()

    if kind is _K.CORRUPT_FINAL_ANSWER:
        blocks[answer_at[0]] = (Kind.ANSWER, f" {_corrupt_phrase(rng)} ")

    elif kind is _K.CORRUPT_SUB_ANSWER:
        targets = [i for i in _index_of(blocks, Kind.SUBPLAN) if _binding_of(blocks[i]) is not None]
        if not targets:
            raise NotApplicable("no labeled sub-answer to corrupt")
        i = rng.choice(targets)
        ph = _binding_of(blocks[i])
        children = [
            (k, f" {ph} = {_corrupt_phrase(rng)} ") if k is Kind.SUBANSWER else (k, body)
            for k, body in blocks[i][1]
        ]
        blocks[i] = (Kind.SUBPLAN, children)

    elif kind is _K.DROP_SUBGOAL:
        if n < 2:
            raise NotApplicable("cannot drop the only subgoal")
        victim = plan.nodes[rng.randrange(n)]
        ph = victim.output_placeholder
        literal = answers.get(ph, "an earlier result")
        entries = [
            (sid, _replace_ref(q, ph, literal), out) for sid, q, out in _entries(plan) if out != ph
        ]
        blocks[plan_at[0]] = _plan_block(entries)
        blocks = [b for b in blocks if not (b[0] is Kind.SUBPLAN and _binding_of(b) == ph)]

    elif kind is _K.ADD_SPURIOUS_SUBGOAL:
        taken = {sid for sid, _, _ in _entries(plan)}
        k = n + 1
        while f"Q{k}" in taken:
            k += 1
        new_ph = Placeholder(max(p.index for p in plan.placeholders) + 1)
        word = rng.choice(CORRUPT_WORDS)
        if rng.random() < 0.5:
            ref = rng.choice(plan.placeholders)
            question = f"Which {word} record mentions {ref}?"
        else:
            question = f"Which {word} record exists?"
        blocks[plan_at[0]] = _plan_block(_entries(plan) + [(f"Q{k}", question, new_ph)])
        last_sub = max(_index_of(blocks, Kind.SUBPLAN), default=plan_at[0])
        blocks.insert(last_sub + 1, _subplan(question, new_ph, _corrupt_phrase(rng)))

    elif kind is _K.REWIRE_DEPENDENCY:
        if n < 2:
            raise NotApplicable("a single subgoal has no dependency to rewire")
        pos = {v: p for p, v in enumerate(topological_indices(plan))}
        entries = _entries(plan)
        edges = sorted(plan.edges)
        removed = None
        if edges:
            removed = rng.choice(edges)
            u, v = removed
            ph_u = plan.nodes[u].output_placeholder
            sid, q, out = entries[v]
            entries[v] = (sid, _replace_ref(q, ph_u, answers.get(ph_u, "an earlier result")), out)
        candidates = [
            (a, b)
            for a in range(n)
            for b in range(n)
            if pos[a] < pos[b] and (a, b) not in plan.edges and (a, b) != removed
        ]
        if candidates:
            a, b = rng.choice(candidates)
            sid, q, out = entries[b]
            entries[b] = (sid, f"{q.rstrip()} (given {plan.nodes[a].output_placeholder})", out)
        blocks[plan_at[0]] = _plan_block(entries)

    elif kind is _K.SHUFFLE_PLAN_ORDER:
        if n < 2:
            raise NotApplicable("a single subgoal cannot be reordered")
        entries = _entries(plan)
        perm = list(range(n))
        while perm == list(range(n)):
            rng.shuffle(perm)
        blocks[plan_at[0]] = _plan_block([entries[i] for i in perm])

    return parse_trajectory(render_blocks(blocks))


def _break_tag(traj: Trajectory, rng: random.Random) -> Trajectory:
    closable = [s for s in traj.walk() if s.well_formed]
    if not closable:
        raise NotApplicable("no well-formed tag pair to break")
    seg = rng.choice(closable)
    end = seg.char_span[1]
    start = end - len(seg.kind.close_tag)
    assert traj.raw_text[start:end] == seg.kind.close_tag
    return parse_trajectory(traj.raw_text[:start] + traj.raw_text[end:])
