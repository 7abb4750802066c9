"""Per-trajectory reward components, annealing schedule and the combined reward.

Components of one rollout against its gold record:

* ``r_form``  1 if the rollout is format compliant, else 0
* ``r_str``   ``exp(-GED)`` between rollout and gold plan graphs
* ``r_sem``   mean embedding cosine over subgoals matched by the maximum common subgraph
* ``r_step``  mean answer similarity over matched subgoals
* ``r_answ``  1 if the final answer exactly matches a gold answer, else 0

The total at training step ``t`` is
``w_t * (alpha*r_form + lam*r_str + gamma*r_sem + delta*r_step) + r_answ``
with ``w_t = 1 / (1 + exp((t - 0.9*T) / 10))``.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol, runtime_checkable

import numpy as np

from .alignment import (
    DEFAULT_MAX_NODES,
    UNIT_COSTS,
    EditCosts,
    Matching,
    max_common_subgraph,
    structural_reward,
)
from .errors import EmptyGoldPlan, PlanError
from .metrics import exact_match, f1_pair, normalize_answer
from .plan_graph import PlanGraph, Placeholder, plan_from_json_obj
from .protocol import Trajectory, check_format, parse_trajectory


@runtime_checkable
class Embedder(Protocol):
    """Maps text to a fixed-dimension vector; must be deterministic."""

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Hashed bag of normalized tokens, L2-normalized.

    Token buckets come from BLAKE2b, so vectors are identical across
    platforms and processes. Text that normalizes to nothing (e.g. only
    punctuation) falls back to hashing the stripped raw string, keeping the
    output non-zero for any non-empty input.
    """

    def __init__(self, dim: int = 256) -> None:
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, text: str) -> np.ndarray:
        vec = self._cache.get(text)
        if vec is not None:
            return vec
        tokens = normalize_answer(text).split()
        if not tokens and text.strip():
            tokens = [text.strip().lower()]
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            vec[self._bucket(tok)] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        vec.setflags(write=False)
        self._cache[text] = vec
        return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, float(np.dot(a, b)) / (na * nb)))


def question_affinity(e: Embedder, pred: str, gold: str) -> float:
    """Per-pair semantic score: cosine clamped at zero."""
    return max(0.0, cosine(e.embed(pred), e.embed(gold)))


@dataclass(frozen=True)
class GoldRecord:
    question: str
    gold_plan: PlanGraph
    gold_sub_answers: Mapping[Placeholder, str]
    gold_final_answers: tuple[str, ...]
    id: str | None = None

    def __post_init__(self) -> None:
        if set(self.gold_sub_answers) != set(self.gold_plan.placeholders):
            raise PlanError("gold sub-answers must cover exactly the plan's placeholders")
        if not self.gold_final_answers:
            raise ValueError("gold record needs at least one acceptable final answer")

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> GoldRecord:
        """Build from a gold file row: ``question``, ``plan``, ``sub_answers``, ``answers``."""
        plan = plan_from_json_obj(obj["plan"])
        subs = {Placeholder.parse(k): str(v) for k, v in dict(obj["sub_answers"]).items()}
        answers = obj["answers"]
        if isinstance(answers, str):
            answers = [answers]
        rid = obj.get("id")
        return cls(
            question=str(obj["question"]),
            gold_plan=plan,
            gold_sub_answers=subs,
            gold_final_answers=tuple(str(a) for a in answers),
            id=None if rid is None else str(rid),
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.id is not None:
            out["id"] = self.id
        out["question"] = self.question
        out["plan"] = self.gold_plan.to_json_obj()
        out["sub_answers"] = {str(k): v for k, v in sorted(self.gold_sub_answers.items())}
        out["answers"] = list(self.gold_final_answers)
        return out


@dataclass(frozen=True)
class AnnealConfig:
    total_steps: int = 200
    alpha: float = 0.1
    lam: float = 0.5
    gamma: float = 0.5
    delta: float = 0.5
    center: float = 0.9
    scale: float = 10.0

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if min(self.alpha, self.lam, self.gamma, self.delta) < 0:
            raise ValueError("reward coefficients must be non-negative")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.lam, self.gamma, self.delta)


COMPONENT_NAMES = ("r_form", "r_str", "r_sem", "r_step", "r_answ")


@dataclass(frozen=True)
class RewardBreakdown:
    r_form: int
    r_str: float
    r_sem: float
    r_step: float
    r_answ: int
    w: float
    total: float
    t: int
    coefficients: tuple[float, float, float, float]
    violations: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()
    matching: Matching | None = field(default=None, compare=False)

    @property
    def components(self) -> tuple[float, float, float, float, float]:
        return (self.r_form, self.r_str, self.r_sem, self.r_step, self.r_answ)

    def recompute_total(self) -> float:
        alpha, lam, gamma, delta = self.coefficients
        return self.w * (alpha * self.r_form + lam * self.r_str + gamma * self.r_sem + delta * self.r_step) + self.r_answ


def semantic_reward(
    matching: Matching, rollout_plan: PlanGraph | None, gold_plan: PlanGraph, e: Embedder
) -> float:
    if not gold_plan.nodes:
        raise EmptyGoldPlan("gold plan has no subgoals")
    if rollout_plan is None or not matching.pairs:
        return 0.0
    total = 0.0
    for u, x in matching.sorted_pairs():
        total += question_affinity(e, rollout_plan.nodes[u].question_text, gold_plan.nodes[x].question_text)
    return min(1.0, total / len(gold_plan.nodes))


def answer_similarity_phi(pred: str, gold: str) -> float:
    """Normalized token F1; two empty answers count as identical."""
    return f1_pair(pred, gold)


def subgoal_reward(matching: Matching, traj: Trajectory, gold: GoldRecord) -> float:
    n_gold = len(gold.gold_plan.nodes)
    if n_gold == 0:
        raise EmptyGoldPlan("gold plan has no subgoals")
    if traj.plan is None or not matching.pairs:
        return 0.0
    predicted = traj.sub_answer_map()
    total = 0.0
    for u, x in matching.sorted_pairs():
        pred = predicted.get(traj.plan.nodes[u].output_placeholder)
        if pred is None:
            continue
        total += answer_similarity_phi(pred, gold.gold_sub_answers[gold.gold_plan.nodes[x].output_placeholder])
    return total / n_gold


def outcome_reward(final_answer: str | None, gold_final_answers: Sequence[str]) -> int:
    if final_answer is None:
        return 0
    return exact_match(final_answer, gold_final_answers)


def anneal_weight(t: int, total_steps: int, center: float = 0.9, scale: float = 10.0) -> float:
    """Sigmoid schedule moving weight from process rewards to the outcome reward."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= t <= total_steps:
        raise ValueError(f"step {t} outside [0, {total_steps}]")
    x = (t - center * total_steps) / scale
    if x > 0:
        z = math.exp(-x)
        return z / (1.0 + z)
    return 1.0 / (1.0 + math.exp(x))


def _check_unit(name: str, value: float, binary: bool = False) -> None:
    if binary and value not in (0, 1):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


def total_reward(
    components: Sequence[float],
    t: int,
    cfg: AnnealConfig,
    **extra: Any,
) -> RewardBreakdown:
    """Combine ``(r_form, r_str, r_sem, r_step, r_answ)`` at step ``t``."""
    r_form, r_str, r_sem, r_step, r_answ = components
    for name, value, binary in (
        ("r_form", r_form, True),
        ("r_str", r_str, False),
        ("r_sem", r_sem, False),
        ("r_step", r_step, False),
        ("r_answ", r_answ, True),
    ):
        _check_unit(name, value, binary)
    w = anneal_weight(t, cfg.total_steps, cfg.center, cfg.scale)
    process = cfg.alpha * r_form + cfg.lam * r_str + cfg.gamma * r_sem + cfg.delta * r_step
    return RewardBreakdown(
        r_form=int(r_form),
        r_str=float(r_str),
        r_sem=float(r_sem),
        r_step=float(r_step),
        r_answ=int(r_answ),
        w=w,
        total=w * process + r_answ,
        t=t,
        coefficients=cfg.coefficients,
        **extra,
    )


def plan_matching(
    rollout_plan: PlanGraph | None, gold_plan: PlanGraph, e: Embedder, max_nodes: int = DEFAULT_MAX_NODES
) -> Matching:
    if rollout_plan is None:
        return Matching(frozenset())
    pred_q = [n.question_text for n in rollout_plan.nodes]
    gold_q = [n.question_text for n in gold_plan.nodes]
    return max_common_subgraph(
        rollout_plan,
        gold_plan,
        lambda u, x: question_affinity(e, pred_q[u], gold_q[x]),
        max_nodes=max_nodes,
    )


def score_trajectory(
    traj: Trajectory | str,
    gold: GoldRecord,
    t: int,
    cfg: AnnealConfig,
    e: Embedder,
    costs: EditCosts = UNIT_COSTS,
    *,
    max_ged_nodes: int = DEFAULT_MAX_NODES,
    require_bridge_think: bool = False,
) -> RewardBreakdown:
    """Score one rollout against its gold record at training step ``t``.

    Content defects lower scores; only GraphTooLarge propagates.
    """
    if isinstance(traj, str):
        traj = parse_trajectory(traj)
    verdict = check_format(traj, require_bridge_think=require_bridge_think)
    r_str = structural_reward(traj.plan, gold.gold_plan, costs, max_ged_nodes)
    matching = plan_matching(traj.plan, gold.gold_plan, e, max_ged_nodes)
    r_sem = semantic_reward(matching, traj.plan, gold.gold_plan, e)
    r_step = subgoal_reward(matching, traj, gold)
    r_answ = outcome_reward(traj.final_answer, gold.gold_final_answers)
    return total_reward(
        (verdict.r_form, r_str, r_sem, r_step, r_answ),
        t,
        cfg,
        violations=verdict.violations,
        warnings=verdict.warnings,
        matching=matching,
    )
