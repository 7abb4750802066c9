"""Deterministic scoring of planning-style retrieval trajectories.

Parses tagged rollouts, aligns their plan DAG with a gold plan, computes the
five reward components and the annealed total, and turns group rewards into
GRPO advantages with retrieved tokens masked out.
"""

from .advantage import build_advantage_group, group_advantages
from .alignment import EditCosts, Matching, graph_edit_distance, max_common_subgraph, structural_reward
from .metrics import exact_match, normalize_answer, summarize, token_f1
from .plan_graph import PlanGraph, Placeholder, Subgoal, build_plan_graph, parse_plan_json, topological_order
from .protocol import Trajectory, check_format, information_mask, parse_trajectory, serialize_trajectory
from .rewards import AnnealConfig, GoldRecord, HashingEmbedder, RewardBreakdown, anneal_weight, score_trajectory

__version__ = "0.1.0"

__all__ = [
    "AnnealConfig",
    "EditCosts",
    "GoldRecord",
    "HashingEmbedder",
    "Matching",
    "PlanGraph",
    "Placeholder",
    "RewardBreakdown",
    "Subgoal",
    "Trajectory",
    "anneal_weight",
    "build_advantage_group",
    "build_plan_graph",
    "check_format",
    "exact_match",
    "graph_edit_distance",
    "group_advantages",
    "information_mask",
    "max_common_subgraph",
    "normalize_answer",
    "parse_plan_json",
    "parse_trajectory",
    "score_trajectory",
    "serialize_trajectory",
    "structural_reward",
    "summarize",
    "token_f1",
    "topological_order",
]
