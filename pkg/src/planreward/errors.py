"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PlanRewardError(Exception):
    """Base class for every error raised by planreward."""


class PlanError(PlanRewardError, ValueError):
    """A plan could not be turned into a valid dependency graph."""


class EmptyPlan(PlanError):
    pass


class DuplicateSubgoalId(PlanError):
    pass


class DuplicatePlaceholder(PlanError):
    pass


class DanglingReference(PlanError):
    """A question references ``#k`` but no subgoal produces it."""


class CycleDetected(PlanError):
    def __init__(self, cycle_ids: list[str]) -> None:
        self.cycle_ids = list(cycle_ids)
        super().__init__("plan dependencies form a cycle through " + " -> ".join(self.cycle_ids))


class UnboundPlaceholder(PlanRewardError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "unbound placeholder"


class SpanOutOfBounds(PlanRewardError, IndexError):
    pass


class GraphTooLarge(PlanRewardError, ValueError):
    def __init__(self, n_nodes: int, limit: int) -> None:
        self.n_nodes = n_nodes
        self.limit = limit
        super().__init__(f"graph has {n_nodes} nodes; exact search is capped at {limit}")


class EmptyGoldPlan(PlanRewardError, ValueError):
    pass


class GroupTooSmall(PlanRewardError, ValueError):
    pass


class DuplicateId(PlanRewardError, ValueError):
    pass


class NotApplicable(PlanRewardError, ValueError):
    """A perturbation cannot be applied to the given trajectory."""
