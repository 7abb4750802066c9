"""Group-relative advantages for GRPO, broadcast to tokens with retrieval masking."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import GroupTooSmall

DEFAULT_EPS = 1e-6


def group_advantages(rewards: Sequence[float], eps: float = DEFAULT_EPS) -> list[float]:
    """Z-score each reward within its group using the population std.

    A group whose std is below ``eps`` carries no ranking signal and gets all zeros.
    """
    if len(rewards) < 2:
        raise GroupTooSmall(f"a group needs at least 2 rewards, got {len(rewards)}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    r = np.asarray(rewards, dtype=np.float64)
    std = float(r.std())
    if std < eps:
        return [0.0] * len(r)
    return ((r - r.mean()) / std).tolist()


def broadcast_with_mask(advantage: float, mask: Sequence[bool]) -> list[float]:
    """``advantage`` on every unmasked token, exactly 0.0 on masked ones."""
    return [0.0 if m else float(advantage) for m in mask]


@dataclass(frozen=True)
class AdvantageGroup:
    group_size: int
    rewards: tuple[float, ...]
    token_masks: tuple[tuple[bool, ...], ...]
    advantages: tuple[tuple[float, ...], ...]
    scalar_advantages: tuple[float, ...]


def build_advantage_group(
    rewards: Sequence[float],
    token_masks: Sequence[Sequence[bool]],
    eps: float = DEFAULT_EPS,
) -> AdvantageGroup:
    if len(rewards) != len(token_masks):
        raise ValueError("need one token mask per trajectory")
    scalars = group_advantages(rewards, eps)
    return AdvantageGroup(
        group_size=len(rewards),
        rewards=tuple(float(r) for r in rewards),
        token_masks=tuple(tuple(bool(m) for m in mask) for mask in token_masks),
        advantages=tuple(tuple(broadcast_with_mask(a, mask)) for a, mask in zip(scalars, token_masks)),
        scalar_advantages=tuple(scalars),
    )
