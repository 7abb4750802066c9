"""Answer normalization, exact match and token F1 (SQuAD conventions)."""

from __future__ import annotations

import re
import string
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .errors import DuplicateId

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


def normalize_answer(s: str) -> str:
    """Lowercase, drop punctuation and the articles a/an/the, collapse whitespace."""
    s = s.lower().translate(_PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def _as_list(golds: str | Sequence[str]) -> list[str]:
    if isinstance(golds, str):
        return [golds]
    golds = list(golds)
    if not golds:
        raise ValueError("at least one gold answer is required")
    return golds


def exact_match(pred: str, golds: str | Sequence[str]) -> int:
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(g) for g in _as_list(golds)))


def f1_pair(pred: str, gold: str) -> float:
    pred_toks = normalize_answer(pred).split()
    gold_toks = normalize_answer(gold).split()
    if not pred_toks or not gold_toks:
        return float(pred_toks == gold_toks)
    common = sum((Counter(pred_toks) & Counter(gold_toks)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_toks)
    recall = common / len(gold_toks)
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, golds: str | Sequence[str]) -> float:
    """Best token F1 over the acceptable gold answers."""
    return max(f1_pair(pred, g) for g in _as_list(golds))


@dataclass(frozen=True)
class EvalSummary:
    n: int
    em: float
    f1: float
    per_example: tuple[tuple[str, int, float], ...]

    @property
    def empty(self) -> bool:
        return self.n == 0


def summarize(rows: Iterable[tuple[str, str, Sequence[str]]]) -> EvalSummary:
    """Per-example EM/F1 plus unweighted means; rows come back sorted by id.

    An empty input reports em = f1 = 0 with ``empty`` set.
    """
    scored: dict[str, tuple[int, float]] = {}
    for rid, pred, golds in rows:
        if rid in scored:
            raise DuplicateId(f"duplicate example id {rid!r}")
        scored[rid] = (exact_match(pred, golds), token_f1(pred, golds))
    per_example = tuple((rid, em, f1) for rid, (em, f1) in sorted(scored.items()))
    n = len(per_example)
    if n == 0:
        return EvalSummary(0, 0.0, 0.0, ())
    return EvalSummary(
        n=n,
        em=sum(em for _, em, _ in per_example) / n,
        f1=sum(f1 for _, _, f1 in per_example) / n,
        per_example=per_example,
    )
