"""Tagged rollout protocol: parsing, serialization, format compliance and retrieval masking.

A rollout interleaves the tags ``<think> <plan> <subPlan> <search> <information>
<subAnswer> <answer>``. A compliant rollout looks like::

    <think>...</think>
    <plan>{"Q1": ["...", "#1"], "Q2": ["... #1 ...", "#2"]}</plan>
    <subPlan>
      <think>...</think><search>...</search><information>...</information>
      <think>...</think><subAnswer>#1 = ...</subAnswer>
    </subPlan>
    ...
    <answer>...</answer>

Parsing is total: malformed input never raises. Unclosed tags are recovered as
segments flagged ``well_formed=False`` and stray closers are recorded as tag
defects; :func:`check_format` turns those into violations. Answers, sub-answers
and the plan are only extracted from well-formed segments.

Every protocol tag is recognised wherever it occurs, including inside
retrieved documents. A missing ``</information>`` therefore always surfaces
as an unclosed segment instead of silently absorbing the following blocks.
"""

from __future__ import annotations

import bisect
import enum
import re
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from typing import Union

from .errors import PlanError, SpanOutOfBounds
from .plan_graph import PlanGraph, Placeholder, parse_plan_json


class Kind(str, enum.Enum):
    THINK = "think"
    PLAN = "plan"
    SUBPLAN = "subPlan"
    SEARCH = "search"
    INFORMATION = "information"
    SUBANSWER = "subAnswer"
    ANSWER = "answer"

    @property
    def open_tag(self) -> str:
        return f"<{self.value}>"

    @property
    def close_tag(self) -> str:
        return f"</{self.value}>"


TAG_RE = re.compile(r"<(/?)(think|plan|subPlan|search|information|subAnswer|answer)>")
_BINDING_RE = re.compile(r"\s*#([1-9][0-9]*)\s*=\s*(.*?)\s*", re.DOTALL)

TOP_LEVEL_KINDS = frozenset({Kind.THINK, Kind.PLAN, Kind.SUBPLAN, Kind.ANSWER})
SUBPLAN_CHILD_KINDS = frozenset({Kind.THINK, Kind.SEARCH, Kind.INFORMATION, Kind.SUBANSWER})

# Violation identifiers reported by check_format, in reporting order.
PLAN_COUNT = "plan-count"
INVALID_PLAN = "invalid-plan"
NO_SUBPLAN = "no-subplan"
SUBPLAN_STRUCTURE = "subplan-structure"
ANSWER_COUNT = "answer-count"
ANSWER_ORDER = "answer-order"
UNBALANCED_TAGS = "unbalanced-tags"
MISPLACED_SEGMENT = "misplaced-segment"
UNDECLARED_PLACEHOLDER = "undeclared-placeholder"
MISSING_BRIDGE_THINK = "missing-bridge-think"
# Soft: recorded as a warning, never flips compliance.
UNLABELED_SUBANSWER = "unlabeled-subanswer"


@dataclass(frozen=True)
class Segment:
    """One tag pair. ``char_span`` covers the tags themselves; ``text`` is the raw interior."""

    kind: Kind
    text: str
    char_span: tuple[int, int]
    children: tuple[Segment, ...] = ()
    well_formed: bool = True

    def walk(self) -> Iterator[Segment]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class Trajectory:
    raw_text: str
    segments: tuple[Segment, ...]
    plan: PlanGraph | None
    sub_answers: tuple[tuple[Placeholder, str], ...]
    final_answer: str | None
    # Parse diagnostics consumed by check_format.
    tag_defects: tuple[str, ...] = ()
    plan_error: str | None = None
    undeclared_sub_answers: tuple[str, ...] = ()
    unlabeled_sub_answers: int = 0

    def walk(self) -> Iterator[Segment]:
        for seg in self.segments:
            yield from seg.walk()

    def segments_of(self, kind: Kind) -> list[Segment]:
        return [s for s in self.walk() if s.kind is kind]

    def sub_answer_map(self) -> dict[Placeholder, str]:
        """Placeholder -> answer; a later binding of the same placeholder wins."""
        return dict(self.sub_answers)


@dataclass(frozen=True)
class FormatVerdict:
    compliant: bool
    violations: tuple[str, ...]
    warnings: tuple[str, ...] = ()

    @property
    def r_form(self) -> int:
        return 1 if self.compliant else 0


class _Open:
    __slots__ = ("kind", "start", "inner_start", "children")

    def __init__(self, kind: Kind, start: int, inner_start: int) -> None:
        self.kind = kind
        self.start = start
        self.inner_start = inner_start
        self.children: list[Segment] = []

    def close(self, raw: str, inner_end: int, end: int, well_formed: bool) -> Segment:
        return Segment(
            kind=self.kind,
            text=raw[self.inner_start:inner_end],
            char_span=(self.start, end),
            children=tuple(self.children),
            well_formed=well_formed,
        )


def _scan(raw: str) -> tuple[list[Segment], list[str]]:
    root: list[Segment] = []
    stack: list[_Open] = []
    defects: list[str] = []

    def attach(seg: Segment) -> None:
        (stack[-1].children if stack else root).append(seg)

    def close_implicitly(at: int) -> None:
        node = stack.pop()
        defects.append(f"unclosed:{node.kind.value}@{node.start}")
        attach(node.close(raw, at, at, well_formed=False))

    for m in TAG_RE.finditer(raw):
        kind = Kind(m.group(2))
        if not m.group(1):
            stack.append(_Open(kind, m.start(), m.end()))
            continue
        depth = next((i for i in range(len(stack) - 1, -1, -1) if stack[i].kind is kind), None)
        if depth is None:
            defects.append(f"stray-closer:{kind.value}@{m.start()}")
            continue
        while len(stack) > depth + 1:
            close_implicitly(m.start())
        node = stack.pop()
        attach(node.close(raw, m.start(), m.end(), well_formed=True))
    while stack:
        close_implicitly(len(raw))
    return root, defects


def _iter_segments(segments: Sequence[Segment]) -> Iterator[Segment]:
    for s in segments:
        yield from s.walk()


def parse_trajectory(raw: str) -> Trajectory:
    """Best-effort parse of a raw rollout. Never raises on malformed text."""
    segments, defects = _scan(raw)

    plan: PlanGraph | None = None
    plan_error: str | None = None
    for seg in _iter_segments(segments):
        if seg.kind is not Kind.PLAN:
            continue
        if not seg.well_formed:
            plan_error = plan_error or "plan tag is not closed"
            continue
        try:
            plan = parse_plan_json(seg.text)
            break
        except PlanError as exc:
            plan_error = plan_error or str(exc)
    if plan is not None:
        plan_error = None

    declared = set(plan.placeholders) if plan is not None else None
    sub_answers: list[tuple[Placeholder, str]] = []
    undeclared: list[str] = []
    unlabeled = 0
    subplan_ordinal = -1
    answer_ordinal = -1

    def visit(seg: Segment, enclosing_subplan: int | None) -> None:
        nonlocal subplan_ordinal, answer_ordinal, unlabeled
        if seg.kind is Kind.SUBPLAN:
            subplan_ordinal += 1
            enclosing_subplan = subplan_ordinal
        if seg.kind is Kind.SUBANSWER and seg.well_formed:
            answer_ordinal += 1
            m = _BINDING_RE.fullmatch(seg.text)
            if m is not None:
                ph = Placeholder(int(m.group(1)))
                if declared is not None and ph not in declared:
                    undeclared.append(str(ph))
                else:
                    sub_answers.append((ph, m.group(2)))
            else:
                unlabeled += 1
                slot = enclosing_subplan if enclosing_subplan is not None else answer_ordinal
                if plan is not None and slot < len(plan.nodes):
                    sub_answers.append((plan.nodes[slot].output_placeholder, seg.text.strip()))
                else:
                    undeclared.append(seg.text.strip())
        for child in seg.children:
            visit(child, enclosing_subplan)

    for seg in segments:
        visit(seg, None)

    final_answer = None
    for seg in _iter_segments(segments):
        if seg.kind is Kind.ANSWER and seg.well_formed:
            final_answer = seg.text.strip()

    return Trajectory(
        raw_text=raw,
        segments=tuple(segments),
        plan=plan,
        sub_answers=tuple(sub_answers),
        final_answer=final_answer,
        tag_defects=tuple(defects),
        plan_error=plan_error,
        undeclared_sub_answers=tuple(undeclared),
        unlabeled_sub_answers=unlabeled,
    )


def _subplan_ok(sp: Segment) -> bool:
    kinds = [c.kind for c in sp.children]
    if not kinds or kinds[0] is not Kind.THINK or kinds[-1] is not Kind.SUBANSWER:
        return False
    if kinds.count(Kind.SUBANSWER) != 1:
        return False
    if Kind.SEARCH not in kinds or Kind.INFORMATION not in kinds:
        return False
    return kinds.index(Kind.SEARCH) < kinds.index(Kind.INFORMATION)


def check_format(t: Trajectory, *, require_bridge_think: bool = False) -> FormatVerdict:
    """Structural compliance check behind the binary format reward.

    Compliant iff: exactly one valid plan with at least one subgoal; at least one
    top-level subPlan; every subPlan is think ... search ... information ...
    subAnswer with exactly one subAnswer, last; exactly one answer, after every
    subPlan; all tags balanced and properly nested; every subAnswer binds a
    placeholder the plan declares. With ``require_bridge_think`` a think block
    must also sit between the plan and the first subPlan.
    """
    violations: list[str] = []
    warnings: list[str] = []

    def flag(v: str) -> None:
        if v not in violations:
            violations.append(v)

    plans = t.segments_of(Kind.PLAN)
    if len(plans) != 1:
        flag(PLAN_COUNT)
    elif t.plan is None:
        flag(INVALID_PLAN)

    top = t.segments
    subplans = [s for s in top if s.kind is Kind.SUBPLAN]
    if not subplans:
        flag(NO_SUBPLAN)
    if any(not _subplan_ok(sp) for sp in subplans):
        flag(SUBPLAN_STRUCTURE)

    answers = t.segments_of(Kind.ANSWER)
    if len(answers) != 1:
        flag(ANSWER_COUNT)
    elif subplans and answers[0].char_span[0] < max(sp.char_span[1] for sp in subplans):
        flag(ANSWER_ORDER)

    if t.tag_defects or any(not s.well_formed for s in t.walk()):
        flag(UNBALANCED_TAGS)

    misplaced = any(s.kind not in TOP_LEVEL_KINDS for s in top)
    for s in t.walk():
        if s.kind is Kind.SUBPLAN:
            misplaced |= any(c.kind not in SUBPLAN_CHILD_KINDS for c in s.children)
        elif s.children:
            misplaced = True
    if misplaced:
        flag(MISPLACED_SEGMENT)

    if t.undeclared_sub_answers:
        flag(UNDECLARED_PLACEHOLDER)

    if require_bridge_think and len(plans) == 1 and subplans:
        p_end = plans[0].char_span[1]
        first_sp = subplans[0].char_span[0]
        if not any(s.kind is Kind.THINK and p_end <= s.char_span[0] < first_sp for s in top):
            flag(MISSING_BRIDGE_THINK)

    if t.unlabeled_sub_answers:
        warnings.append(UNLABELED_SUBANSWER)
    return FormatVerdict(not violations, tuple(violations), tuple(warnings))


# --- serialization -----------------------------------------------------------

Block = tuple[Union[Kind, str], Union[str, Sequence["Block"]]]


def render_blocks(blocks: Sequence[Block], indent: str = "") -> str:
    """Render ``(kind, text_or_children)`` blocks as tagged text, one block per line."""
    lines = []
    for kind, body in blocks:
        k = Kind(kind)
        if isinstance(body, str):
            lines.append(f"{indent}{k.open_tag}{body}{k.close_tag}")
        else:
            inner = render_blocks(body, indent + "  ")
            lines.append(f"{indent}{k.open_tag}\n{inner}\n{indent}{k.close_tag}")
    return "\n".join(lines)


def to_blocks(segments: Sequence[Segment]) -> list[Block]:
    out: list[Block] = []
    for s in segments:
        if s.kind is Kind.SUBPLAN or s.children:
            out.append((s.kind, to_blocks(s.children)))
        else:
            out.append((s.kind, s.text))
    return out


def serialize_trajectory(t: Trajectory) -> str:
    """Canonical text for a parsed trajectory; free text outside tags is dropped."""
    return render_blocks(to_blocks(t.segments))


# --- masking -----------------------------------------------------------------


def information_spans(t: Trajectory) -> list[tuple[int, int]]:
    """Merged character spans of every information segment, tags included."""
    spans = sorted(s.char_span for s in t.walk() if s.kind is Kind.INFORMATION)
    merged: list[tuple[int, int]] = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def information_mask(t: Trajectory, token_spans: Sequence[tuple[int, int]]) -> list[bool]:
    """One flag per token: True when the token overlaps retrieved text and must get no gradient."""
    n = len(t.raw_text)
    spans = information_spans(t)
    starts = [a for a, _ in spans]
    mask = []
    for s, e in token_spans:
        if not (0 <= s <= e <= n):
            raise SpanOutOfBounds(f"token span ({s}, {e}) outside text of length {n}")
        i = bisect.bisect_left(starts, e) - 1
        mask.append(s < e and i >= 0 and spans[i][1] > s)
    return mask
