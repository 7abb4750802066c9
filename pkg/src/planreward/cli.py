"""Command line front end: ``planreward score|eval|selftest``.

All files are UTF-8 JSON Lines. Every output row carries ``schema_version`` and
a ``record`` discriminator (``rollout``, ``example`` or ``summary``).

Exit codes: 0 success, 1 selftest violation, 2 malformed input,
3 unresolved gold reference or id mismatch, 4 GraphTooLarge on some row.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .advantage import broadcast_with_mask, group_advantages
from .alignment import EditCosts
from .config import ConfigError, ScoringConfig, load_config
from .errors import GraphTooLarge, PlanRewardError
from .metrics import summarize
from .protocol import check_format, information_mask, parse_trajectory
from .rewards import COMPONENT_NAMES, GoldRecord, score_trajectory
from .selftest import run_selftest

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_MALFORMED = 2
EXIT_UNRESOLVED = 3
EXIT_GRAPH_TOO_LARGE = 4

# Negative control for ``selftest``: the search runs with these costs, the oracle with unit costs.
FAULTY_GED_COSTS = EditCosts(node_insert=1.0, node_delete=0.5, edge_insert=1.0, edge_delete=1.0)


class InputError(Exception):
    """Malformed input; carries the exit code to report."""

    def __init__(self, message: str, code: int = EXIT_MALFORMED) -> None:
        super().__init__(message)
        self.code = code


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    rows = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
        if not isinstance(row, dict):
            raise InputError(f"{path}:{lineno}: expected a JSON object")
        rows.append(row)
    return rows


def dump_row(row: Mapping[str, Any]) -> str:
    return json.dumps(row, ensure_ascii=False, allow_nan=False)


def write_jsonl(path: str | Path, rows: Sequence[Mapping[str, Any]]) -> None:
    text = "".join(dump_row(r) + "\n" for r in rows)
    Path(path).write_text(text, encoding="utf-8")


# --- score -------------------------------------------------------------------


@dataclass(frozen=True)
class Rollout:
    id: str
    question: str
    group_id: str
    step_t: int
    text: str
    token_spans: tuple[tuple[int, int], ...] | None
    gold_key: str


def load_golds(path: str | Path) -> tuple[list[GoldRecord], dict[str, int], dict[str, int]]:
    """Gold records plus lookup tables by question and by id; duplicates are input errors."""
    golds: list[GoldRecord] = []
    by_question: dict[str, int] = {}
    by_id: dict[str, int] = {}
    for lineno, row in enumerate(read_jsonl(path), 1):
        try:
            gold = GoldRecord.from_dict(row)
        except (KeyError, TypeError, ValueError, PlanRewardError) as exc:
            raise InputError(f"{path}: gold row {lineno}: {type(exc).__name__}: {exc}") from None
        if gold.question in by_question:
            raise InputError(f"{path}: duplicate gold question {gold.question!r}")
        if gold.id is not None:
            if gold.id in by_id:
                raise InputError(f"{path}: duplicate gold id {gold.id!r}")
            by_id[gold.id] = len(golds)
        by_question[gold.question] = len(golds)
        golds.append(gold)
    return golds, by_question, by_id


def _require(row: Mapping[str, Any], key: str, kind: type, where: str) -> Any:
    value = row.get(key)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise InputError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def _token_spans(raw: Any, n_chars: int, where: str) -> tuple[tuple[int, int], ...] | None:
    if raw is None:
        return None
    if not isinstance(raw, list):
        raise InputError(f"{where}: token_spans must be a list of [start, end] pairs")
    spans = []
    for pair in raw:
        ok = (
            isinstance(pair, list)
            and len(pair) == 2
            and all(isinstance(x, int) and not isinstance(x, bool) for x in pair)
        )
        if not ok or not 0 <= pair[0] <= pair[1] <= n_chars:
            raise InputError(f"{where}: bad token span {pair!r} for text of length {n_chars}")
        spans.append((pair[0], pair[1]))
    return tuple(spans)


def parse_rollouts(
    rows: Sequence[Mapping[str, Any]],
    by_question: Mapping[str, int],
    by_id: Mapping[str, int],
    step_t: int | None = None,
) -> list[tuple[Rollout, int]]:
    """Validate rollout rows and resolve each to a gold index."""
    out = []
    seen: set[str] = set()
    groups: dict[str, tuple[str, int]] = {}
    for lineno, row in enumerate(rows, 1):
        where = f"rollout row {lineno}"
        rid = _require(row, "id", str, where)
        if rid in seen:
            raise InputError(f"{where}: duplicate rollout id {rid!r}")
        seen.add(rid)
        question = _require(row, "question", str, where)
        group_id = _require(row, "group_id", str, where)
        text = _require(row, "text", str, where)
        t = step_t if step_t is not None else _require(row, "step_t", int, where)
        spans = _token_spans(row.get("token_spans"), len(text), where)

        first = groups.setdefault(group_id, (question, t))
        if first != (question, t):
            raise InputError(f"{where}: group {group_id!r} mixes questions or step_t values")

        gold_id = row.get("gold_id")
        if gold_id is not None:
            if not isinstance(gold_id, str) or gold_id not in by_id:
                raise InputError(f"{where}: unknown gold_id {gold_id!r}", EXIT_UNRESOLVED)
            idx = by_id[gold_id]
            key = gold_id
        elif question in by_question:
            idx = by_question[question]
            key = question
        else:
            raise InputError(f"{where}: no gold record for question {question!r}", EXIT_UNRESOLVED)
        out.append((Rollout(rid, question, group_id, t, text, spans, key), idx))
    return out


# Per-process scoring state, installed once per worker by ``_init_worker``.
_STATE: dict[str, Any] = {}


def _init_worker(cfg: ScoringConfig, golds: Sequence[GoldRecord]) -> None:
    _STATE["cfg"] = cfg
    _STATE["anneal"] = cfg.anneal()
    _STATE["costs"] = cfg.costs()
    _STATE["embedder"] = cfg.make_embedder()
    _STATE["golds"] = golds


def _score_one(job: tuple[Rollout, int]) -> dict[str, Any]:
    rollout, gold_idx = job
    cfg: ScoringConfig = _STATE["cfg"]
    gold: GoldRecord = _STATE["golds"][gold_idx]
    traj = parse_trajectory(rollout.text)
    row: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "record": "rollout",
        "id": rollout.id,
        "group_id": rollout.group_id,
        "gold": gold.id if gold.id is not None else gold.question,
        "step_t": rollout.step_t,
    }
    try:
        b = score_trajectory(
            traj,
            gold,
            rollout.step_t,
            _STATE["anneal"],
            _STATE["embedder"],
            _STATE["costs"],
            max_ged_nodes=cfg.max_ged_nodes,
            require_bridge_think=cfg.require_bridge_think,
        )
    except GraphTooLarge as exc:
        verdict = check_format(traj, require_bridge_think=cfg.require_bridge_think)
        row["reward"] = None
        row["format"] = {"compliant": verdict.compliant, "violations": list(verdict.violations),
                         "warnings": list(verdict.warnings)}
        row["matching"] = None
        row["error"] = {"type": "GraphTooLarge", "message": str(exc)}
    else:
        alpha, lam, gamma, delta = b.coefficients
        row["reward"] = {
            **dict(zip(COMPONENT_NAMES, b.components)),
            "w": b.w,
            "total": b.total,
            "t": b.t,
            "coefficients": {"alpha": alpha, "lambda": lam, "gamma": gamma, "delta": delta},
        }
        row["format"] = {"compliant": not b.violations, "violations": list(b.violations),
                         "warnings": list(b.warnings)}
        pairs = b.matching.sorted_pairs() if b.matching is not None else []
        row["matching"] = {"size": len(pairs), "pairs": [list(p) for p in pairs]}
        row["error"] = None
    row["token_mask"] = None if rollout.token_spans is None else information_mask(traj, rollout.token_spans)
    return row


def _attach_advantages(rows: list[dict[str, Any]], eps: float) -> tuple[int, int]:
    """Fill ``advantage`` for complete groups; returns (groups, groups with advantages)."""
    members: dict[str, list[int]] = {}
    for i, row in enumerate(rows):
        members.setdefault(row["group_id"], []).append(i)
    complete = 0
    for idx in members.values():
        ok = len(idx) >= 2 and all(rows[i]["error"] is None for i in idx)
        scalars = group_advantages([rows[i]["reward"]["total"] for i in idx], eps) if ok else [None] * len(idx)
        complete += ok
        for i, a in zip(idx, scalars):
            row = rows[i]
            mask = row.pop("token_mask")
            row["advantage"] = a
            row["token_mask"] = mask
            row["token_advantages"] = None if a is None or mask is None else broadcast_with_mask(a, mask)
    return len(members), complete


def _summary(rows: Sequence[Mapping[str, Any]], n_groups: int, n_complete: int, cfg: ScoringConfig) -> dict[str, Any]:
    scored = [r["reward"] for r in rows if r["reward"] is not None]
    means = None
    if scored:
        means = {k: sum(r[k] for r in scored) / len(scored) for k in (*COMPONENT_NAMES, "total")}
    return {
        "schema_version": SCHEMA_VERSION,
        "record": "summary",
        "n": len(rows),
        "n_scored": len(scored),
        "n_errors": len(rows) - len(scored),
        "n_groups": n_groups,
        "n_groups_with_advantage": n_complete,
        "means": means,
        "config": cfg.to_dict(),
    }


def score_rows(
    jobs: Sequence[tuple[Rollout, int]],
    golds: Sequence[GoldRecord],
    cfg: ScoringConfig,
    workers: int = 1,
) -> list[dict[str, Any]]:
    """Score in input order; the result does not depend on ``workers``."""
    if workers <= 1 or len(jobs) < 2:
        _init_worker(cfg, golds)
        return [_score_one(j) for j in jobs]
    chunk = max(1, len(jobs) // (workers * 8))
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg, golds)) as pool:
        return list(pool.map(_score_one, jobs, chunksize=chunk))


def cmd_score(
    rollouts_path: str | Path,
    golds_path: str | Path,
    config_path: str | Path | None,
    out_path: str | Path,
    *,
    step_t: int | None = None,
    workers: int = 1,
    env: Mapping[str, str] | None = None,
) -> int:
    try:
        cfg = load_config(config_path, env)
        golds, by_question, by_id = load_golds(golds_path)
        jobs = parse_rollouts(read_jsonl(rollouts_path), by_question, by_id, step_t)
        # Catch t outside [0, T] before any work is done.
        for rollout, _ in jobs:
            if not 0 <= rollout.step_t <= cfg.total_steps:
                raise InputError(f"rollout {rollout.id!r}: step_t {rollout.step_t} outside [0, {cfg.total_steps}]")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code

    rows = score_rows(jobs, golds, cfg, workers)
    n_groups, n_complete = _attach_advantages(rows, cfg.eps)
    write_jsonl(out_path, [*rows, _summary(rows, n_groups, n_complete, cfg)])
    errors = sum(r["error"] is not None for r in rows)
    if errors:
        print(f"warning: {errors} rollout(s) hit GraphTooLarge", file=sys.stderr)
        return EXIT_GRAPH_TOO_LARGE
    return EXIT_OK


# --- eval --------------------------------------------------------------------


def _answers(row: Mapping[str, Any], where: str) -> list[str]:
    answers = row.get("answers")
    if isinstance(answers, str):
        return [answers]
    if not isinstance(answers, list) or not answers or not all(isinstance(a, str) for a in answers):
        raise InputError(f"{where}: answers must be a non-empty list of strings")
    return answers


def format_table(summary) -> str:
    width = max([len("id"), *(len(rid) for rid, _, _ in summary.per_example)])
    lines = [f"{'id':<{width}}  {'EM':>6}  {'F1':>6}", "-" * (width + 16)]
    lines += [f"{rid:<{width}}  {em:>6.1f}  {f1:>6.3f}" for rid, em, f1 in summary.per_example]
    lines.append("-" * (width + 16))
    lines.append(f"{'mean (n=' + str(summary.n) + ')':<{width}}  {summary.em:>6.4f}  {summary.f1:>6.4f}")
    return "\n".join(lines) + "\n"


def cmd_eval(predictions_path: str | Path, golds_path: str | Path, out_path: str | Path) -> int:
    """Per-example EM/F1 and means; ``<out>.txt`` gets the human-readable table."""
    try:
        preds: dict[str, str] = {}
        for lineno, row in enumerate(read_jsonl(predictions_path), 1):
            where = f"prediction row {lineno}"
            rid = _require(row, "id", str, where)
            if rid in preds:
                raise InputError(f"{where}: duplicate id {rid!r}")
            preds[rid] = _require(row, "prediction", str, where)
        golds: dict[str, list[str]] = {}
        for lineno, row in enumerate(read_jsonl(golds_path), 1):
            where = f"gold row {lineno}"
            rid = _require(row, "id", str, where)
            if rid in golds:
                raise InputError(f"{where}: duplicate id {rid!r}")
            golds[rid] = _answers(row, where)
        if preds.keys() != golds.keys():
            missing = sorted(golds.keys() - preds.keys())[:5]
            extra = sorted(preds.keys() - golds.keys())[:5]
            raise InputError(f"ids differ: missing predictions {missing}, unknown ids {extra}", EXIT_UNRESOLVED)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code

    summary = summarize((rid, preds[rid], golds[rid]) for rid in preds)
    rows: list[dict[str, Any]] = [
        {"schema_version": SCHEMA_VERSION, "record": "example", "id": rid, "prediction": preds[rid],
         "em": em, "f1": f1}
        for rid, em, f1 in summary.per_example
    ]
    rows.append({"schema_version": SCHEMA_VERSION, "record": "summary", "n": summary.n, "em": summary.em,
                 "f1": summary.f1})
    write_jsonl(out_path, rows)
    table = format_table(summary)
    Path(out_path).with_suffix(".txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


# --- selftest ----------------------------------------------------------------


def cmd_selftest(seed: int = 0, n_cases: int = 200, *, faulty_ged_costs: bool = False) -> int:
    costs = FAULTY_GED_COSTS if faulty_ged_costs else EditCosts()
    ok, report = run_selftest(seed, n_cases, costs)
    print(report)
    return EXIT_OK if ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planreward", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    score = sub.add_parser("score", help="score rollouts against gold records")
    score.add_argument("--rollouts", required=True)
    score.add_argument("--golds", required=True)
    score.add_argument("--config", default=None)
    score.add_argument("--out", required=True)
    score.add_argument("--step-t", type=int, default=None, help="override every rollout's step_t")
    score.add_argument("--workers", type=int, default=1)

    ev = sub.add_parser("eval", help="EM/F1 of final predictions")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--golds", required=True)
    ev.add_argument("--out", required=True)

    st = sub.add_parser("selftest", help="oracle equivalence and perturbation properties")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--n-cases", type=int, default=200)
    st.add_argument("--faulty-ged-costs", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "score":
        return cmd_score(args.rollouts, args.golds, args.config, args.out, step_t=args.step_t, workers=args.workers)
    if args.verb == "eval":
        return cmd_eval(args.predictions, args.golds, args.out)
    return cmd_selftest(args.seed, args.n_cases, faulty_ged_costs=args.faulty_ged_costs)


if __name__ == "__main__":
    sys.exit(main())
