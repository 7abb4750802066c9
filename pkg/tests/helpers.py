import json
import random
import re

from planreward.errors import NotApplicable
from planreward.perturb import TOPOLOGIES, PerturbationKind, generate_gold, perturb


def whitespace_spans(text):
    return [[m.start(), m.end()] for m in re.finditer(r"\S+", text)]


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def synthetic_batch(n_rollouts, group_size=5, seed=0, max_nodes=4, with_spans_every=3):
    """Gold rows plus rollout rows: each group is a golden rollout followed by perturbed variants."""
    rng = random.Random(f"batch:{seed}")
    kinds = list(PerturbationKind)
    golds, rollouts = [], []
    g = 0
    while len(rollouts) < n_rollouts:
        gold, traj = generate_gold(seed * 1_000_003 + g, rng.randint(1, max_nodes), rng.choice(TOPOLOGIES))
        golds.append(gold.to_dict())
        step_t = rng.randint(0, 200)
        for member in range(min(group_size, n_rollouts - len(rollouts))):
            text = traj.raw_text
            if member:
                try:
                    text = perturb(traj, gold, kinds[(g + member) % len(kinds)], g).raw_text
                except NotApplicable:
                    pass
            row = {"id": f"r{g}-{member}", "question": gold.question, "group_id": f"g{g}",
                   "step_t": step_t, "text": text}
            if len(rollouts) % with_spans_every == 0:
                row["token_spans"] = whitespace_spans(text)
            rollouts.append(row)
        g += 1
    return golds, rollouts
