"""Release gate: brute-force equivalence of the graph searches plus the perturbation property suite."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .alignment import UNIT_COSTS, EditCosts, graph_edit_distance, is_valid_matching, max_common_subgraph
from .errors import NotApplicable
from .oracles import brute_force_ged, brute_force_mcs_size
from .perturb import COMPONENTS, EFFECTS, TARGET, TOPOLOGIES, PerturbationKind, generate_gold, perturb
from .protocol import parse_trajectory
from .rewards import AnnealConfig, HashingEmbedder, RewardBreakdown, score_trajectory

TOL = 1e-12
MAX_COUNTEREXAMPLES = 5


@dataclass
class Check:
    name: str
    cases: int = 0
    failures: list[str] = field(default_factory=list)

    def fail(self, message: str) -> None:
        self.failures.append(message)

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        status = "PASS" if self.ok else "FAIL"
        out = [f"[{status}] {self.name}: {self.cases} cases, {len(self.failures)} violations"]
        out += [f"    counterexample: {f}" for f in self.failures[:MAX_COUNTEREXAMPLES]]
        return out


def random_dag(rng: random.Random, n: int, p: float = 0.4) -> tuple[int, frozenset[tuple[int, int]]]:
    """Random DAG on ``n`` nodes with a random vertex order hiding the topological order."""
    perm = list(range(n))
    rng.shuffle(perm)
    edges = frozenset((perm[i], perm[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < p)
    return n, edges


def check_graph_oracles(seed: int, n_pairs: int, impl_costs: EditCosts = UNIT_COSTS) -> list[Check]:
    rng = random.Random(f"graphs:{seed}")
    ged = Check("GED equals brute-force oracle")
    mcs = Check("MCS cardinality equals oracle and matchings are valid")
    for _ in range(n_pairs):
        g = random_dag(rng, rng.randint(1, 5))
        h = random_dag(rng, rng.randint(1, 5))
        ged.cases += 1
        got = graph_edit_distance(g, h, impl_costs)
        want = brute_force_ged(*g, *h)
        if got != want:
            ged.fail(f"g={_fmt(g)} gold={_fmt(h)} search={got} oracle={want}")
        mcs.cases += 1
        m = max_common_subgraph(g, h)
        size = brute_force_mcs_size(*g, *h)
        if len(m) != size or not is_valid_matching(m.pairs, g, h):
            mcs.fail(f"g={_fmt(g)} gold={_fmt(h)} matching={m.sorted_pairs()} oracle_size={size}")
    return [ged, mcs]


def _fmt(g) -> str:
    n, edges = g
    return f"({n}, {sorted(edges)})"


def _direction_ok(rule: str, before: float, after: float) -> bool:
    if rule == "eq":
        return abs(after - before) <= TOL
    if rule == "le":
        return after <= before + TOL
    if rule == "lt":
        return after < before - TOL
    raise ValueError(rule)


def gold_cases(seed: int, n_cases: int) -> list[tuple[int, int, str]]:
    rng = random.Random(f"golds:{seed}")
    return [(seed * 100_003 + i, rng.randint(1, 6), rng.choice(TOPOLOGIES)) for i in range(n_cases)]


def check_perturbations(seed: int, n_cases: int) -> list[Check]:
    embedder = HashingEmbedder()
    cfg = AnnealConfig(total_steps=200)
    t = 180
    golden = Check("golden trajectories self-score to all ones")
    target = Check("targeted component never increases")
    effects = Check("every component moves only in its documented direction")
    breaks = Check("BreakTag yields r_form = 0")
    totality = Check("perturbed rollouts parse without abort")
    applied = 0
    for case_seed, n, topo in gold_cases(seed, n_cases):
        gold, traj = generate_gold(case_seed, n, topo)
        base = score_trajectory(traj, gold, t, cfg, embedder)
        golden.cases += 1
        if any(abs(getattr(base, c) - 1.0) > 1e-9 for c in COMPONENTS):
            golden.fail(f"{gold.id}: {_components(base)} violations={list(base.violations)}")
        for kind in PerturbationKind:
            try:
                bad = perturb(traj, gold, kind, case_seed)
            except NotApplicable:
                continue
            applied += 1
            totality.cases += 1
            try:
                parse_trajectory(bad.raw_text)
            except Exception as exc:  # noqa: BLE001 - any escape is a totality violation
                totality.fail(f"{gold.id}/{kind.value}: {exc!r}")
                continue
            after = score_trajectory(bad, gold, t, cfg, embedder)
            rules = EFFECTS[kind]
            target.cases += 1
            tgt = TARGET[kind]
            if not _direction_ok("le", getattr(base, tgt), getattr(after, tgt)):
                target.fail(f"{gold.id}/{kind.value}: {tgt} {getattr(base, tgt)} -> {getattr(after, tgt)}")
            effects.cases += 1
            moved = [
                f"{c} {getattr(base, c):.6g}->{getattr(after, c):.6g} (want {rules[c]})"
                for c in COMPONENTS
                if not _direction_ok(rules[c], getattr(base, c), getattr(after, c))
            ]
            if moved:
                effects.fail(f"{gold.id}/{kind.value}: " + "; ".join(moved))
            if kind is PerturbationKind.BREAK_TAG:
                breaks.cases += 1
                if after.r_form != 0:
                    breaks.fail(f"{gold.id}: r_form={after.r_form}")
    return [golden, target, effects, breaks, totality]


def _components(b: RewardBreakdown) -> str:
    return "(" + ", ".join(f"{getattr(b, c):.6g}" for c in COMPONENTS) + ")"


def run_selftest(seed: int = 0, n_cases: int = 200, impl_costs: EditCosts = UNIT_COSTS) -> tuple[bool, str]:
    """Run every check; returns (all passed, deterministic report)."""
    checks = check_graph_oracles(seed, n_cases, impl_costs) + check_perturbations(seed, n_cases)
    lines = [f"planreward selftest seed={seed} n_cases={n_cases}"]
    for c in checks:
        lines += c.lines()
    ok = all(c.ok for c in checks)
    lines.append("selftest " + ("passed" if ok else "FAILED"))
    return ok, "\n".join(lines)
