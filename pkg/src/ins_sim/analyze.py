"""Plan predicates, batch metrics and the exact absorbing-chain oracle."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np

from ins_sim.model import InsError, Island, NarrativeSystem, UnknownState

if TYPE_CHECKING:
    from ins_sim.simulate import PlayerModel, Trace

OUTCOMES = (
    "Complete",
    "IncompleteProblematic",
    "IncompleteMaxSteps",
    "IncompleteStuck",
    "IncompleteIslands",
    "Aborted",
)

# Reason codes returned by is_complete_plan, in clause order.
COMPLETE = "complete"
INITIAL_MISMATCH = "initial-mismatch"
LAST_NOT_GOAL = "last-not-goal"
ISLAND_UNVISITED = "island-unvisited"
ISLAND_ORDER = "island-order"


class MixedSystems(InsError):
    pass


class SingularSystem(InsError):
    pass


class NoGoal(InsError):
    pass


class ExplosionGuard(InsError):
    pass


# --- plans --------------------------------------------------------------------


def first_occurrence_order(
    plan: Sequence[str], islands: Sequence[Island]
) -> tuple[list[tuple[int, int]], str | None]:
    """First plan position holding a member of each island, plus a violation if any.

    The violation is ``"island <k> unvisited"`` for the first island never
    visited, otherwise ``"island order"`` when first occurrences are not
    strictly increasing in island order.
    """
    firsts: list[tuple[int, int]] = []
    for island in islands:
        pos = next((i for i, s in enumerate(plan) if s in island.members), None)
        if pos is None:
            return firsts, f"island {island.index} unvisited"
        firsts.append((island.index, pos))
    for (_, a), (_, b) in zip(firsts, firsts[1:]):
        if b <= a:
            return firsts, "island order"
    return firsts, None


def is_complete_plan(sys: NarrativeSystem, plan: Sequence[str]) -> tuple[bool, str]:
    """Check a plan against the completeness clauses.

    Returns ``(ok, reason)`` where ``reason`` starts with one of the reason
    codes above and names the first clause that failed.
    """
    if not plan:
        raise ValueError("plan must be non-empty")
    for s in plan:
        if s not in sys.states:
            raise UnknownState(s)
    if plan[0] != sys.initial:
        return False, f"{INITIAL_MISMATCH}: first state {plan[0]} is not the initial state"
    if plan[-1] not in sys.goals:
        return False, f"{LAST_NOT_GOAL}: last state not in S_goal ({plan[-1]})"
    _, violation = first_occurrence_order(plan, sys.islands)
    if violation is not None:
        code = ISLAND_ORDER if violation == "island order" else ISLAND_UNVISITED
        return False, f"{code}: {violation}"
    return True, COMPLETE


def enumerate_complete_plans(
    sys: NarrativeSystem, max_revisits: int = 0, ceiling: int = 10**6
) -> list[tuple[str, ...]]:
    """All complete plans in which no state is entered more than ``1 + max_revisits`` times."""
    if max_revisits < 0:
        raise ValueError("max_revisits must be >= 0")
    limit = 1 + max_revisits
    found: list[tuple[str, ...]] = []
    visits = {s: 0 for s in sys.states}
    path = [sys.initial]
    visits[sys.initial] = 1

    def dfs(s: str) -> None:
        if s in sys.goals:
            if is_complete_plan(sys, path)[0]:
                found.append(tuple(path))
                if len(found) > ceiling:
                    raise ExplosionGuard(f"more than {ceiling} complete plans")
            return
        for target in sorted({t for _, t in sys.outgoing[s]}):
            if visits[target] >= limit:
                continue
            visits[target] += 1
            path.append(target)
            dfs(target)
            path.pop()
            visits[target] -= 1

    dfs(sys.initial)
    return sorted(set(found))


# --- metrics ------------------------------------------------------------------


@dataclass
class SimulationReport:
    manager_name: str
    n_runs: int
    outcome_histogram: dict[str, int]
    visit_counts: dict[str, int]
    total_adaptations: int = 0
    total_cancellations: int = 0
    min_adaptations: int = 0
    max_adaptations: int = 0
    min_cancellations: int = 0
    max_cancellations: int = 0
    system_hash: str = ""

    @property
    def complete_rate(self) -> Fraction:
        return Fraction(self.outcome_histogram.get("Complete", 0), self.n_runs)

    @property
    def mean_adaptations(self) -> Fraction:
        return Fraction(self.total_adaptations, self.n_runs)

    @property
    def mean_cancellations(self) -> Fraction:
        return Fraction(self.total_cancellations, self.n_runs)


def aggregate(traces: Sequence[Trace], sys: NarrativeSystem) -> SimulationReport:
    if not traces:
        raise ValueError("no traces to aggregate")
    hashes = {t.system_hash for t in traces}
    if len(hashes) > 1:
        raise MixedSystems(f"traces come from {len(hashes)} different systems")
    histogram = {o: 0 for o in OUTCOMES}
    visits = {s: 0 for s in sorted(sys.states)}
    for t in traces:
        histogram[getattr(t.outcome, "value", t.outcome)] += 1
        for s in t.plan:
            visits[s] += 1
    adapt = [t.adaptations for t in traces]
    cancel = [t.cancellations for t in traces]
    return SimulationReport(
        manager_name=traces[0].manager,
        n_runs=len(traces),
        outcome_histogram=histogram,
        visit_counts=visits,
        total_adaptations=sum(adapt),
        total_cancellations=sum(cancel),
        min_adaptations=min(adapt),
        max_adaptations=max(adapt),
        min_cancellations=min(cancel),
        max_cancellations=max(cancel),
        system_hash=hashes.pop(),
    )


# --- absorbing chain oracle ---------------------------------------------------


@dataclass
class Absorption:
    probabilities: dict[str, float]
    residual: float
    transient: list[str] = field(default_factory=list)


def _can_reach_end(sys: NarrativeSystem, weights: Mapping[tuple[str, str], float]) -> set[str]:
    preds: dict[str, set[str]] = {s: set() for s in sys.states}
    for s, arcs in sys.outgoing.items():
        for t, target in arcs:
            if weights.get((s, t), 0.0) > 0:
                preds[target].add(s)
    reach = set(sys.end_states)
    stack = list(reach)
    while stack:
        for p in preds[stack.pop()]:
            if p not in reach:
                reach.add(p)
                stack.append(p)
    return reach


def solve_absorption(sys: NarrativeSystem, model: PlayerModel, manager_mode: str = "vanilla") -> Absorption:
    """Probability of being absorbed in a goal state, from every state, under static weights.

    Solves ``(I - Q) x = b`` over the transient states, with ``Q`` the
    transient-to-transient block of the row-normalized weight matrix and
    ``b`` the one-step mass into goal states.
    """
    if manager_mode != "vanilla":
        raise ValueError("the absorption oracle only covers static (vanilla) dynamics")
    if not sys.goals:
        raise NoGoal("system declares no goal state")
    weights = model.weights
    transient = sorted(sys.states - sys.end_states)
    stranded = sorted(set(transient) - _can_reach_end(sys, weights))
    if stranded:
        raise SingularSystem(f"states that cannot reach an end state: {', '.join(stranded)}")
    index = {s: i for i, s in enumerate(transient)}
    n = len(transient)
    A = np.eye(n)
    b = np.zeros(n)
    for s in transient:
        arcs = sys.outgoing[s]
        total = sum(weights.get((s, t), 0.0) for t, _ in arcs)
        i = index[s]
        for t, target in arcs:
            p = weights.get((s, t), 0.0) / total
            if target in index:
                A[i, index[target]] -= p
            elif target in sys.goals:
                b[i] += p
    try:
        x = np.linalg.solve(A, b) if n else np.zeros(0)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    residual = float(np.max(np.abs(A @ x - b))) if n else 0.0
    probs = {s: float(x[index[s]]) for s in transient}
    probs.update({s: 1.0 for s in sys.goals})
    probs.update({s: 0.0 for s in sys.problematic})
    return Absorption(dict(sorted(probs.items())), residual, transient)


def absorption_probabilities(
    sys: NarrativeSystem, model: PlayerModel, manager_mode: str = "vanilla"
) -> dict[str, float]:
    return solve_absorption(sys, model, manager_mode).probabilities
