"""Seeded Monte-Carlo runs of a probabilistic player against an experience manager.

Randomness
----------
Run ``i`` of a batch draws from ``numpy.random.Generator(PCG64(run_seed(master, i)))``
where ``run_seed`` is the SplitMix64 finalizer applied to
``master + (i + 1) * 0x9E3779B97F4A7C15 (mod 2**64)``. Each sampling step
consumes exactly one ``Generator.random()`` double ``u`` and picks the first
enabled transition, in name order, whose cumulative normalized weight
exceeds ``u``.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from ins_sim.analyze import is_complete_plan
from ins_sim.model import InsError, NarrativeSystem, successors
from ins_sim.policy import (
    Arc,
    EmDecision,
    Manager,
    NoHistory,
    Overlay,
    RunContext,
    Stuck,
)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DEFAULT_MAX_STEPS = 1000


class DegenerateDistribution(InsError):
    pass


def splitmix64(x: int) -> int:
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def run_seed(master_seed: int, run_id: int) -> int:
    return splitmix64(master_seed + (run_id + 1) * GOLDEN_GAMMA)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


class Outcome(str, enum.Enum):
    COMPLETE = "Complete"
    INCOMPLETE_PROBLEMATIC = "IncompleteProblematic"
    INCOMPLETE_MAX_STEPS = "IncompleteMaxSteps"
    INCOMPLETE_STUCK = "IncompleteStuck"
    INCOMPLETE_ISLANDS = "IncompleteIslands"  # reached a goal but skipped or misordered islands
    ABORTED = "Aborted"


@dataclass(frozen=True)
class PlayerModel:
    weights: Mapping[Arc, float]

    @classmethod
    def uniform(cls, sys: NarrativeSystem) -> PlayerModel:
        w: dict[Arc, float] = {}
        for s, arcs in sys.outgoing.items():
            for t, _ in arcs:
                w[(s, t)] = 1.0 / len(arcs)
        return cls(w)


@dataclass(frozen=True)
class ProbabilityMatrix:
    entries: dict[tuple[str, str, str], float]
    captured_at: int

    def row_sums(self) -> dict[str, float]:
        sums: dict[str, float] = {}
        for (s, _, _), p in self.entries.items():
            sums[s] = sums.get(s, 0.0) + p
        return sums


@dataclass(frozen=True)
class TraceStep:
    index: int
    source: str
    sampled: str | None  # None: no player proposal (inaction)
    decision: EmDecision
    snapshot: ProbabilityMatrix | None = None

    @property
    def target(self) -> str:
        return self.decision.resulting_state


@dataclass
class Trace:
    run_id: int
    seed: int
    initial: str
    steps: list[TraceStep]
    outcome: Outcome
    manager: str = ""
    system_hash: str = ""
    adaptations: int = 0
    cancellations: int = 0

    @property
    def plan(self) -> list[str]:
        return [self.initial] + [s.target for s in self.steps]


def sample_transition(
    model: PlayerModel,
    sys: NarrativeSystem,
    overlay: Overlay,
    s: str,
    rng: np.random.Generator,
) -> str:
    """Draw an enabled transition at ``s`` proportionally to its effective weight."""
    names = sorted(t for t, _ in successors(sys, overlay, s))
    if not names:
        raise DegenerateDistribution(f"no enabled transition at {s!r}")
    edits = overlay.probability_edits
    weights = [edits.get((s, t), model.weights.get((s, t), 0.0)) for t in names]
    total = sum(weights)
    if total <= 0:
        raise DegenerateDistribution(f"all enabled weights are zero at {s!r}")
    u = rng.random() * total
    acc = 0.0
    for name, w in zip(names, weights):
        acc += w
        if u < acc:
            return name
    return next(n for n, w in zip(reversed(names), reversed(weights)) if w > 0)


def snapshot(sys: NarrativeSystem, manager: Manager, overlay: Overlay, step: int) -> ProbabilityMatrix:
    entries: dict[tuple[str, str, str], float] = {}
    for s in sorted(sys.states):
        arcs = successors(sys, overlay, s)
        if not arcs:
            continue
        raw = {t: overlay.weight(s, t) for t, _ in arcs}
        total = sum(raw.values())
        for t, target in sorted(arcs):
            p = raw[t] / total if total > 0 else raw[t]
            entries[(s, t, manager.rewrite(sys, s, target))] = p
    return ProbabilityMatrix(entries, step)


class Session:
    """Step-by-step execution shared by batch runs and interactive play."""

    def __init__(
        self,
        sys: NarrativeSystem,
        manager: Manager,
        model: PlayerModel,
        max_steps: int = DEFAULT_MAX_STEPS,
        snapshots: bool = True,
    ):
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.sys = sys
        self.manager = manager
        self.overlay = Overlay(base_weights=model.weights)
        self.ctx = RunContext(sys.initial)
        self.max_steps = max_steps
        self.snapshots = snapshots
        self.steps: list[TraceStep] = []
        self.outcome: Outcome | None = None

    @property
    def plan(self) -> list[str]:
        return [self.sys.initial] + [s.target for s in self.steps]

    def enabled(self) -> list[tuple[str, str]]:
        return sorted(successors(self.sys, self.overlay, self.ctx.current))

    def player_can_act(self) -> bool:
        """False at authored sinks: anything enabled there belongs to the manager."""
        return self.ctx.current not in self.sys.end_states and bool(self.enabled())

    def check_finished(self) -> Outcome | None:
        if self.outcome is None:
            if self.ctx.current in self.sys.goals:
                ok, _ = is_complete_plan(self.sys, self.plan)
                self.outcome = Outcome.COMPLETE if ok else Outcome.INCOMPLETE_ISLANDS
            elif len(self.steps) >= self.max_steps:
                self.outcome = Outcome.INCOMPLETE_MAX_STEPS
        return self.outcome

    def step(
        self,
        proposal: str | None,
        choose_event: Callable[[list[str]], str] | None = None,
    ) -> TraceStep | None:
        """Submit one proposal to the manager; returns None if the run just ended."""
        ctx = self.ctx
        try:
            decision = self.manager.decide(self.sys, self.overlay, ctx, proposal, choose_event)
        except Stuck:
            self.outcome = (
                Outcome.INCOMPLETE_PROBLEMATIC
                if ctx.current in self.sys.problematic
                else Outcome.INCOMPLETE_STUCK
            )
            return None
        except NoHistory:
            self.outcome = Outcome.ABORTED
            return None
        snap = snapshot(self.sys, self.manager, self.overlay, ctx.step_index) if self.snapshots else None
        rec = TraceStep(ctx.step_index, ctx.current, proposal, decision, snap)
        self.steps.append(rec)
        ctx.history.append((ctx.current, decision.chosen))
        ctx.current = decision.resulting_state
        ctx.step_index += 1
        return rec

    def trace(self, run_id: int = 0, seed: int = 0, system_hash: str = "") -> Trace:
        return Trace(
            run_id=run_id,
            seed=seed,
            initial=self.sys.initial,
            steps=self.steps,
            outcome=self.check_finished() or Outcome.INCOMPLETE_STUCK,
            manager=self.manager.name,
            system_hash=system_hash,
            adaptations=self.overlay.adaptation_count,
            cancellations=self.overlay.cancellation_count,
        )


def run_once(
    sys: NarrativeSystem,
    manager: Manager,
    model: PlayerModel,
    seed: int,
    max_steps: int = DEFAULT_MAX_STEPS,
    *,
    run_id: int = 0,
    snapshots: bool = True,
    system_hash: str = "",
) -> Trace:
    session = Session(sys, manager, model, max_steps, snapshots)
    rng = make_rng(seed)
    while session.check_finished() is None:
        proposal = None
        if session.player_can_act():
            proposal = sample_transition(model, sys, session.overlay, session.ctx.current, rng)
        if session.step(proposal) is None:
            break
    return session.trace(run_id, seed, system_hash)


def run_batch(
    sys: NarrativeSystem,
    manager: Manager,
    model: PlayerModel,
    n: int,
    master_seed: int,
    max_steps: int = DEFAULT_MAX_STEPS,
    *,
    snapshots: bool = True,
    system_hash: str = "",
) -> list[Trace]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return [
        run_once(
            sys, manager, model, run_seed(master_seed, i), max_steps,
            run_id=i, snapshots=snapshots, system_hash=system_hash,
        )
        for i in range(n)
    ]
