"""Experience managers: the policy that turns a player proposal into a transition.

A manager never mutates the :class:`~ins_sim.model.NarrativeSystem`. Runtime
rewrites of the transition set and transition function live in an
:class:`Overlay`, which is owned by a single run.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

from ins_sim.model import InsError, Kind, NarrativeSystem, Rule, successors

Arc = tuple[str, str]  # (state, transition)


class Stuck(InsError):
    """No transition is enabled and the manager declined to extend the system."""

    def __init__(self, state: str):
        super().__init__(f"no enabled transition from {state!r}")
        self.state = state


class NoHistory(InsError):
    """The run is in a problematic state with no previous state to return to."""


class NotEnabled(InsError):
    pass


class Intervention(str, enum.Enum):
    NONE = "none"
    ADAPTATION = "adaptation"
    CANCELLATION = "cancellation"


@dataclass
class Overlay:
    """A manager's runtime delta over the base transitions, rules and weights.

    ``base_weights`` is the player model's arc weights; effective weights are
    the base values overridden by ``probability_edits``.
    """

    base_weights: Mapping[Arc, float] = field(default_factory=dict)
    added_transitions: dict[str, Kind] = field(default_factory=dict)
    added_rules: dict[Arc, str] = field(default_factory=dict)
    removed_rules: set[Arc] = field(default_factory=set)
    probability_edits: dict[Arc, float] = field(default_factory=dict)
    adaptation_count: int = 0
    cancellation_count: int = 0

    def is_empty(self) -> bool:
        return not (self.added_transitions or self.added_rules or self.removed_rules or self.probability_edits)

    def weight(self, state: str, transition: str) -> float:
        arc = (state, transition)
        if arc in self.probability_edits:
            return self.probability_edits[arc]
        return self.base_weights.get(arc, 0.0)

    def declare_event(self, name: str) -> None:
        self.added_transitions[name] = Kind.EVENT

    def add_rule(self, rule: Rule) -> None:
        if rule.via not in self.added_transitions:
            raise InsError(f"overlay rule uses undeclared transition {rule.via!r}")
        self.added_rules[(rule.source, rule.via)] = rule.target

    def remove_rule(self, state: str, transition: str) -> None:
        arc = (state, transition)
        if arc in self.added_rules:
            del self.added_rules[arc]
        else:
            self.removed_rules.add(arc)
        self.probability_edits.pop(arc, None)

    def row(self, sys: NarrativeSystem, state: str) -> dict[str, float]:
        """Normalized effective weights over the transitions enabled at ``state``."""
        raw = {t: self.weight(state, t) for t, _ in successors(sys, self, state)}
        total = sum(raw.values())
        if total <= 0:
            return raw
        return {t: w / total for t, w in raw.items()}

    def inverse(self, sys: NarrativeSystem) -> Overlay:
        """Overlay that undoes this one's rule changes when applied on top of it."""
        inv = Overlay()
        for arc in self.removed_rules:
            inv.added_rules[arc] = sys.gamma[arc]
        inv.removed_rules = set(self.added_rules)
        return inv


def apply_overlay(sys: NarrativeSystem, overlay: Overlay) -> NarrativeSystem:
    """Materialize T' and gamma' as a plain system (weights are not carried)."""
    rules = [r for r in sys.rules if (r.source, r.via) not in overlay.removed_rules]
    rules = [r for r in rules if (r.source, r.via) not in overlay.added_rules]
    rules += [Rule(s, t, target) for (s, t), target in overlay.added_rules.items()]
    kinds = {t.name: t.kind for t in sys.transitions} | overlay.added_transitions
    return NarrativeSystem.build(
        sys.states, kinds, sorted(rules), sys.initial, sys.goals,
        [i.members for i in sys.islands],
    )


@dataclass(frozen=True)
class EmDecision:
    chosen: str
    resulting_state: str
    intervention: Intervention = Intervention.NONE


@dataclass
class RunContext:
    current: str
    history: list[Arc] = field(default_factory=list)  # (state left, transition taken)
    step_index: int = 0


def kind_of(sys: NarrativeSystem, overlay: Overlay, transition: str) -> Kind:
    if transition in overlay.added_transitions:
        return overlay.added_transitions[transition]
    return sys.kinds[transition]


class Manager:
    """Vanilla behaviour: accept the proposal, never touch the overlay."""

    name = "vanilla"

    def adapt(self, sys: NarrativeSystem, overlay: Overlay, ctx: RunContext) -> EmDecision | None:
        return None

    def rewrite(self, sys: NarrativeSystem, state: str, target: str) -> str:
        """Map the overlay's target for an arc leaving ``state`` to the manager's gamma'."""
        return target

    def decide(
        self,
        sys: NarrativeSystem,
        overlay: Overlay,
        ctx: RunContext,
        proposal: str | None,
        choose_event: Callable[[list[str]], str] | None = None,
    ) -> EmDecision:
        adapted = self.adapt(sys, overlay, ctx)
        if adapted is not None:
            return adapted
        enabled = dict(successors(sys, overlay, ctx.current))
        if proposal is None:
            events = sorted(t for t in enabled if kind_of(sys, overlay, t) is Kind.EVENT)
            if not events:
                raise Stuck(ctx.current)
            chosen = choose_event(events) if choose_event else events[0]
        elif proposal not in enabled:
            raise NotEnabled(f"{proposal!r} is not enabled from {ctx.current!r}")
        else:
            chosen = proposal
        return self.resolve(sys, overlay, ctx, chosen, enabled[chosen])

    def resolve(
        self, sys: NarrativeSystem, overlay: Overlay, ctx: RunContext, chosen: str, target: str
    ) -> EmDecision:
        return EmDecision(chosen, target)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class FairyManager(Manager):
    """Resurrects the story from a problematic state and disables the arc that led there.

    On entering problematic state ``p`` from ``q`` via ``a``, a fresh event
    ``e_fairy#k`` with rule ``p -> q`` and probability 1 is added, ``(q, a)``
    is removed and ``q``'s remaining weights are rescaled by ``1 / (1 - w_a)``.
    Each of the two rewrites counts as one adaptation.
    """

    name = "fairy"

    def adapt(self, sys, overlay, ctx):
        p = ctx.current
        if p not in sys.problematic:
            return None
        if not ctx.history:
            raise NoHistory(f"run started in problematic state {p!r}")
        q, a_prob = ctx.history[-1]

        fairy = f"e_fairy#{sum(1 for t in overlay.added_transitions if t.startswith('e_fairy#')) + 1}"
        overlay.declare_event(fairy)
        for arc in [arc for arc in overlay.added_rules if arc[0] == p]:
            overlay.remove_rule(*arc)
        overlay.add_rule(Rule(p, fairy, q))
        overlay.probability_edits[(p, fairy)] = 1.0
        overlay.adaptation_count += 1

        row = overlay.row(sys, q)
        removed = row.get(a_prob, 0.0)
        overlay.remove_rule(q, a_prob)
        rest = [t for t in row if t != a_prob]
        if removed < 1.0:
            for t in rest:
                overlay.probability_edits[(q, t)] = row[t] / (1.0 - removed)
        else:
            # the removed arc held all the mass: nothing to rescale, so spread it evenly
            for t in rest:
                overlay.probability_edits[(q, t)] = 1.0 / len(rest)
        overlay.adaptation_count += 1
        return EmDecision(fairy, q, Intervention.ADAPTATION)


class MimesisManager(Manager):
    """Cancels any transition whose target is problematic; the run stays put."""

    name = "mimesis"

    def rewrite(self, sys, state, target):
        return state if target in sys.problematic else target

    def resolve(self, sys, overlay, ctx, chosen, target):
        if target in sys.problematic:
            overlay.cancellation_count += 1
            return EmDecision(chosen, ctx.current, Intervention.CANCELLATION)
        return EmDecision(chosen, target)


def vanilla_manager() -> Manager:
    return Manager()


def fairy_manager() -> Manager:
    return FairyManager()


def mimesis_manager() -> Manager:
    return MimesisManager()


MANAGERS: dict[str, Callable[[], Manager]] = {
    "vanilla": vanilla_manager,
    "fairy": fairy_manager,
    "mimesis": mimesis_manager,
}


def get_manager(name: str) -> Manager:
    try:
        return MANAGERS[name]()
    except KeyError:
        raise InsError(f"unknown manager {name!r}; choose from {', '.join(MANAGERS)}") from None


def em_policy(
    manager: Manager,
    sys: NarrativeSystem,
    overlay: Overlay,
    ctx: RunContext,
    proposal: str | None,
) -> EmDecision:
    """Functional form of ``manager.decide``."""
    return manager.decide(sys, overlay, ctx, proposal)
