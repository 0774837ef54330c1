"""The narrative system tuple (S, T, gamma, s_init, S_goal) and its structural checks.

States and transitions are atomic string tokens. The transition function is
stored as a tuple of rules so that a malformed system (two rules for the same
``(source, via)`` pair) can still be represented and reported by
:func:`validate` instead of failing at construction time.
"""

from __future__ import annotations

import enum
from collections import deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from ins_sim.policy import Overlay


class InsError(Exception):
    """Base class for all domain errors raised by this package."""


class UnknownState(InsError, KeyError):
    def __init__(self, state: str):
        super().__init__(state)
        self.state = state

    def __str__(self) -> str:
        return f"unknown state {self.state!r}"


class GoalNotTerminal(InsError):
    def __init__(self, goals: Iterable[str]):
        self.goals = sorted(goals)
        super().__init__(f"goal states with outgoing rules: {', '.join(self.goals)}")


class Kind(str, enum.Enum):
    ACTION = "action"
    EVENT = "event"


@dataclass(frozen=True, order=True)
class Transition:
    name: str
    kind: Kind


@dataclass(frozen=True, order=True)
class Rule:
    source: str
    via: str
    target: str


@dataclass(frozen=True)
class Island:
    index: int  # 1-based position in the objective sequence
    members: frozenset[str]
    name: str = ""


@dataclass(frozen=True)
class NarrativeSystem:
    states: frozenset[str]
    transitions: frozenset[Transition]
    rules: tuple[Rule, ...]
    initial: str
    goals: frozenset[str]
    islands: tuple[Island, ...] = ()

    @classmethod
    def build(
        cls,
        states: Iterable[str],
        transitions: Mapping[str, Kind | str],
        rules: Iterable[tuple[str, str, str] | Rule],
        initial: str,
        goals: Iterable[str],
        islands: Iterable[Iterable[str]] = (),
    ) -> NarrativeSystem:
        """Convenience constructor from plain Python values.

        ``islands`` is an ordered iterable of member collections; indices are
        assigned 1..m in iteration order.
        """
        return cls(
            states=frozenset(states),
            transitions=frozenset(Transition(n, Kind(k)) for n, k in transitions.items()),
            rules=tuple(r if isinstance(r, Rule) else Rule(*r) for r in rules),
            initial=initial,
            goals=frozenset(goals),
            islands=tuple(
                Island(k, frozenset(members)) for k, members in enumerate(islands, start=1)
            ),
        )

    @cached_property
    def kinds(self) -> dict[str, Kind]:
        return {t.name: t.kind for t in self.transitions}

    @cached_property
    def gamma(self) -> dict[tuple[str, str], str]:
        # last rule wins on duplicates; validate() reports them
        return {(r.source, r.via): r.target for r in self.rules}

    @cached_property
    def outgoing(self) -> dict[str, list[tuple[str, str]]]:
        out: dict[str, list[tuple[str, str]]] = {s: [] for s in self.states}
        for (source, via), target in sorted(self.gamma.items()):
            out.setdefault(source, []).append((via, target))
        return out

    @cached_property
    def end_states(self) -> frozenset[str]:
        sources = {r.source for r in self.rules}
        return frozenset(s for s in self.states if s not in sources)

    @cached_property
    def problematic(self) -> frozenset[str]:
        return self.end_states - self.goals

    def island_of(self, state: str) -> Island | None:
        for island in self.islands:
            if state in island.members:
                return island
        return None


def classify_end_states(sys: NarrativeSystem) -> dict[str, frozenset[str]]:
    """Split the sinks of the rule graph into goal and problematic states."""
    bad = sys.goals - sys.end_states
    if bad:
        raise GoalNotTerminal(bad)
    return {"goal": frozenset(sys.goals), "problematic": sys.end_states - sys.goals}


def reachable_states(sys: NarrativeSystem) -> set[str]:
    adj: dict[str, list[str]] = {}
    for r in sys.rules:
        adj.setdefault(r.source, []).append(r.target)
    seen = {sys.initial}
    queue = deque([sys.initial])
    while queue:
        s = queue.popleft()
        for target in adj.get(s, ()):
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return seen


def successors(sys: NarrativeSystem, overlay: Overlay | None, s: str) -> set[tuple[str, str]]:
    """Enabled ``(transition, target)`` pairs from ``s`` under base rules plus overlay."""
    if s not in sys.states:
        raise UnknownState(s)
    if overlay is None:
        return set(sys.outgoing[s])
    enabled = {
        (via, target)
        for via, target in sys.outgoing[s]
        if (s, via) not in overlay.removed_rules
    }
    for (source, via), target in overlay.added_rules.items():
        if source == s:
            enabled = {(v, t) for v, t in enabled if v != via}
            enabled.add((via, target))
    return enabled


# --- validation ---------------------------------------------------------------

VIOLATION_CODES = {
    "E-NAME": "bad-name",
    "E-INIT": "initial-not-declared",
    "E-REF": "undeclared-reference",
    "E-KIND": "transition-kind-missing",
    "E-GAMMA": "gamma-not-function",
    "E-REACH": "unreachable-state",
    "E-NOGOAL": "no-goal-state",
    "E-GOAL": "goal-not-terminal",
    "E-ISLAND-EMPTY": "island-empty",
    "E-ISLAND-OVERLAP": "island-overlap",
    "E-ISLAND-INIT": "island-contains-initial",
    "E-ISLAND-END": "island-contains-end-state",
}


@dataclass(frozen=True, order=True)
class Violation:
    code: str
    subject: str

    @property
    def slug(self) -> str:
        return VIOLATION_CODES[self.code]

    def line(self) -> str:
        """Machine-parsable one-line form, e.g. ``E-REACH orphan``."""
        return f"{self.code} {self.subject}"

    def __str__(self) -> str:
        return f"{self.slug}@ {self.subject}"


def _bad_name(name: str) -> bool:
    return not name or any(c.isspace() for c in name)


def validate(sys: NarrativeSystem) -> list[Violation]:
    """Run every structural check; an empty list means the system is valid."""
    out: list[Violation] = []
    names = list(sys.states) + [t.name for t in sys.transitions]
    out += [Violation("E-NAME", repr(n)) for n in names if _bad_name(n)]

    if sys.initial not in sys.states:
        out.append(Violation("E-INIT", sys.initial))
    out += [Violation("E-REF", f"goal {g}") for g in sys.goals if g not in sys.states]

    seen: dict[tuple[str, str], str] = {}
    for r in sys.rules:
        for s in (r.source, r.target):
            if s not in sys.states:
                out.append(Violation("E-REF", f"({r.source},{r.via},{r.target}) state {s}"))
        if r.via not in sys.kinds:
            out.append(Violation("E-KIND", r.via))
        key = (r.source, r.via)
        if key in seen and seen[key] != r.target:
            out.append(Violation("E-GAMMA", f"({r.source},{r.via})"))
        seen.setdefault(key, r.target)

    if sys.initial in sys.states:
        reach = reachable_states(sys)
        out += [Violation("E-REACH", s) for s in sorted(sys.states - reach)]

    if not sys.goals:
        out.append(Violation("E-NOGOAL", "-"))
    out += [Violation("E-GOAL", g) for g in sorted(sys.goals - sys.end_states)]

    owner: dict[str, int] = {}
    for island in sys.islands:
        label = island.name or f"I{island.index}"
        if not island.members:
            out.append(Violation("E-ISLAND-EMPTY", label))
        for m in sorted(island.members):
            if m not in sys.states:
                out.append(Violation("E-REF", f"island {label} state {m}"))
            if m in owner:
                out.append(Violation("E-ISLAND-OVERLAP", f"{m} in I{owner[m]} and I{island.index}"))
            owner.setdefault(m, island.index)
            if m == sys.initial:
                out.append(Violation("E-ISLAND-INIT", f"{label} {m}"))
            if m in sys.end_states:
                out.append(Violation("E-ISLAND-END", f"{label} {m}"))
    return out
