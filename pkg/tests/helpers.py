"""Independent oracles and generators shared by the test modules."""

from __future__ import annotations

import json
from collections.abc import Callable

import networkx as nx
import numpy as np

from ins_sim.model import NarrativeSystem
from ins_sim.storyio import parse_story

RandInt = Callable[[int, int], int]


def random_system(randint: RandInt, max_states: int = 10, max_islands: int = 3) -> NarrativeSystem:
    """A reachable system with sinks at the end of the state list and disjoint islands.

    ``randint(a, b)`` is inclusive, so either ``random.Random.randint`` or a
    hypothesis draw can drive it.
    """
    n = randint(3, max_states)
    names = [f"s{i}" for i in range(n)]
    n_sinks = randint(1, min(3, n - 1))
    inner = names[: n - n_sinks]
    sinks = names[n - n_sinks :]

    edges: set[tuple[str, str]] = set()
    for j in range(1, n):
        src = inner[randint(0, min(j, len(inner)) - 1)]
        edges.add((src, names[j]))
    for src in inner:
        for _ in range(randint(0 if any(e[0] == src for e in edges) else 1, 2)):
            edges.add((src, names[randint(0, n - 1)]))

    transitions, rules = {}, []
    for k, (src, dst) in enumerate(sorted(edges)):
        t = f"t{k}"
        transitions[t] = "action" if randint(0, 1) else "event"
        rules.append((src, t, dst))

    goals = [s for s in sinks if randint(0, 1)] or [sinks[0]]

    candidates = inner[1:]
    islands: list[list[str]] = []
    for _ in range(randint(0, max_islands)):
        free = [s for s in candidates if not any(s in i for i in islands)]
        if not free:
            break
        members = [s for s in free if randint(0, 2) == 0] or [free[randint(0, len(free) - 1)]]
        islands.append(members)
    return NarrativeSystem.build(names, transitions, rules, "s0", goals, islands)


def simple_goal_paths(sys: NarrativeSystem) -> set[tuple[str, ...]]:
    """All simple rule-graph paths from the initial state to a goal, via networkx."""
    g = nx.DiGraph()
    g.add_nodes_from(sys.states)
    g.add_edges_from((r.source, r.target) for r in sys.rules)
    paths: set[tuple[str, ...]] = set()
    for goal in sys.goals:
        if goal == sys.initial:
            paths.add((goal,))
            continue
        paths.update(tuple(p) for p in nx.all_simple_paths(g, sys.initial, goal))
    return paths


def monte_carlo_goal_rate(sys: NarrativeSystem, weights: dict, n: int, seed: int) -> float:
    """Vectorized random walk of ``n`` walkers from the initial state until absorption."""
    order = sorted(sys.states)
    idx = {s: i for i, s in enumerate(order)}
    m = len(order)
    P = np.zeros((m, m))
    for r in sys.rules:
        P[idx[r.source], idx[r.target]] += weights[(r.source, r.via)]
    absorbing = np.array([s in sys.end_states for s in order])
    for i in np.flatnonzero(absorbing):
        P[i] = 0.0
        P[i, i] = 1.0
    cum = np.cumsum(P / P.sum(axis=1, keepdims=True), axis=1)
    rng = np.random.default_rng(seed)
    pos = np.full(n, idx[sys.initial])
    for _ in range(10_000):
        live = ~absorbing[pos]
        if not live.any():
            break
        u = rng.random(live.sum())
        rows = cum[pos[live]]
        pos[live] = np.minimum((u[:, None] >= rows).sum(axis=1), m - 1)
    goal_mask = np.array([s in sys.goals for s in order])
    return float(goal_mask[pos].mean())


def story_bytes(states, transitions, rules, islands=(), **extra) -> bytes:
    """Build story text from compact tuples: states as (name, roles), rules as (from, via, to, p)."""
    doc = {
        "schema_version": "1.0",
        "metadata": {"title": "fixture"},
        "states": [{"name": n, "roles": list(r)} for n, r in states],
        "transitions": [{"name": n, "kind": k} for n, k in transitions],
        "rules": [{"from": a, "via": t, "to": b, "probability": p} for a, t, b, p in rules],
        "islands": [{"name": n, "members": list(m)} for n, m in islands],
    }
    doc.update(extra)
    return json.dumps(doc).encode()


def load(text: bytes):
    doc = parse_story(text)
    return doc, doc.to_system(), doc.player_model()
