"""Story files, canonical JSON output, report and trace records.

A ``.story`` file is a single JSON object::

    {
      "schema_version": "1.0",
      "metadata": {"title": "...", "description": "..."},
      "states": [{"name": "start", "roles": ["initial"]}, ...],
      "transitions": [{"name": "meet", "kind": "event"}, ...],
      "rules": [{"from": "start", "via": "meet", "to": "met", "probability": 0.7}, ...],
      "islands": [{"name": "devoured", "members": ["..."]}]
    }

The rule probabilities double as the player model. Every state with
outgoing rules must have probabilities summing to 1 within 1e-9.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from importlib import resources
from typing import Any

from ins_sim.analyze import SimulationReport
from ins_sim.model import InsError, Kind, NarrativeSystem, Rule
from ins_sim.simulate import PlayerModel, Trace

SCHEMA_VERSION = "1.0"
REPORT_SCHEMA = "ins-sim/report/1"
TRACE_SCHEMA = "ins-sim/trace/1"
ROW_TOLERANCE = 1e-9


class StoryError(InsError):
    """Any failure to turn bytes into a story; ``position`` locates it."""

    def __init__(self, message: str, position: str = ""):
        self.message = message
        self.position = position
        super().__init__(f"{position}: {message}" if position else message)


class StorySyntaxError(StoryError):
    pass


class StoryReferenceError(StoryError):
    pass


class ProbabilityError(StoryError):
    pass


class RoleError(StoryError):
    pass


@dataclass
class StateDecl:
    name: str
    roles: list[str] = field(default_factory=list)


@dataclass
class TransitionDecl:
    name: str
    kind: str


@dataclass
class RuleDecl:
    source: str
    via: str
    target: str
    probability: float


@dataclass
class IslandDecl:
    name: str
    members: list[str]


@dataclass
class StoryDocument:
    states: list[StateDecl]
    transitions: list[TransitionDecl]
    rules: list[RuleDecl]
    islands: list[IslandDecl] = field(default_factory=list)
    title: str = ""
    description: str = ""
    schema_version: str = SCHEMA_VERSION

    @property
    def initial(self) -> str:
        return next(s.name for s in self.states if "initial" in s.roles)

    @property
    def goals(self) -> list[str]:
        return [s.name for s in self.states if "goal" in s.roles]

    def to_system(self) -> NarrativeSystem:
        return NarrativeSystem.build(
            states=[s.name for s in self.states],
            transitions={t.name: Kind(t.kind) for t in self.transitions},
            rules=[Rule(r.source, r.via, r.target) for r in self.rules],
            initial=self.initial,
            goals=self.goals,
            islands=[i.members for i in self.islands],
        )

    def player_model(self) -> PlayerModel:
        return PlayerModel({(r.source, r.via): r.probability for r in self.rules})

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "metadata": {"title": self.title, "description": self.description},
            "states": [{"name": s.name, "roles": sorted(s.roles)} for s in self.states],
            "transitions": [{"name": t.name, "kind": t.kind} for t in self.transitions],
            "rules": [
                {"from": r.source, "via": r.via, "to": r.target, "probability": r.probability}
                for r in self.rules
            ],
            "islands": [{"name": i.name, "members": list(i.members)} for i in self.islands],
        }

    def hash(self) -> str:
        return hashlib.sha256(serialize_story(self)).hexdigest()[:16]


# --- canonical JSON -----------------------------------------------------------


def format_number(x: float | Fraction) -> str:
    """Fixed-point text with at most 9 fractional digits and no exponent."""
    if isinstance(x, Fraction):
        x = float(x)
    text = f"{x:.9f}".rstrip("0")
    if text.endswith("."):
        text += "0"
    return "0.0" if text == "-0.0" else text


def exact_number(x: float) -> str:
    """Shortest round-tripping decimal for ``x``, written without an exponent."""
    text = format(Decimal(repr(float(x))), "f")
    return text if "." in text else text + ".0"


def canonical_json(obj: Any, indent: int | None = 2, exact: bool = False) -> str:
    """Key-sorted JSON with fixed-point floats; byte-stable for equal inputs.

    Floats get at most 9 fractional digits unless ``exact`` is set, in which
    case they keep every digit needed to parse back to the same value.
    """
    number = exact_number if exact else format_number
    nl = "\n" if indent is not None else ""
    sep = ": " if indent is not None else ":"

    def enc(o: Any, depth: int) -> str:
        pad = " " * (indent * (depth + 1)) if indent is not None else ""
        end = " " * (indent * depth) if indent is not None else ""
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, (float, Fraction)):
            return number(o)
        if isinstance(o, str):
            return json.dumps(o, ensure_ascii=False)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}{sep}{enc(o[k], depth + 1)}" for k in sorted(o)]
            return "{" + nl + ("," + nl).join(items) + nl + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            items = [f"{pad}{enc(v, depth + 1)}" for v in o]
            return "[" + nl + ("," + nl).join(items) + nl + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0)


# --- story parsing ------------------------------------------------------------


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in pairs:
        if k in out:
            raise StorySyntaxError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _reject_constant(name: str) -> Any:
    raise StorySyntaxError(f"non-finite number {name}")


def _expect(value: Any, typ: type | tuple[type, ...], path: str) -> Any:
    if isinstance(value, bool) and typ is not bool or not isinstance(value, typ):
        want = typ.__name__ if isinstance(typ, type) else "/".join(t.__name__ for t in typ)
        raise StorySyntaxError(f"expected {want}, got {type(value).__name__}", path)
    return value


def _field(obj: dict, key: str, typ: type | tuple[type, ...], path: str, default: Any = ...) -> Any:
    if key not in obj:
        if default is not ...:
            return default
        raise StorySyntaxError(f"missing field {key!r}", path)
    return _expect(obj[key], typ, f"{path}.{key}")


def _name(value: Any, path: str) -> str:
    _expect(value, str, path)
    if not value or any(c.isspace() for c in value):
        raise StorySyntaxError(f"invalid name {value!r}", path)
    return value


def parse_story(text: bytes | str) -> StoryDocument:
    """Parse and check a story; raises a :class:`StoryError` subclass on any defect."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise StorySyntaxError(f"invalid UTF-8: {exc.reason}", f"byte {exc.start}") from None
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicate_keys, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise StorySyntaxError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    except RecursionError:
        raise StorySyntaxError("nesting too deep") from None
    root = _expect(raw, dict, "$")

    version = _field(root, "schema_version", str, "$")
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise StorySyntaxError(f"unsupported schema_version {version!r}", "$.schema_version")
    meta = _field(root, "metadata", dict, "$", {})
    title = _field(meta, "title", str, "$.metadata", "")
    description = _field(meta, "description", str, "$.metadata", "")

    states: list[StateDecl] = []
    for i, s in enumerate(_field(root, "states", list, "$")):
        path = f"$.states[{i}]"
        _expect(s, dict, path)
        roles = _field(s, "roles", list, path, [])
        for j, r in enumerate(roles):
            if r not in ("initial", "goal"):
                raise StorySyntaxError(f"unknown role {r!r}", f"{path}.roles[{j}]")
        states.append(StateDecl(_name(_field(s, "name", str, path), f"{path}.name"), sorted(set(roles))))

    transitions: list[TransitionDecl] = []
    for i, t in enumerate(_field(root, "transitions", list, "$")):
        path = f"$.transitions[{i}]"
        _expect(t, dict, path)
        kind = _field(t, "kind", str, path)
        if kind not in ("action", "event"):
            raise StorySyntaxError(f"kind must be 'action' or 'event', got {kind!r}", f"{path}.kind")
        transitions.append(TransitionDecl(_name(_field(t, "name", str, path), f"{path}.name"), kind))

    rules: list[RuleDecl] = []
    for i, r in enumerate(_field(root, "rules", list, "$")):
        path = f"$.rules[{i}]"
        _expect(r, dict, path)
        p = float(_field(r, "probability", (int, float), path))
        if not 0.0 <= p <= 1.0:
            raise ProbabilityError(f"probability {p} outside [0, 1]", f"{path}.probability")
        rules.append(RuleDecl(
            _field(r, "from", str, path), _field(r, "via", str, path), _field(r, "to", str, path), p
        ))

    islands: list[IslandDecl] = []
    for i, isl in enumerate(_field(root, "islands", list, "$", [])):
        path = f"$.islands[{i}]"
        _expect(isl, dict, path)
        members = [_expect(m, str, f"{path}.members[{j}]") for j, m in enumerate(_field(isl, "members", list, path))]
        islands.append(IslandDecl(_field(isl, "name", str, path, f"I{i + 1}"), members))

    doc = StoryDocument(states, transitions, rules, islands, title, description, version)
    _check_story(doc)
    return doc


def _check_story(doc: StoryDocument) -> None:
    for label, names in (
        ("state", [s.name for s in doc.states]),
        ("transition", [t.name for t in doc.transitions]),
        ("island", [i.name for i in doc.islands]),
    ):
        seen: set[str] = set()
        for n in names:
            if n in seen:
                raise StoryReferenceError(f"duplicate {label} name {n!r}")
            seen.add(n)

    state_names = {s.name for s in doc.states}
    transition_names = {t.name for t in doc.transitions}
    for i, r in enumerate(doc.rules):
        for key, ref in (("from", r.source), ("to", r.target)):
            if ref not in state_names:
                raise StoryReferenceError(f"undeclared state {ref!r}", f"$.rules[{i}].{key}")
        if r.via not in transition_names:
            raise StoryReferenceError(f"undeclared transition {r.via!r}", f"$.rules[{i}].via")
    for i, isl in enumerate(doc.islands):
        for m in isl.members:
            if m not in state_names:
                raise StoryReferenceError(f"undeclared state {m!r}", f"$.islands[{i}].members")

    initials = [s.name for s in doc.states if "initial" in s.roles]
    if len(initials) != 1:
        raise RoleError(f"expected exactly one initial state, found {len(initials)}", "$.states")

    rows: dict[str, list[float]] = {}
    for r in doc.rules:
        rows.setdefault(r.source, []).append(r.probability)
    for state, ps in rows.items():
        total = math.fsum(ps)
        if abs(total - 1.0) > ROW_TOLERANCE:
            raise ProbabilityError(f"outgoing probabilities of state {state!r} sum to {total!r}", "$.rules")


def serialize_story(doc: StoryDocument) -> bytes:
    return (canonical_json(doc.to_dict(), exact=True) + "\n").encode("utf-8")


def load_story(path: str) -> StoryDocument:
    with open(path, "rb") as fh:
        return parse_story(fh.read())


def bundled_lrrh() -> StoryDocument:
    """The reference Little Red Riding Hood story shipped with the package."""
    return parse_story(resources.files("ins_sim").joinpath("data/lrrh.story").read_bytes())


# --- reports ------------------------------------------------------------------


def report_dict(report: SimulationReport) -> dict[str, Any]:
    return {
        "schema": REPORT_SCHEMA,
        "manager": report.manager_name,
        "n_runs": report.n_runs,
        "complete_rate": report.complete_rate,
        "mean_adaptations": report.mean_adaptations,
        "mean_cancellations": report.mean_cancellations,
        "adaptations": {
            "total": report.total_adaptations,
            "min": report.min_adaptations,
            "max": report.max_adaptations,
        },
        "cancellations": {
            "total": report.total_cancellations,
            "min": report.min_cancellations,
            "max": report.max_cancellations,
        },
        "outcome_histogram": dict(report.outcome_histogram),
        "visit_counts": dict(report.visit_counts),
        "system_hash": report.system_hash,
    }


def serialize_report(report: SimulationReport) -> bytes:
    return (canonical_json(report_dict(report)) + "\n").encode("utf-8")


def parse_report(data: bytes | str) -> SimulationReport:
    """Inverse of :func:`serialize_report`; means are rebuilt from the exact totals."""
    obj = json.loads(data)
    if obj.get("schema") != REPORT_SCHEMA:
        raise StorySyntaxError(f"not a report record: schema {obj.get('schema')!r}")
    return SimulationReport(
        manager_name=obj["manager"],
        n_runs=obj["n_runs"],
        outcome_histogram={k: int(v) for k, v in obj["outcome_histogram"].items()},
        visit_counts={k: int(v) for k, v in obj["visit_counts"].items()},
        total_adaptations=obj["adaptations"]["total"],
        total_cancellations=obj["cancellations"]["total"],
        min_adaptations=obj["adaptations"]["min"],
        max_adaptations=obj["adaptations"]["max"],
        min_cancellations=obj["cancellations"]["min"],
        max_cancellations=obj["cancellations"]["max"],
        system_hash=obj["system_hash"],
    )


TABLE_COLUMNS = ("manager", "n_runs", "complete_rate", "mean_adaptations", "mean_cancellations")


def report_table(reports: Sequence[SimulationReport], visit_states: Sequence[str] | None = None) -> str:
    """Comma-separated table, one row per report, one ``visits_<state>`` column per state."""
    if visit_states is None:
        visit_states = sorted({s for r in reports for s in r.visit_counts})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*TABLE_COLUMNS, *(f"visits_{s}" for s in visit_states)])
    for r in reports:
        writer.writerow([
            r.manager_name,
            r.n_runs,
            format_number(r.complete_rate),
            format_number(r.mean_adaptations),
            format_number(r.mean_cancellations),
            *(r.visit_counts.get(s, 0) for s in visit_states),
        ])
    return buf.getvalue()


# --- traces -------------------------------------------------------------------


def trace_record(trace: Trace, snapshots: bool = True) -> dict[str, Any]:
    steps = []
    for st in trace.steps:
        rec: dict[str, Any] = {
            "index": st.index,
            "from": st.source,
            "sampled": st.sampled,
            "chosen": st.decision.chosen,
            "intervention": st.decision.intervention.value,
            "to": st.target,
        }
        if snapshots and st.snapshot is not None:
            rec["snapshot"] = [[s, t, s2, p] for (s, t, s2), p in sorted(st.snapshot.entries.items())]
        steps.append(rec)
    return {
        "schema": TRACE_SCHEMA,
        "run_id": trace.run_id,
        "seed": trace.seed,
        "manager": trace.manager,
        "system_hash": trace.system_hash,
        "outcome": trace.outcome.value,
        "plan": trace.plan,
        "adaptations": trace.adaptations,
        "cancellations": trace.cancellations,
        "steps": steps,
    }


def serialize_traces(traces: Sequence[Trace], snapshots: bool = True) -> bytes:
    """JSON Lines: one compact canonical record per run, in run_id order."""
    ordered = sorted(traces, key=lambda t: t.run_id)
    return "".join(canonical_json(trace_record(t, snapshots), indent=None) + "\n" for t in ordered).encode("utf-8")

