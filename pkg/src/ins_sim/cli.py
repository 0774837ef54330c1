"""Command-line entry point: ``ins-sim {validate,simulate,compare,play,oracle,lrrh}``.

Exit codes: 0 success, 1 domain failure, 2 input or usage failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import IO

from ins_sim.analyze import SimulationReport, aggregate, solve_absorption
from ins_sim.model import InsError, Kind, validate
from ins_sim.policy import MANAGERS, get_manager, kind_of
from ins_sim.simulate import DEFAULT_MAX_STEPS, Outcome, Session, make_rng, run_batch
from ins_sim.storyio import (
    StoryDocument,
    StoryError,
    bundled_lrrh,
    canonical_json,
    format_number,
    load_story,
    report_dict,
    report_table,
    serialize_report,
    serialize_story,
    serialize_traces,
)

DEFAULT_SEED = 42
DEFAULT_RUNS = 100
SEED_ENV = "INS_SIM_SEED"


@dataclass
class CliConfig:
    story_path: str | None
    manager_name: str = "vanilla"
    n_runs: int = DEFAULT_RUNS
    master_seed: int = DEFAULT_SEED
    max_steps: int = DEFAULT_MAX_STEPS
    output_dir: str | None = None
    snapshot_flag: bool = True
    report_format: str = "table"

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("--runs must be >= 1")
        if self.max_steps < 1:
            raise ValueError("--max-steps must be >= 1")


def _load(path: str | None) -> StoryDocument:
    return bundled_lrrh() if path is None else load_story(path)


def _err(msg: str) -> None:
    print(f"ins-sim: {msg}", file=sys.stderr)


def simulate_reports(cfg: CliConfig, managers: list[str]) -> tuple[StoryDocument, dict[str, tuple[SimulationReport, list]]]:
    doc = _load(cfg.story_path)
    system = doc.to_system()
    model = doc.player_model()
    digest = doc.hash()
    out = {}
    for name in managers:
        traces = run_batch(
            system, get_manager(name), model, cfg.n_runs, cfg.master_seed, cfg.max_steps,
            snapshots=cfg.snapshot_flag, system_hash=digest,
        )
        out[name] = (aggregate(traces, system), traces)
    return doc, out


def _write_outputs(cfg: CliConfig, name: str, report: SimulationReport, traces: list) -> None:
    if cfg.output_dir is None:
        return
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.report.json").write_bytes(serialize_report(report))
    (out / f"{name}.report.csv").write_text(report_table([report]))
    (out / f"{name}.traces.jsonl").write_bytes(serialize_traces(traces, cfg.snapshot_flag))


def cmd_validate(story_path: str | None, stdout: IO[str] | None = None) -> int:
    try:
        doc = _load(story_path)
        system = doc.to_system()
    except StoryError as exc:
        print(f"E-PARSE {exc}", file=stdout)
        return 2
    violations = validate(system)
    for v in sorted(violations):
        print(v.line(), file=stdout)
    if not violations:
        print(f"OK {len(system.states)} states, {len(system.rules)} rules", file=stdout)
    return 1 if violations else 0


def cmd_simulate(cfg: CliConfig, stdout: IO[str] | None = None) -> int:
    stdout = stdout or sys.stdout
    _, results = simulate_reports(cfg, [cfg.manager_name])
    report, traces = results[cfg.manager_name]
    _write_outputs(cfg, cfg.manager_name, report, traces)
    if cfg.report_format == "structured":
        stdout.write(serialize_report(report).decode())
    else:
        stdout.write(report_table([report]))
    aborted = report.outcome_histogram.get(Outcome.ABORTED.value, 0)
    if aborted:
        _err(f"{aborted} run(s) aborted")
        return 1
    return 0


def cmd_compare(cfg: CliConfig, managers: list[str], stdout: IO[str] | None = None) -> int:
    stdout = stdout or sys.stdout
    if len(managers) < 2:
        raise ValueError("compare needs at least two managers")
    doc, results = simulate_reports(cfg, managers)
    system = doc.to_system()
    reports = [results[m][0] for m in managers]
    for m in managers:
        _write_outputs(cfg, m, *results[m])
    columns = [system.initial, *sorted(system.problematic)]
    table = report_table(reports, columns)
    if cfg.output_dir is not None:
        (Path(cfg.output_dir) / "compare.csv").write_text(table)
    if cfg.report_format == "structured":
        stdout.write(canonical_json([report_dict(r) for r in reports]) + "\n")
    else:
        stdout.write(table)
    return 1 if any(r.outcome_histogram.get(Outcome.ABORTED.value, 0) for r in reports) else 0


def cmd_oracle(story_path: str | None, stdout: IO[str] | None = None) -> int:
    doc = _load(story_path)
    result = solve_absorption(doc.to_system(), doc.player_model())
    print("state,absorption_probability", file=stdout)
    for s in result.transient:
        print(f"{s},{result.probabilities[s]:.9f}", file=stdout)
    print(f"# residual_inf_norm={result.residual:.3e}", file=stdout)
    return 0


_OUTCOME_TEXT = {
    Outcome.INCOMPLETE_PROBLEMATIC: "incomplete (problematic)",
    Outcome.INCOMPLETE_STUCK: "incomplete (stuck)",
    Outcome.INCOMPLETE_MAX_STEPS: "incomplete (step limit)",
    Outcome.INCOMPLETE_ISLANDS: "incomplete (islands)",
    Outcome.ABORTED: "incomplete (aborted)",
}


def cmd_play(
    story_path: str | None,
    manager_name: str,
    stdin: IO[str] | None = None,
    stdout: IO[str] | None = None,
    seed: int = DEFAULT_SEED,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> int:
    """Interactive stepping: the human replaces the sampler, the manager resolves each step."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    doc = _load(story_path)
    system = doc.to_system()
    model = doc.player_model()
    manager = get_manager(manager_name)
    session = Session(system, manager, model, max_steps, snapshots=False)
    rng = make_rng(seed)

    def pick_event(events: list[str]) -> str:
        w = [session.overlay.weight(session.ctx.current, e) for e in events]
        total = sum(w)
        if total <= 0:
            return events[0]
        u, acc = rng.random() * total, 0.0
        for e, x in zip(events, w):
            acc += x
            if u < acc:
                return e
        return events[-1]

    def say(msg: str) -> None:
        print(msg, file=stdout, flush=True)

    quit_early = False
    while session.check_finished() is None:
        here = session.ctx.current
        say(f"\n[{session.ctx.step_index}] state: {here}")
        proposal = None
        if session.player_can_act():
            arcs = session.enabled()
            actions = [t for t, _ in arcs if kind_of(system, session.overlay, t) is Kind.ACTION]
            events = [t for t, _ in arcs if kind_of(system, session.overlay, t) is Kind.EVENT]
            for i, a in enumerate(actions):
                say(f"  {i}) {a}")
            while True:
                stdout.write("choose an action index, enter to wait, q to quit: ")
                stdout.flush()
                line = stdin.readline()
                if not line or line.strip().lower() == "q":
                    quit_early = True
                    break
                choice = line.strip()
                if choice == "":
                    if events:
                        break
                    say("  nothing happens while you wait here; pick an action")
                    continue
                if choice.isdigit() and int(choice) < len(actions):
                    proposal = actions[int(choice)]
                    break
                say(f"  invalid choice {choice!r}")
            if quit_early:
                break
        rec = session.step(proposal, pick_event)
        if rec is not None:
            note = "" if rec.decision.intervention.value == "none" else f" [{rec.decision.intervention.value}]"
            say(f"  -> {rec.decision.chosen}: {rec.source} => {rec.target}{note}")

    plan = " > ".join(session.plan)
    say(f"\nplan: {plan}")
    if quit_early:
        say("plan incomplete (quit)")
        return 1
    outcome = session.check_finished()
    if outcome is Outcome.COMPLETE:
        say("plan complete")
        return 0
    say(f"plan {_OUTCOME_TEXT.get(outcome, 'incomplete')}")
    return 1


def _seed_default() -> int:
    env = os.environ.get(SEED_ENV)
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env, 0)
    except ValueError:
        raise SystemExit(f"ins-sim: {SEED_ENV} must be an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ins-sim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def story_arg(p: argparse.ArgumentParser) -> None:
        p.add_argument("--story", help="story file (.story); defaults to the bundled LRRH story")

    def run_args(p: argparse.ArgumentParser) -> None:
        story_arg(p)
        p.add_argument("--runs", type=int, default=DEFAULT_RUNS)
        p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                       help=f"master seed (overrides ${SEED_ENV}; default {DEFAULT_SEED})")
        p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
        p.add_argument("--out", help="directory for report and trace files")
        p.add_argument("--no-snapshots", action="store_true", help="omit probability snapshots from traces")
        p.add_argument("--format", choices=("table", "structured"), default="table")

    p = sub.add_parser("validate", help="check a story's structural rules")
    story_arg(p)

    p = sub.add_parser("simulate", help="run n seeded simulations with one manager")
    run_args(p)
    p.add_argument("--manager", choices=sorted(MANAGERS), default="vanilla")

    p = sub.add_parser("compare", help="simulate several managers on the same story")
    run_args(p)
    p.add_argument("--manager", dest="managers", action="append", choices=sorted(MANAGERS),
                   help="repeat for each manager (default: vanilla, fairy, mimesis)")

    p = sub.add_parser("play", help="step through a story interactively")
    story_arg(p)
    p.add_argument("--manager", choices=sorted(MANAGERS), default="vanilla")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None)

    p = sub.add_parser("oracle", help="exact goal-absorption probabilities under vanilla dynamics")
    story_arg(p)

    p = sub.add_parser("lrrh", help="print the bundled Little Red Riding Hood story")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    seed = args.seed if getattr(args, "seed", None) is not None else _seed_default()
    try:
        if args.command == "validate":
            return cmd_validate(args.story)
        if args.command == "lrrh":
            sys.stdout.write(serialize_story(bundled_lrrh()).decode())
            return 0
        if args.command == "oracle":
            return cmd_oracle(args.story)
        if args.command == "play":
            if not sys.stdin.isatty():
                _err("play needs an interactive terminal")
                return 2
            return cmd_play(args.story, args.manager, seed=seed)
        managers = getattr(args, "managers", None)
        if args.command == "compare" and managers is not None and len(managers) < 2:
            parser.error("compare needs at least two --manager options")
        try:
            cfg = CliConfig(
                story_path=args.story,
                manager_name=getattr(args, "manager", "vanilla"),
                n_runs=args.runs,
                master_seed=seed,
                max_steps=args.max_steps,
                output_dir=args.out,
                snapshot_flag=not args.no_snapshots,
                report_format=args.format,
            )
        except ValueError as exc:
            parser.error(str(exc))
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_compare(cfg, managers or ["vanilla", "fairy", "mimesis"])
    except StoryError as exc:
        _err(str(exc))
        return 2
    except OSError as exc:
        _err(str(exc))
        return 2
    except InsError as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
