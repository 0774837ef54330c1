"""Sweep the chance of killing the wolf at the start and watch each manager's success rate.

The vanilla column should track the exact absorbing-chain value and the fairy
column stays at 1.0. Mimesis also stays at 1.0 until the kill becomes certain:
it cancels every proposal without changing probabilities, so at p = 1 each run
loops in place until it reaches the step cap.

    python3 scripts/sweep_kill_early.py --runs 2000 --steps 6
"""

from __future__ import annotations

import argparse

from ins_sim.analyze import aggregate, solve_absorption
from ins_sim.policy import MANAGERS, get_manager
from ins_sim.simulate import PlayerModel, run_batch
from ins_sim.storyio import bundled_lrrh


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--steps", type=int, default=6, help="grid points in [0, 1]")
    args = ap.parse_args()

    doc = bundled_lrrh()
    system, base = doc.to_system(), dict(doc.player_model().weights)
    start = system.initial
    arcs = dict(system.outgoing[start])
    kill = next(t for t, s2 in arcs.items() if s2 in system.problematic)
    other = next(t for t in arcs if t != kill)

    print(f"p({kill}),oracle," + ",".join(MANAGERS))
    for i in range(args.steps):
        q = i / (args.steps - 1)
        model = PlayerModel({**base, (start, kill): q, (start, other): 1.0 - q})
        x = solve_absorption(system, model).probabilities[start]
        rates = [
            float(aggregate(run_batch(system, get_manager(m), model, args.runs, args.seed, snapshots=False),
                            system).complete_rate)
            for m in MANAGERS
        ]
        print(f"{q:.2f},{x:.4f}," + ",".join(f"{r:.4f}" for r in rates))


if __name__ == "__main__":
    main()
