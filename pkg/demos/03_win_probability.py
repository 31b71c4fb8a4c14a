#!/usr/bin/env python3
"""Train the win-probability baseline and chart one round in the terminal.

The round series is what result cards plot: P(CT wins) per second, with the
bomb plant marked. Kills show up as jumps because alive counts dominate the
fitted weights.
"""

from pathlib import Path

from statesearch import (
    index_states,
    load_mesh_dir,
    parse_match,
    round_series,
    train,
    training_pairs,
)

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

meshes = load_mesh_dir(FIXTURES / "meshes")
matches = [parse_match(p) for p in sorted((FIXTURES / "matches").glob("*.json"))]
store = index_states(meshes, matches)

model = train(training_pairs(store), seed=0)
meta = model.training_meta
print(f"trained on {meta['n_examples']} states in {meta['iterations']} Newton steps "
      f"(converged={meta['converged']})")
for name, weight in zip(model.feature_names, model.weights):
    print(f"  {name:>15}: {weight:+.6f}")

ref = store.ref(0)
planted = None
for row in range(store.num_states):
    r = store.ref(row)
    record = store.round_record(r.match_id, r.round_number)
    if record.bomb_plant_t is not None:
        ref, planted = r, record.bomb_plant_t
        break

record = store.round_record(ref.match_id, ref.round_number)
series = round_series(model, record)
print(f"\n{ref.match_id} round {ref.round_number} "
      f"(winner {record.winner.value}, {record.end_reason.value}, plant at {planted}s):")
bars = " ▁▂▃▄▅▆▇█"
line = "".join(bars[min(int(p * len(bars)), len(bars) - 1)] for _, p in series.points)
print(f"  P(CT) {line}")
marks = "".join("^" if t == int(planted) else " " for t, _ in series.points)
print(f"        {marks} plant")
print(f"  start {series.points[0][1]:.2f} -> end {series.points[-1][1]:.2f}")
