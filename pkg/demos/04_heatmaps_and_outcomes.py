#!/usr/bin/env python3
"""Summaries: where do defenders of BombsiteB stand, and how do retakes end?

Issues a partial query for two CTs holding BombsiteB, renders the positional
density as ASCII shading (and a PNG next to this script), then tallies round
outcomes for a retake-style query (bomb down, three attackers in the site).
"""

from pathlib import Path

import numpy as np

from statesearch import (
    EndReason,
    FilterSpec,
    QueryMode,
    QuerySpec,
    Side,
    heatmap,
    index_states,
    load_mesh_dir,
    outcome_table,
    parse_match,
    run_query,
)

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

meshes = load_mesh_dir(FIXTURES / "meshes")
matches = [parse_match(p) for p in sorted((FIXTURES / "matches").glob("*.json"))]
store = index_states(meshes, matches)
mesh = meshes["de_harbor"]
site_b = next(a for a in mesh.areas if mesh.place(a.place_id).name == "BombsiteB")

hold = QuerySpec(
    "de_harbor",
    [(Side.CT, site_b.center()), (Side.CT, site_b.center())],
    mode=QueryMode.PARTIAL,
)
refs = run_query(store, hold)
grid = heatmap(store, refs, Side.CT, (44, 20))
print(f"CT density for {len(refs)} 'two CTs in BombsiteB' states "
      f"({int(grid.counts.sum())} positions binned):")
shades = " .:-=+*#%@"
for row in grid.density[::-1]:
    print("  " + "".join(shades[min(int(v * (len(shades) - 1) + 0.5), len(shades) - 1)] for v in row))

try:
    from PIL import Image

    png = Path(__file__).with_suffix(".png")
    Image.fromarray((grid.density[::-1] * 255).astype(np.uint8), mode="L").save(png)
    print(f"(grayscale PNG written to {png.name})")
except ImportError:
    pass

retake = QuerySpec(
    "de_harbor",
    [(Side.T, site_b.center())] * 3,
    mode=QueryMode.PARTIAL,
    filters=FilterSpec(
        bomb_planted=True,
        end_reasons=frozenset(
            {EndReason.BOMB_EXPLODED, EndReason.BOMB_DEFUSED, EndReason.ELIMINATION_CT}
        ),
    ),
)
refs = run_query(store, retake)
table = outcome_table(store, refs)
print(f"\nretake situations (3 T in BombsiteB, bomb planted): "
      f"{table.total_rounds} unique rounds")
print(f"  T wins {table.t_wins}, CT wins {table.ct_wins}, "
      f"CT win rate {table.ct_win_rate if table.ct_win_rate is None else round(table.ct_win_rate, 3)}")
for reason, count in sorted(table.by_end_reason.items(), key=lambda kv: -kv[1]):
    print(f"  {reason.value}: {count}")
