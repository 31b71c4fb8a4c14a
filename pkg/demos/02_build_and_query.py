#!/usr/bin/env python3
"""Index the fixture corpus and run the three retrieval modes.

Shows exact self-retrieval (a sketch lifted from an indexed state comes back
at rank 1), a partial site-hold query with a buy filter, and nearest-token
retrieval for a sketch whose exact token never occurs.
"""

from pathlib import Path

from statesearch import (
    FilterSpec,
    BuyType,
    QueryMode,
    QuerySpec,
    Side,
    index_states,
    load_mesh_dir,
    lookup_exact,
    lookup_nearest,
    lookup_partial,
    parse_match,
)

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

meshes = load_mesh_dir(FIXTURES / "meshes")
matches = [parse_match(p) for p in sorted((FIXTURES / "matches").glob("*.json"))]
store = index_states(meshes, matches)
print(f"indexed {store.num_states} states, {store.num_rounds} rounds, maps={store.maps()}")

mesh = meshes["de_harbor"]
target = next(m for m in matches if m.map == "de_harbor")
frame = target.rounds[4].frames[20]
sketch = [(p.side, p.position) for p in frame.players if p.alive]

print(f"\n-- exact: sketch copied from {target.match_id} round 5 t={frame.t}")
for rank, ref in enumerate(lookup_exact(store, mesh, QuerySpec("de_harbor", sketch)), 1):
    marker = "  <-- the sketched state itself" if (ref.match_id, ref.round_number, ref.t) == (
        target.match_id, 5, frame.t) else ""
    print(f"  #{rank} {ref.match_id} round {ref.round_number} t={ref.t}{marker}")

print("\n-- partial: >=2 CT in BombsiteB, CT on a full buy")
site_b = next(a for a in mesh.areas if mesh.place(a.place_id).name == "BombsiteB")
hold = QuerySpec(
    "de_harbor",
    [(Side.CT, site_b.center()), (Side.CT, site_b.center())],
    mode=QueryMode.PARTIAL,
    filters=FilterSpec(ct_buy=frozenset({BuyType.FULL_BUY})),
)
refs = lookup_partial(store, mesh, hold)
print(f"  {len(refs)} matching states; first three:")
for ref in refs[:3]:
    info = store.round_info(int(store.round_rows_for_states([ref.row])[0]))
    print(f"  {ref.match_id} round {ref.round_number} t={ref.t} "
          f"({info.ct_team} CT, {info.ct_buy.value})")

print("\n-- nearest: an unlikely 5-T stack in one place (token may not exist)")
stack = QuerySpec("de_harbor", [(Side.T, site_b.center())] * 5, k_nearest=5)
for rank, ref in enumerate(lookup_nearest(store, mesh, stack), 1):
    print(f"  #{rank} {ref.match_id} round {ref.round_number} t={ref.t} "
          f"token={store.token_string(ref.row)}")
