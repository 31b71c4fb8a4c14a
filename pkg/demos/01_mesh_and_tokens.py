#!/usr/bin/env python3
"""Meshes and tokens: how a continuous position becomes a place count.

Loads the de_harbor fixture mesh, locates a few points (including one off
the mesh and one in the stacked Mid/Tunnels block), tokenizes a toy state,
and shows the count-weighted Hamming distance between two tokens.
"""

from pathlib import Path

from statesearch import (
    GameState,
    PlayerSnapshot,
    Side,
    hamming_mod,
    load_navmesh,
    parse_token,
    tokenize_state,
)

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

mesh = load_navmesh(FIXTURES / "meshes" / "de_harbor.json")
print(f"{mesh.map_name}: {len(mesh.areas)} areas in {mesh.num_places} places")
print("token positions:", {p.token_position: p.name for p in mesh.places})

site_b = next(a for a in mesh.areas if mesh.place(a.place_id).name == "BombsiteB")
mid = next(a for a in mesh.areas if mesh.place(a.place_id).name == "Mid")

for label, point in [
    ("center of a BombsiteB area", site_b.center()),
    ("same (x, y) as Mid but 128 units down (Tunnels)", (mid.center()[0], mid.center()[1], -128.0)),
    ("a point far off the mesh (snaps to nearest area)", (99_999.0, 99_999.0, 0.0)),
]:
    area_id, place_id = mesh.locate(point)
    print(f"locate {label}: area {area_id} -> {mesh.place(place_id).name}")

players = [
    PlayerSnapshot("t0", Side.T, site_b.center(), 100, 100, 4500, 3, True),
    PlayerSnapshot("t1", Side.T, site_b.center(), 100, 100, 4000, 2, True),
    PlayerSnapshot("t2", Side.T, mid.center(), 100, 0, 2000, 1, True),
    PlayerSnapshot("ct0", Side.CT, mid.center(), 100, 100, 5000, 4, True),
    PlayerSnapshot("ct1", Side.CT, mid.center(), 0, 0, 0, 0, False),  # dead: not counted
]
state = GameState("de_harbor", ("demo", 1), 42.0, players, bomb_planted=False)
token = tokenize_state(mesh, state)
print("\ntoken for a 3T/2CT toy state (dead CT excluded):")
print(" ", token.canonical_string)

other = parse_token(token.canonical_string.replace("2", "1", 1))
print("distance after moving one T out of BombsiteB:", hamming_mod(token, other))
