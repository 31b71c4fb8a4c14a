#!/usr/bin/env python3
"""Regenerate the checked-in fixtures: two synthetic map meshes, a small
match corpus on each, and sample sketch files (one reproducing a known
state, one partial site-hold query). Deterministic: re-running must leave
the files byte-identical."""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from statesearch.ingest import render_match
from statesearch.navmesh import mesh_to_doc
from statesearch.synth import SynthConfig, grid_mesh, synth_generate

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

HARBOR_PLACES = [
    "BombsiteA",
    "BombsiteB",
    "CTSpawn",
    "TSpawn",
    "Mid",
    "Docks",
    "Warehouse",
    "Market",
    "Catwalk",
    "Tunnels",
    "Breakwater",
    "Crane",
]

QUARRY_PLACES = [
    "BombsiteA",
    "BombsiteB",
    "CTSpawn",
    "TSpawn",
    "Pit",
    "Conveyor",
    "Crusher",
    "Offices",
    "Ramp",
    "Gravel",
]

TEAMS = ["Astra", "Borealis", "Cinder", "Drift", "Emberfall", "Frostline"]


def build_meshes():
    harbor = grid_mesh(
        "de_harbor",
        HARBOR_PLACES,
        cols=4,
        seed=11,
        elevations={"Catwalk": 128.0, "Tunnels": -128.0},
        stacked={"Tunnels": "Mid"},
    )
    quarry = grid_mesh(
        "de_quarry",
        QUARRY_PLACES,
        cols=4,
        seed=23,
        elevations={"Offices": 112.0, "Pit": -96.0},
    )
    return harbor, quarry


def main() -> int:
    (FIXTURES / "meshes").mkdir(parents=True, exist_ok=True)
    (FIXTURES / "matches").mkdir(parents=True, exist_ok=True)
    (FIXTURES / "sketches").mkdir(parents=True, exist_ok=True)

    harbor, quarry = build_meshes()
    for mesh in (harbor, quarry):
        path = FIXTURES / "meshes" / f"{mesh.map_name}.json"
        path.write_text(json.dumps(mesh_to_doc(mesh), indent=2, sort_keys=True), encoding="utf-8")
        print(f"wrote {path}")

    config = SynthConfig(
        matches=4,
        rounds_per_match=16,
        frames_per_round=48,
        team_pool=TEAMS,
        meshes=[harbor, quarry],
    )
    matches = list(synth_generate(config, seed=7))
    for match in matches:
        path = FIXTURES / "matches" / f"{match.match_id}.json"
        path.write_text(json.dumps(render_match(match), sort_keys=True), encoding="utf-8")
        print(f"wrote {path} ({sum(len(r.frames) for r in match.rounds)} states)")

    # A full sketch reproducing one concrete indexed state (self-retrieval
    # demo), taken mid-round from the first harbor match.
    target = next(m for m in matches if m.map == "de_harbor")
    frame = target.rounds[4].frames[20]
    full_sketch = {
        "map": "de_harbor",
        "mode": "full",
        "positions": [
            {
                "side": p.side.value,
                "x": p.position[0],
                "y": p.position[1],
                "z": p.position[2],
            }
            for p in frame.players
            if p.alive
        ],
        "filters": {},
    }
    path = FIXTURES / "sketches" / "harbor_known_state.json"
    path.write_text(json.dumps(full_sketch, indent=2, sort_keys=True), encoding="utf-8")
    print(f"wrote {path} (match {target.match_id} round 5 t={frame.t})")

    # A partial site-hold query: two CTs holding BombsiteB on full buys.
    site_b = [a for a in harbor.areas if harbor.place(a.place_id).name == "BombsiteB"]
    a0, a1 = site_b[0], site_b[min(1, len(site_b) - 1)]
    partial_sketch = {
        "map": "de_harbor",
        "mode": "partial",
        "positions": [
            {"side": "CT", "x": a0.center()[0], "y": a0.center()[1], "z": a0.center()[2]},
            {"side": "CT", "x": a1.center()[0], "y": a1.center()[1], "z": a1.center()[2]},
        ],
        "filters": {"ct_buy": ["full_buy"]},
    }
    path = FIXTURES / "sketches" / "harbor_siteb_hold.json"
    path.write_text(json.dumps(partial_sketch, indent=2, sort_keys=True), encoding="utf-8")
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
