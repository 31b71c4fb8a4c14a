#!/usr/bin/env python3
"""Walk the HTTP API end to end without leaving the process.

Builds the fixture store, trains a model, mounts the FastAPI app on a test
client, and drives the same /v1/ endpoints the web client uses: catalog,
query with paging, frames/events playback payloads, heatmap.
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from statesearch import index_states, load_mesh_dir, parse_match, train, training_pairs
from statesearch.api import create_app

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

meshes = load_mesh_dir(FIXTURES / "meshes")
matches = [parse_match(p) for p in sorted((FIXTURES / "matches").glob("*.json"))]
store = index_states(meshes, matches)
model = train(training_pairs(store), seed=0)
client = TestClient(create_app(store, model))

print("GET /v1/maps ->", json.dumps(client.get("/v1/maps").json())[:120], "...")
print("GET /v1/teams ->", client.get("/v1/teams").json())

sketch = json.loads((FIXTURES / "sketches" / "harbor_siteb_hold.json").read_text())
body = {**sketch, "page_size": 5}
page = client.post("/v1/query", json=body).json()
print(f"\nPOST /v1/query (partial site hold) -> total={page['total']}, "
      f"{len(page['results'])} cards on page 1")
card = page["results"][0]
print(f"  first card: {card['match_id']} round {card['state_ref']['round_number']} "
      f"t={card['state_t']} | {card['ct_team']} vs {card['t_team']} | "
      f"{card['end_reason']} -> {card['winner']} | "
      f"{len(card['win_series']['points'])} win-series points")

page2 = client.post("/v1/query", json={**body, "cursor": page["next_cursor"]}).json()
print(f"  page 2 via cursor: {len(page2['results'])} cards")

ref = card["state_ref"]
frames = client.get(f"/v1/rounds/{ref['match_id']}/{ref['round_number']}/frames").json()
events = client.get(f"/v1/rounds/{ref['match_id']}/{ref['round_number']}/events").json()
print(f"\nplayback payloads: {len(frames['frames'])} frames, "
      f"{len(events['kills'])} kills, {len(events['grenades'])} grenades, "
      f"{len(events['bomb_plants'])} plants")

grid = client.post(
    "/v1/heatmap", json={"query": sketch, "side": "CT", "resolution": [24, 16]}
).json()
print(f"heatmap: {grid['nx']}x{grid['ny']} grid over {grid['total_positions']} positions")
