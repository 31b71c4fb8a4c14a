from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from statesearch.api import create_app
from statesearch.ingest import Side
from statesearch.store import QueryMode, QuerySpec, run_query
from statesearch.summarize import heatmap, heatmap_to_doc
from statesearch.winprob import train, training_pairs

from oracles import side_counts_oracle


@pytest.fixture(scope="module")
def model(small_store):
    return train(list(training_pairs(small_store)), seed=0)


@pytest.fixture(scope="module")
def client(small_store, model):
    return TestClient(create_app(small_store, model))


def _known_sketch(small_store, row=40):
    state = small_store.get_state(row)
    return state, [
        {"side": p.side.value, "x": p.position[0], "y": p.position[1], "z": p.position[2]}
        for p in state.players
        if p.alive
    ]


def test_query_full_returns_cards_with_rederivable_tokens(
    client, small_store, harbor_mesh
):
    state, positions = _known_sketch(small_store)
    body = {"map": "de_harbor", "mode": "full", "positions": positions}
    resp = client.post("/v1/query", json=body)
    assert resp.status_code == 200
    payload = resp.json()
    assert payload["total"] >= 1
    # Every returned card's state, refetched through the public frames
    # endpoint, must re-tokenize to the sketch's token.
    sketch = [(Side(p["side"]), (p["x"], p["y"], p["z"])) for p in positions]
    want_t = side_counts_oracle(harbor_mesh, [p[1] for p in sketch if p[0] is Side.T])
    want_ct = side_counts_oracle(harbor_mesh, [p[1] for p in sketch if p[0] is Side.CT])
    for card in payload["results"]:
        ref = card["state_ref"]
        frames = client.get(
            f"/v1/rounds/{ref['match_id']}/{ref['round_number']}/frames"
        ).json()["frames"]
        frame = next(f for f in frames if f["t"] == ref["t"])
        alive = [p for p in frame["players"] if p["alive"]]
        got_t = side_counts_oracle(
            harbor_mesh, [(p["x"], p["y"], p["z"]) for p in alive if p["side"] == "T"]
        )
        got_ct = side_counts_oracle(
            harbor_mesh, [(p["x"], p["y"], p["z"]) for p in alive if p["side"] == "CT"]
        )
        assert (got_t, got_ct) == (want_t, want_ct)


def test_query_card_fields_and_win_series(client, small_store):
    state, positions = _known_sketch(small_store, row=12)
    resp = client.post(
        "/v1/query", json={"map": "de_harbor", "mode": "full", "positions": positions}
    )
    card = resp.json()["results"][0]
    for key in (
        "match_id", "date", "competition_name", "round_score", "ct_buy", "t_buy",
        "end_reason", "winner", "state_t", "win_series", "bomb_plant_t",
    ):
        assert key in card
    points = card["win_series"]["points"]
    times = [t for t, _ in points]
    assert times == sorted(times)
    assert times[0] == 0.0
    assert all(0.0 < p < 1.0 for _, p in points)
    assert times[0] <= card["state_t"] <= times[-1]


def test_query_unknown_map_404(client):
    resp = client.post("/v1/query", json={"map": "de_nowhere", "positions": []})
    assert resp.status_code == 404
    assert resp.json()["code"] == "unknown_map"


def test_query_empty_result_is_200(client, harbor_mesh):
    x0, y0, x1, y1 = harbor_mesh.bounds()
    positions = [
        {"side": "T", "x": x0 + 1, "y": y0 + 1, "z": 500.0},
        {"side": "T", "x": x1 - 1, "y": y1 - 1, "z": 500.0},
        {"side": "CT", "x": x0 + 1, "y": y1 - 1, "z": -400.0},
    ]
    resp = client.post(
        "/v1/query", json={"map": "de_harbor", "mode": "full", "positions": positions}
    )
    assert resp.status_code == 200
    body = resp.json()
    if body["total"] == 0:
        assert body["results"] == [] and body["next_cursor"] is None


def test_query_impossible_sketch_422(client):
    positions = [{"side": "CT", "x": 0.0, "y": 0.0, "z": 0.0}] * 6
    resp = client.post(
        "/v1/query", json={"map": "de_harbor", "mode": "full", "positions": positions}
    )
    assert resp.status_code == 422
    assert resp.json()["code"] == "impossible_sketch"


def test_query_malformed_spec_400(client):
    resp = client.post("/v1/query", json={"map": "de_harbor"})
    assert resp.status_code == 400
    resp = client.post(
        "/v1/query",
        json={"map": "de_harbor", "positions": [], "filters": {"bogus": 1}},
    )
    assert resp.status_code == 400


def test_query_pagination_walk_reconstructs_everything(client, small_store):
    state, positions = _known_sketch(small_store, row=60)
    body = {
        "map": "de_harbor",
        "mode": "partial",
        "positions": positions[:2],
        "page_size": 7,
    }
    seen = []
    cursor = None
    total = None
    for _ in range(200):
        payload = dict(body)
        if cursor:
            payload["cursor"] = cursor
        resp = client.post("/v1/query", json=payload)
        assert resp.status_code == 200
        data = resp.json()
        total = data["total"]
        seen.extend(
            (c["state_ref"]["match_id"], c["state_ref"]["round_number"], c["state_ref"]["t"])
            for c in data["results"]
        )
        cursor = data["next_cursor"]
        if cursor is None:
            break
    assert total is not None and len(seen) == total
    assert len(set(seen)) == total
    spec = QuerySpec(
        map="de_harbor",
        sketch=[(Side(p["side"]), (p["x"], p["y"], p["z"])) for p in positions[:2]],
        mode=QueryMode.PARTIAL,
    )
    expected = [
        (r.match_id, r.round_number, r.t) for r in run_query(small_store, spec)
    ]
    assert seen == expected


def test_cursor_for_other_query_rejected(client, small_store):
    _, positions = _known_sketch(small_store, row=60)
    body = {"map": "de_harbor", "mode": "partial", "positions": positions[:2], "page_size": 5}
    cursor = client.post("/v1/query", json=body).json()["next_cursor"]
    other = dict(body)
    other["positions"] = positions[:1]
    resp = client.post("/v1/query", json={**other, "cursor": cursor})
    assert resp.status_code == 400
    assert resp.json()["code"] == "bad_cursor"


def test_identical_requests_identical_payloads(client, small_store):
    _, positions = _known_sketch(small_store, row=33)
    body = {"map": "de_harbor", "mode": "full", "positions": positions}
    a = client.post("/v1/query", json=body).json()
    b = client.post("/v1/query", json=body).json()
    assert a == b


def test_frames_endpoint_passthrough(client, small_store):
    ref = small_store.ref(0)
    record = small_store.round_record(ref.match_id, ref.round_number)
    resp = client.get(f"/v1/rounds/{ref.match_id}/{ref.round_number}/frames")
    assert resp.status_code == 200
    frames = resp.json()["frames"]
    assert len(frames) == len(record.frames)
    for payload, frame in zip(frames, record.frames):
        assert payload["t"] == frame.t
        assert payload["bomb_planted"] == frame.bomb_planted
        by_id = {p["id"]: p for p in payload["players"]}
        for p in frame.players:
            got = by_id[p.player_id]
            assert (got["x"], got["y"], got["z"]) == p.position
            assert got["hp"] == p.hp
            assert got["alive"] == p.alive


def test_frames_unknown_round_404(client, small_store):
    ref = small_store.ref(0)
    assert client.get(f"/v1/rounds/{ref.match_id}/999/frames").status_code == 404
    assert client.get("/v1/rounds/nope/1/frames").status_code == 404


def test_events_endpoint_counts_and_order(client, small_store):
    ref = small_store.ref(0)
    record = small_store.round_record(ref.match_id, ref.round_number)
    resp = client.get(f"/v1/rounds/{ref.match_id}/{ref.round_number}/events")
    assert resp.status_code == 200
    data = resp.json()
    assert len(data["kills"]) == len(record.kills)
    assert len(data["grenades"]) == len(record.grenades)
    assert len(data["damages"]) == len(record.damages)
    assert len(data["bomb_plants"]) == len(record.bomb_plants)
    for kind in ("kills", "grenades", "damages", "bomb_plants"):
        times = [e["t"] for e in data[kind]]
        assert times == sorted(times)


def test_heatmap_endpoint_matches_engine_composition(client, small_store):
    _, positions = _known_sketch(small_store, row=90)
    query = {"map": "de_harbor", "mode": "partial", "positions": positions[:3]}
    resp = client.post(
        "/v1/heatmap", json={"query": query, "side": "T", "resolution": [18, 10]}
    )
    assert resp.status_code == 200
    doc = resp.json()
    spec = QuerySpec(
        map="de_harbor",
        sketch=[(Side(p["side"]), (p["x"], p["y"], p["z"])) for p in positions[:3]],
        mode=QueryMode.PARTIAL,
    )
    refs = run_query(small_store, spec)
    expected = heatmap_to_doc(
        heatmap(small_store, refs, Side.T, (18, 10), map_name="de_harbor")
    )
    assert doc == expected
    again = client.post(
        "/v1/heatmap", json={"query": query, "side": "T", "resolution": [18, 10]}
    ).json()
    assert again == doc


def test_heatmap_empty_result_zero_grid(client):
    query = {
        "map": "de_quarry",
        "mode": "partial",
        "positions": [{"side": "T", "x": 0.0, "y": 0.0, "z": 0.0}] * 6,
    }
    resp = client.post(
        "/v1/heatmap", json={"query": query, "side": "CT", "resolution": [6, 4]}
    )
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["total_positions"] == 0
    assert all(v == 0.0 for v in doc["values"])


def test_maps_catalog(client, small_store):
    data = client.get("/v1/maps").json()
    names = [m["name"] for m in data["maps"]]
    assert names == ["de_harbor", "de_quarry"]
    for entry in data["maps"]:
        assert entry["states"] == small_store.map_states(entry["name"])
        assert entry["places"] == [
            p.name for p in small_store.meshes[entry["name"]].places
        ]


def test_mesh_endpoint(client, small_store):
    doc = client.get("/v1/maps/de_harbor/mesh").json()
    assert doc["map_name"] == "de_harbor"
    assert len(doc["areas"]) == len(small_store.meshes["de_harbor"].areas)
    assert client.get("/v1/maps/de_nowhere/mesh").status_code == 404


def test_teams_catalog_distinct(client, small_store):
    teams = client.get("/v1/teams").json()["teams"]
    assert teams == sorted(set(teams))
    expected = set()
    for r in range(small_store.num_rounds):
        info = small_store.round_info(r)
        expected.add(info.ct_team)
        expected.add(info.t_team)
    assert set(teams) == expected
