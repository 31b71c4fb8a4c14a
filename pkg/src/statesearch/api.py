"""HTTP service over a built store: query, playback, events, heatmaps,
catalogs.

All endpoints are read-only and versioned under ``/v1/``; request and
response bodies are UTF-8 JSON and error bodies carry a machine-readable
``code`` plus ``message``. The store reference is swapped atomically on
re-ingest, so concurrent readers always see one consistent corpus.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .ingest import EventKind, Side
from .navmesh import mesh_to_doc
from .store import (
    QueryMode,
    QuerySpec,
    StateRef,
    StateStore,
    UnknownMapError,
    parse_query,
    run_query,
)
from .summarize import heatmap, heatmap_to_doc
from .winprob import WinProbModel, WinSeries, round_series

DEFAULT_PAGE_SIZE = 20
MAX_PAGE_SIZE = 200


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def create_app(store: StateStore, model: WinProbModel) -> FastAPI:
    app = FastAPI(title="statesearch", version="1")
    app.state.store = store
    app.state.model = model
    app.state.series_cache: dict[tuple[str, int], WinSeries] = {}

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "malformed_request", "message": str(exc.errors()[:3])},
        )

    @app.post("/v1/query")
    async def query(body: dict) -> dict:
        spec = _parse_spec(body)
        refs = _run(app.state.store, spec)
        page_size = _page_size(body)
        offset = _cursor_offset(body.get("cursor"), spec)
        page = refs[offset : offset + page_size]
        cards = [_result_card(app, ref) for ref in page]
        next_cursor = None
        if offset + page_size < len(refs):
            next_cursor = _encode_cursor(offset + page_size, spec)
        return {
            "total": len(refs),
            "results": cards,
            "next_cursor": next_cursor,
        }

    @app.get("/v1/rounds/{match_id}/{round_number}/frames")
    async def frames(match_id: str, round_number: int) -> dict:
        record = _round_record(app.state.store, match_id, round_number)
        return {
            "match_id": match_id,
            "round_number": round_number,
            "frames": [
                {
                    "t": f.t,
                    "bomb_planted": f.bomb_planted,
                    "players": [
                        {
                            "id": p.player_id,
                            "side": p.side.value,
                            "x": p.position[0],
                            "y": p.position[1],
                            "z": p.position[2],
                            "hp": p.hp,
                            "alive": p.alive,
                        }
                        for p in f.players
                    ],
                }
                for f in record.frames
            ],
        }

    @app.get("/v1/rounds/{match_id}/{round_number}/events")
    async def events(match_id: str, round_number: int) -> dict:
        record = _round_record(app.state.store, match_id, round_number)
        return {
            "match_id": match_id,
            "round_number": round_number,
            "kills": [_event_doc(e) for e in record.kills],
            "grenades": [_event_doc(e) for e in record.grenades],
            "damages": [_event_doc(e) for e in record.damages],
            "bomb_plants": [_event_doc(e) for e in record.bomb_plants],
        }

    @app.post("/v1/heatmap")
    async def heatmap_endpoint(body: dict) -> dict:
        spec = _parse_spec(body.get("query") or {})
        try:
            side = Side(body.get("side", "CT"))
        except ValueError:
            raise ApiError(400, "malformed_request", f"bad side {body.get('side')!r}")
        resolution = body.get("resolution", [64, 64])
        if (
            not isinstance(resolution, (list, tuple))
            or len(resolution) != 2
            or not all(isinstance(v, int) and v >= 1 for v in resolution)
        ):
            raise ApiError(400, "malformed_request", "resolution must be [nx, ny] >= 1")
        refs = _run(app.state.store, spec)
        grid = heatmap(
            app.state.store, refs, side, (resolution[0], resolution[1]), map_name=spec.map
        )
        return heatmap_to_doc(grid)

    @app.get("/v1/maps")
    async def maps() -> dict:
        store: StateStore = app.state.store
        return {
            "maps": [
                {
                    "name": name,
                    "states": store.map_states(name),
                    "places": [p.name for p in store.meshes[name].places],
                    "bounds": list(store.meshes[name].bounds()),
                }
                for name in store.maps()
            ]
        }

    @app.get("/v1/maps/{map_name}/mesh")
    async def mesh(map_name: str) -> dict:
        store: StateStore = app.state.store
        if map_name not in store.meshes:
            raise ApiError(404, "unknown_map", f"unknown map '{map_name}'")
        return mesh_to_doc(store.meshes[map_name])

    @app.get("/v1/teams")
    async def teams() -> dict:
        return {"teams": app.state.store.teams()}

    return app


def _parse_spec(body: dict) -> QuerySpec:
    if not isinstance(body, dict):
        raise ApiError(400, "malformed_request", "body must be a JSON object")
    doc = {k: v for k, v in body.items() if k in ("map", "mode", "positions", "filters", "k_nearest")}
    try:
        spec = parse_query(doc)
    except ValueError as exc:
        raise ApiError(400, "malformed_request", str(exc)) from None
    if spec.mode is QueryMode.FULL:
        for side in (Side.T, Side.CT):
            n = sum(1 for s, _ in spec.sketch if s is side)
            if n > 5:
                raise ApiError(
                    422,
                    "impossible_sketch",
                    f"{n} {side.value} players sketched; full queries allow at most 5 per side",
                )
    return spec


def _run(store: StateStore, spec: QuerySpec) -> list[StateRef]:
    try:
        return run_query(store, spec)
    except UnknownMapError as exc:
        raise ApiError(404, "unknown_map", str(exc)) from None
    except ValueError as exc:
        raise ApiError(400, "malformed_request", str(exc)) from None


def _round_record(store: StateStore, match_id: str, round_number: int):
    try:
        return store.round_record(match_id, round_number)
    except KeyError as exc:
        raise ApiError(404, "unknown_round", str(exc.args[0])) from None


def _result_card(app: FastAPI, ref: StateRef) -> dict:
    store: StateStore = app.state.store
    info = store.round_info(int(store._state_round[ref.row]))
    series = _series_for(app, ref.match_id, ref.round_number)
    return {
        "state_ref": {
            "map": ref.map,
            "match_id": ref.match_id,
            "round_number": ref.round_number,
            "t": ref.t,
        },
        "match_id": ref.match_id,
        "date": info.date,
        "competition_name": info.competition_name,
        "ct_team": info.ct_team,
        "t_team": info.t_team,
        "round_score": {"ct": info.score_ct, "t": info.score_t},
        "ct_buy": info.ct_buy.value,
        "t_buy": info.t_buy.value,
        "end_reason": info.end_reason.value,
        "winner": info.winner.value,
        "state_t": ref.t,
        "bomb_plant_t": info.bomb_plant_t,
        "win_series": {
            "points": [[t, p] for t, p in series.points],
            "bomb_plant_t": series.bomb_plant_t,
        },
    }


def _series_for(app: FastAPI, match_id: str, round_number: int) -> WinSeries:
    # Win series are computed lazily per round and cached; recomputing the
    # chart for every card in a large result set would dominate latency.
    key = (match_id, round_number)
    cache: dict = app.state.series_cache
    if key not in cache:
        record = app.state.store.round_record(match_id, round_number)
        cache[key] = round_series(app.state.model, record)
    return cache[key]


def _event_doc(e) -> dict:
    return {
        "kind": e.kind.value if isinstance(e.kind, EventKind) else str(e.kind),
        "t": e.t,
        "actor": e.actor_id,
        "victim": e.victim_id,
        "x": e.position[0],
        "y": e.position[1],
        "z": e.position[2],
    }


def _page_size(body: dict) -> int:
    size = body.get("page_size", DEFAULT_PAGE_SIZE)
    if not isinstance(size, int) or size < 1 or size > MAX_PAGE_SIZE:
        raise ApiError(
            400, "malformed_request", f"page_size must be in [1, {MAX_PAGE_SIZE}]"
        )
    return size


def _spec_fingerprint(spec: QuerySpec) -> str:
    payload = json.dumps(
        {
            "map": spec.map,
            "mode": spec.mode.value,
            "sketch": [[s.value, list(p)] for s, p in spec.sketch],
            "k": spec.k_nearest,
            "filters": repr(spec.filters),
        },
        sort_keys=True,
    )
    return hashlib.sha1(payload.encode()).hexdigest()[:12]


def _encode_cursor(offset: int, spec: QuerySpec) -> str:
    doc = {"o": offset, "q": _spec_fingerprint(spec)}
    return base64.urlsafe_b64encode(json.dumps(doc).encode()).decode()


def _cursor_offset(cursor: Any, spec: QuerySpec) -> int:
    if cursor is None:
        return 0
    if not isinstance(cursor, str):
        raise ApiError(400, "bad_cursor", "cursor must be a string")
    try:
        doc = json.loads(base64.urlsafe_b64decode(cursor.encode()).decode())
        offset = int(doc["o"])
        fingerprint = doc["q"]
    except (ValueError, KeyError, TypeError, binascii.Error) as exc:
        raise ApiError(400, "bad_cursor", f"undecodable cursor: {exc}") from None
    if fingerprint != _spec_fingerprint(spec) or offset < 0:
        raise ApiError(400, "bad_cursor", "cursor does not match this query")
    return offset
