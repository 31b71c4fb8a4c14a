"""Token-indexed state corpus: exact, partial, and nearest retrieval.

The store keeps every ingested frame in columnar form, clustered by
(map, token): states are ordered by (map, match_id, round_number, t) and a
per-map index maps each canonical token string to the chronologically ordered
rows carrying it. Per-place count columns support partial ("at least X
players of side S in place P") and nearest-token queries without touching
the token index.

Build requires exclusive access; a built store is immutable and safe for any
number of concurrent readers. Re-ingest is done by building a new store and
swapping the reference.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import (
    BuyType,
    EndReason,
    EventKind,
    EventRecord,
    GameState,
    MatchRecord,
    PlayerSnapshot,
    RoundRecord,
    Side,
)
from .navmesh import NavMesh
from .tokenizer import render_counts

#: Result sets larger than this are returned in chronological order instead
#: of closest-player order; exhaustive geometric ranking of huge sets is not
#: worth its cost.
RANK_CAP_DEFAULT = 10_000

_SIDE_CODE = {Side.T: 0, Side.CT: 1}
_BUY_ORDER = tuple(BuyType)
_REASON_ORDER = tuple(EndReason)
_BUY_CODE = {b: i for i, b in enumerate(_BUY_ORDER)}
_REASON_CODE = {r: i for i, r in enumerate(_REASON_ORDER)}


class UnknownMapError(ValueError):
    """Raised when a query or match names a map with no loaded mesh/states."""


class QueryMode(str, Enum):
    FULL = "full"
    PARTIAL = "partial"


@dataclass(frozen=True)
class StateRef:
    """Stable handle to one indexed state."""

    row: int
    map: str
    match_id: str
    round_number: int
    t: float


@dataclass(frozen=True)
class RoundInfo:
    """Round metadata as carried on result cards (no frames or events)."""

    match_id: str
    round_number: int
    date: str
    competition_name: str
    ct_team: str
    t_team: str
    winner: Side
    end_reason: EndReason
    ct_buy: BuyType
    t_buy: BuyType
    score_ct: int
    score_t: int
    bomb_plant_t: float | None


@dataclass
class FilterSpec:
    """Contextual constraints applied on top of spatial matching.

    An empty FilterSpec matches everything. ``team`` matches rounds where the
    named team plays either side unless ``team_side`` narrows it. Grenade
    minimums count the grenades carried by the side's living players at the
    state's moment.
    """

    team: str | None = None
    team_side: Side | None = None
    ct_buy: frozenset[BuyType] | None = None
    t_buy: frozenset[BuyType] | None = None
    min_grenades_ct: int | None = None
    min_grenades_t: int | None = None
    end_reasons: frozenset[EndReason] | None = None
    bomb_planted: bool | None = None
    date_range: tuple[str, str] | None = None

    def is_empty(self) -> bool:
        return all(
            getattr(self, f) is None
            for f in (
                "team",
                "ct_buy",
                "t_buy",
                "min_grenades_ct",
                "min_grenades_t",
                "end_reasons",
                "bomb_planted",
                "date_range",
            )
        )


@dataclass
class QuerySpec:
    """One sketched query: side-tagged positions, mode, filters.

    Full mode enforces token equality over all places for both sides;
    partial mode enforces at-least counts only for sketched (side, place)
    pairs. ``k_nearest`` switches full-mode retrieval to nearest-token.
    """

    map: str
    sketch: list[tuple[Side, tuple[float, float, float]]]
    mode: QueryMode = QueryMode.FULL
    filters: FilterSpec = field(default_factory=FilterSpec)
    k_nearest: int | None = None


class StateStore:
    """Immutable indexed corpus. Build via :func:`index_states`."""

    def __init__(self, meshes: dict[str, NavMesh], parts: dict):
        self.meshes = meshes
        # matches
        self._match_ids: list[str] = parts["match_ids"]
        self._match_date = parts["match_date"]  # datetime64[D] (M,)
        self._match_comp: list[str] = parts["match_comp"]
        self._match_map: list[str] = parts["match_map"]
        self._teams: list[str] = parts["teams"]
        self._match_team_ct: np.ndarray = parts["match_team_ct"]  # int32 codes
        self._match_team_t: np.ndarray = parts["match_team_t"]
        # rounds
        self._round_match: np.ndarray = parts["round_match"]
        self._round_number: np.ndarray = parts["round_number"]
        self._round_winner: np.ndarray = parts["round_winner"]
        self._round_reason: np.ndarray = parts["round_reason"]
        self._round_ct_buy: np.ndarray = parts["round_ct_buy"]
        self._round_t_buy: np.ndarray = parts["round_t_buy"]
        self._round_score_ct: np.ndarray = parts["round_score_ct"]
        self._round_score_t: np.ndarray = parts["round_score_t"]
        self._round_plant_t: np.ndarray = parts["round_plant_t"]  # nan when none
        self._round_ct_team: np.ndarray = parts["round_ct_team"]
        self._round_t_team: np.ndarray = parts["round_t_team"]
        self._rosters: list[list[str]] = parts["rosters"]
        # events (columnar, sorted by (round, t, kind))
        self._ev_round: np.ndarray = parts["ev_round"]
        self._ev_kind: np.ndarray = parts["ev_kind"]
        self._ev_t: np.ndarray = parts["ev_t"]
        self._ev_actor: np.ndarray = parts["ev_actor"]
        self._ev_victim: np.ndarray = parts["ev_victim"]
        self._ev_pos: np.ndarray = parts["ev_pos"]
        # states
        self._state_round: np.ndarray = parts["state_round"]
        self._state_t: np.ndarray = parts["state_t"]
        self._bomb_planted: np.ndarray = parts["bomb_planted"]
        self._pos: np.ndarray = parts["pos"]  # (N, 10, 3) float64
        self._side: np.ndarray = parts["side"]  # (N, 10) int8, -1 = empty slot
        self._alive: np.ndarray = parts["alive"]  # (N, 10) bool
        self._hp: np.ndarray = parts["hp"]
        self._armor: np.ndarray = parts["armor"]
        self._equip: np.ndarray = parts["equip"]
        self._nades: np.ndarray = parts["nades"]

        self._team_code = {t: i for i, t in enumerate(self._teams)}
        self._match_row = {mid: i for i, mid in enumerate(self._match_ids)}
        present = self._side >= 0
        t_mask = present & (self._side == 0) & self._alive
        ct_mask = present & (self._side == 1) & self._alive
        self._nades_t = (self._nades * t_mask).sum(axis=1).astype(np.int16)
        self._nades_ct = (self._nades * ct_mask).sum(axis=1).astype(np.int16)

        self._map_slice: dict[str, tuple[int, int]] = {}
        self._counts: dict[str, np.ndarray] = {}
        self._token_index: dict[str, dict[str, np.ndarray]] = {}
        self._round_state_lo: np.ndarray | None = None
        self._round_state_hi: np.ndarray | None = None
        self._build_token_structures(parts.get("counts_by_map"))

    # -- construction helpers -------------------------------------------------

    def _build_token_structures(self, counts_by_map: dict[str, np.ndarray] | None) -> None:
        n = len(self._state_t)
        self._round_state_lo = np.searchsorted(
            self._state_round, np.arange(len(self._round_match))
        ).astype(np.int64)
        self._round_state_hi = np.searchsorted(
            self._state_round, np.arange(len(self._round_match)), side="right"
        ).astype(np.int64)

        map_order = {name: i for i, name in enumerate(sorted(self.meshes))}
        match_map_code = np.array([map_order[m] for m in self._match_map], dtype=np.int32)
        state_map_code = (
            match_map_code[self._round_match[self._state_round]]
            if n
            else np.zeros(0, dtype=np.int32)
        )
        for map_name in sorted(self.meshes):
            rows = np.flatnonzero(state_map_code == map_order[map_name])
            if rows.size == 0:
                self._map_slice[map_name] = (0, 0)
                mesh = self.meshes[map_name]
                self._counts[map_name] = np.zeros((0, 2 * mesh.num_places), dtype=np.int16)
                self._token_index[map_name] = {}
                continue
            lo, hi = int(rows[0]), int(rows[-1]) + 1
            if hi - lo != rows.size:
                raise AssertionError("states of one map are not contiguous")
            self._map_slice[map_name] = (lo, hi)
            mesh = self.meshes[map_name]
            if counts_by_map is not None and map_name in counts_by_map:
                self._counts[map_name] = counts_by_map[map_name]
            else:
                self._counts[map_name] = self._tokenize_slice(mesh, lo, hi)
            self._token_index[map_name] = _group_tokens(self._counts[map_name], lo)

    def _tokenize_slice(self, mesh: NavMesh, lo: int, hi: int) -> np.ndarray:
        n = hi - lo
        P = mesh.num_places
        mask = self._alive[lo:hi] & (self._side[lo:hi] >= 0)
        rows, slots = np.nonzero(mask)
        if rows.size == 0:
            return np.zeros((n, 2 * P), dtype=np.int16)
        pts = self._pos[lo:hi][rows, slots]
        sides = self._side[lo:hi][rows, slots].astype(np.int64)
        places = mesh.locate_places(pts)
        key = (rows * 2 + sides) * P + places
        counts = np.bincount(key, minlength=n * 2 * P)
        return counts.reshape(n, 2 * P).astype(np.int16)

    # -- basic accessors -------------------------------------------------------

    @property
    def num_states(self) -> int:
        return len(self._state_t)

    @property
    def num_rounds(self) -> int:
        return len(self._round_match)

    @property
    def num_matches(self) -> int:
        return len(self._match_ids)

    def maps(self) -> list[str]:
        return sorted(self.meshes)

    def teams(self) -> list[str]:
        used = set(self._round_ct_team.tolist()) | set(self._round_t_team.tolist())
        return sorted(self._teams[i] for i in used)

    def map_states(self, map_name: str) -> int:
        lo, hi = self._require_map(map_name)
        return hi - lo

    def ref(self, row: int) -> StateRef:
        r = int(self._state_round[row])
        m = int(self._round_match[r])
        return StateRef(
            row=int(row),
            map=self._match_map[m],
            match_id=self._match_ids[m],
            round_number=int(self._round_number[r]),
            t=float(self._state_t[row]),
        )

    def refs(self, rows: Iterable[int]) -> list[StateRef]:
        return [self.ref(r) for r in rows]

    def token_string(self, row: int) -> str:
        r = int(self._state_round[row])
        map_name = self._match_map[int(self._round_match[r])]
        lo, _ = self._map_slice[map_name]
        return render_counts(self._counts[map_name][row - lo])

    def alive_positions(self, rows: np.ndarray, side: Side) -> np.ndarray:
        """(x, y, z) of every alive player of ``side`` across the given rows."""
        rows = np.asarray(rows, dtype=np.int64)
        mask = self._alive[rows] & (self._side[rows] == _SIDE_CODE[side])
        return self._pos[rows][mask]

    def round_row(self, match_id: str, round_number: int) -> int:
        if match_id not in self._match_row:
            raise KeyError(f"unknown match '{match_id}'")
        m = self._match_row[match_id]
        sel = np.flatnonzero(
            (self._round_match == m) & (self._round_number == round_number)
        )
        if sel.size == 0:
            raise KeyError(f"match '{match_id}' has no round {round_number}")
        return int(sel[0])

    def round_info(self, round_row: int) -> RoundInfo:
        m = int(self._round_match[round_row])
        plant = float(self._round_plant_t[round_row])
        return RoundInfo(
            match_id=self._match_ids[m],
            round_number=int(self._round_number[round_row]),
            date=str(self._match_date[m]),
            competition_name=self._match_comp[m],
            ct_team=self._teams[int(self._round_ct_team[round_row])],
            t_team=self._teams[int(self._round_t_team[round_row])],
            winner=Side.CT if self._round_winner[round_row] else Side.T,
            end_reason=_REASON_ORDER[int(self._round_reason[round_row])],
            ct_buy=_BUY_ORDER[int(self._round_ct_buy[round_row])],
            t_buy=_BUY_ORDER[int(self._round_t_buy[round_row])],
            score_ct=int(self._round_score_ct[round_row]),
            score_t=int(self._round_score_t[round_row]),
            bomb_plant_t=None if np.isnan(plant) else plant,
        )

    def get_state(self, row: int) -> GameState:
        r = int(self._state_round[row])
        m = int(self._round_match[r])
        roster = self._rosters[r]
        players = []
        for slot, pid in enumerate(roster):
            code = int(self._side[row, slot])
            if code < 0:
                continue
            players.append(
                PlayerSnapshot(
                    player_id=pid,
                    side=Side.T if code == 0 else Side.CT,
                    position=tuple(float(c) for c in self._pos[row, slot]),
                    hp=int(self._hp[row, slot]),
                    armor=int(self._armor[row, slot]),
                    equipment_value=int(self._equip[row, slot]),
                    grenade_count=int(self._nades[row, slot]),
                    alive=bool(self._alive[row, slot]),
                )
            )
        return GameState(
            map=self._match_map[m],
            round_ref=(self._match_ids[m], int(self._round_number[r])),
            t=float(self._state_t[row]),
            players=players,
            bomb_planted=bool(self._bomb_planted[row]),
        )

    def round_events(self, round_row: int) -> dict[EventKind, list[EventRecord]]:
        lo = int(np.searchsorted(self._ev_round, round_row))
        hi = int(np.searchsorted(self._ev_round, round_row, side="right"))
        roster = self._rosters[round_row]
        out: dict[EventKind, list[EventRecord]] = {k: [] for k in EventKind}
        for i in range(lo, hi):
            kind = tuple(EventKind)[int(self._ev_kind[i])]
            victim = int(self._ev_victim[i])
            out[kind].append(
                EventRecord(
                    kind=kind,
                    t=float(self._ev_t[i]),
                    actor_id=roster[int(self._ev_actor[i])],
                    victim_id=roster[victim] if victim >= 0 else None,
                    position=tuple(float(c) for c in self._ev_pos[i]),
                )
            )
        for evs in out.values():
            evs.sort(key=lambda e: e.t)
        return out

    def round_record(self, match_id: str, round_number: int) -> RoundRecord:
        """Reconstruct a full RoundRecord, frames and events included."""
        r = self.round_row(match_id, round_number)
        info = self.round_info(r)
        lo = int(self._round_state_lo[r])
        hi = int(self._round_state_hi[r])
        frames = [self.get_state(row) for row in range(lo, hi)]
        events = self.round_events(r)
        return RoundRecord(
            match_id=match_id,
            round_number=round_number,
            winner=info.winner,
            end_reason=info.end_reason,
            ct_buy=info.ct_buy,
            t_buy=info.t_buy,
            score_ct=info.score_ct,
            score_t=info.score_t,
            bomb_plant_t=info.bomb_plant_t,
            frames=frames,
            kills=events[EventKind.KILL],
            grenades=events[EventKind.GRENADE],
            damages=events[EventKind.DAMAGE],
            bomb_plants=events[EventKind.BOMB_PLANT],
        )

    def round_rows_for_states(self, rows: Iterable[int]) -> np.ndarray:
        return self._state_round[np.asarray(list(rows), dtype=np.int64)]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.num_states).encode())
        for name in sorted(self._counts):
            h.update(name.encode())
            h.update(self._counts[name].tobytes())
        h.update(self._round_winner.tobytes())
        return h.hexdigest()[:16]

    # -- filtering and ranking -------------------------------------------------

    def _require_map(self, map_name: str) -> tuple[int, int]:
        if map_name not in self._map_slice:
            raise UnknownMapError(f"unknown map '{map_name}'")
        return self._map_slice[map_name]

    def _filter_mask(self, rows: np.ndarray, f: FilterSpec | None) -> np.ndarray:
        m = np.ones(rows.size, dtype=bool)
        if f is None or f.is_empty():
            return m
        rounds = self._state_round[rows]
        if f.team is not None:
            code = self._team_code.get(f.team, -2)
            ct = self._round_ct_team[rounds]
            tt = self._round_t_team[rounds]
            if f.team_side is Side.CT:
                m &= ct == code
            elif f.team_side is Side.T:
                m &= tt == code
            else:
                m &= (ct == code) | (tt == code)
        if f.ct_buy is not None:
            m &= np.isin(self._round_ct_buy[rounds], [_BUY_CODE[b] for b in f.ct_buy])
        if f.t_buy is not None:
            m &= np.isin(self._round_t_buy[rounds], [_BUY_CODE[b] for b in f.t_buy])
        if f.min_grenades_ct is not None:
            m &= self._nades_ct[rows] >= f.min_grenades_ct
        if f.min_grenades_t is not None:
            m &= self._nades_t[rows] >= f.min_grenades_t
        if f.end_reasons is not None:
            m &= np.isin(self._round_reason[rounds], [_REASON_CODE[r] for r in f.end_reasons])
        if f.bomb_planted is not None:
            m &= self._bomb_planted[rows] == f.bomb_planted
        if f.date_range is not None:
            d0 = np.datetime64(f.date_range[0])
            d1 = np.datetime64(f.date_range[1])
            dates = self._match_date[self._round_match[rounds]]
            m &= (dates >= d0) & (dates <= d1)
        return m

    def _sketch_distances(
        self, rows: np.ndarray, sketch: Sequence[tuple[Side, tuple[float, float, float]]]
    ) -> np.ndarray:
        """Directed closest-player distance from the sketch into each state.

        Sketch players whose side has nobody alive in a candidate contribute
        +inf, pushing that candidate behind every fully matched one.
        """
        total = np.zeros(rows.size, dtype=np.float64)
        pos = self._pos[rows]
        side = self._side[rows]
        alive = self._alive[rows]
        for side_enum, code in _SIDE_CODE.items():
            q = np.asarray(
                [p for s, p in sketch if s is side_enum], dtype=np.float64
            )
            if q.size == 0:
                continue
            ok = alive & (side == code)
            diff = pos[:, None, :, :] - q[None, :, None, :]
            dist = np.sqrt((diff * diff).sum(axis=3))
            dist = np.where(ok[:, None, :], dist, np.inf)
            total += dist.min(axis=2).sum(axis=1)
        return total

    def _rank(
        self,
        rows: np.ndarray,
        sketch: Sequence[tuple[Side, tuple[float, float, float]]],
        cap: int,
    ) -> np.ndarray:
        if rows.size == 0 or rows.size > cap or not sketch:
            return rows  # chronological: rows are already in (match, round, t) order
        order = np.argsort(self._sketch_distances(rows, sketch), kind="stable")
        return rows[order]


def _group_tokens(counts: np.ndarray, lo: int) -> dict[str, np.ndarray]:
    """Group a count matrix into canonical-token -> ascending global rows."""
    if counts.shape[0] == 0:
        return {}
    unique, inverse = np.unique(counts, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    sizes = np.bincount(inverse, minlength=unique.shape[0])
    bounds = np.cumsum(sizes)
    index: dict[str, np.ndarray] = {}
    start = 0
    for ui in range(unique.shape[0]):
        end = int(bounds[ui])
        index[render_counts(unique[ui])] = order[start:end] + lo
        start = end
    return index


def sketch_counts(
    mesh: NavMesh, sketch: Sequence[tuple[Side, tuple[float, float, float]]]
) -> np.ndarray:
    """Per-side per-place counts of a sketch, T half then CT half."""
    P = mesh.num_places
    out = np.zeros(2 * P, dtype=np.int64)
    for side_enum, code in _SIDE_CODE.items():
        pts = np.asarray([p for s, p in sketch if s is side_enum], dtype=np.float64)
        if pts.size == 0:
            continue
        places = mesh.locate_places(pts.reshape(-1, 3))
        out[code * P : (code + 1) * P] = np.bincount(places, minlength=P)
    return out


# -- building ------------------------------------------------------------------


def index_states(
    meshes: NavMesh | Iterable[NavMesh] | Mapping[str, NavMesh],
    matches: Iterable[MatchRecord],
    diagnostics: list[str] | None = None,
) -> StateStore:
    """Tokenize and index every frame of the given matches.

    ``matches`` may be a generator; it is consumed once. Rounds that fail
    validation are skipped with a diagnostic; a match on a map with no loaded
    mesh raises :class:`UnknownMapError`.
    """
    mesh_map = _normalize_meshes(meshes)
    per_match: dict[tuple[str, str], dict] = {}
    for match in matches:
        if match.map not in mesh_map:
            raise UnknownMapError(f"no mesh loaded for map '{match.map}'")
        key = (match.map, match.match_id)
        if key in per_match or any(k[1] == match.match_id for k in per_match):
            if diagnostics is not None:
                diagnostics.append(f"duplicate match id '{match.match_id}' skipped")
            continue
        per_match[key] = _match_block(match, diagnostics)

    parts = _assemble(mesh_map, per_match)
    return StateStore(mesh_map, parts)


def _normalize_meshes(
    meshes: NavMesh | Iterable[NavMesh] | Mapping[str, NavMesh],
) -> dict[str, NavMesh]:
    if isinstance(meshes, NavMesh):
        return {meshes.map_name: meshes}
    if isinstance(meshes, Mapping):
        return dict(meshes)
    return {m.map_name: m for m in meshes}


def _match_block(match: MatchRecord, diagnostics: list[str] | None) -> dict:
    rounds = []
    for rnd in match.rounds:
        try:
            rounds.append(_round_block(match, rnd))
        except ValueError as exc:
            if diagnostics is not None:
                diagnostics.append(
                    f"match '{match.match_id}' round {rnd.round_number}: "
                    f"not indexed ({exc})"
                )
    return {
        "match_id": match.match_id,
        "date": match.date,
        "competition": match.competition_name,
        "map": match.map,
        "team_ct_start": match.team_ct_start,
        "team_t_start": match.team_t_start,
        "rounds": rounds,
    }


def _round_block(match: MatchRecord, rnd: RoundRecord) -> dict:
    frames = rnd.frames
    if not frames:
        raise ValueError("round has no frames")
    roster = [p.player_id for p in frames[0].players]
    if len(roster) > 10 or len(set(roster)) != len(roster):
        raise ValueError("invalid roster")
    slot_of = {pid: i for i, pid in enumerate(roster)}
    nf = len(frames)

    t = np.empty(nf)
    bomb = np.empty(nf, dtype=bool)
    pos = np.zeros((nf, 10, 3))
    side = np.full((nf, 10), -1, dtype=np.int8)
    alive = np.zeros((nf, 10), dtype=bool)
    hp = np.zeros((nf, 10), dtype=np.int16)
    armor = np.zeros((nf, 10), dtype=np.int16)
    equip = np.zeros((nf, 10), dtype=np.int32)
    nades = np.zeros((nf, 10), dtype=np.int8)

    ordered = True
    for fi, frame in enumerate(frames):
        if frame.map != match.map:
            raise ValueError(f"frame map '{frame.map}' differs from match map")
        t[fi] = frame.t
        bomb[fi] = frame.bomb_planted
        players = frame.players
        if ordered and [p.player_id for p in players] != roster:
            ordered = False
        if not ordered:
            if {p.player_id for p in players} != set(roster):
                raise ValueError("player roster changed mid-round")
            players = sorted(players, key=lambda p: slot_of[p.player_id])
        row_pos = [p.position for p in players]
        pos[fi, : len(players)] = row_pos
        for j, p in enumerate(players):
            side[fi, j] = _SIDE_CODE[p.side]
            alive[fi, j] = p.alive
            hp[fi, j] = p.hp
            armor[fi, j] = p.armor
            equip[fi, j] = p.equipment_value
            nades[fi, j] = p.grenade_count

    if nf > 1 and not (np.diff(t) > 0).all():
        raise ValueError("non-monotonic frame times")
    if (alive != (hp > 0)).any():
        raise ValueError("alive flag inconsistent with hp")
    t_count = ((side == 0).sum(axis=1)).max(initial=0)
    ct_count = ((side == 1).sum(axis=1)).max(initial=0)
    if t_count > 5 or ct_count > 5:
        raise ValueError("more than 5 players on one side")

    events = []
    for ev_list in (rnd.kills, rnd.grenades, rnd.damages, rnd.bomb_plants):
        for e in ev_list:
            if e.actor_id not in slot_of or (e.victim_id is not None and e.victim_id not in slot_of):
                raise ValueError(f"{e.kind.value} event names a player outside the roster")
            events.append(e)

    return {
        "number": rnd.round_number,
        "winner": 1 if rnd.winner is Side.CT else 0,
        "reason": _REASON_CODE[rnd.end_reason],
        "ct_buy": _BUY_CODE[rnd.ct_buy],
        "t_buy": _BUY_CODE[rnd.t_buy],
        "score_ct": rnd.score_ct,
        "score_t": rnd.score_t,
        "plant_t": np.nan if rnd.bomb_plant_t is None else float(rnd.bomb_plant_t),
        "roster": roster,
        "slot_of": slot_of,
        "events": events,
        "t": t,
        "bomb": bomb,
        "pos": pos,
        "side": side,
        "alive": alive,
        "hp": hp,
        "armor": armor,
        "equip": equip,
        "nades": nades,
    }


def _assemble(mesh_map: dict[str, NavMesh], per_match: dict[tuple[str, str], dict]) -> dict:
    match_ids: list[str] = []
    match_date: list[np.datetime64] = []
    match_comp: list[str] = []
    match_map: list[str] = []
    team_names: list[str] = []
    team_code: dict[str, int] = {}
    match_team_ct: list[int] = []
    match_team_t: list[int] = []

    def code_for(team: str) -> int:
        if team not in team_code:
            team_code[team] = len(team_names)
            team_names.append(team)
        return team_code[team]

    round_cols: dict[str, list] = {
        k: []
        for k in (
            "match",
            "number",
            "winner",
            "reason",
            "ct_buy",
            "t_buy",
            "score_ct",
            "score_t",
            "plant_t",
            "ct_team",
            "t_team",
        )
    }
    rosters: list[list[str]] = []
    ev_cols: dict[str, list] = {k: [] for k in ("round", "kind", "t", "actor", "victim", "pos")}
    state_blocks: dict[str, list[np.ndarray]] = {
        k: [] for k in ("round", "t", "bomb", "pos", "side", "alive", "hp", "armor", "equip", "nades")
    }
    kind_code = {k: i for i, k in enumerate(EventKind)}

    for key in sorted(per_match):
        block = per_match[key]
        mi = len(match_ids)
        match_ids.append(block["match_id"])
        match_date.append(np.datetime64(block["date"]))
        match_comp.append(block["competition"])
        match_map.append(block["map"])
        ct_start = code_for(block["team_ct_start"])
        t_start = code_for(block["team_t_start"])
        match_team_ct.append(ct_start)
        match_team_t.append(t_start)
        for rb in block["rounds"]:
            ri = len(rosters)
            swap = ((rb["number"] - 1) // 15) % 2 == 1
            round_cols["match"].append(mi)
            round_cols["number"].append(rb["number"])
            round_cols["winner"].append(rb["winner"])
            round_cols["reason"].append(rb["reason"])
            round_cols["ct_buy"].append(rb["ct_buy"])
            round_cols["t_buy"].append(rb["t_buy"])
            round_cols["score_ct"].append(rb["score_ct"])
            round_cols["score_t"].append(rb["score_t"])
            round_cols["plant_t"].append(rb["plant_t"])
            round_cols["ct_team"].append(t_start if swap else ct_start)
            round_cols["t_team"].append(ct_start if swap else t_start)
            rosters.append(rb["roster"])
            slot_of = rb["slot_of"]
            for e in sorted(rb["events"], key=lambda e: (e.t, e.kind.value)):
                ev_cols["round"].append(ri)
                ev_cols["kind"].append(kind_code[e.kind])
                ev_cols["t"].append(e.t)
                ev_cols["actor"].append(slot_of[e.actor_id])
                ev_cols["victim"].append(-1 if e.victim_id is None else slot_of[e.victim_id])
                ev_cols["pos"].append(e.position)
            nf = len(rb["t"])
            state_blocks["round"].append(np.full(nf, ri, dtype=np.int32))
            state_blocks["t"].append(rb["t"])
            state_blocks["bomb"].append(rb["bomb"])
            state_blocks["pos"].append(rb["pos"])
            state_blocks["side"].append(rb["side"])
            state_blocks["alive"].append(rb["alive"])
            state_blocks["hp"].append(rb["hp"])
            state_blocks["armor"].append(rb["armor"])
            state_blocks["equip"].append(rb["equip"])
            state_blocks["nades"].append(rb["nades"])

    def cat(name: str, dtype=None, width: tuple[int, ...] = ()):
        blocks = state_blocks[name]
        if not blocks:
            shape = (0, *width)
            return np.zeros(shape, dtype=dtype)
        return np.concatenate(blocks, axis=0)

    return {
        "match_ids": match_ids,
        "match_date": np.array(match_date, dtype="datetime64[D]")
        if match_date
        else np.zeros(0, dtype="datetime64[D]"),
        "match_comp": match_comp,
        "match_map": match_map,
        "teams": team_names,
        "match_team_ct": np.array(match_team_ct, dtype=np.int32),
        "match_team_t": np.array(match_team_t, dtype=np.int32),
        "round_match": np.array(round_cols["match"], dtype=np.int32),
        "round_number": np.array(round_cols["number"], dtype=np.int16),
        "round_winner": np.array(round_cols["winner"], dtype=np.int8),
        "round_reason": np.array(round_cols["reason"], dtype=np.int8),
        "round_ct_buy": np.array(round_cols["ct_buy"], dtype=np.int8),
        "round_t_buy": np.array(round_cols["t_buy"], dtype=np.int8),
        "round_score_ct": np.array(round_cols["score_ct"], dtype=np.int16),
        "round_score_t": np.array(round_cols["score_t"], dtype=np.int16),
        "round_plant_t": np.array(round_cols["plant_t"], dtype=np.float64),
        "round_ct_team": np.array(round_cols["ct_team"], dtype=np.int32),
        "round_t_team": np.array(round_cols["t_team"], dtype=np.int32),
        "rosters": rosters,
        "ev_round": np.array(ev_cols["round"], dtype=np.int32),
        "ev_kind": np.array(ev_cols["kind"], dtype=np.int8),
        "ev_t": np.array(ev_cols["t"], dtype=np.float64),
        "ev_actor": np.array(ev_cols["actor"], dtype=np.int8),
        "ev_victim": np.array(ev_cols["victim"], dtype=np.int8),
        "ev_pos": np.array(ev_cols["pos"], dtype=np.float64).reshape(-1, 3),
        "state_round": cat("round", np.int32),
        "state_t": cat("t", np.float64),
        "bomb_planted": cat("bomb", bool),
        "pos": cat("pos", np.float64, (10, 3)),
        "side": cat("side", np.int8, (10,)),
        "alive": cat("alive", bool, (10,)),
        "hp": cat("hp", np.int16, (10,)),
        "armor": cat("armor", np.int16, (10,)),
        "equip": cat("equip", np.int32, (10,)),
        "nades": cat("nades", np.int8, (10,)),
    }


# -- lookups ---------------------------------------------------------------------


def lookup_exact(
    store: StateStore,
    mesh: NavMesh,
    query: QuerySpec,
    *,
    rank_cap: int = RANK_CAP_DEFAULT,
) -> list[StateRef]:
    """States whose token equals the sketch's token, filtered then ranked.

    Results come back in ascending closest-player distance to the sketch,
    ties (and over-cap result sets) in (match_id, round_number, t) order.
    """
    _check_query_map(store, mesh, query)
    if query.mode is not QueryMode.FULL:
        raise ValueError("lookup_exact requires a full-mode query")
    counts_q = sketch_counts(mesh, query.sketch)
    token = render_counts(counts_q)
    rows = store._token_index[query.map].get(token)
    if rows is None:
        return []
    rows = rows[store._filter_mask(rows, query.filters)]
    return store.refs(store._rank(rows, query.sketch, rank_cap))


def lookup_partial(
    store: StateStore,
    mesh: NavMesh,
    query: QuerySpec,
    *,
    rank_cap: int = RANK_CAP_DEFAULT,
) -> list[StateRef]:
    """States with at least the sketched player count per sketched
    (side, place); unsketched sides and places are unconstrained."""
    _check_query_map(store, mesh, query)
    if query.mode is not QueryMode.PARTIAL:
        raise ValueError("lookup_partial requires a partial-mode query")
    if not query.sketch:
        raise ValueError("empty sketch")
    counts_q = sketch_counts(mesh, query.sketch)
    lo, hi = store._map_slice[query.map]
    counts = store._counts[query.map]
    mask = np.ones(hi - lo, dtype=bool)
    for j in np.flatnonzero(counts_q):
        mask &= counts[:, j] >= counts_q[j]
    rows = np.flatnonzero(mask) + lo
    rows = rows[store._filter_mask(rows, query.filters)]
    return store.refs(store._rank(rows, query.sketch, rank_cap))


def lookup_nearest(
    store: StateStore,
    mesh: NavMesh,
    query: QuerySpec,
    *,
    rank_cap: int = RANK_CAP_DEFAULT,
) -> list[StateRef]:
    """Up to k states minimizing token distance to the sketch's token.

    Filters are applied before ranking so context dominates geometry. Ties in
    token distance order by ascending closest-player distance, then
    chronologically.
    """
    _check_query_map(store, mesh, query)
    if query.mode is not QueryMode.FULL:
        raise ValueError("lookup_nearest requires a full-mode query")
    if not query.k_nearest or query.k_nearest < 1:
        raise ValueError("k_nearest must be a positive integer")
    k = query.k_nearest
    counts_q = sketch_counts(mesh, query.sketch)
    lo, hi = store._map_slice[query.map]
    rows_all = np.arange(lo, hi, dtype=np.int64)
    rows = rows_all[store._filter_mask(rows_all, query.filters)]
    if rows.size == 0:
        return []
    counts = store._counts[query.map][rows - lo]
    dist = np.abs(counts - counts_q.astype(np.int16)).sum(axis=1, dtype=np.int32)
    if rows.size > k:
        kth = np.partition(dist, k - 1)[k - 1]
        sel = dist <= kth
        rows, dist = rows[sel], dist[sel]
    if rows.size <= rank_cap and query.sketch:
        sd = store._sketch_distances(rows, query.sketch)
        order = np.lexsort((sd, dist))
    else:
        order = np.argsort(dist, kind="stable")
    return store.refs(rows[order[:k]])


def _check_query_map(store: StateStore, mesh: NavMesh, query: QuerySpec) -> None:
    store._require_map(query.map)
    if mesh.map_name != query.map:
        raise ValueError(
            f"query is for map '{query.map}' but mesh describes '{mesh.map_name}'"
        )


# -- document forms (sketch files, API bodies) -----------------------------------

_FILTER_KEYS = {
    "team",
    "team_side",
    "ct_buy",
    "t_buy",
    "min_grenades_ct",
    "min_grenades_t",
    "end_reasons",
    "bomb_planted",
    "date_range",
}


def parse_filters(doc: dict | None) -> FilterSpec:
    """FilterSpec from its JSON form; unknown keys are rejected."""
    if not doc:
        return FilterSpec()
    unknown = set(doc) - _FILTER_KEYS
    if unknown:
        raise ValueError(f"unknown filter keys: {sorted(unknown)}")
    spec = FilterSpec()
    if doc.get("team") is not None:
        spec.team = str(doc["team"])
    if doc.get("team_side") is not None:
        spec.team_side = Side(doc["team_side"])
    if doc.get("ct_buy") is not None:
        spec.ct_buy = frozenset(BuyType(b) for b in doc["ct_buy"])
    if doc.get("t_buy") is not None:
        spec.t_buy = frozenset(BuyType(b) for b in doc["t_buy"])
    if doc.get("min_grenades_ct") is not None:
        spec.min_grenades_ct = int(doc["min_grenades_ct"])
    if doc.get("min_grenades_t") is not None:
        spec.min_grenades_t = int(doc["min_grenades_t"])
    if doc.get("end_reasons") is not None:
        spec.end_reasons = frozenset(EndReason(r) for r in doc["end_reasons"])
    if doc.get("bomb_planted") is not None:
        if not isinstance(doc["bomb_planted"], bool):
            raise ValueError("bomb_planted filter must be a boolean")
        spec.bomb_planted = doc["bomb_planted"]
    if doc.get("date_range") is not None:
        lohi = doc["date_range"]
        if not isinstance(lohi, (list, tuple)) or len(lohi) != 2:
            raise ValueError("date_range must be [start, end]")
        spec.date_range = (str(lohi[0]), str(lohi[1]))
    return spec


def parse_query(doc: dict) -> QuerySpec:
    """QuerySpec from a sketch document (the CLI sketch-file format)."""
    if not isinstance(doc, dict):
        raise ValueError("sketch document must be a JSON object")
    map_name = doc.get("map")
    if not isinstance(map_name, str) or not map_name:
        raise ValueError("sketch document is missing 'map'")
    mode = QueryMode(doc.get("mode", "full"))
    raw = doc.get("positions")
    if not isinstance(raw, list):
        raise ValueError("sketch document is missing 'positions'")
    sketch = []
    for entry in raw:
        try:
            side = Side(entry["side"])
            point = (float(entry["x"]), float(entry["y"]), float(entry["z"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed sketch position: {exc}") from None
        sketch.append((side, point))
    k = doc.get("k_nearest")
    if k is not None:
        k = int(k)
    return QuerySpec(
        map=map_name,
        sketch=sketch,
        mode=mode,
        filters=parse_filters(doc.get("filters")),
        k_nearest=k,
    )


def run_query(
    store: StateStore,
    query: QuerySpec,
    *,
    rank_cap: int = RANK_CAP_DEFAULT,
) -> list[StateRef]:
    """Dispatch a QuerySpec to the matching lookup using the store's mesh."""
    if query.map not in store.meshes:
        raise UnknownMapError(f"unknown map '{query.map}'")
    mesh = store.meshes[query.map]
    if query.mode is QueryMode.PARTIAL:
        return lookup_partial(store, mesh, query, rank_cap=rank_cap)
    if query.k_nearest is not None:
        return lookup_nearest(store, mesh, query, rank_cap=rank_cap)
    return lookup_exact(store, mesh, query, rank_cap=rank_cap)
