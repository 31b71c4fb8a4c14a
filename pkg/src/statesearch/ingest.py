"""Replay-document parsing and the round/frame data model.

Replay matches arrive as UTF-8 JSON, one match per document (the schema ships
in ``schemas/replay_match.schema.json``). Frames are retained at one state
per second; sub-second frames are dropped, keeping the earliest. Structural
problems inside a single round reject only that round (partial ingest, with a
diagnostic); match-level problems reject the document.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date as _date
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover - typing only
    from .tokenizer import Token


class ReplayError(ValueError):
    """Raised when a replay document cannot be parsed at the match level."""


class Side(str, Enum):
    T = "T"
    CT = "CT"


class BuyType(str, Enum):
    PISTOL = "pistol"
    ECO = "eco"
    SEMI_BUY = "semi_buy"
    FULL_BUY = "full_buy"


class EndReason(str, Enum):
    ELIMINATION_T = "elimination_t"  # T side eliminated -> CT win
    ELIMINATION_CT = "elimination_ct"  # CT side eliminated -> T win
    BOMB_EXPLODED = "bomb_exploded"
    BOMB_DEFUSED = "bomb_defused"
    TIME_EXPIRED = "time_expired"


class EventKind(str, Enum):
    KILL = "kill"
    GRENADE = "grenade"
    DAMAGE = "damage"
    BOMB_PLANT = "bomb_plant"


#: Which side each end reason awards the round to.
WINNER_FOR_REASON = {
    EndReason.ELIMINATION_T: Side.CT,
    EndReason.ELIMINATION_CT: Side.T,
    EndReason.BOMB_EXPLODED: Side.T,
    EndReason.BOMB_DEFUSED: Side.CT,
    EndReason.TIME_EXPIRED: Side.CT,
}

#: First round of each half under the standard 15-round format.
PISTOL_ROUNDS = frozenset({1, 16})

#: Equipment-value boundaries separating eco / semi buy / full buy. The buy
#: categories are conventional; these cutoffs are configuration, not ground
#: truth, and can be retuned per dataset.
ECO_MAX = 5_000
FULL_BUY_MIN = 20_000


@dataclass(slots=True)
class PlayerSnapshot:
    player_id: str
    side: Side
    position: tuple[float, float, float]
    hp: int
    armor: int
    equipment_value: int
    grenade_count: int
    alive: bool


@dataclass(slots=True)
class GameState:
    """One per-second snapshot of a round. ``token`` is filled at index time."""

    map: str
    round_ref: tuple[str, int]
    t: float
    players: list[PlayerSnapshot]
    bomb_planted: bool
    token: "Token | None" = None


@dataclass(slots=True)
class EventRecord:
    kind: EventKind
    t: float
    actor_id: str
    victim_id: str | None
    position: tuple[float, float, float]


@dataclass(slots=True)
class RoundRecord:
    match_id: str
    round_number: int
    winner: Side
    end_reason: EndReason
    ct_buy: BuyType
    t_buy: BuyType
    score_ct: int
    score_t: int
    bomb_plant_t: float | None
    frames: list[GameState]
    kills: list[EventRecord] = field(default_factory=list)
    grenades: list[EventRecord] = field(default_factory=list)
    damages: list[EventRecord] = field(default_factory=list)
    bomb_plants: list[EventRecord] = field(default_factory=list)


@dataclass(slots=True)
class MatchRecord:
    match_id: str
    date: str  # ISO-8601 calendar date
    competition_name: str
    team_ct_start: str
    team_t_start: str
    map: str
    rounds: list[RoundRecord]


def round_teams(match: MatchRecord, round_number: int) -> tuple[str, str]:
    """(ct_team, t_team) for a round; sides swap every 15 rounds."""
    if ((round_number - 1) // 15) % 2 == 0:
        return match.team_ct_start, match.team_t_start
    return match.team_t_start, match.team_ct_start


def classify_buy(
    side_equipment_total: int,
    round_number: int,
    *,
    eco_max: int = ECO_MAX,
    full_buy_min: int = FULL_BUY_MIN,
) -> BuyType:
    """Bucket a side's aggregate equipment value into a buy type.

    Pistol rounds (the first round of each half) are classified by round
    number alone; otherwise thresholds apply as half-open intervals:
    ``total < eco_max`` is eco, ``total >= full_buy_min`` is full buy, and
    everything between is a semi buy.
    """
    if side_equipment_total < 0:
        raise ValueError("equipment total must be non-negative")
    if round_number in PISTOL_ROUNDS:
        return BuyType.PISTOL
    if side_equipment_total < eco_max:
        return BuyType.ECO
    if side_equipment_total >= full_buy_min:
        return BuyType.FULL_BUY
    return BuyType.SEMI_BUY


class _RoundProblem(ValueError):
    """Internal: rejects one round without aborting the match."""


def parse_match(
    document: dict | str | Path,
    diagnostics: list[str] | None = None,
) -> MatchRecord:
    """Parse one replay document into a MatchRecord.

    Rounds that violate their invariants are skipped; a human-readable
    diagnostic per skipped round is appended to ``diagnostics`` when a list
    is supplied. Match-level schema problems raise :class:`ReplayError`.
    """
    doc = _read_document(document)
    match_id = _req_str(doc, "match_id")
    date = _req_str(doc, "date")
    try:
        _date.fromisoformat(date)
    except ValueError:
        raise ReplayError(f"match '{match_id}': date '{date}' is not ISO-8601") from None
    competition = _req_str(doc, "competition_name")
    map_name = _req_str(doc, "map")
    teams = doc.get("teams")
    if not isinstance(teams, dict):
        raise ReplayError(f"match '{match_id}': missing 'teams' object")
    team_ct = teams.get("ct_start")
    team_t = teams.get("t_start")
    if not isinstance(team_ct, str) or not isinstance(team_t, str) or not team_ct or not team_t:
        raise ReplayError(f"match '{match_id}': teams must name ct_start and t_start")

    raw_rounds = doc.get("rounds")
    if not isinstance(raw_rounds, list):
        raise ReplayError(f"match '{match_id}': missing 'rounds' list")
    numbers = []
    for entry in raw_rounds:
        if not isinstance(entry, dict) or not isinstance(entry.get("round_number"), int):
            raise ReplayError(f"match '{match_id}': round entry without an integer round_number")
        numbers.append(entry["round_number"])
    if numbers != list(range(1, len(numbers) + 1)):
        raise ReplayError(f"match '{match_id}': round numbers are not contiguous from 1")

    rounds: list[RoundRecord] = []
    for entry in raw_rounds:
        number = entry["round_number"]
        try:
            rounds.append(_parse_round(entry, match_id, map_name, number))
        except _RoundProblem as exc:
            if diagnostics is not None:
                diagnostics.append(f"match '{match_id}' round {number}: {exc}")

    return MatchRecord(
        match_id=match_id,
        date=date,
        competition_name=competition,
        team_ct_start=team_ct,
        team_t_start=team_t,
        map=map_name,
        rounds=rounds,
    )


def _parse_round(entry: dict, match_id: str, map_name: str, number: int) -> RoundRecord:
    try:
        winner = Side(entry["winner"])
        end_reason = EndReason(entry["end_reason"])
        score_ct = int(entry["score_ct"])
        score_t = int(entry["score_t"])
    except (KeyError, ValueError, TypeError) as exc:
        raise _RoundProblem(f"malformed round metadata ({exc})") from None
    if score_ct < 0 or score_t < 0:
        raise _RoundProblem("negative score")
    if WINNER_FOR_REASON[end_reason] is not winner:
        raise _RoundProblem(
            f"winner/end_reason mismatch: {end_reason.value} implies "
            f"{WINNER_FOR_REASON[end_reason].value}, document says {winner.value}"
        )

    raw_frames = entry.get("frames")
    if not isinstance(raw_frames, list) or not raw_frames:
        raise _RoundProblem("round has no frames")

    frames: list[GameState] = []
    roster: list[str] = []
    roster_set: set[str] = set()
    last_raw_t = -math.inf
    last_kept = -math.inf
    for raw in raw_frames:
        t = raw.get("t") if isinstance(raw, dict) else None
        if not isinstance(t, (int, float)) or t < 0:
            raise _RoundProblem("frame with missing or negative time")
        t = float(t)
        if t <= last_raw_t:
            raise _RoundProblem("non-monotonic frame times")
        last_raw_t = t
        if t - last_kept < 1.0 - 1e-9:
            continue  # sub-second frame: keep the earliest of each second
        players = _parse_players(raw.get("players"))
        ids = [p.player_id for p in players]
        if not roster:
            roster = ids
            roster_set = set(ids)
            if len(roster_set) != len(roster):
                raise _RoundProblem("duplicate player id in frame")
        elif set(ids) != roster_set:
            raise _RoundProblem("player roster changed mid-round")
        bomb_planted = raw.get("bomb_planted", False)
        if not isinstance(bomb_planted, bool):
            raise _RoundProblem("bomb_planted must be a boolean")
        frames.append(
            GameState(
                map=map_name,
                round_ref=(match_id, number),
                t=t,
                players=players,
                bomb_planted=bomb_planted,
            )
        )
        last_kept = t

    duration = frames[-1].t
    kills = _parse_events(entry.get("kills"), EventKind.KILL, roster_set, duration, victims=True)
    grenades = _parse_events(entry.get("grenades"), EventKind.GRENADE, roster_set, duration)
    damages = _parse_events(entry.get("damages"), EventKind.DAMAGE, roster_set, duration, victims=True)
    plants = _parse_events(entry.get("bomb_plants"), EventKind.BOMB_PLANT, roster_set, duration)
    bomb_plant_t = min((e.t for e in plants), default=None)

    first = frames[0]
    ct_total = sum(p.equipment_value for p in first.players if p.side is Side.CT)
    t_total = sum(p.equipment_value for p in first.players if p.side is Side.T)
    return RoundRecord(
        match_id=match_id,
        round_number=number,
        winner=winner,
        end_reason=end_reason,
        ct_buy=classify_buy(ct_total, number),
        t_buy=classify_buy(t_total, number),
        score_ct=score_ct,
        score_t=score_t,
        bomb_plant_t=bomb_plant_t,
        frames=frames,
        kills=kills,
        grenades=grenades,
        damages=damages,
        bomb_plants=plants,
    )


def _parse_players(raw: object) -> list[PlayerSnapshot]:
    if not isinstance(raw, list):
        raise _RoundProblem("frame without a players list")
    players: list[PlayerSnapshot] = []
    per_side = {Side.T: 0, Side.CT: 0}
    for p in raw:
        if not isinstance(p, dict):
            raise _RoundProblem("malformed player entry")
        try:
            pid = p["id"]
            side = Side(p["side"])
            pos = (float(p["x"]), float(p["y"]), float(p["z"]))
            hp = int(p["hp"])
            armor = int(p.get("armor", 0))
            equipment = int(p.get("equipment", 0))
            grenades = int(p.get("grenades", 0))
        except (KeyError, ValueError, TypeError) as exc:
            raise _RoundProblem(f"malformed player entry ({exc})") from None
        if not isinstance(pid, str) or not pid:
            raise _RoundProblem("player without an id")
        if not 0 <= hp <= 100:
            raise _RoundProblem(f"player '{pid}' hp {hp} out of range")
        if armor < 0 or equipment < 0:
            raise _RoundProblem(f"player '{pid}' has negative armor or equipment")
        if not 0 <= grenades <= 4:
            raise _RoundProblem(f"player '{pid}' grenade count {grenades} out of range")
        per_side[side] += 1
        if per_side[side] > 5:
            raise _RoundProblem(f"more than 5 {side.value} players in a frame")
        players.append(
            PlayerSnapshot(
                player_id=pid,
                side=side,
                position=pos,
                hp=hp,
                armor=armor,
                equipment_value=equipment,
                grenade_count=grenades,
                alive=hp > 0,
            )
        )
    return players


def _parse_events(
    raw: object,
    kind: EventKind,
    roster: set[str],
    duration: float,
    *,
    victims: bool = False,
) -> list[EventRecord]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise _RoundProblem(f"malformed {kind.value} events")
    events: list[EventRecord] = []
    for e in raw:
        if not isinstance(e, dict):
            raise _RoundProblem(f"malformed {kind.value} event entry")
        try:
            t = float(e["t"])
            actor = e["actor"]
            victim = e.get("victim") if victims else None
            pos = (float(e["x"]), float(e["y"]), float(e["z"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise _RoundProblem(f"malformed {kind.value} event ({exc})") from None
        # Events may legally trail the last 1 Hz snapshot by under a second.
        if not 0 <= t <= duration + 1.0:
            raise _RoundProblem(f"{kind.value} event at t={t} outside round duration")
        if actor not in roster:
            raise _RoundProblem(f"{kind.value} event by unknown player '{actor}'")
        if victims and victim is not None and victim not in roster:
            raise _RoundProblem(f"{kind.value} event on unknown player '{victim}'")
        events.append(EventRecord(kind=kind, t=t, actor_id=actor, victim_id=victim, position=pos))
    events.sort(key=lambda e: e.t)
    return events


# -- rendering (inverse of parse_match) --------------------------------------


def render_match(match: MatchRecord) -> dict:
    """Render a MatchRecord to its document form; parse_match round-trips it."""
    return {
        "match_id": match.match_id,
        "date": match.date,
        "competition_name": match.competition_name,
        "map": match.map,
        "teams": {"ct_start": match.team_ct_start, "t_start": match.team_t_start},
        "rounds": [_render_round(r) for r in match.rounds],
    }


def _render_round(r: RoundRecord) -> dict:
    return {
        "round_number": r.round_number,
        "winner": r.winner.value,
        "end_reason": r.end_reason.value,
        "score_ct": r.score_ct,
        "score_t": r.score_t,
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
                        "armor": p.armor,
                        "equipment": p.equipment_value,
                        "grenades": p.grenade_count,
                    }
                    for p in f.players
                ],
            }
            for f in r.frames
        ],
        "kills": [_render_event(e) for e in r.kills],
        "grenades": [_render_event(e) for e in r.grenades],
        "damages": [_render_event(e) for e in r.damages],
        "bomb_plants": [_render_event(e) for e in r.bomb_plants],
    }


def _render_event(e: EventRecord) -> dict:
    out = {
        "t": e.t,
        "actor": e.actor_id,
        "x": e.position[0],
        "y": e.position[1],
        "z": e.position[2],
    }
    if e.victim_id is not None:
        out["victim"] = e.victim_id
    return out


def _read_document(source: dict | str | Path):
    if isinstance(source, dict):
        return source
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str):
        if source.lstrip().startswith("{"):
            text = source
        else:
            text = Path(source).read_text(encoding="utf-8")
    else:
        raise ReplayError(f"unsupported replay source type: {type(source).__name__}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReplayError(f"replay document is not valid JSON: {exc}") from None
    return doc


def _req_str(doc: dict, key: str) -> str:
    value = doc.get(key)
    if not isinstance(value, str) or not value:
        raise ReplayError(f"replay document is missing '{key}'")
    return value
