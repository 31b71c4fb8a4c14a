"""Synthetic replay corpora with realistic spatial and outcome structure.

Positions are drawn from per-place anchor mixtures: each player camps a
place for a stretch of seconds and wanders inside one of its areas, so
repeated tokens show up the way they do in real team play. Round winners are
drawn from a monotone model of alive/equipment advantage (plus a post-plant
penalty for the defense), which gives win-probability training a real signal
to find. Everything is deterministic for a fixed seed.

Also home to :func:`grid_mesh`, a deterministic mesh builder used for the
fixture maps and tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterator, Sequence

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
    classify_buy,
)
from .navmesh import NavArea, NavMesh, Place

_COMPETITIONS = (
    "Harbor Masters",
    "Quarry Clash",
    "Invitational Alpha",
    "Regional Finals",
)

_BUY_LEVELS = (BuyType.ECO, BuyType.SEMI_BUY, BuyType.FULL_BUY)
_BUY_PROBS = (0.2, 0.3, 0.5)

# Per-player equipment value ranges per buy level, chosen so the aggregate
# lands inside the matching classify_buy bracket for a 5-player side.
_EQUIP_RANGE = {
    BuyType.PISTOL: (200, 900),
    BuyType.ECO: (100, 900),
    BuyType.SEMI_BUY: (1200, 3700),
    BuyType.FULL_BUY: (4200, 5800),
}
_NADE_RANGE = {
    BuyType.PISTOL: (0, 1),
    BuyType.ECO: (0, 1),
    BuyType.SEMI_BUY: (0, 3),
    BuyType.FULL_BUY: (2, 4),
}


@dataclass
class SynthConfig:
    """Generator settings; see synth_generate."""

    matches: int
    rounds_per_match: int
    frames_per_round: int
    team_pool: Sequence[str]
    meshes: Sequence[NavMesh]
    map_rotation: Sequence[str] | None = None
    plant_rate: float = 0.45
    start_date: str = "2020-04-01"
    competition_pool: Sequence[str] = _COMPETITIONS

    def validate(self) -> None:
        if self.matches < 1:
            raise ValueError("matches must be >= 1")
        if self.rounds_per_match < 1:
            raise ValueError("rounds_per_match must be >= 1")
        if self.frames_per_round < 10:
            raise ValueError("frames_per_round must be >= 10")
        if len(self.team_pool) < 2:
            raise ValueError("team_pool must name at least two teams")
        if not self.meshes:
            raise ValueError("no meshes configured")
        known = {m.map_name for m in self.meshes}
        for name in self.map_rotation or ():
            if name not in known:
                raise ValueError(f"unknown mesh reference: '{name}'")
        if not 0.0 <= self.plant_rate <= 1.0:
            raise ValueError("plant_rate must be within [0, 1]")


def synth_generate(config: SynthConfig, seed: int) -> Iterator[MatchRecord]:
    """Yield synthetic matches one at a time (fixed seed => identical corpus)."""
    config.validate()
    rng = np.random.default_rng(seed)
    rotation = list(config.map_rotation) if config.map_rotation else [
        m.map_name for m in config.meshes
    ]
    mesh_by_name = {m.map_name: m for m in config.meshes}
    start = date.fromisoformat(config.start_date)
    wins: dict[str, int] = {}

    for i in range(config.matches):
        mesh = mesh_by_name[rotation[i % len(rotation)]]
        pair = rng.choice(len(config.team_pool), size=2, replace=False)
        team_a, team_b = (config.team_pool[int(k)] for k in pair)
        match_id = f"m{seed:04d}-{i:05d}"
        match_date = (start + timedelta(days=int(i % 150))).isoformat()
        competition = config.competition_pool[int(rng.integers(len(config.competition_pool)))]
        yield _generate_match(
            rng,
            mesh,
            match_id,
            match_date,
            competition,
            team_a,
            team_b,
            config,
        )


def _generate_match(
    rng: np.random.Generator,
    mesh: NavMesh,
    match_id: str,
    match_date: str,
    competition: str,
    team_ct_start: str,
    team_t_start: str,
    config: SynthConfig,
) -> MatchRecord:
    priors = _place_priors(mesh)
    score: dict[str, int] = {team_ct_start: 0, team_t_start: 0}
    rounds = []
    for number in range(1, config.rounds_per_match + 1):
        if ((number - 1) // 15) % 2 == 0:
            ct_team, t_team = team_ct_start, team_t_start
        else:
            ct_team, t_team = team_t_start, team_ct_start
        record = _generate_round(
            rng, mesh, priors, match_id, number, ct_team, t_team, score, config
        )
        rounds.append(record)
        score[ct_team if record.winner is Side.CT else t_team] += 1
    return MatchRecord(
        match_id=match_id,
        date=match_date,
        competition_name=competition,
        team_ct_start=team_ct_start,
        team_t_start=team_t_start,
        map=mesh.map_name,
        rounds=rounds,
    )


def _generate_round(
    rng: np.random.Generator,
    mesh: NavMesh,
    priors: dict,
    match_id: str,
    number: int,
    ct_team: str,
    t_team: str,
    score: dict[str, int],
    config: SynthConfig,
) -> RoundRecord:
    # --- loadouts -----------------------------------------------------------
    if number in (1, 16):
        buy_levels = {Side.T: BuyType.PISTOL, Side.CT: BuyType.PISTOL}
    else:
        buy_levels = {
            side: _BUY_LEVELS[int(rng.choice(len(_BUY_LEVELS), p=_BUY_PROBS))]
            for side in (Side.T, Side.CT)
        }
    equip = {}
    nades = {}
    armor = {}
    for side in (Side.T, Side.CT):
        lo, hi = _EQUIP_RANGE[buy_levels[side]]
        equip[side] = rng.integers(lo, hi + 1, size=5)
        nlo, nhi = _NADE_RANGE[buy_levels[side]]
        nades[side] = rng.integers(nlo, nhi + 1, size=5)
        if buy_levels[side] in (BuyType.PISTOL, BuyType.ECO):
            armor[side] = rng.choice([0, 50], size=5)
        else:
            armor[side] = np.full(5, 100)

    # --- round skeleton: plant, deaths, winner, end reason ------------------
    duration0 = float(np.clip(rng.uniform(0.75, 1.25) * config.frames_per_round, 12.0, 110.0))
    planted = bool(rng.random() < config.plant_rate)
    plant_t = float(rng.uniform(0.35, 0.7) * duration0) if planted else None

    equip_ct = int(equip[Side.CT].sum())
    equip_t = int(equip[Side.T].sum())
    adv = (equip_ct - equip_t) / 15_000.0 + float(rng.normal(0.0, 0.5))
    p_die_ct = float(np.clip(0.45 - 0.18 * adv, 0.08, 0.85))
    p_die_t = float(np.clip(0.45 + 0.18 * adv, 0.08, 0.85))
    dead_ct = (rng.random(5) < p_die_ct)
    dead_t = (rng.random(5) < p_die_t)

    logit = (
        0.8 * (int(dead_t.sum()) - int(dead_ct.sum()))
        + 1.2 * (equip_ct - equip_t) / 20_000.0
        + (-0.5 if planted else 0.25)
    )
    winner = Side.CT if rng.random() < 1.0 / (1.0 + math.exp(-logit)) else Side.T

    # Keep the world consistent with the drawn outcome: the winning side
    # keeps at least one player, eliminations actually eliminate.
    if winner is Side.CT and dead_ct.all():
        dead_ct[int(rng.integers(5))] = False
    if winner is Side.T and dead_t.all():
        dead_t[int(rng.integers(5))] = False
    if winner is Side.CT:
        if planted:
            end_reason = EndReason.BOMB_DEFUSED
        elif dead_t.all():
            end_reason = EndReason.ELIMINATION_T
        else:
            end_reason = EndReason.TIME_EXPIRED
    else:
        if planted:
            end_reason = EndReason.BOMB_EXPLODED
        else:
            if not dead_ct.all():
                dead_ct[:] = True
            end_reason = EndReason.ELIMINATION_CT

    death_time = {side: np.full(5, np.inf) for side in (Side.T, Side.CT)}
    for side, dead in ((Side.T, dead_t), (Side.CT, dead_ct)):
        n = int(dead.sum())
        if n:
            death_time[side][np.flatnonzero(dead)] = rng.uniform(5.0, duration0 - 1.0, size=n)

    if end_reason is EndReason.BOMB_DEFUSED:
        assert plant_t is not None
        duration = float(np.clip(plant_t + rng.uniform(8.0, 33.0), plant_t + 2.0, plant_t + 34.5))
    elif end_reason is EndReason.BOMB_EXPLODED:
        assert plant_t is not None
        duration = plant_t + 35.0
    elif end_reason is EndReason.TIME_EXPIRED:
        duration = 115.0
    else:
        eliminated = Side.T if end_reason is EndReason.ELIMINATION_T else Side.CT
        duration = float(np.clip(death_time[eliminated].max() + rng.uniform(1.0, 5.0), 8.0, 114.0))

    for side in (Side.T, Side.CT):
        finite = np.isfinite(death_time[side])
        death_time[side][finite] = np.minimum(death_time[side][finite], duration - 0.6)
    if planted:
        # The plant needs a living T player; pull it earlier if necessary.
        t_deaths = death_time[Side.T]
        if not (t_deaths > plant_t).any():
            plant_t = float(t_deaths.max() * 0.6)
        plant_t = max(plant_t, 1.0)

    num_frames = int(duration) + 1

    # --- trajectories and hp schedules --------------------------------------
    site_place = None
    if planted:
        sites = priors["sites"]
        site_place = int(sites[int(rng.integers(len(sites)))])
    plant_frame = int(math.ceil(plant_t)) if planted else num_frames

    pos = np.empty((10, num_frames, 3))
    hp = np.full((10, num_frames), 100, dtype=np.int64)
    deaths_flat = np.concatenate([death_time[Side.T], death_time[Side.CT]])
    sides_flat = [Side.T] * 5 + [Side.CT] * 5
    damage_events: list[tuple[int, float, int]] = []  # (player index, t, hp_after)
    for j in range(10):
        side = sides_flat[j]
        pos[j] = _player_path(rng, mesh, priors, side, num_frames, plant_frame, site_place)
        d = deaths_flat[j]
        if math.isfinite(d):
            li = int(d)
            if li + 1 < num_frames:
                pos[j, li + 1 :] = pos[j, li]
            for (te, hp_after) in _hp_schedule(rng, d):
                damage_events.append((j, te, hp_after))
                hp[j, max(0, int(math.ceil(te))) :] = hp_after
        elif rng.random() < 0.45:
            for (te, hp_after) in _survivor_damage(rng, duration):
                damage_events.append((j, te, hp_after))
                hp[j, max(0, int(math.ceil(te))) :] = hp_after

    alive = np.arange(num_frames)[None, :] < deaths_flat[:, None]
    hp[~alive] = 0
    hp[alive] = np.maximum(hp[alive], 1)

    # --- events --------------------------------------------------------------
    ids = [f"{t_team}_{k}" for k in range(5)] + [f"{ct_team}_{k}" for k in range(5)]
    kills = []
    damages = []
    for j, te, hp_after in damage_events:
        enemies = range(5, 10) if j < 5 else range(0, 5)
        attacker = int(rng.choice([e for e in enemies]))
        fi = min(int(te), num_frames - 1)
        ev = EventRecord(
            kind=EventKind.DAMAGE,
            t=float(te),
            actor_id=ids[attacker],
            victim_id=ids[j],
            position=tuple(float(c) for c in pos[j, fi]),
        )
        damages.append(ev)
        if hp_after == 0:
            kills.append(
                EventRecord(
                    kind=EventKind.KILL,
                    t=float(te),
                    actor_id=ids[attacker],
                    victim_id=ids[j],
                    position=ev.position,
                )
            )
    kills.sort(key=lambda e: e.t)
    damages.sort(key=lambda e: e.t)

    grenades = []
    for side, offset in ((Side.T, 0), (Side.CT, 5)):
        budget = int(nades[side].sum())
        count = min(budget, int(rng.poisson(1.5)))
        for _ in range(count):
            te = float(rng.uniform(2.0, max(3.0, duration - 1.0)))
            throwers = [k for k in range(5) if deaths_flat[offset + k] > te]
            if not throwers:
                continue
            j = offset + int(rng.choice(throwers))
            fi = min(int(te), num_frames - 1)
            grenades.append(
                EventRecord(
                    kind=EventKind.GRENADE,
                    t=te,
                    actor_id=ids[j],
                    victim_id=None,
                    position=tuple(float(c) for c in pos[j, fi]),
                )
            )
    grenades.sort(key=lambda e: e.t)

    bomb_plants = []
    if planted:
        viable = [k for k in range(5) if deaths_flat[k] > plant_t]
        planter = int(rng.choice(viable))
        fi = min(int(plant_t), num_frames - 1)
        bomb_plants.append(
            EventRecord(
                kind=EventKind.BOMB_PLANT,
                t=float(plant_t),
                actor_id=ids[planter],
                victim_id=None,
                position=tuple(float(c) for c in pos[planter, fi]),
            )
        )

    # --- frames ---------------------------------------------------------------
    pos_list = pos.tolist()
    hp_list = hp.tolist()
    alive_list = alive.tolist()
    equip_flat = [int(v) for v in equip[Side.T]] + [int(v) for v in equip[Side.CT]]
    nades_flat = [int(v) for v in nades[Side.T]] + [int(v) for v in nades[Side.CT]]
    armor_flat = [int(v) for v in armor[Side.T]] + [int(v) for v in armor[Side.CT]]
    frames = []
    for fi in range(num_frames):
        t = float(fi)
        players = [
            PlayerSnapshot(
                player_id=ids[j],
                side=sides_flat[j],
                position=tuple(pos_list[j][fi]),
                hp=hp_list[j][fi],
                armor=armor_flat[j],
                equipment_value=equip_flat[j],
                grenade_count=nades_flat[j],
                alive=alive_list[j][fi],
            )
            for j in range(10)
        ]
        frames.append(
            GameState(
                map=mesh.map_name,
                round_ref=(match_id, number),
                t=t,
                players=players,
                bomb_planted=planted and t >= plant_t,
            )
        )

    return RoundRecord(
        match_id=match_id,
        round_number=number,
        winner=winner,
        end_reason=end_reason,
        ct_buy=classify_buy(equip_ct, number),
        t_buy=classify_buy(equip_t, number),
        score_ct=score[ct_team],
        score_t=score[t_team],
        bomb_plant_t=plant_t,
        frames=frames,
        kills=kills,
        grenades=grenades,
        damages=damages,
        bomb_plants=bomb_plants,
    )


def _hp_schedule(rng: np.random.Generator, death_t: float) -> list[tuple[float, int]]:
    """Damage times and resulting hp for a player dying at death_t."""
    k = int(rng.integers(2, 5))
    times = np.sort(rng.uniform(max(1.0, death_t - 20.0), death_t, size=k - 1))
    amounts = rng.dirichlet(np.ones(k)) * 100.0
    hp_after = np.maximum(100 - np.round(np.cumsum(amounts)).astype(int), 1)
    events = [(float(times[i]), int(hp_after[i])) for i in range(k - 1)]
    events.append((float(death_t), 0))
    return events

def _survivor_damage(rng: np.random.Generator, duration: float) -> list[tuple[float, int]]:
    k = int(rng.integers(1, 4))
    total = float(rng.uniform(5.0, 70.0))
    times = np.sort(rng.uniform(2.0, max(3.0, duration - 1.0), size=k))
    amounts = rng.dirichlet(np.ones(k)) * total
    hp_after = np.maximum(100 - np.round(np.cumsum(amounts)).astype(int), 30)
    return [(float(times[i]), int(hp_after[i])) for i in range(k)]


def _player_path(
    rng: np.random.Generator,
    mesh: NavMesh,
    priors: dict,
    side: Side,
    num_frames: int,
    plant_frame: int,
    site_place: int | None,
) -> np.ndarray:
    """Anchor-mixture random walk: camp a place, wander inside one area."""
    out = np.empty((num_frames, 3))
    weights = priors[side]
    fi = 0
    while fi < num_frames:
        seg = min(int(rng.integers(10, 41)), num_frames - fi)
        if fi < plant_frame:
            seg = min(seg, plant_frame - fi)
            place = int(rng.choice(len(weights), p=weights))
        else:
            # Post-plant collapse onto the site: attackers hold it, defenders
            # come back for the retake.
            take = 0.7 if side is Side.T else 0.6
            if site_place is not None and rng.random() < take:
                place = site_place
            else:
                place = int(rng.choice(len(weights), p=weights))
        area = _pick_area(rng, priors, place)
        out[fi : fi + seg] = _wander(rng, area, seg)
        fi += seg
    return out


def _pick_area(rng: np.random.Generator, priors: dict, place: int) -> NavArea:
    areas = priors["areas_by_place"][place]
    return areas[int(rng.integers(len(areas)))]


def _wander(rng: np.random.Generator, area: NavArea, n: int) -> np.ndarray:
    mx = 0.05 * (area.x_max - area.x_min)
    my = 0.05 * (area.y_max - area.y_min)
    x0 = rng.uniform(area.x_min + mx, area.x_max - mx)
    y0 = rng.uniform(area.y_min + my, area.y_max - my)
    steps = rng.normal(0.0, 14.0, size=(n, 2))
    steps[0] = 0.0
    path = np.cumsum(steps, axis=0)
    xs = np.clip(x0 + path[:, 0], area.x_min + mx, area.x_max - mx)
    ys = np.clip(y0 + path[:, 1], area.y_min + my, area.y_max - my)
    zs = area.z_center + rng.uniform(-8.0, 8.0, size=n)
    return np.stack([xs, ys, zs], axis=1)


def _place_priors(mesh: NavMesh) -> dict:
    """Side-biased anchor weights plus site and area lookups for one mesh."""
    n = mesh.num_places
    t_w = np.ones(n)
    ct_w = np.ones(n)
    sites = []
    for p in mesh.places:
        low = p.name.lower()
        if "bombsite" in low:
            sites.append(p.place_id)
            ct_w[p.place_id] *= 4.0
            t_w[p.place_id] *= 2.5
        if "ctspawn" in low:
            ct_w[p.place_id] *= 2.0
            t_w[p.place_id] *= 0.3
        if low == "tspawn" or "tspawn" in low:
            t_w[p.place_id] *= 2.0
            ct_w[p.place_id] *= 0.3
        if "mid" in low:
            t_w[p.place_id] *= 2.0
            ct_w[p.place_id] *= 2.0
    areas_by_place: dict[int, list[NavArea]] = {p.place_id: [] for p in mesh.places}
    for a in mesh.areas:
        areas_by_place[a.place_id].append(a)
    empty = [pid for pid, lst in areas_by_place.items() if not lst]
    for pid in empty:
        t_w[pid] = 0.0
        ct_w[pid] = 0.0
    if not sites:
        sites = [p.place_id for p in mesh.places if areas_by_place[p.place_id]]
    return {
        Side.T: t_w / t_w.sum(),
        Side.CT: ct_w / ct_w.sum(),
        "sites": sites,
        "areas_by_place": areas_by_place,
    }


# -- deterministic fixture meshes ---------------------------------------------


def grid_mesh(
    map_name: str,
    place_names: Sequence[str],
    *,
    cols: int = 4,
    origin: tuple[float, float] = (-2400.0, -1800.0),
    cell: float = 1200.0,
    seed: int = 0,
    elevations: dict[str, float] | None = None,
    stacked: dict[str, str] | None = None,
) -> NavMesh:
    """Build a synthetic mesh: places on a grid of blocks, blocks split into
    2-6 axis-aligned areas.

    ``stacked`` maps a place name onto another place's name whose block it
    shares in (x, y); give the upper/lower level a distinct elevation to
    exercise z-disambiguated point location.
    """
    if len(set(place_names)) != len(place_names):
        raise ValueError("place names must be unique")
    rng = np.random.default_rng(seed)
    elevations = elevations or {}
    stacked = stacked or {}
    for upper, lower in stacked.items():
        if upper not in place_names or lower not in place_names:
            raise ValueError(f"stacked pair ({upper}, {lower}) names unknown places")

    blocks: dict[str, tuple[float, float, float, float]] = {}
    slot = 0
    for name in place_names:
        if name in stacked:
            continue
        col, row = slot % cols, slot // cols
        x0 = origin[0] + col * cell
        y0 = origin[1] + row * cell
        blocks[name] = (x0, y0, x0 + cell, y0 + cell)
        slot += 1
    for upper, lower in stacked.items():
        blocks[upper] = blocks[lower]

    order = sorted(place_names)
    places = [Place(place_id=i, name=n, token_position=i) for i, n in enumerate(order)]
    pid = {n: i for i, n in enumerate(order)}

    areas: list[NavArea] = []
    next_id = 1
    for name in place_names:
        z = float(elevations.get(name, 0.0))
        for (x0, y0, x1, y1) in _split_block(rng, blocks[name], int(rng.integers(2, 7))):
            areas.append(
                NavArea(
                    area_id=next_id,
                    x_min=x0,
                    y_min=y0,
                    x_max=x1,
                    y_max=y1,
                    z_center=z,
                    place_id=pid[name],
                )
            )
            next_id += 1

    edges = []
    for i, a in enumerate(areas):
        for b in areas[i + 1 :]:
            if abs(a.z_center - b.z_center) > 64.0:
                continue
            if _share_boundary(a, b):
                edges.append((a.area_id, b.area_id))

    return NavMesh(map_name, places, areas, edges)


def _split_block(
    rng: np.random.Generator,
    rect: tuple[float, float, float, float],
    target: int,
) -> list[tuple[float, float, float, float]]:
    rects = [rect]
    while len(rects) < target:
        idx = int(rng.integers(len(rects)))
        x0, y0, x1, y1 = rects.pop(idx)
        if (x1 - x0) >= (y1 - y0):
            cut = rng.uniform(0.35, 0.65) * (x1 - x0) + x0
            rects.extend([(x0, y0, cut, y1), (cut, y0, x1, y1)])
        else:
            cut = rng.uniform(0.35, 0.65) * (y1 - y0) + y0
            rects.extend([(x0, y0, x1, cut), (x0, cut, x1, y1)])
    return rects


def _share_boundary(a: NavArea, b: NavArea) -> bool:
    touch_x = math.isclose(a.x_max, b.x_min) or math.isclose(b.x_max, a.x_min)
    touch_y = math.isclose(a.y_max, b.y_min) or math.isclose(b.y_max, a.y_min)
    overlap_y = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) > 1.0
    overlap_x = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) > 1.0
    return (touch_x and overlap_y) or (touch_y and overlap_x)
