"""Game-state tokenization and the two distance notions used for retrieval.

A token is the per-place count of alive players, tabulated separately for the
T and CT sides and concatenated (T first). Tokens of equal place count are
compared with a count-weighted Hamming distance: per position, the absolute
difference between the two counts. Within a result set, candidate states are
ranked by a directed closest-player distance.

Only ALIVE players contribute to tokens and distances. Dead players have no
tactical position, and counting them would freeze mid-round tokens at the
round-start layout. This changes every token the moment a player dies.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from math import dist as _euclid
from typing import Iterable, Sequence

import numpy as np

from .ingest import GameState, Side
from .navmesh import NavMesh

_SIDE_TOKEN_RE = re.compile(r"^(?:0|[1-9]\d*)(?: (?:0|[1-9]\d*))*$")


@dataclass(frozen=True)
class SideToken:
    """Per-place alive-player counts for one side, indexed by token position."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("side token counts must be non-negative")

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class Token:
    """Concatenated two-side token; the retrieval key for a game state."""

    t_side: SideToken
    ct_side: SideToken

    def __post_init__(self):
        if len(self.t_side) != len(self.ct_side):
            raise ValueError("both sides of a token must share one place count")

    @cached_property
    def canonical_string(self) -> str:
        return render_token(self)

    @property
    def num_places(self) -> int:
        return len(self.t_side)


def render_token(token: Token) -> str:
    """Canonical text form: T counts, '|', CT counts; single-space separated."""
    t = " ".join(str(c) for c in token.t_side.counts)
    ct = " ".join(str(c) for c in token.ct_side.counts)
    return f"{t}|{ct}"


def render_counts(counts: Sequence[int]) -> str:
    """Canonical string for a concatenated count row (T half then CT half)."""
    half = len(counts) // 2
    t = " ".join(str(int(c)) for c in counts[:half])
    ct = " ".join(str(int(c)) for c in counts[half:])
    return f"{t}|{ct}"


def parse_token(text: str) -> Token:
    """Parse a canonical token string; rejects any non-canonical rendering."""
    parts = text.split("|")
    if len(parts) != 2:
        raise ValueError(f"token string must contain exactly one '|': {text!r}")
    sides = []
    for part in parts:
        if not _SIDE_TOKEN_RE.match(part):
            raise ValueError(f"malformed side token: {part!r}")
        sides.append(SideToken(tuple(int(c) for c in part.split(" "))))
    token = Token(t_side=sides[0], ct_side=sides[1])
    return token


def tokenize_side(mesh: NavMesh, positions: Iterable[Sequence[float]]) -> SideToken:
    """Count players per place for one side's positions."""
    pts = np.asarray(list(positions), dtype=np.float64)
    if pts.size == 0:
        return SideToken((0,) * mesh.num_places)
    place_idx = mesh.locate_places(pts.reshape(-1, 3))
    counts = np.bincount(place_idx, minlength=mesh.num_places)
    return SideToken(tuple(int(c) for c in counts))


def tokenize_state(mesh: NavMesh, state: GameState) -> Token:
    """Token for a full game state: alive T players, then alive CT players."""
    if state.map != mesh.map_name:
        raise ValueError(
            f"state is on map '{state.map}' but mesh describes '{mesh.map_name}'"
        )
    t_pos = [p.position for p in state.players if p.alive and p.side is Side.T]
    ct_pos = [p.position for p in state.players if p.alive and p.side is Side.CT]
    return Token(t_side=tokenize_side(mesh, t_pos), ct_side=tokenize_side(mesh, ct_pos))


def hamming_mod(a: Token, b: Token) -> int:
    """Count-weighted Hamming distance between two tokens.

    Per token position the contribution is the absolute difference between
    the two counts, summed over both sides. A metric on tokens of equal
    place count.
    """
    if a.num_places != b.num_places:
        raise ValueError(
            f"tokens have mismatched place counts: {a.num_places} vs {b.num_places}"
        )
    total = 0
    for x, y in zip(a.t_side.counts, b.t_side.counts):
        total += abs(x - y)
    for x, y in zip(a.ct_side.counts, b.ct_side.counts):
        total += abs(x - y)
    return total


def state_distance(s1: GameState, s2: GameState) -> float:
    """Directed closest-player distance from ``s1`` into ``s2``.

    For each alive player in ``s1``, adds the minimum 3D Euclidean distance
    to any alive player of the same side in ``s2``. The sum is NOT symmetric;
    callers wanting a symmetric notion must combine both directions
    themselves.
    """
    if s1.map != s2.map:
        raise ValueError(f"states are on different maps: '{s1.map}' vs '{s2.map}'")
    by_side: dict[Side, list[tuple[float, float, float]]] = {Side.T: [], Side.CT: []}
    for p in s2.players:
        if p.alive:
            by_side[p.side].append(p.position)
    total = 0.0
    for p in s1.players:
        if not p.alive:
            continue
        targets = by_side[p.side]
        if not targets:
            raise ValueError(f"unmatched side: {p.side.value} players alive in s1 but not in s2")
        total += min(_euclid(p.position, q) for q in targets)
    return total
