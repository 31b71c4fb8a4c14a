"""Result-set summaries: positional heatmaps and round-outcome tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ingest import EndReason, Side
from .store import StateRef, StateStore


@dataclass
class HeatmapGrid:
    """Smoothed, max-normalized density of one side's positions.

    ``counts`` holds the raw per-cell totals before smoothing; every supplied
    position lands in exactly one cell (out-of-bounds positions clamp to the
    boundary cell rather than being dropped). ``density`` is the 3x3
    binomial-smoothed grid rescaled so its maximum is 1.0 (all zeros when the
    result set is empty). Arrays are (ny, nx), row-major with y ascending.
    """

    map: str
    side: Side
    nx: int
    ny: int
    bounds: tuple[float, float, float, float]
    density: np.ndarray
    counts: np.ndarray


@dataclass
class OutcomeTable:
    """Winner/end-reason tallies over the unique rounds of a result set."""

    t_wins: int
    ct_wins: int
    by_end_reason: dict[EndReason, int]
    ct_win_rate: float | None

    @property
    def total_rounds(self) -> int:
        return self.t_wins + self.ct_wins


def bin_positions(
    positions: np.ndarray,
    bounds: tuple[float, float, float, float],
    nx: int,
    ny: int,
) -> np.ndarray:
    """Raw cell counts for (x, y) positions on a (ny, nx) grid.

    Positions outside the bounds are clamped to the nearest boundary cell and
    still counted, so the grid total always equals the number of positions.
    """
    if nx < 1 or ny < 1:
        raise ValueError("heatmap resolution must be at least 1x1")
    counts = np.zeros((ny, nx), dtype=np.int64)
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        return counts
    x0, y0, x1, y1 = bounds
    if not (x0 < x1 and y0 < y1):
        raise ValueError("degenerate heatmap bounds")
    ix = np.clip(((pts[:, 0] - x0) / (x1 - x0) * nx).astype(np.int64), 0, nx - 1)
    iy = np.clip(((pts[:, 1] - y0) / (y1 - y0) * ny).astype(np.int64), 0, ny - 1)
    flat = np.bincount(iy * nx + ix, minlength=nx * ny)
    return counts + flat.reshape(ny, nx)


def smooth_binomial_3x3(grid: np.ndarray) -> np.ndarray:
    """One pass of the separable 3x3 binomial kernel ([1,2,1]/4 both axes),
    zero-padded at the grid border."""
    g = np.asarray(grid, dtype=np.float64)
    out = np.zeros_like(g)
    out += 2.0 * g
    out[1:, :] += g[:-1, :]
    out[:-1, :] += g[1:, :]
    out /= 4.0
    final = np.zeros_like(out)
    final += 2.0 * out
    final[:, 1:] += out[:, :-1]
    final[:, :-1] += out[:, 1:]
    final /= 4.0
    return final


def heatmap(
    store: StateStore,
    refs: Sequence[StateRef],
    side: Side,
    resolution: tuple[int, int],
    *,
    map_name: str | None = None,
) -> HeatmapGrid:
    """Density of one side's alive-player positions across referenced states.

    An empty result set yields an all-zero grid (callers must then pass
    ``map_name`` so the grid still has bounds).
    """
    nx, ny = int(resolution[0]), int(resolution[1])
    if nx < 1 or ny < 1:
        raise ValueError("heatmap resolution must be at least 1x1")
    maps = {r.map for r in refs}
    if len(maps) > 1:
        raise ValueError(f"heatmap over mixed maps: {sorted(maps)}")
    if maps:
        ref_map = maps.pop()
        if map_name is not None and map_name != ref_map:
            raise ValueError(f"refs are on '{ref_map}', not '{map_name}'")
        map_name = ref_map
    if map_name is None:
        raise ValueError("empty result set needs an explicit map_name")
    if map_name not in store.meshes:
        raise ValueError(f"unknown map '{map_name}'")
    bounds = store.meshes[map_name].bounds()

    rows = np.array([r.row for r in refs], dtype=np.int64)
    positions = (
        store.alive_positions(rows, side) if rows.size else np.zeros((0, 3))
    )
    counts = bin_positions(positions, bounds, nx, ny)
    smoothed = smooth_binomial_3x3(counts)
    peak = smoothed.max()
    density = smoothed / peak if peak > 0 else smoothed
    return HeatmapGrid(
        map=map_name,
        side=side,
        nx=nx,
        ny=ny,
        bounds=bounds,
        density=density,
        counts=counts,
    )


def outcome_table(store: StateStore, refs: Iterable[StateRef]) -> OutcomeTable:
    """Tally winners and end reasons over the unique rounds behind refs."""
    round_rows = sorted({int(store._state_round[r.row]) for r in refs})
    t_wins = ct_wins = 0
    by_reason: dict[EndReason, int] = {}
    for rr in round_rows:
        info = store.round_info(rr)
        if info.winner is Side.CT:
            ct_wins += 1
        else:
            t_wins += 1
        by_reason[info.end_reason] = by_reason.get(info.end_reason, 0) + 1
    total = t_wins + ct_wins
    rate = (ct_wins / total) if total else None
    return OutcomeTable(
        t_wins=t_wins,
        ct_wins=ct_wins,
        by_end_reason=by_reason,
        ct_win_rate=rate,
    )


def heatmap_to_doc(grid: HeatmapGrid) -> dict:
    """JSON form of a heatmap: metadata plus row-major density values."""
    return {
        "map": grid.map,
        "side": grid.side.value,
        "nx": grid.nx,
        "ny": grid.ny,
        "bounds": list(grid.bounds),
        "total_positions": int(grid.counts.sum()),
        "values": [float(v) for v in grid.density.reshape(-1)],
    }
