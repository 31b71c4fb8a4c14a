from __future__ import annotations

import numpy as np
import pytest

from statesearch.ingest import (
    BuyType,
    EndReason,
    GameState,
    MatchRecord,
    PlayerSnapshot,
    RoundRecord,
    Side,
)
from statesearch.store import QueryMode, QuerySpec, index_states, lookup_partial
from statesearch.summarize import (
    bin_positions,
    heatmap,
    heatmap_to_doc,
    outcome_table,
    smooth_binomial_3x3,
)


def _bin_oracle(positions, bounds, nx, ny):
    x0, y0, x1, y1 = bounds
    grid = [[0] * nx for _ in range(ny)]
    for (x, y, _z) in positions:
        ix = int((x - x0) / (x1 - x0) * nx)
        iy = int((y - y0) / (y1 - y0) * ny)
        ix = min(max(ix, 0), nx - 1)
        iy = min(max(iy, 0), ny - 1)
        grid[iy][ix] += 1
    return np.array(grid)


# -- binning and smoothing -------------------------------------------------------


def test_single_cell_spreads_kernel_fractions():
    counts = np.zeros((5, 7))
    counts[2, 3] = 8.0
    smooth = smooth_binomial_3x3(counts)
    peak = smooth.max()
    density = smooth / peak
    assert density[2, 3] == 1.0
    for dy, dx, expected in (
        (0, 1, 0.5), (0, -1, 0.5), (1, 0, 0.5), (-1, 0, 0.5),
        (1, 1, 0.25), (1, -1, 0.25), (-1, 1, 0.25), (-1, -1, 0.25),
    ):
        assert density[2 + dy, 3 + dx] == pytest.approx(expected)
    assert smooth.sum() == pytest.approx(8.0)  # interior: kernel conserves mass


def test_bin_positions_matches_bruteforce(harbor_mesh):
    rng = np.random.default_rng(41)
    bounds = harbor_mesh.bounds()
    x0, y0, x1, y1 = bounds
    pts = np.column_stack(
        [
            rng.uniform(x0 - 500, x1 + 500, 400),
            rng.uniform(y0 - 500, y1 + 500, 400),
            rng.uniform(-50, 50, 400),
        ]
    )
    got = bin_positions(pts, bounds, 16, 12)
    assert (got == _bin_oracle(pts, bounds, 16, 12)).all()


def test_out_of_bounds_positions_clamped_never_dropped(harbor_mesh):
    bounds = harbor_mesh.bounds()
    x0, y0, x1, y1 = bounds
    pts = np.array(
        [
            [x0 - 10_000, y0 - 10_000, 0.0],
            [x1 + 10_000, y1 + 10_000, 0.0],
            [x0 - 1.0, (y0 + y1) / 2, 0.0],
            [(x0 + x1) / 2, y1 + 1.0, 0.0],
        ]
    )
    counts = bin_positions(pts, bounds, 8, 8)
    assert counts.sum() == len(pts)
    assert counts[0, 0] == 1 and counts[7, 7] == 1


def test_resolution_must_be_positive(harbor_mesh):
    with pytest.raises(ValueError, match="at least 1x1"):
        bin_positions(np.zeros((0, 3)), harbor_mesh.bounds(), 0, 4)


# -- heatmap over a store ---------------------------------------------------------


def test_heatmap_empty_refs_zero_grid(small_store):
    grid = heatmap(small_store, [], Side.CT, (9, 5), map_name="de_harbor")
    assert grid.density.shape == (5, 9)
    assert grid.counts.sum() == 0
    assert grid.density.max() == 0.0


def test_heatmap_raw_counts_equal_alive_positions(small_store, harbor_mesh):
    state = small_store.get_state(30)
    sketch = [(p.side, p.position) for p in state.players if p.alive][:3]
    refs = lookup_partial(
        small_store,
        harbor_mesh,
        QuerySpec(map="de_harbor", sketch=sketch, mode=QueryMode.PARTIAL),
    )
    for side in (Side.CT, Side.T):
        grid = heatmap(small_store, refs, side, (24, 24))
        expected = sum(
            1
            for ref in refs
            for p in small_store.get_state(ref.row).players
            if p.alive and p.side is side
        )
        assert int(grid.counts.sum()) == expected
        if expected:
            assert grid.density.max() == 1.0


def test_heatmap_deterministic(small_store, harbor_mesh):
    state = small_store.get_state(64)
    sketch = [(p.side, p.position) for p in state.players if p.alive][:2]
    refs = lookup_partial(
        small_store,
        harbor_mesh,
        QuerySpec(map="de_harbor", sketch=sketch, mode=QueryMode.PARTIAL),
    )
    g1 = heatmap(small_store, refs, Side.T, (20, 16))
    g2 = heatmap(small_store, refs, Side.T, (20, 16))
    assert (g1.density == g2.density).all()
    assert (g1.counts == g2.counts).all()


def test_heatmap_mixed_maps_rejected(small_store):
    lo_h, _ = small_store._map_slice["de_harbor"]
    lo_q, _ = small_store._map_slice["de_quarry"]
    refs = [small_store.ref(lo_h), small_store.ref(lo_q)]
    with pytest.raises(ValueError, match="mixed maps"):
        heatmap(small_store, refs, Side.CT, (8, 8))


def test_heatmap_doc_row_major(small_store):
    grid = heatmap(small_store, [], Side.CT, (4, 3), map_name="de_quarry")
    doc = heatmap_to_doc(grid)
    assert doc["nx"] == 4 and doc["ny"] == 3
    assert len(doc["values"]) == 12
    assert doc["map"] == "de_quarry"


# -- outcome tables ----------------------------------------------------------------


def _retake_fixture(mesh, t_wins=51, ct_wins=6):
    """Synthetic corpus with one round per outcome, each containing a
    3-T-in-BombsiteB scenario state."""
    site = mesh.place_named("BombsiteB")
    area = next(a for a in mesh.areas if a.place_id == site.place_id)
    cx, cy, cz = area.center()
    other = next(a for a in mesh.areas if a.place_id != site.place_id)
    rounds = []
    outcomes = [(Side.T, EndReason.BOMB_EXPLODED)] * t_wins + [
        (Side.CT, EndReason.BOMB_DEFUSED)
    ] * ct_wins
    matches = []
    for i, (winner, reason) in enumerate(outcomes):
        players = [
            PlayerSnapshot(f"t{k}", Side.T, (cx + k, cy, cz), 100, 0, 1000, 1, True)
            for k in range(3)
        ] + [
            PlayerSnapshot(
                f"ct{k}", Side.CT, (other.center()[0] + k, other.center()[1], other.center()[2]),
                100, 0, 1000, 1, True,
            )
            for k in range(2)
        ]
        frames = [
            GameState(mesh.map_name, (f"rt{i}", 1), float(t), players, True)
            for t in range(3)
        ]
        rounds = [
            RoundRecord(
                match_id=f"rt{i}",
                round_number=1,
                winner=winner,
                end_reason=reason,
                ct_buy=BuyType.SEMI_BUY,
                t_buy=BuyType.SEMI_BUY,
                score_ct=0,
                score_t=0,
                bomb_plant_t=0.0,
                frames=frames,
                bomb_plants=[],
            )
        ]
        matches.append(
            MatchRecord(
                match_id=f"rt{i}",
                date="2020-06-01",
                competition_name="Retakes",
                team_ct_start="Defe",
                team_t_start="Atta",
                map=mesh.map_name,
                rounds=rounds,
            )
        )
    return index_states(mesh, matches)


def test_outcome_table_counts_51_6(harbor_mesh):
    store = _retake_fixture(harbor_mesh)
    site = harbor_mesh.place_named("BombsiteB")
    area = next(a for a in harbor_mesh.areas if a.place_id == site.place_id)
    sketch = [(Side.T, area.center())] * 3
    refs = lookup_partial(
        store,
        harbor_mesh,
        QuerySpec(map="de_harbor", sketch=sketch, mode=QueryMode.PARTIAL),
    )
    table = outcome_table(store, refs)
    assert table.t_wins == 51
    assert table.ct_wins == 6
    assert table.total_rounds == 57
    assert table.ct_win_rate == pytest.approx(6 / 57, abs=1e-12)
    assert table.by_end_reason[EndReason.BOMB_EXPLODED] == 51
    assert table.by_end_reason[EndReason.BOMB_DEFUSED] == 6


def test_outcome_table_deduplicates_rounds(small_store):
    lo, _ = small_store._map_slice["de_harbor"]
    refs = [small_store.ref(lo + i) for i in range(10)]  # frames of round 1
    rounds = {small_store.ref(r.row).round_number for r in refs}
    table = outcome_table(small_store, refs + refs)
    assert table.total_rounds == len(
        {
            (r.match_id, r.round_number)
            for r in refs
        }
    )
    assert table.total_rounds <= len(rounds) + 1


def test_outcome_table_empty_refs():
    class _Dummy:
        _state_round = np.zeros(0, dtype=int)

    table = outcome_table(_Dummy(), [])
    assert table.total_rounds == 0
    assert table.ct_win_rate is None
