from __future__ import annotations

import struct

import numpy as np
import pytest

from statesearch.snapshot import (
    MAGIC,
    SnapshotError,
    SnapshotVersionError,
    load_snapshot,
    save_snapshot,
)
from statesearch.store import QuerySpec, run_query


def test_save_load_preserves_queries(small_store, tmp_path):
    path = tmp_path / "corpus.snap"
    save_snapshot(small_store, path)
    loaded = load_snapshot(path)
    assert loaded.num_states == small_store.num_states
    assert loaded.maps() == small_store.maps()
    assert loaded.teams() == small_store.teams()
    state = small_store.get_state(17)
    assert loaded.get_state(17) == state
    sketch = [(p.side, p.position) for p in state.players if p.alive]
    q = QuerySpec(map=state.map, sketch=sketch)
    assert [r.row for r in run_query(loaded, q)] == [
        r.row for r in run_query(small_store, q)
    ]


def test_snapshot_bytes_deterministic(small_store, tmp_path):
    p1 = tmp_path / "a.snap"
    p2 = tmp_path / "b.snap"
    save_snapshot(small_store, p1)
    save_snapshot(small_store, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_loaded_store_round_trips_to_identical_bytes(small_store, tmp_path):
    p1 = tmp_path / "a.snap"
    save_snapshot(small_store, p1)
    loaded = load_snapshot(p1)
    p2 = tmp_path / "b.snap"
    save_snapshot(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_version_mismatch_rejected(small_store, tmp_path):
    path = tmp_path / "corpus.snap"
    save_snapshot(small_store, path)
    blob = bytearray(path.read_bytes())
    (header_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    header = blob[start : start + header_len]
    patched = header.replace(b'"version":1', b'"version":9')
    assert patched != header
    path.write_bytes(bytes(blob[:start]) + bytes(patched) + bytes(blob[start + header_len :]))
    with pytest.raises(SnapshotVersionError, match="version 9"):
        load_snapshot(path)


def test_wrong_magic_rejected(small_store, tmp_path):
    path = tmp_path / "corpus.snap"
    save_snapshot(small_store, path)
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(SnapshotError, match="not a statesearch snapshot"):
        load_snapshot(path)


def test_truncated_snapshot_rejected(small_store, tmp_path):
    path = tmp_path / "corpus.snap"
    save_snapshot(small_store, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 1024])
    with pytest.raises(SnapshotError, match="truncated"):
        load_snapshot(path)


def test_loaded_counts_match_retokenization(small_store, tmp_path):
    path = tmp_path / "corpus.snap"
    save_snapshot(small_store, path)
    loaded = load_snapshot(path)
    rng = np.random.default_rng(31)
    for row in rng.choice(loaded.num_states, size=50, replace=False):
        assert loaded.token_string(int(row)) == small_store.token_string(int(row))
