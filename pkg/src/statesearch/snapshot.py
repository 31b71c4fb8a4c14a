"""On-disk store snapshots: one versioned binary container per corpus.

Layout: an 8-byte magic, a little-endian u64 header length, a JSON header
(array manifest plus all string-valued metadata, including the mesh
documents), then the raw array buffers back to back in manifest order.
Writes are byte-deterministic: identical stores produce identical files.
The token index is not persisted; it is rebuilt from the count columns when
a snapshot loads.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .navmesh import load_navmesh, mesh_to_doc
from .store import StateStore

MAGIC = b"SSSNAP\x00\x01"
FORMAT_VERSION = 1

_ARRAY_FIELDS = (
    ("match_date", "_match_date"),
    ("match_team_ct", "_match_team_ct"),
    ("match_team_t", "_match_team_t"),
    ("round_match", "_round_match"),
    ("round_number", "_round_number"),
    ("round_winner", "_round_winner"),
    ("round_reason", "_round_reason"),
    ("round_ct_buy", "_round_ct_buy"),
    ("round_t_buy", "_round_t_buy"),
    ("round_score_ct", "_round_score_ct"),
    ("round_score_t", "_round_score_t"),
    ("round_plant_t", "_round_plant_t"),
    ("round_ct_team", "_round_ct_team"),
    ("round_t_team", "_round_t_team"),
    ("ev_round", "_ev_round"),
    ("ev_kind", "_ev_kind"),
    ("ev_t", "_ev_t"),
    ("ev_actor", "_ev_actor"),
    ("ev_victim", "_ev_victim"),
    ("ev_pos", "_ev_pos"),
    ("state_round", "_state_round"),
    ("state_t", "_state_t"),
    ("bomb_planted", "_bomb_planted"),
    ("pos", "_pos"),
    ("side", "_side"),
    ("alive", "_alive"),
    ("hp", "_hp"),
    ("armor", "_armor"),
    ("equip", "_equip"),
    ("nades", "_nades"),
)


class SnapshotError(ValueError):
    """Raised when a snapshot file is unreadable."""


class SnapshotVersionError(SnapshotError):
    """Raised when a snapshot's format version is unsupported."""


def save_snapshot(store: StateStore, path: str | Path) -> None:
    path = Path(path)
    arrays: list[tuple[str, np.ndarray]] = []
    manifest = []
    offset = 0
    named = [(name, getattr(store, attr)) for name, attr in _ARRAY_FIELDS]
    named += [(f"counts:{m}", store._counts[m]) for m in sorted(store._counts)]
    for name, raw in named:
        arr = np.ascontiguousarray(raw)
        arrays.append((name, arr))
        manifest.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": int(arr.nbytes),
            }
        )
        offset += arr.nbytes
    header = {
        "format": "statesearch-snapshot",
        "version": FORMAT_VERSION,
        "arrays": manifest,
        "meta": {
            "match_ids": store._match_ids,
            "match_comp": store._match_comp,
            "match_map": store._match_map,
            "teams": store._teams,
            "rosters": store._rosters,
            "meshes": [mesh_to_doc(m) for m in (store.meshes[k] for k in sorted(store.meshes))],
        },
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in arrays:
            fh.write(arr.tobytes())


def load_snapshot(path: str | Path) -> StateStore:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise SnapshotError(f"{path} is not a statesearch snapshot")
    (header_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    body_start = len(MAGIC) + 8
    try:
        header = json.loads(blob[body_start : body_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"corrupt snapshot header: {exc}") from None
    if header.get("format") != "statesearch-snapshot":
        raise SnapshotError(f"{path} is not a statesearch snapshot")
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise SnapshotVersionError(
            f"snapshot version {version} is not supported (expected {FORMAT_VERSION})"
        )

    data_start = body_start + header_len
    parts: dict = {}
    counts_by_map: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        start = data_start + spec["offset"]
        end = start + spec["nbytes"]
        if end > len(blob):
            raise SnapshotError(f"snapshot truncated in array '{spec['name']}'")
        arr = np.frombuffer(blob[start:end], dtype=np.dtype(spec["dtype"]))
        arr = arr.reshape(spec["shape"])
        name = spec["name"]
        if name.startswith("counts:"):
            counts_by_map[name.split(":", 1)[1]] = arr
        else:
            parts[name] = arr
    parts["counts_by_map"] = counts_by_map
    meta = header["meta"]
    parts["match_ids"] = list(meta["match_ids"])
    parts["match_comp"] = list(meta["match_comp"])
    parts["match_map"] = list(meta["match_map"])
    parts["teams"] = list(meta["teams"])
    parts["rosters"] = [list(r) for r in meta["rosters"]]
    meshes = {}
    for doc in meta["meshes"]:
        mesh = load_navmesh(doc)
        meshes[mesh.map_name] = mesh
    return StateStore(meshes, parts)
