"""Navigation-mesh loading, validation, and point location.

A mesh discretizes one map into axis-aligned rectangular *areas*, each
belonging to exactly one named *place* ("BombsiteA", "Mid", ...). Places are
the unit of tokenization: every place gets a fixed token position, assigned
by case-sensitive lexicographic order of place names so that tokens built by
different processes are comparable.

Meshes are immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

# Rows per block when locating points against all areas at once; keeps the
# (points x areas) temporaries around a few tens of MB.
_LOCATE_BLOCK_CELLS = 4_000_000


class MeshError(ValueError):
    """Raised when a mesh document is malformed or internally inconsistent."""


@dataclass(frozen=True)
class Place:
    """Named map region aggregating one or more areas."""

    place_id: int
    name: str
    token_position: int


@dataclass(frozen=True)
class NavArea:
    """Axis-aligned rectangular traversable surface."""

    area_id: int
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    z_center: float
    place_id: int

    def center(self) -> tuple[float, float, float]:
        return (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
            self.z_center,
        )


class NavMesh:
    """Validated navigation mesh for one map.

    Point location semantics (see :meth:`locate`):

    * a point inside exactly one area's rectangle belongs to that area;
    * inside several overlapping rectangles, the area whose ``z_center`` is
      closest to the point's z wins (stacked geometry: tunnels under a mid);
    * inside none, the point snaps to the area with the smallest squared
      xy-distance to its rectangle, ties broken by z proximity, then by the
      lowest ``area_id``. Replay positions can drift slightly off the mesh
      (falling players, ladder transit), so out-of-mesh points snap rather
      than error: dropping those states would bias retrieval.
    """

    def __init__(
        self,
        map_name: str,
        places: Sequence[Place],
        areas: Sequence[NavArea],
        edges: Sequence[tuple[int, int]],
    ):
        self.map_name = map_name
        self.places = tuple(sorted(places, key=lambda p: p.token_position))
        self.areas = tuple(sorted(areas, key=lambda a: a.area_id))
        self.edges = tuple(edges)
        self._validate()

        # Column arrays in area_id order; argmin tie-breaks then fall back to
        # the lowest area_id automatically (first occurrence wins).
        self._x_min = np.array([a.x_min for a in self.areas], dtype=np.float64)
        self._x_max = np.array([a.x_max for a in self.areas], dtype=np.float64)
        self._y_min = np.array([a.y_min for a in self.areas], dtype=np.float64)
        self._y_max = np.array([a.y_max for a in self.areas], dtype=np.float64)
        self._z_center = np.array([a.z_center for a in self.areas], dtype=np.float64)
        self._area_ids = np.array([a.area_id for a in self.areas], dtype=np.int64)
        self._area_place = np.array([a.place_id for a in self.areas], dtype=np.int64)
        self._place_by_name = {p.name: p for p in self.places}
        self._place_by_id = {p.place_id: p for p in self.places}

    # -- validation ---------------------------------------------------------

    def _validate(self) -> None:
        if not self.places:
            raise MeshError(f"mesh '{self.map_name}' defines no places")
        names = [p.name for p in self.places]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise MeshError(f"duplicate place name '{dup}' in mesh '{self.map_name}'")
        positions = sorted(p.token_position for p in self.places)
        if positions != list(range(len(self.places))):
            raise MeshError(
                f"mesh '{self.map_name}' token positions are not contiguous from 0"
            )
        place_ids = {p.place_id for p in self.places}
        area_ids = [a.area_id for a in self.areas]
        if len(set(area_ids)) != len(area_ids):
            dup_id = next(i for i in area_ids if area_ids.count(i) > 1)
            raise MeshError(f"duplicate area id {dup_id} in mesh '{self.map_name}'")
        for a in self.areas:
            if not (a.x_min < a.x_max and a.y_min < a.y_max):
                raise MeshError(f"area {a.area_id} has a degenerate rectangle")
            if a.place_id not in place_ids:
                raise MeshError(f"area {a.area_id} references unknown place id {a.place_id}")
        known = set(area_ids)
        for u, v in self.edges:
            if u not in known or v not in known:
                missing = u if u not in known else v
                raise MeshError(f"edge ({u}, {v}) references unknown area {missing}")

    # -- lookups ------------------------------------------------------------

    @property
    def num_places(self) -> int:
        return len(self.places)

    def place(self, place_id: int) -> Place:
        return self._place_by_id[place_id]

    def place_named(self, name: str) -> Place:
        try:
            return self._place_by_name[name]
        except KeyError:
            raise MeshError(f"mesh '{self.map_name}' has no place named '{name}'") from None

    def place_of_area(self, area_id: int) -> int:
        idx = int(np.searchsorted(self._area_ids, area_id))
        if idx >= len(self._area_ids) or self._area_ids[idx] != area_id:
            raise MeshError(f"unknown area id {area_id}")
        return int(self._area_place[idx])

    def bounds(self) -> tuple[float, float, float, float]:
        """Map extent (x_min, y_min, x_max, y_max) over all areas."""
        if not self.areas:
            raise MeshError(f"mesh '{self.map_name}' has no areas")
        return (
            float(self._x_min.min()),
            float(self._y_min.min()),
            float(self._x_max.max()),
            float(self._y_max.max()),
        )

    def locate(self, point: Sequence[float]) -> tuple[int, int]:
        """Map one (x, y, z) position to ``(area_id, place_id)``."""
        area_idx = self.locate_many(np.asarray([point], dtype=np.float64))
        return int(self._area_ids[area_idx[0]]), int(self._area_place[area_idx[0]])

    def locate_places(self, points: np.ndarray) -> np.ndarray:
        """Vectorized variant of :meth:`locate` returning place ids only."""
        return self._area_place[self.locate_many(points)]

    def locate_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized point location.

        Args:
            points: float array of shape (n, 3).

        Returns:
            int array of shape (n,) with indices into ``self.areas`` (NOT
            area ids; callers wanting ids or places index the mesh arrays).
        """
        if len(self.areas) == 0:
            raise MeshError(f"empty mesh: '{self.map_name}' has no areas")
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        n = pts.shape[0]
        out = np.empty(n, dtype=np.int64)
        block = max(1, _LOCATE_BLOCK_CELLS // max(1, len(self.areas)))
        for lo in range(0, n, block):
            hi = min(n, lo + block)
            out[lo:hi] = self._locate_block(pts[lo:hi])
        return out

    def _locate_block(self, pts: np.ndarray) -> np.ndarray:
        x = pts[:, 0:1]
        y = pts[:, 1:2]
        z = pts[:, 2:3]
        inside = (x >= self._x_min) & (x <= self._x_max)
        inside &= (y >= self._y_min) & (y <= self._y_max)
        z_dist = np.abs(z - self._z_center)

        # Containment: closest z_center among containing areas.
        z_in = np.where(inside, z_dist, np.inf)
        idx_inside = np.argmin(z_in, axis=1)
        any_inside = inside.any(axis=1)

        # Fallback: squared xy distance to the rectangle, ties by z proximity.
        dx = np.maximum(np.maximum(self._x_min - x, x - self._x_max), 0.0)
        dy = np.maximum(np.maximum(self._y_min - y, y - self._y_max), 0.0)
        sq = dx * dx + dy * dy
        sq_min = sq.min(axis=1, keepdims=True)
        z_tie = np.where(sq == sq_min, z_dist, np.inf)
        idx_outside = np.argmin(z_tie, axis=1)

        return np.where(any_inside, idx_inside, idx_outside)


def load_navmesh(source: dict | str | Path) -> NavMesh:
    """Load and validate a mesh document.

    ``source`` may be a parsed document (dict), a JSON string, or a path to a
    UTF-8 JSON file. Any structural problem rejects the whole mesh with a
    diagnostic naming the offending entity.
    """
    doc = _read_document(source)
    if not isinstance(doc, dict):
        raise MeshError("mesh document must be a JSON object")
    map_name = doc.get("map_name")
    if not isinstance(map_name, str) or not map_name:
        raise MeshError("mesh document is missing 'map_name'")

    raw_places = doc.get("places")
    if not isinstance(raw_places, list) or not raw_places:
        raise MeshError(f"mesh '{map_name}' defines no places")
    names: list[str] = []
    for entry in raw_places:
        name = entry.get("name") if isinstance(entry, dict) else None
        if not isinstance(name, str) or not name:
            raise MeshError(f"mesh '{map_name}' contains a place without a name")
        if name in names:
            raise MeshError(f"duplicate place name '{name}' in mesh '{map_name}'")
        names.append(name)
    # Canonical ordering: token positions follow the case-sensitive sort of
    # place names, independent of document order.
    places = [Place(place_id=i, name=n, token_position=i) for i, n in enumerate(sorted(names))]
    id_by_name = {p.name: p.place_id for p in places}

    raw_areas = doc.get("areas")
    if not isinstance(raw_areas, list):
        raise MeshError(f"mesh '{map_name}' is missing 'areas'")
    areas: list[NavArea] = []
    for entry in raw_areas:
        if not isinstance(entry, dict):
            raise MeshError(f"mesh '{map_name}' contains a non-object area entry")
        try:
            area_id = int(entry["id"])
            place_name = entry["place_name"]
            coords = {k: float(entry[k]) for k in ("x_min", "y_min", "x_max", "y_max", "z_center")}
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"mesh '{map_name}' has a malformed area entry: {exc}") from None
        if place_name not in id_by_name:
            raise MeshError(
                f"area {area_id} references unknown place '{place_name}' in mesh '{map_name}'"
            )
        areas.append(NavArea(area_id=area_id, place_id=id_by_name[place_name], **coords))

    raw_edges = doc.get("edges", [])
    if not isinstance(raw_edges, list):
        raise MeshError(f"mesh '{map_name}' has malformed 'edges'")
    edges: list[tuple[int, int]] = []
    for pair in raw_edges:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise MeshError(f"mesh '{map_name}' has a malformed edge entry: {pair!r}")
        edges.append((int(pair[0]), int(pair[1])))

    return NavMesh(map_name, places, areas, edges)


def mesh_to_doc(mesh: NavMesh) -> dict:
    """Render a mesh back to its document form (inverse of load_navmesh)."""
    return {
        "map_name": mesh.map_name,
        "places": [{"name": p.name} for p in mesh.places],
        "areas": [
            {
                "id": a.area_id,
                "x_min": a.x_min,
                "y_min": a.y_min,
                "x_max": a.x_max,
                "y_max": a.y_max,
                "z_center": a.z_center,
                "place_name": mesh.place(a.place_id).name,
            }
            for a in mesh.areas
        ],
        "edges": [list(e) for e in mesh.edges],
    }


def _read_document(source: dict | str | Path):
    if isinstance(source, dict):
        return source
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str):
        stripped = source.lstrip()
        if stripped.startswith("{"):
            text = source
        else:
            text = Path(source).read_text(encoding="utf-8")
    else:
        raise MeshError(f"unsupported mesh source type: {type(source).__name__}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshError(f"mesh document is not valid JSON: {exc}") from None


def load_mesh_dir(mesh_dir: str | Path) -> dict[str, NavMesh]:
    """Load every ``*.json`` mesh in a directory, keyed by map name."""
    meshes: dict[str, NavMesh] = {}
    for path in sorted(Path(mesh_dir).glob("*.json")):
        mesh = load_navmesh(path)
        meshes[mesh.map_name] = mesh
    if not meshes:
        raise MeshError(f"no mesh documents found in {mesh_dir}")
    return meshes
