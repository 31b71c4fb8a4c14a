from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from statesearch.ingest import parse_match
from statesearch.navmesh import load_navmesh
from statesearch.store import index_states
from statesearch.synth import SynthConfig, synth_generate

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture(scope="session")
def harbor_mesh():
    return load_navmesh(FIXTURES / "meshes" / "de_harbor.json")


@pytest.fixture(scope="session")
def quarry_mesh():
    return load_navmesh(FIXTURES / "meshes" / "de_quarry.json")


@pytest.fixture(scope="session")
def fixture_matches():
    docs = sorted((FIXTURES / "matches").glob("*.json"))
    return [parse_match(p) for p in docs]


@pytest.fixture(scope="session")
def small_corpus(harbor_mesh, quarry_mesh):
    """~8k-state two-map corpus shared by the cheaper oracle tests."""
    config = SynthConfig(
        matches=8,
        rounds_per_match=14,
        frames_per_round=40,
        team_pool=["Astra", "Borealis", "Cinder", "Drift"],
        meshes=[harbor_mesh, quarry_mesh],
    )
    return list(synth_generate(config, seed=101))


@pytest.fixture(scope="session")
def small_store(harbor_mesh, quarry_mesh, small_corpus):
    diagnostics: list[str] = []
    store = index_states([harbor_mesh, quarry_mesh], small_corpus, diagnostics)
    assert diagnostics == []
    return store
