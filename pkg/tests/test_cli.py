from __future__ import annotations

import json
import os
import signal
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


def _run(*args, check=True):
    proc = subprocess.run(
        [sys.executable, "-m", "statesearch", *args],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )
    if check and proc.returncode != 0:
        raise AssertionError(f"{args} failed: {proc.stderr}")
    return proc


@pytest.fixture(scope="module")
def snapshot(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "fixtures.snap"
    proc = _run(
        "ingest",
        *[str(p) for p in sorted((FIXTURES / "matches").glob("*.json"))],
        "--mesh-dir",
        str(FIXTURES / "meshes"),
        "--out",
        str(out),
    )
    assert proc.returncode == 0
    return out


def test_ingest_summary_reports_exact_counts(snapshot, fixture_matches):
    proc = _run(
        "ingest",
        *[str(p) for p in sorted((FIXTURES / "matches").glob("*.json"))],
        "--mesh-dir",
        str(FIXTURES / "meshes"),
        "--out",
        str(snapshot.parent / "again.snap"),
    )
    expected_rounds = sum(len(m.rounds) for m in fixture_matches)
    expected_states = sum(len(r.frames) for m in fixture_matches for r in m.rounds)
    line = proc.stdout.strip().splitlines()[-1]
    assert f"matches={len(fixture_matches)}" in line
    assert f"rounds={expected_rounds}" in line
    assert f"states={expected_states}" in line
    assert "maps=de_harbor,de_quarry" in line


def test_ingest_is_byte_deterministic(snapshot, tmp_path):
    second = tmp_path / "second.snap"
    _run(
        "ingest",
        *[str(p) for p in sorted((FIXTURES / "matches").glob("*.json"))],
        "--mesh-dir",
        str(FIXTURES / "meshes"),
        "--out",
        str(second),
    )
    assert second.read_bytes() == snapshot.read_bytes()


def test_ingest_corrupt_file_nonzero_exit_but_partial_ingest(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    good = sorted((FIXTURES / "matches").glob("*.json"))[0]
    out = tmp_path / "partial.snap"
    proc = _run(
        "ingest", str(bad), str(good),
        "--mesh-dir", str(FIXTURES / "meshes"),
        "--out", str(out),
        check=False,
    )
    assert proc.returncode != 0
    assert "bad.json" in proc.stderr
    assert out.exists()
    assert "matches=1" in proc.stdout


def test_synth_deterministic_and_counted(tmp_path):
    args = (
        "synth",
        "--mesh", str(FIXTURES / "meshes" / "de_harbor.json"),
        "--matches", "3",
        "--rounds", "6",
        "--frames", "30",
        "--seed", "5",
    )
    a, b = tmp_path / "a", tmp_path / "b"
    pa = _run(*args, "--out", str(a))
    pb = _run(*args, "--out", str(b))
    files_a = sorted(p.name for p in a.glob("*.json"))
    files_b = sorted(p.name for p in b.glob("*.json"))
    assert files_a == files_b and len(files_a) == 3
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = pa.stdout.strip()
    assert "matches=3" in summary and "rounds=18" in summary
    states = sum(
        len(r["frames"])
        for name in files_a
        for r in json.loads((a / name).read_text())["rounds"]
    )
    assert f"states={states}" in summary


def test_synth_rejects_bad_config(tmp_path):
    proc = _run(
        "synth",
        "--mesh", str(FIXTURES / "meshes" / "de_harbor.json"),
        "--matches", "0",
        "--out", str(tmp_path / "x"),
        check=False,
    )
    assert proc.returncode != 0
    assert "matches" in proc.stderr


def test_query_self_retrieval_rank_one(snapshot):
    sketch_path = FIXTURES / "sketches" / "harbor_known_state.json"
    proc = _run("query", "--snapshot", str(snapshot), "--sketch", str(sketch_path))
    lines = proc.stdout.strip().splitlines()
    header = lines[0].split("\t")
    first = dict(zip(header, lines[1].split("\t")))
    sketch = json.loads(sketch_path.read_text())
    assert first["rank"] == "1"
    assert first["map"] == sketch["map"]
    # The sketch was derived from match m0007-00000 round 5 t=20.
    assert first["match_id"] == "m0007-00000"
    assert first["round"] == "5"
    assert float(first["t"]) == 20.0


def test_query_json_and_table_agree(snapshot):
    sketch_path = FIXTURES / "sketches" / "harbor_known_state.json"
    table = _run(
        "query", "--snapshot", str(snapshot), "--sketch", str(sketch_path),
        "--format", "table", "--limit", "5",
    ).stdout.strip().splitlines()
    data = json.loads(
        _run(
            "query", "--snapshot", str(snapshot), "--sketch", str(sketch_path),
            "--format", "json", "--limit", "5",
        ).stdout
    )
    header = table[0].split("\t")
    assert len(table) - 1 == len(data["results"])
    for line, row in zip(table[1:], data["results"]):
        cells = dict(zip(header, line.split("\t")))
        for key, value in cells.items():
            assert str(row[key if key != "round" else "round"]) == value


def test_query_partial_superset_of_full(snapshot, tmp_path):
    full_doc = json.loads((FIXTURES / "sketches" / "harbor_known_state.json").read_text())
    partial_doc = dict(full_doc)
    partial_doc["mode"] = "partial"
    partial_path = tmp_path / "partial.json"
    partial_path.write_text(json.dumps(partial_doc), encoding="utf-8")
    full = json.loads(
        _run(
            "query", "--snapshot", str(snapshot),
            "--sketch", str(FIXTURES / "sketches" / "harbor_known_state.json"),
            "--format", "json", "--limit", "0",
        ).stdout
    )
    partial = json.loads(
        _run(
            "query", "--snapshot", str(snapshot), "--sketch", str(partial_path),
            "--format", "json", "--limit", "0",
        ).stdout
    )
    def keyset(payload):
        return {(r["match_id"], r["round"], r["t"]) for r in payload["results"]}
    assert keyset(full) <= keyset(partial)
    assert full["total"] <= partial["total"]


def test_train_wp_deterministic_model_files(snapshot, tmp_path):
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    _run("train-wp", "--snapshot", str(snapshot), "--seed", "3", "--out", str(m1))
    _run("train-wp", "--snapshot", str(snapshot), "--seed", "3", "--out", str(m2))
    assert m1.read_bytes() == m2.read_bytes()
    doc = json.loads(m1.read_text())
    assert doc["format"] == "statesearch-winprob"
    assert len(doc["weights"]) == len(doc["feature_names"])


def test_heatmap_png_dimensions_match_resolution(snapshot, tmp_path):
    from PIL import Image

    grid_path = tmp_path / "grid.json"
    png_path = tmp_path / "heat.png"
    _run(
        "heatmap",
        "--snapshot", str(snapshot),
        "--sketch", str(FIXTURES / "sketches" / "harbor_siteb_hold.json"),
        "--side", "CT",
        "--resolution", "48x36",
        "--out", str(grid_path),
        "--png", str(png_path),
    )
    with Image.open(png_path) as img:
        assert img.size == (48, 36)
    doc = json.loads(grid_path.read_text())
    assert doc["nx"] == 48 and doc["ny"] == 36
    assert len(doc["values"]) == 48 * 36


def test_serve_exposes_snapshot_catalog(snapshot):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [
            sys.executable, "-m", "statesearch", "serve",
            "--snapshot", str(snapshot),
            "--listen", f"127.0.0.1:{port}",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        cwd=ROOT,
    )
    try:
        deadline = time.time() + 60
        maps = None
        while time.time() < deadline:
            try:
                with urllib.request.urlopen(
                    f"http://127.0.0.1:{port}/v1/maps", timeout=2
                ) as resp:
                    maps = json.loads(resp.read())
                    break
            except OSError:
                if proc.poll() is not None:
                    raise AssertionError(proc.stderr.read().decode())
                time.sleep(0.3)
        assert maps is not None, "server did not come up"
        assert [m["name"] for m in maps["maps"]] == ["de_harbor", "de_quarry"]
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
