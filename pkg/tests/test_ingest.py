from __future__ import annotations

import json
from pathlib import Path

import pytest

from statesearch.ingest import (
    BuyType,
    ReplayError,
    Side,
    classify_buy,
    parse_match,
    render_match,
)

SCHEMA_PATH = Path(__file__).resolve().parents[1] / "schemas" / "replay_match.schema.json"
FIXTURE_MATCHES = Path(__file__).resolve().parents[1] / "fixtures" / "matches"


def _frame(t, n_t=1, n_ct=1, bomb=False, hp=100):
    players = [
        {"id": f"t{i}", "side": "T", "x": 1.0 * i, "y": 2.0, "z": 0.0, "hp": hp,
         "armor": 0, "equipment": 800, "grenades": 1}
        for i in range(n_t)
    ] + [
        {"id": f"ct{i}", "side": "CT", "x": 5.0 * i, "y": -2.0, "z": 0.0, "hp": hp,
         "armor": 100, "equipment": 4500, "grenades": 2}
        for i in range(n_ct)
    ]
    return {"t": t, "bomb_planted": bomb, "players": players}


def _doc(rounds=None, **overrides):
    if rounds is None:
        rounds = [
            {
                "round_number": 1,
                "winner": "CT",
                "end_reason": "elimination_t",
                "score_ct": 0,
                "score_t": 0,
                "frames": [_frame(float(t)) for t in range(3)],
                "kills": [],
                "grenades": [],
                "damages": [],
                "bomb_plants": [],
            }
        ]
    doc = {
        "match_id": "match-1",
        "date": "2020-05-04",
        "competition_name": "Test Cup",
        "map": "toy",
        "teams": {"ct_start": "Alpha", "t_start": "Bravo"},
        "rounds": rounds,
    }
    doc.update(overrides)
    return doc


def test_parse_passes_through_well_formed_rounds():
    doc = _doc()
    doc["rounds"].append(
        {
            "round_number": 2,
            "winner": "T",
            "end_reason": "bomb_exploded",
            "score_ct": 1,
            "score_t": 0,
            "frames": [_frame(float(t), bomb=t >= 1) for t in range(4)],
            "bomb_plants": [{"t": 1.0, "actor": "t0", "x": 0.0, "y": 0.0, "z": 0.0}],
        }
    )
    match = parse_match(doc)
    assert len(match.rounds) == 2
    assert [len(r.frames) for r in match.rounds] == [3, 4]
    assert match.rounds[1].bomb_plant_t == 1.0
    assert match.rounds[0].winner is Side.CT


def test_winner_reason_mismatch_rejects_round_with_diagnostic():
    doc = _doc()
    doc["rounds"][0]["end_reason"] = "bomb_exploded"  # implies T, winner says CT
    diags: list[str] = []
    match = parse_match(doc, diags)
    assert match.rounds == []
    assert len(diags) == 1
    assert "winner/end_reason mismatch" in diags[0]


def test_subsecond_frames_dropped_keeping_earliest():
    doc = _doc()
    doc["rounds"][0]["frames"] = [_frame(t) for t in (0.0, 0.5, 1.0, 1.4, 2.0)]
    match = parse_match(doc)
    assert [f.t for f in match.rounds[0].frames] == [0.0, 1.0, 2.0]


def test_non_monotonic_frames_reject_round():
    doc = _doc()
    doc["rounds"][0]["frames"] = [_frame(0.0), _frame(2.0), _frame(1.0)]
    diags: list[str] = []
    match = parse_match(doc, diags)
    assert match.rounds == []
    assert "non-monotonic" in diags[0]


def test_bad_hp_rejects_round():
    doc = _doc()
    doc["rounds"][0]["frames"][1]["players"][0]["hp"] = 250
    diags: list[str] = []
    assert parse_match(doc, diags).rounds == []
    assert "out of range" in diags[0]


def test_sixth_player_on_a_side_rejects_round():
    doc = _doc()
    doc["rounds"][0]["frames"] = [_frame(0.0, n_t=6, n_ct=4)]
    diags: list[str] = []
    assert parse_match(doc, diags).rounds == []
    assert "more than 5" in diags[0]


def test_non_contiguous_round_numbers_reject_match():
    doc = _doc()
    doc["rounds"][0]["round_number"] = 3
    with pytest.raises(ReplayError, match="contiguous"):
        parse_match(doc)


def test_bad_date_rejects_match():
    with pytest.raises(ReplayError, match="ISO-8601"):
        parse_match(_doc(date="04/05/2020"))


def test_event_outside_duration_rejects_round():
    doc = _doc()
    doc["rounds"][0]["kills"] = [
        {"t": 30.0, "actor": "t0", "victim": "ct0", "x": 0.0, "y": 0.0, "z": 0.0}
    ]
    diags: list[str] = []
    assert parse_match(doc, diags).rounds == []
    assert "outside round duration" in diags[0]


def test_event_by_unknown_player_rejects_round():
    doc = _doc()
    doc["rounds"][0]["grenades"] = [
        {"t": 1.0, "actor": "ghost", "x": 0.0, "y": 0.0, "z": 0.0}
    ]
    diags: list[str] = []
    assert parse_match(doc, diags).rounds == []
    assert "unknown player 'ghost'" in diags[0]


def test_alive_is_derived_from_hp():
    doc = _doc()
    doc["rounds"][0]["frames"][2]["players"][0]["hp"] = 0
    match = parse_match(doc)
    frame = match.rounds[0].frames[2]
    assert [p.alive for p in frame.players] == [False, True]


# -- classify_buy -----------------------------------------------------------------


@pytest.mark.parametrize(
    "total,round_number,expected",
    [
        (3_000, 5, BuyType.ECO),
        (50_000, 1, BuyType.PISTOL),
        (50_000, 16, BuyType.PISTOL),
        (20_000, 7, BuyType.FULL_BUY),
        (19_999, 7, BuyType.SEMI_BUY),
        (5_000, 2, BuyType.SEMI_BUY),
        (4_999, 2, BuyType.ECO),
        (0, 30, BuyType.ECO),
    ],
)
def test_classify_buy_thresholds(total, round_number, expected):
    assert classify_buy(total, round_number) is expected


def test_classify_buy_rejects_negative_total():
    with pytest.raises(ValueError):
        classify_buy(-1, 3)


# -- round trip and fixture validation ----------------------------------------------


def test_render_parse_round_trip(small_corpus):
    for match in small_corpus[:3]:
        doc = render_match(match)
        again = parse_match(json.loads(json.dumps(doc)))
        assert again == match


def test_fixture_corpus_satisfies_invariants(fixture_matches):
    for match in fixture_matches:
        numbers = [r.round_number for r in match.rounds]
        assert numbers == list(range(1, len(numbers) + 1))
        for rnd in match.rounds:
            times = [f.t for f in rnd.frames]
            assert times == sorted(times)
            assert all(t2 - t1 >= 1.0 - 1e-9 for t1, t2 in zip(times, times[1:]))
            for frame in rnd.frames:
                t_count = sum(1 for p in frame.players if p.side is Side.T)
                assert t_count <= 5 and len(frame.players) - t_count <= 5
                for p in frame.players:
                    assert p.alive == (p.hp > 0)
                    assert 0 <= p.hp <= 100
                    assert 0 <= p.grenade_count <= 4
                    assert p.armor >= 0 and p.equipment_value >= 0


def test_fixture_documents_validate_against_schema():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))
    validator = jsonschema.Draft202012Validator(schema)
    for path in sorted(FIXTURE_MATCHES.glob("*.json")):
        errors = list(validator.iter_errors(json.loads(path.read_text(encoding="utf-8"))))
        assert errors == [], f"{path.name}: {errors[:2]}"
