"""Operator command line: ingest corpora, generate synthetic data, query,
train win-probability models, export heatmaps, and serve the HTTP API.

Diagnostics go to stderr and data to stdout, so output can be piped. Exit
code is 0 only when every requested unit of work succeeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .ingest import parse_match
from .navmesh import load_mesh_dir, load_navmesh
from .snapshot import load_snapshot, save_snapshot
from .store import StateStore, index_states, parse_query, run_query
from .summarize import heatmap, heatmap_to_doc
from .synth import SynthConfig, synth_generate
from .tokenizer import Side
from .winprob import WinProbModel, auc, feature_matrix, train, training_pairs

DEFAULT_TEAMS = (
    "Astra",
    "Borealis",
    "Cinder",
    "Drift",
    "Emberfall",
    "Frostline",
    "Gale",
    "Harrier",
)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statesearch",
        description="Sketch-based retrieval over team FPS replay game states.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse replay documents and build a snapshot")
    p.add_argument("inputs", nargs="+", help="replay JSON files (one match each)")
    p.add_argument("--mesh-dir", required=True, help="directory of mesh JSON documents")
    p.add_argument("--out", required=True, help="snapshot file to write")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic replay corpus")
    p.add_argument("--mesh", action="append", required=True, help="mesh JSON (repeatable)")
    p.add_argument("--matches", type=int, default=10)
    p.add_argument("--rounds", type=int, default=16)
    p.add_argument("--frames", type=int, default=60, help="mean 1 Hz frames per round")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--teams", default=",".join(DEFAULT_TEAMS), help="comma-separated pool")
    p.add_argument("--plant-rate", type=float, default=0.45)
    p.add_argument("--out", required=True, help="directory for match documents")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("query", help="run a sketch-file query against a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--sketch", required=True, help="sketch JSON file")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("train-wp", help="train the win-probability model")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model JSON file to write")
    p.set_defaults(func=_cmd_train_wp)

    p = sub.add_parser("heatmap", help="export a heatmap for a sketch-file query")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--sketch", required=True)
    p.add_argument("--side", choices=("T", "CT"), default="CT")
    p.add_argument("--resolution", default="64x64", help="NXxNY cells")
    p.add_argument("--out", help="grid JSON file to write")
    p.add_argument("--png", help="grayscale PNG to write (width=nx, height=ny)")
    p.set_defaults(func=_cmd_heatmap)

    p = sub.add_parser("serve", help="serve the HTTP API for a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument(
        "--listen",
        default=os.environ.get("STATESEARCH_LISTEN", "127.0.0.1:8765"),
        help="host:port (env STATESEARCH_LISTEN overrides the default)",
    )
    p.add_argument("--model", help="trained model JSON; trains a fresh one when omitted")
    p.set_defaults(func=_cmd_serve)

    return parser


def _cmd_ingest(args) -> int:
    meshes = load_mesh_dir(args.mesh_dir)
    matches = []
    errors = 0
    diagnostics: list[str] = []
    for raw in args.inputs:
        path = Path(raw)
        try:
            matches.append(parse_match(path, diagnostics))
        except Exception as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            errors += 1
    store = index_states(meshes, matches, diagnostics)
    for line in diagnostics:
        print(line, file=sys.stderr)
    save_snapshot(store, args.out)
    print(
        f"matches={store.num_matches} rounds={store.num_rounds} "
        f"rounds_skipped={len(diagnostics)} states={store.num_states} "
        f"maps={','.join(store.maps())}"
    )
    print(f"snapshot written to {args.out}", file=sys.stderr)
    return 1 if (errors or diagnostics) else 0


def _cmd_synth(args) -> int:
    meshes = [load_navmesh(Path(m)) for m in args.mesh]
    teams = [t.strip() for t in args.teams.split(",") if t.strip()]
    config = SynthConfig(
        matches=args.matches,
        rounds_per_match=args.rounds,
        frames_per_round=args.frames,
        team_pool=teams,
        meshes=meshes,
        plant_rate=args.plant_rate,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .ingest import render_match

    matches = rounds = states = 0
    for match in synth_generate(config, args.seed):
        doc = render_match(match)
        (out_dir / f"{match.match_id}.json").write_text(
            json.dumps(doc, sort_keys=True), encoding="utf-8"
        )
        matches += 1
        rounds += len(match.rounds)
        states += sum(len(r.frames) for r in match.rounds)
    print(f"matches={matches} rounds={rounds} states={states} out={out_dir}")
    return 0


def _cmd_query(args) -> int:
    store = load_snapshot(args.snapshot)
    spec = parse_query(json.loads(Path(args.sketch).read_text(encoding="utf-8")))
    refs = run_query(store, spec)
    shown = refs[: args.limit] if args.limit and args.limit > 0 else refs
    rows = []
    for rank, ref in enumerate(shown, start=1):
        info = store.round_info(int(store.round_rows_for_states([ref.row])[0]))
        rows.append(
            {
                "rank": rank,
                "match_id": ref.match_id,
                "round": ref.round_number,
                "t": ref.t,
                "map": ref.map,
                "date": info.date,
                "ct_team": info.ct_team,
                "t_team": info.t_team,
                "score_ct": info.score_ct,
                "score_t": info.score_t,
                "ct_buy": info.ct_buy.value,
                "t_buy": info.t_buy.value,
                "end_reason": info.end_reason.value,
                "winner": info.winner.value,
            }
        )
    if args.format == "json":
        print(json.dumps({"total": len(refs), "results": rows}, indent=2))
    else:
        cols = (
            "rank",
            "match_id",
            "round",
            "t",
            "map",
            "date",
            "ct_team",
            "t_team",
            "score_ct",
            "score_t",
            "ct_buy",
            "t_buy",
            "end_reason",
            "winner",
        )
        print("\t".join(cols))
        for row in rows:
            print("\t".join(str(row[c]) for c in cols))
        print(f"total={len(refs)}", file=sys.stderr)
    return 0


def _cmd_train_wp(args) -> int:
    store = load_snapshot(args.snapshot)
    model = train(training_pairs(store), args.seed)
    model.save(args.out)
    X, y = feature_matrix(store)
    scores = 1.0 / (1.0 + np.exp(-(X @ model.weights + model.intercept)))
    meta = model.training_meta
    print(
        f"examples={meta['n_examples']} iterations={meta['iterations']} "
        f"final_loss={meta['loss_curve'][-1]:.6f} train_auc={auc(scores, y):.4f} "
        f"model={args.out}"
    )
    return 0


def _cmd_heatmap(args) -> int:
    store = load_snapshot(args.snapshot)
    spec = parse_query(json.loads(Path(args.sketch).read_text(encoding="utf-8")))
    try:
        nx, ny = (int(v) for v in args.resolution.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad --resolution {args.resolution!r}, expected NXxNY") from None
    refs = run_query(store, spec)
    grid = heatmap(store, refs, Side(args.side), (nx, ny), map_name=spec.map)
    doc = heatmap_to_doc(grid)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
    else:
        print(json.dumps(doc, sort_keys=True))
    if args.png:
        from PIL import Image

        # Row 0 of the grid is the south edge; PNG rows run top-down.
        pixels = (grid.density[::-1] * 255.0).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(args.png)
    print(
        f"states={len(refs)} positions={doc['total_positions']} grid={nx}x{ny}",
        file=sys.stderr,
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    store = load_snapshot(args.snapshot)
    if args.model:
        model = WinProbModel.load(args.model)
    else:
        print("no --model given; training a baseline on the snapshot", file=sys.stderr)
        model = train(training_pairs(store), seed=0)
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad --listen {args.listen!r}, expected host:port")
    app = create_app(store, model)
    uvicorn.run(app, host=host, port=int(port), log_level="warning")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
