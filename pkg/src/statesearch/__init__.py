"""statesearch: sketch-based retrieval over team FPS replay game states.

Pipeline: discretize each map with a navigation mesh (areas grouped into
named places), tokenize every per-second game state into per-side place
counts, index the tokens, and answer sketched queries exactly, partially, or
by nearest token under contextual filters. Result sets feed win-probability
charts, heatmaps, and outcome tables, exposed through a CLI and an HTTP API.
"""

from .ingest import (
    BuyType,
    EndReason,
    EventKind,
    EventRecord,
    GameState,
    MatchRecord,
    PlayerSnapshot,
    RoundRecord,
    Side,
    classify_buy,
    parse_match,
    render_match,
)
from .navmesh import MeshError, NavArea, NavMesh, Place, load_navmesh, load_mesh_dir
from .snapshot import SnapshotError, SnapshotVersionError, load_snapshot, save_snapshot
from .store import (
    FilterSpec,
    QueryMode,
    QuerySpec,
    StateRef,
    StateStore,
    UnknownMapError,
    index_states,
    lookup_exact,
    lookup_nearest,
    lookup_partial,
    parse_filters,
    parse_query,
    run_query,
)
from .summarize import HeatmapGrid, OutcomeTable, heatmap, outcome_table
from .synth import SynthConfig, grid_mesh, synth_generate
from .tokenizer import (
    SideToken,
    Token,
    hamming_mod,
    parse_token,
    render_token,
    state_distance,
    tokenize_side,
    tokenize_state,
)
from .winprob import (
    DegenerateLabelsError,
    FeatureVector,
    WinProbModel,
    WinSeries,
    auc,
    featurize,
    predict,
    round_series,
    train,
    training_pairs,
)

__version__ = "0.1.0"
