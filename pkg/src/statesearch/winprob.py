"""Round win-probability estimation for result cards and playback.

The model is a regularized logistic regression over a small hand-built
feature set (alive counts, hp/equipment/grenade differentials, bomb state,
clock). Deliberately linear: deterministic to the bit for a fixed corpus,
trivially auditable, and monotone per coordinate, while hiding behind an
interface that a boosted-tree model could implement later. Probabilities are
always P(CT wins); the T probability is defined as its complement.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .ingest import GameState, RoundRecord, Side
from .store import StateStore

ROUND_SECONDS = 115.0
POSTPLANT_SECONDS = 35.0

FEATURE_NAMES = (
    "ct_alive",
    "t_alive",
    "hp_diff",
    "equip_diff",
    "grenade_diff",
    "bomb_planted",
    "time_remaining",
)

MODEL_FORMAT_VERSION = 1


class DegenerateLabelsError(ValueError):
    """Raised when a training corpus contains a single outcome class."""


@dataclass(frozen=True)
class FeatureVector:
    ct_alive: int
    t_alive: int
    hp_diff: int
    equip_diff: int
    grenade_diff: int
    bomb_planted: int
    time_remaining: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.ct_alive,
                self.t_alive,
                self.hp_diff,
                self.equip_diff,
                self.grenade_diff,
                self.bomb_planted,
                self.time_remaining,
            ],
            dtype=np.float64,
        )


@dataclass
class WinProbModel:
    """Logistic model: P(CT wins) = sigmoid(weights . x + intercept)."""

    feature_names: tuple[str, ...]
    weights: np.ndarray
    intercept: float
    training_meta: dict

    def prob(self, features: FeatureVector) -> float:
        z = float(self.weights @ features.as_array() + self.intercept)
        return _clip_prob(_sigmoid(z))

    def save(self, path: str | Path) -> None:
        doc = {
            "format": "statesearch-winprob",
            "version": MODEL_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "training_meta": self.training_meta,
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WinProbModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != "statesearch-winprob":
            raise ValueError(f"{path} is not a win-probability model file")
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        return cls(
            feature_names=tuple(doc["feature_names"]),
            weights=np.array(doc["weights"], dtype=np.float64),
            intercept=float(doc["intercept"]),
            training_meta=doc.get("training_meta", {}),
        )


@dataclass
class WinSeries:
    """Per-frame CT win probability for one round, with the plant time (if
    any) for chart annotation."""

    points: list[tuple[float, float]]
    bomb_plant_t: float | None


def featurize(state: GameState, round_record: RoundRecord) -> FeatureVector:
    """Extract model features from one state of a round.

    Sums run over living players only; the clock counts down from the round
    timer until the plant, then from the post-plant timer.
    """
    ct_alive = t_alive = 0
    hp = {Side.CT: 0, Side.T: 0}
    equip = {Side.CT: 0, Side.T: 0}
    nades = {Side.CT: 0, Side.T: 0}
    for p in state.players:
        if not p.alive:
            continue
        if p.side is Side.CT:
            ct_alive += 1
        else:
            t_alive += 1
        hp[p.side] += p.hp
        equip[p.side] += p.equipment_value
        nades[p.side] += p.grenade_count
    if state.bomb_planted:
        plant_t = round_record.bomb_plant_t
        base = plant_t if plant_t is not None else state.t
        remaining = max(POSTPLANT_SECONDS - (state.t - base), 0.0)
    else:
        remaining = max(ROUND_SECONDS - state.t, 0.0)
    return FeatureVector(
        ct_alive=ct_alive,
        t_alive=t_alive,
        hp_diff=hp[Side.CT] - hp[Side.T],
        equip_diff=equip[Side.CT] - equip[Side.T],
        grenade_diff=nades[Side.CT] - nades[Side.T],
        bomb_planted=1 if state.bomb_planted else 0,
        time_remaining=remaining,
    )


def train(
    corpus: Iterable[tuple[FeatureVector, int]],
    seed: int,
    *,
    l2: float = 1e-4,
    max_iterations: int = 500,
    tolerance: float = 1e-6,
) -> WinProbModel:
    """Fit the logistic baseline on (features, ct_won) pairs.

    Newton iterations on standardized features, stopping at the gradient-norm
    tolerance or the iteration budget, whichever first. Fully deterministic
    for a fixed corpus; ``seed`` is recorded in the training metadata and
    kept in the signature for trainer interchangeability.
    """
    pairs = list(corpus)
    if not pairs:
        raise ValueError("training corpus is empty")
    X = np.stack([fv.as_array() for fv, _ in pairs])
    y = np.array([1.0 if label else 0.0 for _, label in pairs])
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateLabelsError("degenerate labels: corpus has a single outcome class")

    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma[sigma == 0.0] = 1.0
    Xs = (X - mu) / sigma
    n, p = Xs.shape

    w = np.zeros(p)
    b = 0.0
    losses: list[float] = []
    grad_norm = np.inf
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        z = Xs @ w + b
        prob = _sigmoid(z)
        losses.append(_log_loss(y, prob) + 0.5 * l2 * float(w @ w))
        resid = prob - y
        grad_w = Xs.T @ resid / n + l2 * w
        grad_b = float(resid.sum()) / n
        grad_norm = float(np.sqrt(grad_w @ grad_w + grad_b * grad_b))
        if grad_norm <= tolerance:
            break
        s = np.clip(prob * (1.0 - prob), 1e-9, None)
        Xw = Xs * s[:, None]
        h = np.empty((p + 1, p + 1))
        h[:p, :p] = Xs.T @ Xw / n
        h[:p, :p] += l2 * np.eye(p)
        h[:p, p] = Xw.sum(axis=0) / n
        h[p, :p] = h[:p, p]
        h[p, p] = float(s.sum()) / n
        step = np.linalg.solve(h, np.concatenate([grad_w, [grad_b]]))
        w -= step[:p]
        b -= float(step[p])

    # Fold the standardization into raw-space weights so prediction is a
    # plain dot product over the documented features.
    raw_w = w / sigma
    raw_b = b - float((w * mu / sigma).sum())
    meta = {
        "seed": seed,
        "corpus_id": _corpus_id(X, y),
        "n_examples": int(n),
        "iterations": int(iterations),
        "final_grad_norm": grad_norm,
        "converged": bool(grad_norm <= tolerance),
        "loss_curve": [float(v) for v in losses],
    }
    return WinProbModel(
        feature_names=FEATURE_NAMES,
        weights=raw_w,
        intercept=raw_b,
        training_meta=meta,
    )


def predict(model: WinProbModel, state: GameState, round_record: RoundRecord) -> float:
    """P(CT wins the round) given one state; always inside (0, 1)."""
    return model.prob(featurize(state, round_record))


def round_series(model: WinProbModel, round_record: RoundRecord) -> WinSeries:
    """CT win probability at every stored frame of a round."""
    points = [
        (frame.t, predict(model, frame, round_record)) for frame in round_record.frames
    ]
    return WinSeries(points=points, bomb_plant_t=round_record.bomb_plant_t)


def training_pairs(store: StateStore, rows: np.ndarray | None = None) -> Iterator[tuple[FeatureVector, int]]:
    """(features, ct_won) for every indexed state, computed columnar.

    Matches featurize() on the reconstructed states exactly; the columnar
    path just avoids materializing GameState objects for large corpora.
    """
    X, y = feature_matrix(store, rows)
    for i in range(X.shape[0]):
        yield (
            FeatureVector(
                ct_alive=int(X[i, 0]),
                t_alive=int(X[i, 1]),
                hp_diff=int(X[i, 2]),
                equip_diff=int(X[i, 3]),
                grenade_diff=int(X[i, 4]),
                bomb_planted=int(X[i, 5]),
                time_remaining=float(X[i, 6]),
            ),
            int(y[i]),
        )


def feature_matrix(
    store: StateStore, rows: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized featurize over store rows; returns (X, ct_won)."""
    if rows is None:
        rows = np.arange(store.num_states, dtype=np.int64)
    rows = np.asarray(rows, dtype=np.int64)
    side = store._side[rows]
    alive = store._alive[rows]
    ct = alive & (side == 1)
    t = alive & (side == 0)
    hp = store._hp[rows].astype(np.int64)
    equip = store._equip[rows].astype(np.int64)
    nades = store._nades[rows].astype(np.int64)
    planted = store._bomb_planted[rows]
    state_t = store._state_t[rows]
    rounds = store._state_round[rows]
    plant_t = store._round_plant_t[rounds]
    plant_base = np.where(np.isnan(plant_t), state_t, plant_t)
    remaining = np.where(
        planted,
        np.maximum(POSTPLANT_SECONDS - (state_t - plant_base), 0.0),
        np.maximum(ROUND_SECONDS - state_t, 0.0),
    )
    X = np.empty((rows.size, len(FEATURE_NAMES)), dtype=np.float64)
    X[:, 0] = ct.sum(axis=1)
    X[:, 1] = t.sum(axis=1)
    X[:, 2] = (hp * ct).sum(axis=1) - (hp * t).sum(axis=1)
    X[:, 3] = (equip * ct).sum(axis=1) - (equip * t).sum(axis=1)
    X[:, 4] = (nades * ct).sum(axis=1) - (nades * t).sum(axis=1)
    X[:, 5] = planted.astype(np.float64)
    X[:, 6] = remaining
    y = store._round_winner[rounds].astype(np.int64)
    return X, y


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank statistic, tie-aware."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = _average_ranks(scores)
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    _, start, counts = np.unique(sorted_vals, return_index=True, return_counts=True)
    # A tie group starting at 0-based position s with c members holds the
    # 1-based ranks s+1 .. s+c, whose mean is s + (c + 1) / 2.
    ranks_sorted = np.repeat(start + (counts + 1) / 2.0, counts)
    ranks = np.empty(values.size, dtype=np.float64)
    ranks[order] = ranks_sorted
    return ranks


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _clip_prob(p: float) -> float:
    return float(min(max(p, 1e-12), 1.0 - 1e-12))


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    eps = 1e-12
    p = np.clip(p, eps, 1.0 - eps)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def _corpus_id(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(X.tobytes())
    h.update(y.tobytes())
    return h.hexdigest()[:16]
