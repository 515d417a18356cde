"""Loss-proportional subset reduction for oversized training tables.

Rows are scored by 3-fold cross-predicted loss from a low-cost forest: each
row is predicted exactly once by a model that never saw it. Multi-target
scores take the mean of the two largest min-max-normalized per-target losses,
then rows are drawn without replacement proportionally to score.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .data import FeatureSchema, Table
from .rng import make_rng, subseed
from .surrogate.models import ForestClassifier, ForestRegressor

FOLDS = 3
_LOW_COST_TREES = 25
_LOW_COST_DEPTH = 8


@dataclass(frozen=True)
class SampleScore:
    row_id: int
    per_target_loss: tuple
    score: float


def _encode_features(pool: Table, schema: FeatureSchema) -> np.ndarray:
    # raw numerics + categorical codes; fold models are trees, scale-free
    cols = []
    for spec in schema.feature_columns:
        cols.append(pool.columns[spec.name].astype(np.float64))
    return np.ascontiguousarray(np.column_stack(cols))


def score_subset(pool: Table, schema: FeatureSchema, seed: int,
                 config: EngineConfig | None = None) -> list:
    """Per-row cross-predicted losses over three disjoint folds."""
    config = config or EngineConfig()
    n = len(pool)
    if n < 10 * FOLDS:
        raise ValueError(f"pool needs at least {10 * FOLDS} rows, got {n}")

    cap = config.sampling.score_cap_rows
    positions = np.arange(n, dtype=np.int64)
    if n > cap:
        positions = np.sort(make_rng(seed, "score-cap").choice(n, size=cap, replace=False))
        pool = pool.subset(positions)
        n = cap

    X = _encode_features(pool, schema)
    targets = schema.target_columns
    classification = targets[0].target_task == "classification"

    folds = np.array_split(make_rng(seed, "folds").permutation(n), FOLDS)
    if classification:
        y = pool.columns[targets[0].name].astype(np.int64)
        n_classes = len(targets[0].categories)
        losses = np.empty((n, 1))
        for k, hold in enumerate(folds):
            rest = np.setdiff1d(np.arange(n), hold)
            rest_classes = np.unique(y[rest])
            if len(rest_classes) < 2:
                warnings.warn(f"fold {k}: single-class training split, using constant probabilities")
                proba = np.zeros((len(hold), n_classes))
                proba[:, int(rest_classes[0])] = 1.0
            else:
                model = ForestClassifier(_LOW_COST_TREES, _LOW_COST_DEPTH).fit(
                    X[rest], y[rest], n_classes, subseed(seed, "fold", k)
                )
                proba = model.predict_proba(X[hold])
            losses[hold, 0] = 1.0 - proba[np.arange(len(hold)), y[hold]]
    else:
        Y = np.column_stack([pool.columns[t.name].astype(np.float64) for t in targets])
        losses = np.empty((n, Y.shape[1]))
        for k, hold in enumerate(folds):
            rest = np.setdiff1d(np.arange(n), hold)
            model = ForestRegressor(_LOW_COST_TREES, _LOW_COST_DEPTH).fit(
                X[rest], Y[rest], subseed(seed, "fold", k)
            )
            losses[hold] = np.abs(Y[hold] - model.predict(X[hold]))

    lo, hi = losses.min(axis=0), losses.max(axis=0)
    span = hi - lo
    normalized = np.where(span > 0, (losses - lo) / np.where(span > 0, span, 1.0), 0.0)
    scores = aggregate_scores(normalized)

    return [
        SampleScore(int(pool.row_ids[i]), tuple(float(v) for v in losses[i]), float(scores[i]))
        for i in range(n)
    ]


def aggregate_scores(normalized: np.ndarray) -> np.ndarray:
    """Mean of the two largest normalized per-target losses (single loss if m=1)."""
    if normalized.shape[1] == 1:
        return normalized[:, 0]
    top2 = np.sort(normalized, axis=1)[:, -2:]
    return top2.mean(axis=1)


def select_subset(scores: list, retention: float, seed: int,
                  config: EngineConfig | None = None) -> list:
    """Seeded without-replacement draw with probability proportional to score."""
    config = config or EngineConfig()
    n = len(scores)
    size = int(round(retention * n))
    if size < 1:
        raise ValueError(f"retention {retention} keeps no rows of {n}")
    if size >= n:
        return sorted(s.row_id for s in scores)
    weights = np.array([s.score for s in scores]) + config.sampling.epsilon_floor
    p = weights / weights.sum()
    chosen = make_rng(seed, "select").choice(n, size=size, replace=False, p=p)
    row_ids = np.array([s.row_id for s in scores])
    return sorted(int(r) for r in row_ids[chosen])
