"""Prediction strategies for one patch and fusion rules for split objects.

Three strategies turn per-level class probabilities into a label tuple:

* MT: independent per-level argmax; may violate the hierarchy.
* F2C: argmax at the finest level, ancestors lifted; consistent but greedy.
* JO: the consistent tuple with the highest joint (product) probability,
  found by enumerating all tuples in the log domain; consistent and optimal
  over tuples.

Objects split into several tiles are fused per strategy: MT and JO multiply
the per-tile class scores (summed logs) before deciding; F2C takes a majority
vote over the per-tile finest-level predictions.

Ties always resolve to the lowest class or leaf index.  Products are computed
as sums of logarithms with probabilities clamped at 1e-300, which preserves
the argmax while avoiding underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .head import LevelScores
from .taxonomy import LabelTuple, Taxonomy

LOG_FLOOR = 1e-300

STRATEGIES = ("MT", "F2C", "JO")


@dataclass(frozen=True)
class PredictionTuple:
    """One predicted label per level plus the joint log-score."""

    labels: LabelTuple
    joint_log_score: float
    consistent: bool
    strategy: str


def _norm_strategy(strategy: str) -> str:
    s = strategy.upper()
    if s not in STRATEGIES:
        raise ValueError(f"unknown strategy '{strategy}'")
    return s


def _log_scores(probs: LevelScores) -> list[np.ndarray]:
    return [np.log(np.maximum(np.asarray(p, dtype=np.float64), LOG_FLOOR))
            for p in probs]


def _check_probs(t: Taxonomy, probs: LevelScores):
    if len(probs) != t.level_count:
        raise ValueError(
            f"expected {t.level_count} probability vectors, got {len(probs)}"
        )
    for l, (m_l, p) in enumerate(zip(t.class_counts, probs)):
        if np.asarray(p).shape != (m_l,):
            raise ValueError(
                f"level {l + 1}: expected shape ({m_l},), got {np.asarray(p).shape}"
            )


def _tuple_log_score(logs: list[np.ndarray], labels: LabelTuple) -> float:
    return float(sum(logs[l][labels[l]] for l in range(len(labels))))


def predict_mt(probs: LevelScores, t: Taxonomy) -> PredictionTuple:
    """Independent per-level argmax; consistency checked, not enforced."""
    _check_probs(t, probs)
    logs = _log_scores(probs)
    labels = tuple(int(np.argmax(p)) for p in probs)
    return PredictionTuple(labels, _tuple_log_score(logs, labels),
                           t.is_consistent(labels), "MT")


def predict_f2c(probs: LevelScores, t: Taxonomy) -> PredictionTuple:
    """Finest-level argmax lifted to its ancestors; always consistent."""
    _check_probs(t, probs)
    logs = _log_scores(probs)
    leaf = int(np.argmax(probs[-1]))
    labels = t.lift_to_tuple(leaf)
    return PredictionTuple(labels, _tuple_log_score(logs, labels), True, "F2C")


def _jo_from_logs(logs: list[np.ndarray], t: Taxonomy,
                  strategy: str) -> PredictionTuple:
    scores = logs[0][t.tuple_index[0]].copy()
    for l in range(1, t.level_count):
        scores += logs[l][t.tuple_index[l]]
    leaf = int(np.argmax(scores))  # first max = lowest leaf index on ties
    return PredictionTuple(t.lift_to_tuple(leaf), float(scores[leaf]),
                           True, strategy)


def predict_jo(probs: LevelScores, t: Taxonomy) -> PredictionTuple:
    """The consistent tuple maximizing the joint probability over levels."""
    _check_probs(t, probs)
    return _jo_from_logs(_log_scores(probs), t, "JO")


def fuse_tiles(per_tile_probs: list[LevelScores], strategy: str,
               t: Taxonomy) -> PredictionTuple:
    """Object-level prediction from the probabilities of its tiles.

    MT and JO combine the tiles by multiplying per-level class scores (sums
    in the log domain) and then decide as in the single-patch case; F2C
    majority-votes the per-tile finest-level argmax and lifts the winner.
    The reported joint log-score refers to the combined (product) scores.
    """
    strategy = _norm_strategy(strategy)
    if not per_tile_probs:
        raise ValueError("fuse_tiles needs at least one tile")
    for probs in per_tile_probs:
        _check_probs(t, probs)
    combined = _log_scores(per_tile_probs[0])
    for probs in per_tile_probs[1:]:
        for acc, term in zip(combined, _log_scores(probs)):
            acc += term
    if strategy == "JO":
        return _jo_from_logs(combined, t, "JO")
    if strategy == "MT":
        labels = tuple(int(np.argmax(s)) for s in combined)
        return PredictionTuple(labels, _tuple_log_score(combined, labels),
                               t.is_consistent(labels), "MT")
    # F2C: majority vote over per-tile leaf predictions, lowest leaf on ties.
    m_b = t.class_counts[-1]
    votes = np.zeros(m_b, dtype=np.int64)
    for probs in per_tile_probs:
        votes[int(np.argmax(probs[-1]))] += 1
    leaf = int(np.argmax(votes))
    labels = t.lift_to_tuple(leaf)
    return PredictionTuple(labels, _tuple_log_score(combined, labels),
                           True, "F2C")


def predict(probs: LevelScores, strategy: str, t: Taxonomy) -> PredictionTuple:
    """Single-patch dispatch by strategy name."""
    strategy = _norm_strategy(strategy)
    if strategy == "MT":
        return predict_mt(probs, t)
    if strategy == "F2C":
        return predict_f2c(probs, t)
    return predict_jo(probs, t)
