"""Interacting multi-level classification head.

The head maps per-level raw class scores ``z[l]`` to final scores in two
fully connected stages without biases.  The first stage passes information
from coarse to fine: the coarsest level is copied through, every finer level
mixes rectified scores of itself and of all coarser levels.  The second stage
reverses the flow: the finest level is copied through, every coarser level
mixes rectified intermediate scores of itself and of all finer levels.  A
per-level softmax turns the final scores into probabilities.

All operations accept a trailing batch axis (columns = samples).  The
backward pass is exact hand-derived differentiation with the ReLU subgradient
at 0 taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .numerics import Array, relu, softmax
from .taxonomy import Taxonomy

# One score vector per level, coarsest first; entries may carry a batch axis.
LevelScores = list[np.ndarray]


@dataclass
class HeadParams:
    """Weight matrices of the two head stages, keyed by 0-based level.

    w_self[l]      (M_l, M_l)  for l in 1..B-1   first stage, same level
    w_cross[l, i]  (M_l, M_i)  for i < l         first stage, coarse -> fine
    v_self[l]      (M_l, M_l)  for l in 0..B-2   second stage, same level
    v_cross[l, j]  (M_l, M_j)  for j > l         second stage, fine -> coarse
    """

    w_self: dict[int, Array]
    w_cross: dict[tuple[int, int], Array]
    v_self: dict[int, Array]
    v_cross: dict[tuple[int, int], Array]

    def named(self) -> Iterator[tuple[str, Array]]:
        """(name, matrix) pairs in a fixed canonical order."""
        for l in sorted(self.w_self):
            yield f"head.w_self.{l}", self.w_self[l]
        for l, i in sorted(self.w_cross):
            yield f"head.w_cross.{l}.{i}", self.w_cross[(l, i)]
        for l in sorted(self.v_self):
            yield f"head.v_self.{l}", self.v_self[l]
        for l, j in sorted(self.v_cross):
            yield f"head.v_cross.{l}.{j}", self.v_cross[(l, j)]

    def arrays(self) -> list[Array]:
        return [a for _, a in self.named()]

    def zeros_like(self) -> "HeadParams":
        return HeadParams(
            {l: np.zeros_like(a) for l, a in self.w_self.items()},
            {k: np.zeros_like(a) for k, a in self.w_cross.items()},
            {l: np.zeros_like(a) for l, a in self.v_self.items()},
            {k: np.zeros_like(a) for k, a in self.v_cross.items()},
        )


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> Array:
    a = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))


def init_head_params(t: Taxonomy, seed: int) -> HeadParams:
    """Uniform Glorot initialization, deterministic in ``seed``.

    Matrices are drawn in the canonical ``named()`` order so the same seed
    reproduces the same parameters bitwise.
    """
    rng = np.random.default_rng(seed)
    m = t.class_counts
    b = t.level_count
    w_self = {l: _glorot(rng, m[l], m[l]) for l in range(1, b)}
    w_cross = {
        (l, i): _glorot(rng, m[l], m[i])
        for l in range(1, b)
        for i in range(l)
    }
    v_self = {l: _glorot(rng, m[l], m[l]) for l in range(b - 1)}
    v_cross = {
        (l, j): _glorot(rng, m[l], m[j])
        for l in range(b - 1)
        for j in range(l + 1, b)
    }
    return HeadParams(w_self, w_cross, v_self, v_cross)


def _check_scores(t_counts: tuple[int, ...], scores: LevelScores, what: str):
    if len(scores) != len(t_counts):
        raise ValueError(
            f"{what}: expected {len(t_counts)} levels, got {len(scores)}"
        )
    batch = None
    for l, (m_l, vec) in enumerate(zip(t_counts, scores)):
        if vec.shape[0] != m_l:
            raise ValueError(
                f"{what}: level {l + 1} has {vec.shape[0]} entries, expected {m_l}"
            )
        b = vec.shape[1] if vec.ndim == 2 else None
        if l == 0:
            batch = b
        elif b != batch:
            raise ValueError(f"{what}: inconsistent batch axes across levels")


def head_forward(p: HeadParams, z: LevelScores,
                 counts: tuple[int, ...] | None = None
                 ) -> tuple[LevelScores, LevelScores, LevelScores]:
    """Forward pass: returns (intermediate, final, probability) scores.

    The intermediate scores copy ``z`` at the coarsest level and the final
    scores copy the intermediates at the finest level, exactly (no arithmetic
    on the copy branches).
    """
    b = len(z)
    if counts is not None:
        _check_scores(counts, z, "head input")
    mid: LevelScores = [None] * b  # type: ignore[list-item]
    mid[0] = z[0].copy()
    rz = [relu(v) for v in z]
    for l in range(1, b):
        acc = p.w_self[l] @ rz[l]
        for i in range(l):
            acc += p.w_cross[(l, i)] @ rz[i]
        mid[l] = acc
    out: LevelScores = [None] * b  # type: ignore[list-item]
    out[b - 1] = mid[b - 1].copy()
    rmid = [relu(v) for v in mid]
    for l in range(b - 1):
        acc = p.v_self[l] @ rmid[l]
        for j in range(l + 1, b):
            acc += p.v_cross[(l, j)] @ rmid[j]
        out[l] = acc
    probs = [softmax(v, axis=0) for v in out]
    return mid, out, probs


def _outer(a: Array, b: Array) -> Array:
    """Sum of per-sample outer products (plain outer for vectors)."""
    if a.ndim == 1:
        return np.outer(a, b)
    return a @ b.T


def head_backward(p: HeadParams, z: LevelScores, mid: LevelScores,
                  d_out: LevelScores) -> tuple[LevelScores, HeadParams]:
    """Exact gradients of the head given the gradient w.r.t. final scores.

    ``mid`` must be the intermediate scores cached from ``head_forward`` on
    the same inputs.  Returns the gradient w.r.t. ``z`` and a HeadParams of
    parameter gradients (summed over the batch axis when present).
    """
    b = len(z)
    if len(mid) != b or len(d_out) != b:
        raise ValueError("forward cache / upstream gradient level mismatch")
    for l in range(b):
        if z[l].shape != mid[l].shape or z[l].shape != d_out[l].shape:
            raise ValueError(f"cache/input shape mismatch at level {l + 1}")
    grads = p.zeros_like()
    rz = [relu(v) for v in z]
    rmid = [relu(v) for v in mid]

    d_mid: LevelScores = [np.zeros_like(v) for v in mid]
    d_mid[b - 1] += d_out[b - 1]
    for l in range(b - 1):
        grads.v_self[l] += _outer(d_out[l], rmid[l])
        d_mid[l] += (p.v_self[l].T @ d_out[l]) * (mid[l] > 0)
        for j in range(l + 1, b):
            grads.v_cross[(l, j)] += _outer(d_out[l], rmid[j])
            d_mid[j] += (p.v_cross[(l, j)].T @ d_out[l]) * (mid[j] > 0)

    d_z: LevelScores = [np.zeros_like(v) for v in z]
    d_z[0] += d_mid[0]
    for l in range(1, b):
        grads.w_self[l] += _outer(d_mid[l], rz[l])
        d_z[l] += (p.w_self[l].T @ d_mid[l]) * (z[l] > 0)
        for i in range(l):
            grads.w_cross[(l, i)] += _outer(d_mid[l], rz[i])
            d_z[i] += (p.w_cross[(l, i)].T @ d_mid[l]) * (z[i] > 0)
    return d_z, grads


def zeroed_fraction(scores: LevelScores) -> float:
    """Fraction of score entries at or below zero (dead ReLU diagnostic)."""
    total = sum(v.size for v in scores)
    dead = sum(int((v <= 0).sum()) for v in scores)
    return dead / total if total else 0.0
