"""Focal classification losses and the joint-tuple training loss.

Two loss families share the focal mechanism (cross-entropy modulated by a
``(1 - P)^exponent`` factor that down-weights well-classified samples):

* ``focal_loss`` scores per-level class probabilities of object batches
  (normalized by batch size) or per-pixel probabilities of score grids
  (normalized by ``W * H * N``), selected by ``task``.
* ``jo_loss`` scores the joint probabilities of all consistent label tuples:
  one term pulls the correct tuple's joint score up, the second pushes every
  incorrect tuple's joint score down.

Probabilities are clamped only inside logarithms (``log(max(p, floor))`` and
``log(max(1 - p, floor))``), so the exact-zero identities at P = 1 and at
one-hot joint scores hold bitwise.  Gradients are exact wherever the clamps
are inactive and zero through an active clamp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Array, softmax_vjp


@dataclass(frozen=True)
class FocalConfig:
    """Focal exponent and the probability floor used inside logs."""

    exponent: float = 1.0
    probability_floor: float = 1e-12

    def __post_init__(self):
        if not np.isfinite(self.exponent) or self.exponent < 0:
            raise ValueError("exponent must be finite and >= 0")
        if not 0.0 < self.probability_floor <= 1e-6:
            raise ValueError("probability_floor must be in (0, 1e-6]")


def _focal_term(p_true: Array, cfg: FocalConfig) -> tuple[Array, Array]:
    """Per-unit loss ``-(1-p)^e * log(p)`` and its derivative w.r.t. p."""
    p = np.asarray(p_true, dtype=np.float64)
    floor = cfg.probability_floor
    e = cfg.exponent
    base = 1.0 - p
    logp = np.log(np.maximum(p, floor))
    powt = np.where(base > 0, base, 0.0) ** e
    loss = -(powt * logp)
    # d/dp [-(1-p)^e log p] = e (1-p)^(e-1) log p - (1-p)^e / p
    if e == 0.0:
        t1 = np.zeros_like(p)
    else:
        safe = np.where(base > 0, base, 1.0)
        t1 = np.where(base > 0, e * safe ** (e - 1.0) * logp, 0.0)
    t2 = powt * np.where(p > floor, 1.0 / np.maximum(p, floor), 0.0)
    return loss, t1 - t2


def _as_label_matrix(labels, levels: int) -> np.ndarray:
    arr = np.asarray(labels, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != levels:
        raise ValueError(
            f"labels must be (batch, {levels}) tuples, got shape {arr.shape}"
        )
    return arr


def focal_loss(probs, labels, cfg: FocalConfig, task: str = "object"
               ) -> tuple[float, list[Array]]:
    """Multi-class focal loss with its exact gradient w.r.t. the raw scores.

    task="object": ``probs`` is one probability array per level, shaped
    (M_l,) or (M_l, N); ``labels`` is one label tuple per sample.  The sum
    over levels, classes and samples is normalized by N.

    task="pixel": ``probs`` is an (N, H, W, M) probability array (or a single
    (H, W, M) grid); ``labels`` holds per-pixel class indices.  Normalization
    is by ``W * H * N``.

    Returns ``(loss, gradient)`` where the gradient is w.r.t. the
    un-normalized scores that produced ``probs`` (softmax fused in), in the
    same shapes as ``probs``.
    """
    if task == "object":
        return _focal_object(probs, labels, cfg)
    if task == "pixel":
        return _focal_pixel(probs, labels, cfg)
    raise ValueError(f"unknown task '{task}'")


def _focal_object(probs, labels, cfg):
    vectors = [np.asarray(p, dtype=np.float64) for p in probs]
    squeeze = vectors[0].ndim == 1
    cols = [v.reshape(v.shape[0], -1) for v in vectors]
    n = cols[0].shape[1]
    lab = _as_label_matrix(labels, len(cols))
    if lab.shape[0] != n:
        raise ValueError(f"{lab.shape[0]} label tuples for batch of {n}")
    total = 0.0
    d_out = []
    sample_idx = np.arange(n)
    for l, p in enumerate(cols):
        idx = lab[:, l]
        if (idx < 0).any() or (idx >= p.shape[0]).any():
            raise ValueError(f"label out of range at level {l + 1}")
        p_true = p[idx, sample_idx]
        loss, dldp = _focal_term(p_true, cfg)
        total += loss.sum() / n
        d_probs = np.zeros_like(p)
        d_probs[idx, sample_idx] = dldp / n
        d_out.append(softmax_vjp(p, d_probs, axis=0))
    if squeeze:
        d_out = [g.reshape(-1) for g in d_out]
    return float(total), d_out


def _focal_pixel(probs, labels, cfg):
    grid = np.asarray(probs, dtype=np.float64)
    squeeze = grid.ndim == 3
    if squeeze:
        grid = grid[None]
    if grid.ndim != 4:
        raise ValueError(f"pixel probabilities must be (N, H, W, M), got {grid.shape}")
    n, h, w, m = grid.shape
    lab = np.asarray(labels, dtype=np.int64)
    if squeeze and lab.ndim == 2:
        lab = lab[None]
    if lab.shape != (n, h, w):
        raise ValueError(f"pixel labels must be {(n, h, w)}, got {lab.shape}")
    if (lab < 0).any() or (lab >= m).any():
        raise ValueError("pixel label out of range")
    norm = float(w * h * n)
    flat_p = grid.reshape(-1, m)
    flat_idx = lab.reshape(-1)
    rows = np.arange(flat_p.shape[0])
    p_true = flat_p[rows, flat_idx]
    loss, dldp = _focal_term(p_true, cfg)
    d_probs = np.zeros_like(flat_p)
    d_probs[rows, flat_idx] = dldp / norm
    d_out = softmax_vjp(flat_p, d_probs, axis=1).reshape(grid.shape)
    if squeeze:
        d_out = d_out[0]
    return float(loss.sum() / norm), d_out


def jo_loss(joint, labels, cfg: FocalConfig) -> tuple[float, Array]:
    """Two-part loss on the joint scores of all consistent tuples.

    ``joint`` holds one score in (0, 1] per tuple, shaped (M_B,) or
    (M_B, N).  ``labels`` is one label tuple (or leaf index) per sample; the
    finest-level entry identifies the correct tuple.  The first part is the
    focal negative log of the correct tuple's joint score; the second sums
    ``-(p_i)^e * log(1 - p_i)`` over every incorrect tuple.  Both parts are
    normalized by the batch size.

    Returns ``(loss, d_loss/d_joint)`` with the gradient in ``joint``'s shape.
    """
    p = np.asarray(joint, dtype=np.float64)
    squeeze = p.ndim == 1
    p = p.reshape(p.shape[0], -1)
    m_b, n = p.shape
    if (p <= 0).any() or (p > 1).any():
        raise ValueError("joint scores must lie in (0, 1]")
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim == 0:
        lab = lab.reshape(1)
    if lab.ndim == 2:
        lab = lab[:, -1]
    if lab.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {lab.shape}")
    if (lab < 0).any() or (lab >= m_b).any():
        raise ValueError("no tuple matches the label leaf")
    floor = cfg.probability_floor
    e = cfg.exponent
    cols = np.arange(n)
    correct = np.zeros_like(p, dtype=bool)
    correct[lab, cols] = True

    # Part 1 on the correct tuple: -(1 - p)^e log p.
    loss1, dldp1 = _focal_term(p[lab, cols], cfg)

    # Part 2 on the incorrect tuples: -(p)^e log(1 - p).
    log1m = np.log(np.maximum(1.0 - p, floor))
    powp = p ** e
    loss2 = -(powp * log1m)
    if e == 0.0:
        t1 = np.zeros_like(p)
    else:
        t1 = e * p ** (e - 1.0) * log1m
    t2 = powp * np.where(1.0 - p > floor, 1.0 / np.maximum(1.0 - p, floor), 0.0)
    dldp2 = t2 - t1

    loss = (loss1.sum() + loss2[~correct].sum()) / n
    grad = np.where(correct, 0.0, dldp2)
    grad[lab, cols] = dldp1
    grad /= n
    if squeeze:
        grad = grad.reshape(-1)
    return float(loss), grad


def joint_scores(probs, tuple_index) -> tuple[Array, list[Array]]:
    """Joint score of every consistent tuple: the per-level product.

    ``probs`` holds per-level probability arrays, (M_l,) or (M_l, N);
    ``tuple_index`` is the taxonomy's per-level tuple indexing.  Returns the
    joint scores (M_B,) or (M_B, N) and the per-level selected probabilities
    (cached for the backward pass).
    """
    selected = [np.asarray(p, dtype=np.float64)[idx]
                for p, idx in zip(probs, tuple_index)]
    pjoint = selected[0].copy()
    for s in selected[1:]:
        pjoint *= s
    return pjoint, selected


def joint_scores_backward(d_joint: Array, selected: list[Array], tuple_index,
                          probs_shapes: list[tuple]) -> list[Array]:
    """Gradient of the joint scores w.r.t. the per-level probabilities.

    For each tuple the contribution to level ``l`` is the upstream gradient
    times the product of the selected probabilities of all other levels;
    tuples sharing a class at a level accumulate.
    """
    levels = len(selected)
    stacked = np.stack(selected)  # (B, M_B) or (B, M_B, N)
    d_probs = []
    for l in range(levels):
        excl = np.prod(np.delete(stacked, l, axis=0), axis=0)
        grad = np.zeros(probs_shapes[l], dtype=np.float64)
        np.add.at(grad, tuple_index[l], d_joint * excl)
        d_probs.append(grad)
    return d_probs
