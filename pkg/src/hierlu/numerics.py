"""Dense float64 kernels: ReLU, stable softmax, SGD, and a gradient checker.

Everything here is a pure function over numpy arrays in 64-bit floating
point.  Vector operations also accept a trailing batch axis, i.e. a matrix
whose columns are independent samples; results are columnwise identical to
the per-vector call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


def relu(v: Array) -> Array:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def softmax(z: Array, axis: int = 0) -> Array:
    """Stable softmax along ``axis`` (max-subtracted before exponentiation)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_vjp(probs: Array, d_probs: Array, axis: int = 0) -> Array:
    """Gradient w.r.t. the scores given the gradient w.r.t. softmax output.

    Applies the softmax Jacobian transpose: ``p * (g - <g, p>)`` along
    ``axis``; used to fuse a loss-on-probabilities with its score gradient.
    """
    inner = (d_probs * probs).sum(axis=axis, keepdims=True)
    return probs * (d_probs - inner)


def matvec(m: Array, v: Array) -> Array:
    """Matrix product ``m @ v``; ``v`` may be a vector or a column batch."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {m.shape}")
    if v.shape[0] != m.shape[1]:
        raise ValueError(f"shape mismatch: {m.shape} @ {v.shape}")
    return m @ v


@dataclass
class OptimizerState:
    """SGD state: velocity per parameter plus the step learning schedule.

    ``step_schedule`` holds (epoch, learning_rate) pairs; the rate in effect
    at epoch ``e`` comes from the last pair with epoch <= e, falling back to
    ``learning_rate`` before the first entry.
    """

    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    step_schedule: list[tuple[int, float]] = field(default_factory=list)
    velocity: list[Array] = field(default_factory=list)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        self.step_schedule = sorted(self.step_schedule)

    @classmethod
    def for_params(cls, params, learning_rate, momentum=0.0, weight_decay=0.0,
                   step_schedule=()):
        state = cls(learning_rate, momentum, weight_decay, list(step_schedule))
        state.velocity = [np.zeros_like(p) for p in params]
        return state

    def rate_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for e, rate in self.step_schedule:
            if epoch >= e:
                lr = rate
        return lr


def sgd_step(params: list[Array], grads: list[Array], state: OptimizerState,
             epoch: int) -> tuple[list[Array], OptimizerState]:
    """One SGD update with momentum and decoupled-from-nothing weight decay.

    velocity <- momentum * velocity - lr * (grad + weight_decay * param)
    param    <- param + velocity

    Parameters are updated in place and returned for convenience.
    """
    if len(params) != len(grads) or len(params) != len(state.velocity):
        raise ValueError("params/grads/velocity length mismatch")
    lr = state.rate_at(epoch)
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
        v *= state.momentum
        v -= lr * (g + state.weight_decay * p)
        p += v
    return params, state


def grad_check(f, params: list[Array], analytic_grads: list[Array],
               h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` is a scalar function of the parameter list.  Every entry of every
    parameter is perturbed by +/- h; the relative error for one entry is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    if len(params) != len(analytic_grads):
        raise ValueError("params/analytic_grads length mismatch")
    worst = 0.0
    for p, a in zip(params, analytic_grads):
        if p.shape != a.shape:
            raise ValueError(f"gradient shape {a.shape} != param shape {p.shape}")
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            f_plus = float(f(params))
            p[idx] = orig - h
            f_minus = float(f(params))
            p[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError("non-finite objective during gradient check")
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(a[idx])
            err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            worst = max(worst, err)
            it.iternext()
    return worst
