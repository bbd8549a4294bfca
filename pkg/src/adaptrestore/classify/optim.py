"""First-order optimizers operating on lists of numpy parameter arrays.

The momentum variant is the damped one::

    V[t+1] = beta * V[t] + (1 - beta) * g[t]
    W[t+1] = W[t] - lr * V[t+1]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeMismatch


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 0.001
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    velocity: list = field(default_factory=list)
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd_momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def _as_list(params):
    return [params] if isinstance(params, np.ndarray) else list(params)


def _check(params, grads, buffers):
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameter arrays but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ShapeMismatch(f"parameter shape {np.shape(p)} != gradient shape {np.shape(g)}")
    if buffers and [np.shape(b) for b in buffers] != [np.shape(p) for p in params]:
        raise ShapeMismatch("optimizer buffers do not match parameter shapes")


def sgd_momentum_step(state: OptimizerState, params, grads):
    """One damped-momentum update; returns the new parameter list.

    ``state.velocity`` is updated in place (created as zeros on first use).
    """
    single = isinstance(params, np.ndarray)
    params, grads = _as_list(params), [np.asarray(g, dtype=np.float64) for g in _as_list(grads)]
    _check(params, grads, state.velocity)
    if not state.velocity:
        state.velocity = [np.zeros(np.shape(p)) for p in params]
    beta = state.momentum
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.velocity[i] = beta * state.velocity[i] + (1.0 - beta) * g
        out.append(p - state.lr * state.velocity[i])
    state.t += 1
    return out[0] if single else out


def adam_step(state: OptimizerState, params, grads):
    """One bias-corrected Adam update; returns the new parameter list."""
    single = isinstance(params, np.ndarray)
    params, grads = _as_list(params), [np.asarray(g, dtype=np.float64) for g in _as_list(grads)]
    _check(params, grads, state.m)
    if not state.m:
        state.m = [np.zeros(np.shape(p)) for p in params]
        state.v = [np.zeros(np.shape(p)) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out[0] if single else out


def step(state: OptimizerState, params, grads):
    if state.kind == "sgd_momentum":
        return sgd_momentum_step(state, params, grads)
    return adam_step(state, params, grads)
