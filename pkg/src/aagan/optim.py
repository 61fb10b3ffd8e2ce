"""Adam with bias correction and inverse-time learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError


@dataclass
class AdamState:
    lr: float = 2e-4
    decay: float = 8e-9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def scheduled_lr(self) -> float:
        """Rate applied by the next update: ``lr / (1 + decay * step)``."""
        return self.lr / (1.0 + self.decay * self.step)

    def copy(self) -> "AdamState":
        return AdamState(
            self.lr, self.decay, self.beta1, self.beta2, self.eps, self.step,
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One Adam update of every entry in ``grads``.

    Parameters absent from ``grads`` are passed through untouched.  The
    epsilon sits outside the bias-corrected step size (Keras convention),
    so the first update is ``-lr * g / (|g| + eps / sqrt(1 - beta2))``.

    Returns ``(new_params, new_state)``; inputs are not modified.
    """
    lr = state.scheduled_lr()
    t = state.step + 1
    lr_t = lr * np.sqrt(1.0 - state.beta2 ** t) / (1.0 - state.beta1 ** t)
    new = dict(params)
    m_new, v_new = dict(state.m), dict(state.v)
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} vs parameter {p.shape} for {name!r}")
        m = m_new.get(name)
        v = v_new.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        elif m.shape != p.shape:
            raise ShapeError(f"adam_step: moment {m.shape} vs parameter {p.shape} for {name!r}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new[name] = p - lr_t * m / (np.sqrt(v) + state.eps)
        m_new[name], v_new[name] = m, v
    out = AdamState(state.lr, state.decay, state.beta1, state.beta2, state.eps, t, m_new, v_new)
    return new, out
