"""Adversarial, classification and exponential cosine losses, and their weighted sum.

Every function takes tensors (or arrays, lifted to constants when mixed with
a tensor) with optional leading batch axes; the time axis is the last one
reduced.  Batch reduction is left to the caller.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as tn
from .tensor import ShapeError, Tensor

CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    w_v: float = 25.0
    w_tp: float = 20.0
    w_c: float = 43.0
    w_r: float = 15.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be non-negative, got {v}")


@dataclass
class LossBreakdown:
    """Scalar loss values for one step.

    ``l_v``/``l_tp`` are the generator-side objectives that enter the weighted
    total; ``d_v``/``d_tp`` are the discriminator losses of the same step.
    """

    l_v: float = 0.0
    l_tp: float = 0.0
    l_c: float = 0.0
    l_r: float = 0.0
    total: float = 0.0
    d_v: float = 0.0
    d_tp: float = 0.0
    clamped: int = 0

    FIELDS = ("l_v", "l_tp", "l_c", "l_r", "total", "d_v", "d_tp", "clamped")

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    g = tn.Graph()
    return g.constant(x)


def count_clamped(p: np.ndarray, eps: float = CLAMP_EPS) -> int:
    return int(np.count_nonzero((p < eps) | (p > 1.0 - eps)))


def adversarial_losses(d_real, d_fake, generator_objective: str = "non_saturating"):
    """``(discriminator_loss, generator_loss)`` summed over the time axis.

    discriminator: ``-sum_t [log d_real_t + log(1 - d_fake_t)]``.
    generator: ``-sum_t log d_fake_t`` (non-saturating) or
    ``sum_t log(1 - d_fake_t)`` (``"minimax"``, the literal form).
    Probabilities are clamped to ``[1e-7, 1 - 1e-7]``.
    """
    if isinstance(d_real, Tensor) or isinstance(d_fake, Tensor):
        d_real, d_fake = tn._lift(d_real, d_fake)
    else:
        d_real, d_fake = tn._lift(_as_tensor(d_real), d_fake)
    if d_real.shape != d_fake.shape:
        raise ShapeError(f"adversarial_losses: {d_real.shape} vs {d_fake.shape}")
    d_loss = -(tn.sum(tn.log(d_real, CLAMP_EPS), axis=-1)
               + tn.sum(tn.log(1.0 - d_fake, CLAMP_EPS), axis=-1))
    return d_loss, generator_loss(d_fake, generator_objective)


def generator_loss(d_fake, objective: str = "non_saturating") -> Tensor:
    """Generator-side adversarial term on the discriminator's per-step scores of fakes."""
    d_fake = _as_tensor(d_fake)
    if objective == "non_saturating":
        return -tn.sum(tn.log(d_fake, CLAMP_EPS), axis=-1)
    if objective == "minimax":
        return tn.sum(tn.log(1.0 - d_fake, CLAMP_EPS), axis=-1)
    raise ValueError(f"unknown generator objective {objective!r}")


def classification_loss(distributions, label) -> Tensor:
    """``-sum_t log p_t[label]`` for per-step distributions ``(..., T, K)``."""
    p = _as_tensor(distributions)
    k = p.shape[-1]
    labels = np.asarray(label)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label {label} out of range for {k} classes")
    onehot = np.zeros(p.shape)
    np.put_along_axis(onehot, np.broadcast_to(labels.reshape(labels.shape + (1, 1)),
                                              p.shape[:-1] + (1,)).astype(np.intp), 1.0, axis=-1)
    # select first so zero-probability non-label classes never reach the log
    return -tn.sum(tn.log(tn.sum(p * onehot, axis=-1)), axis=-1)


def classification_loss_from_logits(logits, label) -> Tensor:
    """Same value as :func:`classification_loss` on ``softmax(logits)``, computed stably."""
    (logits,) = tn._lift(logits)
    labels = np.asarray(label)
    labels = np.broadcast_to(labels.reshape(labels.shape + (1,)), logits.shape[:-1])
    return tn.sum(tn.softmax_cross_entropy(logits, labels), axis=-1)


def step_weights(n: int) -> np.ndarray:
    """``e^t`` for ``t = 1..n``."""
    return np.exp(np.arange(1, n + 1, dtype=np.float64))


def regularization_loss(pred_v, true_v, pred_tp, true_tp, mode: str = "similarity") -> Tensor:
    """``sum_t -e^t d(pred_v_t, true_v_t) + sum_t -e^t d(pred_tp_t, true_tp_t)``.

    ``mode="similarity"``: d is cosine similarity, so minimising pulls
    predictions onto the targets.  ``mode="distance"``: d is ``1 - cos``,
    the literal distance reading.
    Either stream may be ``None`` (single-stream models).
    """
    if mode not in ("similarity", "distance"):
        raise ValueError(f"unknown regulariser mode {mode!r}")
    pairs = [(p, t) for p, t in ((pred_v, true_v), (pred_tp, true_tp)) if p is not None]
    lifted = tn._lift(*[x for pair in pairs for x in pair])
    total = None
    for pred, true in zip(lifted[0::2], lifted[1::2]):
        if pred.shape != true.shape:
            raise ShapeError(f"regularization_loss: {pred.shape} vs {true.shape}")
        d = tn.cosine_similarity(pred, true)
        if mode == "distance":
            d = 1.0 - d
        term = -tn.sum(d * step_weights(pred.shape[-2]), axis=-1)
        total = term if total is None else total + term
    if total is None:
        raise ValueError("regularization_loss needs at least one stream")
    return total


def mse_loss(pred, true) -> Tensor:
    """``sum_t mean_d (pred - true)^2``; the regression stand-in for the adversarial terms."""
    pred, true = tn._lift(_as_tensor(pred) if not isinstance(pred, Tensor) else pred, true)
    diff = pred - true
    return tn.sum(tn.mean(diff * diff, axis=-1), axis=-1)


def total_loss(l_v, l_tp, l_c, l_r, weights: LossWeights):
    """``w_v L_v + w_tp L_tp + w_c L_c + w_r L_r``; works on floats or tensors."""
    return weights.w_v * l_v + weights.w_tp * l_tp + weights.w_c * l_c + weights.w_r * l_r
