"""Generator, discriminator and classifier heads on top of the context sequence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .sequence import LstmParams, encode_stream, uniform_init
from .tensor import ShapeError, Tensor


@dataclass
class GeneratorParams:
    """Two stacked LSTMs, then a per-step affine map to the feature dimension."""

    lstm1: LstmParams
    lstm2: LstmParams
    out_w: object  # (H, D)
    out_b: object  # (D,)

    @classmethod
    def init(cls, rng, context_dim, hidden_dim, feature_dim):
        return cls(
            LstmParams.init(rng, context_dim, hidden_dim),
            LstmParams.init(rng, hidden_dim, hidden_dim),
            uniform_init(rng, hidden_dim, (hidden_dim, feature_dim)),
            np.zeros(feature_dim),
        )

    @classmethod
    def take(cls, p, prefix):
        return cls(LstmParams.take(p, prefix + ".l1"), LstmParams.take(p, prefix + ".l2"),
                   p[prefix + ".out.w"], p[prefix + ".out.b"])

    def items(self, prefix):
        return {**self.lstm1.items(prefix + ".l1"), **self.lstm2.items(prefix + ".l2"),
                prefix + ".out.w": self.out_w, prefix + ".out.b": self.out_b}


def generator_forward(context, params: GeneratorParams, horizon: int | None = None) -> Tensor:
    """Predicted future embeddings, one row per future step.

    The recurrence reads ``C_1..C_T`` and emits one embedding per step; for
    ``horizon > T`` it keeps running on zero input, for ``horizon < T`` only
    the first ``horizon`` rows are returned.
    """
    context = tn._lift(context, params.out_w)[0]
    if context.data.ndim not in (2, 3) or context.shape[-2] < 1:
        raise ShapeError(f"generator_forward: bad context shape {context.shape}")
    if context.shape[-1] != params.lstm1.input_dim:
        raise ShapeError(f"generator_forward: context width {context.shape[-1]} != {params.lstm1.input_dim}")
    T = context.shape[-2]
    horizon = T if horizon is None else horizon
    x = context
    if horizon > T:
        pad = np.zeros(context.shape[:-2] + (horizon - T, context.shape[-1]))
        x = tn.concat([context, pad], axis=-2)
    h1 = encode_stream(x, params.lstm1)
    h2 = encode_stream(h1, params.lstm2)
    if horizon < T:
        h2 = h2[..., :horizon, :]
    return tn.matmul(h2, params.out_w) + params.out_b


@dataclass
class DiscriminatorParams:
    ctx: LstmParams
    cand: LstmParams
    fc1_w: object
    fc1_b: object
    fc2_w: object
    fc2_b: object

    @classmethod
    def init(cls, rng, context_dim, feature_dim, hidden_dim, fc_dim=None):
        fc_dim = fc_dim or hidden_dim
        return cls(
            LstmParams.init(rng, context_dim, hidden_dim),
            LstmParams.init(rng, feature_dim, hidden_dim),
            uniform_init(rng, 2 * hidden_dim, (2 * hidden_dim, fc_dim)),
            np.zeros(fc_dim),
            uniform_init(rng, fc_dim, (fc_dim, 1)),
            np.zeros(1),
        )

    @classmethod
    def take(cls, p, prefix):
        return cls(LstmParams.take(p, prefix + ".ctx"), LstmParams.take(p, prefix + ".cand"),
                   p[prefix + ".fc1.w"], p[prefix + ".fc1.b"], p[prefix + ".fc2.w"], p[prefix + ".fc2.b"])

    def items(self, prefix):
        return {**self.ctx.items(prefix + ".ctx"), **self.cand.items(prefix + ".cand"),
                prefix + ".fc1.w": self.fc1_w, prefix + ".fc1.b": self.fc1_b,
                prefix + ".fc2.w": self.fc2_w, prefix + ".fc2.b": self.fc2_b}


def _hold_last(h: Tensor, steps: int) -> Tensor:
    n = h.shape[-2]
    if n == steps:
        return h
    last = h[..., n - 1:n, :]
    return tn.concat([h] + [last] * (steps - n), axis=-2)


def discriminator_steps(context, candidate, params: DiscriminatorParams) -> Tensor:
    """Per-step real/fake probabilities.

    Step ``t`` scores the prefixes ``C_1..C_t`` and ``candidate_1..t``: the two
    LSTM hidden states at ``t`` are concatenated and passed through two
    affine layers (tanh, then sigmoid).  When the sequences differ in length
    the shorter one's final state is held.
    """
    context, candidate, _ = tn._lift(context, candidate, params.fc2_w)
    if context.shape[:-2] != candidate.shape[:-2]:
        raise ShapeError(f"discriminator: batch shapes differ, {context.shape} vs {candidate.shape}")
    if candidate.shape[-1] != params.cand.input_dim:
        raise ShapeError(f"discriminator: candidate width {candidate.shape[-1]} != {params.cand.input_dim}")
    hc = encode_stream(context, params.ctx)
    hx = encode_stream(candidate, params.cand)
    steps = max(hc.shape[-2], hx.shape[-2])
    merged = tn.concat([_hold_last(hc, steps), _hold_last(hx, steps)], axis=-1)
    z = tn.tanh(tn.matmul(merged, params.fc1_w) + params.fc1_b)
    return tn.sigmoid(tn.matmul(z, params.fc2_w) + params.fc2_b)[..., 0]


def discriminator_forward(context, candidate, params: DiscriminatorParams) -> Tensor:
    """Probability that ``candidate`` is the real future for ``context``."""
    return discriminator_steps(context, candidate, params)[..., -1]


@dataclass
class ClassifierParams:
    lstm: LstmParams
    out_w: object  # (H, K)
    out_b: object  # (K,)

    @classmethod
    def init(cls, rng, input_dim, hidden_dim, num_classes):
        if num_classes < 2:
            raise ValueError("classifier needs at least 2 classes")
        return cls(LstmParams.init(rng, input_dim, hidden_dim),
                   uniform_init(rng, hidden_dim, (hidden_dim, num_classes)), np.zeros(num_classes))

    @classmethod
    def take(cls, p, prefix):
        return cls(LstmParams.take(p, prefix + ".lstm"), p[prefix + ".out.w"], p[prefix + ".out.b"])

    def items(self, prefix):
        return {**self.lstm.items(prefix + ".lstm"), prefix + ".out.w": self.out_w, prefix + ".out.b": self.out_b}


def classifier_logits(context, params: ClassifierParams) -> Tensor:
    context = tn._lift(context, params.out_w)[0]
    if context.shape[-1] != params.lstm.input_dim:
        raise ShapeError(f"classifier: input width {context.shape[-1]} != {params.lstm.input_dim}")
    h = encode_stream(context, params.lstm)
    return tn.matmul(h, params.out_w) + params.out_b


def predict_from_logits(logits: np.ndarray) -> np.ndarray:
    """Video-level class: argmax of the time-averaged log-probabilities (lowest index on ties)."""
    return np.argmax(tn.log_softmax_np(logits).mean(axis=-2), axis=-1)


def classifier_forward(context, params: ClassifierParams):
    """Returns ``(per-step distributions (..., T, K), final class prediction)``."""
    logits = classifier_logits(context, params).data
    return tn.softmax_np(logits), predict_from_logits(logits)
