"""Stream encoders and attention fusion into the shared context descriptor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .tensor import ShapeError, Tensor


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


@dataclass
class LstmParams:
    """Gate weights packed as ``[input | forget | cell | output]`` along the last axis."""

    w_in: object  # (D_in, 4H)
    w_rec: object  # (H, 4H)
    bias: object  # (4H,)

    @property
    def input_dim(self) -> int:
        return self.w_in.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_rec.shape[0]

    @classmethod
    def init(cls, rng, input_dim: int, hidden_dim: int = 300) -> "LstmParams":
        return cls(
            uniform_init(rng, input_dim, (input_dim, 4 * hidden_dim)),
            uniform_init(rng, hidden_dim, (hidden_dim, 4 * hidden_dim)),
            np.zeros(4 * hidden_dim),
        )

    @classmethod
    def take(cls, params: dict, prefix: str) -> "LstmParams":
        return cls(params[prefix + ".w_in"], params[prefix + ".w_rec"], params[prefix + ".bias"])

    def items(self, prefix: str):
        return {prefix + ".w_in": self.w_in, prefix + ".w_rec": self.w_rec, prefix + ".bias": self.bias}


def lstm_cell_step(x, state, params: LstmParams):
    """One LSTM update from primitive ops; ``state`` is ``(h, c)``.

    Slower than the fused :func:`aagan.tensor.lstm_sequence` but built only
    from differentiable primitives, which makes it the reference for the
    fused kernel.
    """
    h, c = state
    x, h, c, _ = tn._lift(x, h, c, params.w_in)
    H = params.hidden_dim
    if x.shape[-1] != params.input_dim or h.shape[-1] != H or c.shape[-1] != H:
        raise ShapeError(
            f"lstm_cell_step: x {x.shape}, h {h.shape}, c {c.shape} vs D_in={params.input_dim}, H={H}"
        )
    z = tn.matmul(x, params.w_in) + tn.matmul(h, params.w_rec) + params.bias
    i = tn.sigmoid(z[..., :H])
    f = tn.sigmoid(z[..., H:2 * H])
    g = tn.tanh(z[..., 2 * H:3 * H])
    o = tn.sigmoid(z[..., 3 * H:])
    c_new = f * c + i * g
    h_new = o * tn.tanh(c_new)
    return h_new, c_new


def encode_stream(features, params: LstmParams) -> Tensor:
    """Hidden states ``h_1..h_T`` for a ``(T, D)`` or batched ``(B, T, D)`` feature sequence."""
    features = tn._lift(features, params.w_in)[0]
    if features.data.ndim not in (2, 3) or features.shape[-2] == 0:
        raise ShapeError(f"encode_stream: empty or malformed sequence of shape {features.shape}")
    if features.shape[-1] != params.input_dim:
        raise ShapeError(f"encode_stream: feature dim {features.shape[-1]} != {params.input_dim}")
    return tn.lstm_sequence(features, params.w_in, params.w_rec, params.bias)


@dataclass
class AttentionParams:
    """Per-stream energy perceptrons plus the linear combiner feeding the sigmoid.

    ``mlp_v``/``mlp_tp`` are lists of ``(W, b)`` layers ending in a single
    output unit; hidden layers use tanh.
    """

    mlp_v: list
    mlp_tp: list
    comb_w: object  # (2,)
    comb_b: object  # (1,)

    @classmethod
    def init(cls, rng, hidden_dim: int, mlp_hidden=(16,)) -> "AttentionParams":
        def mlp():
            sizes = [hidden_dim, *mlp_hidden, 1]
            return [(uniform_init(rng, a, (a, b)), np.zeros(b)) for a, b in zip(sizes[:-1], sizes[1:])]

        return cls(mlp(), mlp(), uniform_init(rng, 2, (2,)), np.zeros(1))

    @classmethod
    def take(cls, params: dict, prefix: str = "att") -> "AttentionParams":
        def layers(stream):
            out, i = [], 0
            while f"{prefix}.{stream}.{i}.w" in params:
                out.append((params[f"{prefix}.{stream}.{i}.w"], params[f"{prefix}.{stream}.{i}.b"]))
                i += 1
            return out

        return cls(layers("v"), layers("tp"), params[f"{prefix}.comb_w"], params[f"{prefix}.comb_b"])

    def items(self, prefix: str = "att"):
        out = {}
        for stream, mlp in (("v", self.mlp_v), ("tp", self.mlp_tp)):
            for i, (w, b) in enumerate(mlp):
                out[f"{prefix}.{stream}.{i}.w"] = w
                out[f"{prefix}.{stream}.{i}.b"] = b
        out[f"{prefix}.comb_w"] = self.comb_w
        out[f"{prefix}.comb_b"] = self.comb_b
        return out


def _mlp_scalar(h: Tensor, layers) -> Tensor:
    if h.shape[-1] != layers[0][0].shape[0]:
        raise ShapeError(f"attention MLP expects width {layers[0][0].shape[0]}, got {h.shape}")
    z = h
    for j, (w, b) in enumerate(layers):
        z = tn.matmul(z, w) + b
        if j < len(layers) - 1:
            z = tn.tanh(z)
    return z[..., 0]


def attention_energies(h_v, h_tp, params: AttentionParams, literal_attention: bool = False):
    """``(e_v, e_tp) = (tanh(a_v(h_v)), tanh(a_tp(h_tp)))``.

    With ``literal_attention`` the temporal energy is also scored on the
    visual hidden state.
    """
    h_v, h_tp, _ = tn._lift(h_v, h_tp, params.comb_w)
    if h_v.shape != h_tp.shape:
        raise ShapeError(f"attention_energies: {h_v.shape} vs {h_tp.shape}")
    e_v = tn.tanh(_mlp_scalar(h_v, params.mlp_v))
    e_tp = tn.tanh(_mlp_scalar(h_v if literal_attention else h_tp, params.mlp_tp))
    return e_v, e_tp


def attention_weights(e_v, e_tp, params: AttentionParams):
    e_v, e_tp, w = tn._lift(e_v, e_tp, params.comb_w)
    pre = e_v * w[0] + e_tp * w[1] + params.comb_b[..., 0]
    alpha_v = tn.sigmoid(pre)
    return alpha_v, 1.0 - alpha_v


@dataclass
class ContextDescriptor:
    context: Tensor  # (..., T, 2H)
    alpha_v: Tensor  # (..., T)
    alpha_tp: Tensor  # (..., T)


def fuse_context(h_v, h_tp, alpha_v, alpha_tp, literal_attention: bool = False) -> ContextDescriptor:
    """``C_t = [alpha_v_t * h_v_t, alpha_tp_t * h_tp_t]``.

    ``literal_attention`` scales ``h_v_t`` in the temporal half as well.
    """
    h_v, h_tp, alpha_v, alpha_tp = tn._lift(h_v, h_tp, alpha_v, alpha_tp)
    if h_v.shape != h_tp.shape:
        raise ShapeError(f"fuse_context: stream shapes differ, {h_v.shape} vs {h_tp.shape}")
    if alpha_v.shape != h_v.shape[:-1] or alpha_tp.shape != h_v.shape[:-1]:
        raise ShapeError(f"fuse_context: weights {alpha_v.shape} do not match states {h_v.shape}")
    mu_v = h_v * tn.reshape(alpha_v, alpha_v.shape + (1,))
    mu_tp = (h_v if literal_attention else h_tp) * tn.reshape(alpha_tp, alpha_tp.shape + (1,))
    return ContextDescriptor(tn.concat([mu_v, mu_tp], axis=-1), alpha_v, alpha_tp)


def context_descriptor(feat_v, feat_tp, enc_v: LstmParams, enc_tp: LstmParams,
                       att: AttentionParams, literal_attention: bool = False) -> ContextDescriptor:
    """Encode both streams and fuse them with attention."""
    feat_v, feat_tp, _ = tn._lift(feat_v, feat_tp, enc_v.w_in)
    h_v = encode_stream(feat_v, enc_v)
    h_tp = encode_stream(feat_tp, enc_tp)
    e_v, e_tp = attention_energies(h_v, h_tp, att, literal_attention)
    a_v, a_tp = attention_weights(e_v, e_tp, att)
    return fuse_context(h_v, h_tp, a_v, a_tp, literal_attention)
