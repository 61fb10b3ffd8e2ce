"""Dense float64 tensors with a define-by-run tape and reverse-mode gradients.

A :class:`Graph` is created per forward pass.  Parameters enter it through
:meth:`Graph.param`, everything else through :meth:`Graph.constant` (or
implicitly, when a plain array is passed to an op).  Every op appends exactly
one node, so construction order is already a topological order and
:func:`backward` simply walks the node list in reverse.

Leading axes broadcast like numpy; the last axis is the feature axis.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DegenerateVectorError(ValueError):
    """A vector with zero norm was passed where a direction is required."""


class NonFiniteError(ValueError):
    """NaN or Inf reached an op that rejects it."""


Vjp = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "graph", "index", "parents", "vjp", "requires_grad", "kind", "name")

    def __init__(self, graph, data, kind, parents=(), vjp=None, requires_grad=False, name=None):
        self.data = data
        self.graph = graph
        self.kind = kind
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.name = name
        self.index = len(graph.nodes)
        graph.nodes.append(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(kind={self.kind!r}, shape={self.shape})"

    # operator sugar; the named functions below are the real API
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def _raise_not_scalar(t):
    raise ShapeError(f"expected a scalar tensor, got shape {t.shape}")


class Graph:
    """Ordered tape of nodes for one forward/backward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.params: dict[str, Tensor] = {}

    def param(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(self, np.asarray(value, dtype=np.float64), "param", requires_grad=True, name=name)
        self.params[name] = t
        return t

    def constant(self, value) -> Tensor:
        return Tensor(self, np.asarray(value, dtype=np.float64), "const")

    def params_from(self, arrays: dict[str, np.ndarray], trainable=None) -> dict[str, Tensor]:
        """Register a whole parameter dict; names outside ``trainable`` become constants."""
        out = {}
        for name, value in arrays.items():
            if trainable is None or name in trainable:
                out[name] = self.param(name, value)
            else:
                out[name] = self.constant(value)
        return out


def _graph_of(items) -> Graph:
    for x in items:
        if isinstance(x, Tensor):
            return x.graph
    return Graph()  # all-constant call: evaluate on a throwaway tape


def _lift(*items) -> list[Tensor]:
    g = _graph_of(items)
    out = []
    for x in items:
        if isinstance(x, Tensor):
            if x.graph is not g:
                raise ValueError("operands belong to different graphs")
            out.append(x)
        else:
            out.append(g.constant(x))
    return out


def _node(kind: str, data: np.ndarray, parents: Sequence[Tensor], vjp: Vjp) -> Tensor:
    g = parents[0].graph
    rg = any(p.requires_grad for p in parents)
    return Tensor(g, data, kind, tuple(parents), vjp if rg else None, rg)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _lift(a, b)
    _check_broadcast("add", a, b)

    def vjp(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _node("add", a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _lift(a, b)
    _check_broadcast("sub", a, b)

    def vjp(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _node("sub", a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _lift(a, b)
    _check_broadcast("mul", a, b)

    def vjp(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _node("mul", a.data * b.data, (a, b), vjp)


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    return expit(x)


def activation(x, kind: str) -> Tensor:
    """Elementwise ``tanh`` or ``sigmoid``."""
    (x,) = _lift(x)
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError(f"{kind}: non-finite input")
    if kind == "tanh":
        y = np.tanh(x.data)

        def vjp(g):
            return (g * (1.0 - y * y),)
    elif kind == "sigmoid":
        y = expit(x.data)

        def vjp(g):
            return (g * y * (1.0 - y),)
    else:
        raise ValueError(f"unsupported activation {kind!r}")
    return _node(kind, y, (x,), vjp)


def tanh(x) -> Tensor:
    return activation(x, "tanh")


def sigmoid(x) -> Tensor:
    return activation(x, "sigmoid")


def log(x, eps: float = 0.0) -> Tensor:
    """Natural log; with ``eps > 0`` the input is clamped to ``[eps, 1 - eps]`` first.

    Clamped entries pass no gradient.
    """
    (x,) = _lift(x)
    if eps > 0.0:
        z = np.clip(x.data, eps, 1.0 - eps)
        live = z == x.data
    else:
        z = x.data
        live = None
    y = np.log(z)

    def vjp(g):
        gx = g / z
        if live is not None:
            gx = gx * live
        return (gx,)

    return _node("log", y, (x,), vjp)


def exp(x) -> Tensor:
    (x,) = _lift(x)
    y = np.exp(x.data)

    def vjp(g):
        return (g * y,)

    return _node("exp", y, (x,), vjp)


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast.

    A 2-D right operand with a batched left operand is the common case
    (``(B, n) @ (n, m)``, ``(B, T, n) @ (n, m)``).
    """
    a, b = _lift(a, b)
    if a.data.ndim < 1 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if a.data.ndim == 1:
                gb = _unbroadcast(np.multiply.outer(a.data, g), b.shape)
            elif a.data.ndim > 2 and b.data.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _node("matmul", out, (a, b), vjp)


# ---------------------------------------------------------------- structure


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = _lift(*tensors)
    nd = ts[0].data.ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.data.ndim != nd or any(t.shape[i] != ts[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}")
    out = np.concatenate([t.data for t in ts], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def vjp(g):
        res = []
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * nd
                idx[ax] = slice(lo, hi)
                res.append(g[tuple(idx)])
            else:
                res.append(None)
        return res

    return _node("concat", out, ts, vjp)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = _lift(*tensors)
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in ts]}") from None

    def vjp(g):
        parts = np.moveaxis(g, axis, 0)
        return [parts[i] if t.requires_grad else None for i, t in enumerate(ts)]

    return _node("stack", out, ts, vjp)


def getitem(x, key) -> Tensor:
    """Basic (slice/integer) indexing."""
    (x,) = _lift(x)
    out = x.data[key]
    if isinstance(out, np.ndarray) and np.shares_memory(out, x.data):
        out = out.copy()
    else:
        out = np.asarray(out)

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _node("getitem", out, (x,), vjp)


def reshape(x, shape) -> Tensor:
    (x,) = _lift(x)
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.shape),)

    return _node("reshape", out, (x,), vjp)


# ---------------------------------------------------------------- reductions


def sum(x, axis=None) -> Tensor:  # noqa: A001
    (x,) = _lift(x)
    out = np.asarray(x.data.sum(axis=axis))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _node("sum", out, (x,), vjp)


def mean(x, axis=None) -> Tensor:
    (x,) = _lift(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / float(n))


# ---------------------------------------------------------------- losses / similarities


def cosine_similarity(u, v) -> Tensor:
    """Cosine similarity along the last axis (batched over leading axes)."""
    u, v = _lift(u, v)
    if u.shape != v.shape:
        raise ShapeError(f"cosine_similarity: {u.shape} vs {v.shape}")
    nu = np.sqrt(np.sum(u.data * u.data, axis=-1))
    nv = np.sqrt(np.sum(v.data * v.data, axis=-1))
    if np.any(nu == 0.0) or np.any(nv == 0.0):
        raise DegenerateVectorError("cosine_similarity: zero-norm vector")
    dot = np.sum(u.data * v.data, axis=-1)
    s = dot / (nu * nv)

    def vjp(g):
        g = g[..., None]
        nu_, nv_, s_ = nu[..., None], nv[..., None], s[..., None]
        gu = g * (v.data / (nu_ * nv_) - s_ * u.data / (nu_ * nu_)) if u.requires_grad else None
        gv = g * (u.data / (nu_ * nv_) - s_ * v.data / (nv_ * nv_)) if v.requires_grad else None
        return gu, gv

    return _node("cosine", s, (u, v), vjp)


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Per-row ``-log softmax(logits)[label]``; ``labels`` has shape ``logits.shape[:-1]``."""
    (logits,) = _lift(logits)
    k = logits.shape[-1]
    if k < 2:
        raise ShapeError(f"softmax_cross_entropy: need at least 2 classes, got {k}")
    labels = np.asarray(labels)
    labels = np.broadcast_to(labels, logits.shape[:-1])
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range for {k} classes")
    logp = log_softmax_np(logits.data)
    onehot = np.zeros_like(logp)
    np.put_along_axis(onehot, labels[..., None].astype(np.intp), 1.0, axis=-1)
    loss = -np.sum(logp * onehot, axis=-1)

    def vjp(g):
        return (g[..., None] * (np.exp(logp) - onehot),)

    return _node("softmax_xent", loss, (logits,), vjp)


# ---------------------------------------------------------------- fused recurrent op


def lstm_sequence(x, w_in, w_rec, bias) -> Tensor:
    """Unroll a standard LSTM from the zero state; returns every hidden state.

    ``x`` is ``(B, T, D_in)`` or ``(T, D_in)``; ``w_in`` is ``(D_in, 4H)``,
    ``w_rec`` is ``(H, 4H)``, ``bias`` is ``(4H,)``.  Gate order along the
    ``4H`` axis: input, forget, cell candidate, output.  Backward is
    hand-written truncation-free BPTT.
    """
    x, w_in, w_rec, bias = _lift(x, w_in, w_rec, bias)
    xd = x.data
    squeeze = xd.ndim == 2
    if squeeze:
        xd = xd[None]
    if xd.ndim != 3 or xd.shape[1] < 1:
        raise ShapeError(f"lstm_sequence: expected (B, T, D_in) input, got {x.shape}")
    B, T, D = xd.shape
    H = w_rec.shape[0]
    if w_in.shape != (D, 4 * H) or w_rec.shape != (H, 4 * H) or bias.shape != (4 * H,):
        raise ShapeError(
            f"lstm_sequence: input {x.shape}, w_in {w_in.shape}, w_rec {w_rec.shape}, bias {bias.shape}"
        )
    Wh = w_rec.data
    zx = xd @ w_in.data + bias.data
    gates = np.empty((B, T, 4 * H))
    cs = np.empty((B, T, H))
    tcs = np.empty((B, T, H))
    hs = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = zx[:, t] + h @ Wh
        i = expit(z[:, :H])
        f = expit(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        o = expit(z[:, 3 * H:])
        c = f * c + i * gg
        tc = np.tanh(c)
        h = o * tc
        gates[:, t, :H], gates[:, t, H:2 * H], gates[:, t, 2 * H:3 * H], gates[:, t, 3 * H:] = i, f, gg, o
        cs[:, t], tcs[:, t], hs[:, t] = c, tc, h

    def vjp(g):
        g = g[None] if squeeze else g
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            i = gates[:, t, :H]
            f = gates[:, t, H:2 * H]
            gg = gates[:, t, 2 * H:3 * H]
            o = gates[:, t, 3 * H:]
            tc = tcs[:, t]
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, H))
            dh = g[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t]
            dz[:, :H] = dc * gg * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * H:] = do * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ Wh.T
        flat_dz = dz_all.reshape(-1, 4 * H)
        gx = gwi = gwr = gb = None
        if x.requires_grad:
            gx = dz_all @ w_in.data.T
            if squeeze:
                gx = gx[0]
        if w_in.requires_grad:
            gwi = xd.reshape(-1, D).T @ flat_dz
        if w_rec.requires_grad:
            h_prev = np.concatenate([np.zeros((B, 1, H)), hs[:, :-1]], axis=1)
            gwr = h_prev.reshape(-1, H).T @ flat_dz
        if bias.requires_grad:
            gb = flat_dz.sum(axis=0)
        return gx, gwi, gwr, gb

    out = hs[0] if squeeze else hs
    return _node("lstm_sequence", out, (x, w_in, w_rec, bias), vjp)


# ---------------------------------------------------------------- backward


def backward(graph: Graph, loss: Tensor) -> dict[str, np.ndarray]:
    """Gradients of scalar ``loss`` w.r.t. every parameter registered in ``graph``.

    Parameters with no path to the loss get exact zeros.
    """
    if loss.graph is not graph:
        raise ValueError("loss does not belong to this graph")
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.data)}
    nodes = graph.nodes
    for idx in range(loss.index, -1, -1):
        g = grads.pop(idx, None)
        node = nodes[idx]
        if g is None or node.vjp is None:
            if g is not None and node.kind == "param":
                grads[idx] = g  # keep for collection
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(parent.index)
            grads[parent.index] = pg if prev is None else prev + pg
    out = {}
    for name, p in graph.params.items():
        g = grads.get(p.index)
        out[name] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64).reshape(p.shape)
    return out
