"""Independent oracles shared by the test modules."""

import math

import numpy as np
import pytest

from aagan import tensor as tn

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: list[str] = []

FD_STEP = 1e-6
GRAD_RTOL = 1e-4
# entries whose analytic and numeric magnitudes are both below this are compared absolutely
GRAD_FLOOR = 1e-5


def numeric_grads(f, arrays: dict, h: float = FD_STEP) -> dict:
    """Central differences of scalar ``f(arrays)`` w.r.t. every entry of every array."""
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = f(arrays)
            flat[i] = old - h
            fm = f(arrays)
            flat[i] = old
            gf[i] = (fp - fm) / (2 * h)
        out[name] = g
    return out


def analytic_grads(build, arrays: dict) -> dict:
    """``build(P)`` gets parameter tensors and returns a scalar tensor."""
    g = tn.Graph()
    P = {k: g.param(k, v) for k, v in arrays.items()}
    loss = build(P)
    return tn.backward(g, loss)


def max_rel_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), GRAD_FLOOR)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def gradcheck(build, arrays: dict, rtol: float = GRAD_RTOL) -> float:
    """Assert analytic == central-difference gradients; returns the worst relative error."""
    arrays = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}

    def f(arrs):
        g = tn.Graph()
        P = {k: g.constant(v) for k, v in arrs.items()}
        return build(P).item()

    ana = analytic_grads(build, arrays)
    num = numeric_grads(f, arrays)
    worst = 0.0
    for k in arrays:
        err = max_rel_error(ana[k], num[k])
        assert err <= rtol, f"gradient of {k}: relative error {err:.3g} > {rtol}"
        worst = max(worst, err)
    return worst


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_lstm_step(x, h, c, w_in, w_rec, bias):
    """LSTM gates evaluated one scalar at a time (lists of floats)."""
    H = len(h)
    z = []
    for j in range(4 * H):
        s = bias[j]
        for d in range(len(x)):
            s += x[d] * w_in[d][j]
        for k in range(H):
            s += h[k] * w_rec[k][j]
        z.append(s)
    h_new, c_new = [], []
    for k in range(H):
        i = _sig(z[k])
        f = _sig(z[H + k])
        g = math.tanh(z[2 * H + k])
        o = _sig(z[3 * H + k])
        ck = f * c[k] + i * g
        c_new.append(ck)
        h_new.append(o * math.tanh(ck))
    return h_new, c_new


def scalar_lstm_unroll(xs, w_in, w_rec, bias):
    H = len(w_rec)
    h, c = [0.0] * H, [0.0] * H
    hs = []
    for x in xs:
        h, c = scalar_lstm_step(list(x), h, c, w_in.tolist(), w_rec.tolist(), bias.tolist())
        hs.append(h)
    return np.array(hs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
