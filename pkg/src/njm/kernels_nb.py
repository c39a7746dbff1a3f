"""Numba-compiled twins of the kernels in `kernels_np`.

Same signatures, same float64 semantics, same gate order. Loops are
written per example so short sequences skip their padded tail instead
of multiplying by zero. First call pays JIT compilation; cache=True
persists the compiled code next to this module.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


@njit(cache=True)
def sigmoid(x):
    out = np.empty_like(x)
    flat_in = x.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.shape[0]):
        flat_out[i] = _sigmoid_scalar(flat_in[i])
    return out


@njit(cache=True)
def lstm_forward(ax, steps, w_h):
    n, s_max, h4 = ax.shape
    h = h4 // 4
    h_seq = np.zeros((n, s_max, h))
    c_seq = np.zeros((n, s_max, h))
    gates = np.zeros((n, s_max, h4))
    for i in range(n):
        h_prev = np.zeros(h)
        c_prev = np.zeros(h)
        for t in range(steps[i]):
            a = ax[i, t].copy()
            for k in range(h):
                hv = h_prev[k]
                for j in range(h4):
                    a[j] += hv * w_h[k, j]
            for j in range(h):
                gi = _sigmoid_scalar(a[j])
                gf = _sigmoid_scalar(a[h + j])
                go = _sigmoid_scalar(a[2 * h + j])
                gg = math.tanh(a[3 * h + j])
                c = gf * c_prev[j] + gi * gg
                gates[i, t, j] = gi
                gates[i, t, h + j] = gf
                gates[i, t, 2 * h + j] = go
                gates[i, t, 3 * h + j] = gg
                c_seq[i, t, j] = c
                h_seq[i, t, j] = go * math.tanh(c)
            for j in range(h):
                h_prev[j] = h_seq[i, t, j]
                c_prev[j] = c_seq[i, t, j]
    return h_seq, c_seq, gates


@njit(cache=True)
def lstm_backward(steps, w_h, h_seq, c_seq, gates, d_h):
    n, s_max, h = h_seq.shape
    h4 = 4 * h
    d_ax = np.zeros((n, s_max, h4))
    d_wh = np.zeros_like(w_h)
    da = np.empty(h4)
    for i in range(n):
        dh_rec = np.zeros(h)
        dc_rec = np.zeros(h)
        for t in range(steps[i] - 1, -1, -1):
            for j in range(h):
                gi = gates[i, t, j]
                gf = gates[i, t, h + j]
                go = gates[i, t, 2 * h + j]
                gg = gates[i, t, 3 * h + j]
                tc = math.tanh(c_seq[i, t, j])
                c_prev = c_seq[i, t - 1, j] if t > 0 else 0.0
                dh = d_h[i, t, j] + dh_rec[j]
                do = dh * tc
                dc = dc_rec[j] + dh * go * (1.0 - tc * tc)
                di = dc * gg
                dg = dc * gi
                df = dc * c_prev
                dc_rec[j] = dc * gf
                da[j] = di * gi * (1.0 - gi)
                da[h + j] = df * gf * (1.0 - gf)
                da[2 * h + j] = do * go * (1.0 - go)
                da[3 * h + j] = dg * (1.0 - gg * gg)
            d_ax[i, t] = da
            if t > 0:
                for k in range(h):
                    hp = h_seq[i, t - 1, k]
                    for j in range(h4):
                        d_wh[k, j] += hp * da[j]
            for k in range(h):
                acc = 0.0
                for j in range(h4):
                    acc += da[j] * w_h[k, j]
                dh_rec[k] = acc
    return d_ax, d_wh


@njit(cache=True)
def lstm_cell_pre(ax_row, h_prev, c_prev, w_h):
    h = h_prev.shape[0]
    h4 = 4 * h
    a = ax_row.copy()
    for k in range(h):
        hv = h_prev[k]
        for j in range(h4):
            a[j] += hv * w_h[k, j]
    h_new = np.empty(h)
    c_new = np.empty(h)
    for j in range(h):
        gi = _sigmoid_scalar(a[j])
        gf = _sigmoid_scalar(a[h + j])
        go = _sigmoid_scalar(a[2 * h + j])
        gg = math.tanh(a[3 * h + j])
        c = gf * c_prev[j] + gi * gg
        c_new[j] = c
        h_new[j] = go * math.tanh(c)
    return h_new, c_new


@njit(cache=True)
def softmax_xent(logits, targets):
    m, width = logits.shape
    losses = np.empty(m)
    probs = np.empty((m, width))
    for r in range(m):
        mx = logits[r, 0]
        for j in range(1, width):
            if logits[r, j] > mx:
                mx = logits[r, j]
        denom = 0.0
        for j in range(width):
            e = math.exp(logits[r, j] - mx)
            probs[r, j] = e
            denom += e
        for j in range(width):
            probs[r, j] /= denom
        losses[r] = math.log(denom) - (logits[r, targets[r]] - mx)
    return losses, probs


@njit(cache=True)
def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i in range(p.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mh = m[i] / c1
        vh = v[i] / c2
        p[i] -= lr * mh / (math.sqrt(vh) + eps)


def warmup():
    """Trigger compilation of every kernel on tiny inputs."""
    ax = np.zeros((1, 2, 8))
    steps = np.ones(1, dtype=np.int64)
    w_h = np.zeros((2, 8))
    h_seq, c_seq, gates = lstm_forward(ax, steps, w_h)
    lstm_backward(steps, w_h, h_seq, c_seq, gates, np.zeros((1, 2, 2)))
    lstm_cell_pre(np.zeros(8), np.zeros(2), np.zeros(2), w_h)
    softmax_xent(np.zeros((1, 3)), np.zeros(1, dtype=np.int64))
    adam_update(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1),
                1, 0.0, 0.9, 0.999, 1e-8)
    sigmoid(np.zeros(1))
