"""Pure-numpy implementations of the hot numeric kernels.

These are the fallback path behind `backend`; `kernels_nb` provides the
numba-compiled twins with identical signatures and semantics. Everything
is float64. Gate order inside the 4h axis is [input | forget | output |
candidate] throughout.

Sequence tensors are laid out (batch, step, ...). `steps[i]` is the
number of live LSTM steps for example i (image step included); entries
at t >= steps[i] are padding whose upstream gradient is exactly zero, so
the full unroll below contributes exact zeros for them.
"""

import numpy as np


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(ax, steps, w_h):
    """Run the LSTM recurrence over a padded batch.

    ax: (n, S, 4h) precomputed input contributions (x @ W_x + b).
    steps: (n,) int64 live step counts per example.
    w_h: (h, 4h) recurrent weights.

    Returns (h_seq, c_seq, gates) with shapes (n, S, h), (n, S, h),
    (n, S, 4h); gates hold post-activation values.
    """
    n, s_max, h4 = ax.shape
    h = h4 // 4
    h_seq = np.zeros((n, s_max, h))
    c_seq = np.zeros((n, s_max, h))
    gates = np.zeros((n, s_max, h4))
    h_prev = np.zeros((n, h))
    c_prev = np.zeros((n, h))
    for t in range(s_max):
        a = ax[:, t] + h_prev @ w_h
        gi = sigmoid(a[:, :h])
        gf = sigmoid(a[:, h:2 * h])
        go = sigmoid(a[:, 2 * h:3 * h])
        gg = np.tanh(a[:, 3 * h:])
        c = gf * c_prev + gi * gg
        hv = go * np.tanh(c)
        gates[:, t, :h] = gi
        gates[:, t, h:2 * h] = gf
        gates[:, t, 2 * h:3 * h] = go
        gates[:, t, 3 * h:] = gg
        c_seq[:, t] = c
        h_seq[:, t] = hv
        h_prev = hv
        c_prev = c
    return h_seq, c_seq, gates


def lstm_backward(steps, w_h, h_seq, c_seq, gates, d_h):
    """Backpropagate through the recurrence of `lstm_forward`.

    d_h: (n, S, h) gradient w.r.t. h_seq (zero at padded steps).
    Returns (d_ax, d_wh): gradient w.r.t. the pre-activation inputs and
    the recurrent weights.
    """
    n, s_max, h = h_seq.shape
    d_ax = np.zeros((n, s_max, 4 * h))
    d_wh = np.zeros_like(w_h)
    dh_rec = np.zeros((n, h))
    dc_rec = np.zeros((n, h))
    for t in range(s_max - 1, -1, -1):
        gi = gates[:, t, :h]
        gf = gates[:, t, h:2 * h]
        go = gates[:, t, 2 * h:3 * h]
        gg = gates[:, t, 3 * h:]
        c = c_seq[:, t]
        tc = np.tanh(c)
        if t > 0:
            h_prev = h_seq[:, t - 1]
            c_prev = c_seq[:, t - 1]
        else:
            h_prev = np.zeros((n, h))
            c_prev = np.zeros((n, h))
        dh = d_h[:, t] + dh_rec
        do = dh * tc
        dc = dc_rec + dh * go * (1.0 - tc * tc)
        di = dc * gg
        dg = dc * gi
        df = dc * c_prev
        dc_rec = dc * gf
        da = np.empty((n, 4 * h))
        da[:, :h] = di * gi * (1.0 - gi)
        da[:, h:2 * h] = df * gf * (1.0 - gf)
        da[:, 2 * h:3 * h] = do * go * (1.0 - go)
        da[:, 3 * h:] = dg * (1.0 - gg * gg)
        d_ax[:, t] = da
        d_wh += h_prev.T @ da
        dh_rec = da @ w_h.T
    return d_ax, d_wh


def lstm_cell_pre(ax_row, h_prev, c_prev, w_h):
    """Single cell step from a precomputed input contribution (decode path)."""
    h = h_prev.shape[0]
    a = ax_row + h_prev @ w_h
    gi = sigmoid(a[:h])
    gf = sigmoid(a[h:2 * h])
    go = sigmoid(a[2 * h:3 * h])
    gg = np.tanh(a[3 * h:])
    c = gf * c_prev + gi * gg
    return go * np.tanh(c), c


def softmax_xent(logits, targets):
    """Row-wise softmax cross entropy with max subtraction.

    logits: (m, V); targets: (m,) int64.
    Returns (losses (m,), probs (m, V)).
    """
    m = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    denom = ex.sum(axis=1)
    probs = ex / denom[:, None]
    rows = np.arange(m)
    losses = np.log(denom) - shifted[rows, targets]
    return losses, probs


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """Bias-corrected Adam step, in place on flat float64 arrays.

    t is the already-incremented step count used for bias correction.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mh = m / (1.0 - beta1 ** t)
    vh = v / (1.0 - beta2 ** t)
    p -= lr * mh / (np.sqrt(vh) + eps)
