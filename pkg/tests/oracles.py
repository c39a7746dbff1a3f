"""Reference implementations the tests check the package against.

Deliberately naive: scalar loops and direct formula transcription,
sharing no code with the package internals. Token id conventions match
the package contract: PAD=0, BOS=1, EOS=2, UNK=3, regular ids from 4.
"""

import math

import numpy as np


def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def log_softmax(logits):
    m = max(logits)
    shifted = [v - m for v in logits]
    denom = math.log(sum(math.exp(v) for v in shifted))
    return [v - denom for v in shifted]


def softmax_xent(logits, target):
    return -log_softmax(list(logits))[target]


def lstm_step(x, h_prev, c_prev, w_x, w_h, b):
    """One LSTM step on 1-d vectors; gate order [i | f | o | g]."""
    hd = len(h_prev)
    a = [b[j] for j in range(4 * hd)]
    for j in range(4 * hd):
        for k in range(len(x)):
            a[j] += x[k] * w_x[k, j]
        for k in range(hd):
            a[j] += h_prev[k] * w_h[k, j]
    h_new = np.zeros(hd)
    c_new = np.zeros(hd)
    for j in range(hd):
        gi = sigmoid(a[j])
        gf = sigmoid(a[hd + j])
        go = sigmoid(a[2 * hd + j])
        gg = math.tanh(a[3 * hd + j])
        c = gf * c_prev[j] + gi * gg
        c_new[j] = c
        h_new[j] = go * math.tanh(c)
    return h_new, c_new


def caption_loss(params, feats, caption):
    """Mean next-token cross entropy of one caption, walked step by step."""
    hd = params["W_h"].shape[0]
    h, c = lstm_step(np.asarray(feats) @ params["W_img"], np.zeros(hd),
                     np.zeros(hd), params["W_x"], params["W_h"], params["b"])
    total = 0.0
    for t in range(len(caption) - 1):
        h, c = lstm_step(params["E"][caption[t]], h, c,
                         params["W_x"], params["W_h"], params["b"])
        logits = h @ params["W_out"] + params["b_out"]
        total += softmax_xent(logits, caption[t + 1])
    return total / (len(caption) - 1)


def adam_run(p0, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply a list of gradient vectors to p0; returns the final vector."""
    p = [float(v) for v in p0]
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    for t, g in enumerate(grads, start=1):
        for i in range(len(p)):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            mh = m[i] / (1.0 - beta1 ** t)
            vh = v[i] / (1.0 - beta2 ** t)
            p[i] -= lr * mh / (math.sqrt(vh) + eps)
    return np.array(p)


def all_decode_sequences(params, feats, max_len):
    """Brute-force enumeration of every legal decode output, best first.

    Legal: tokens from {regular ids} with EOS allowed after the first
    emission and only as the final token; complete when EOS is emitted
    or the length reaches max_len. Sorted by (log prob desc, tokens asc),
    the same contract the beam search promises.
    """
    v = params["b_out"].shape[0]
    hd = params["W_h"].shape[0]
    regular = list(range(4, v))
    step = lambda tok, h, c: lstm_step(params["E"][tok], h, c,
                                       params["W_x"], params["W_h"], params["b"])
    h, c = lstm_step(np.asarray(feats) @ params["W_img"], np.zeros(hd),
                     np.zeros(hd), params["W_x"], params["W_h"], params["b"])
    h, c = step(1, h, c)      # BOS
    out = []

    def walk(h, c, prefix, score):
        logits = h @ params["W_out"] + params["b_out"]
        lp = log_softmax(list(logits))
        allowed = regular + ([2] if prefix else [])
        for tok in allowed:
            seq = prefix + (tok,)
            sc = score + lp[tok]
            if tok == 2 or len(seq) == max_len:
                out.append((sc, seq))
            else:
                nh, nc = step(tok, h, c)
                walk(nh, nc, seq, sc)

    walk(h, c, (), 0.0)
    out.sort(key=lambda r: (-r[0], r[1]))
    return out


def bucket_losses(params, records, features, threshold):
    """Token-weighted (loss, perplexity) per bucket, naive accumulation.

    records are (caption ids, stars) pairs keyed into features by index.
    Returns {"high": (loss, ppl) or None, "low": ...}.
    """
    ce = {"high": 0.0, "low": 0.0}
    toks = {"high": 0, "low": 0}
    for (caption, stars), feats in zip(records, features):
        key = "high" if stars >= threshold else "low"
        ce[key] += caption_loss(params, feats, caption) * (len(caption) - 1)
        toks[key] += len(caption) - 1
    out = {}
    for key in ("high", "low"):
        if toks[key] == 0:
            out[key] = None
        else:
            loss = ce[key] / toks[key]
            out[key] = (loss, math.exp(loss))
    return out
