"""Feature-conditioned LSTM caption generator.

Conditioning follows the inject-once convention: the projected image
feature is the LSTM input at step 0 with zero initial state, the BOS
embedding follows, and the hidden state at every token step predicts
the next caption token through the output projection. Per-caption loss
is the mean softmax cross entropy over the predicted positions.

Parameters live in a plain dict with fixed names:

  W_img (D, d)   image-feature projection
  E     (V, d)   token embedding
  W_x   (d, 4h)  input weights, gate order [i | f | o | g]
  W_h   (h, 4h)  recurrent weights
  b     (4h,)    gate bias
  W_out (h, V)   output projection
  b_out (V,)     output bias

Decoding never emits PAD, BOS, or UNK, and never emits EOS as the very
first token; log probabilities are taken from the unconstrained softmax.
"""

from dataclasses import dataclass

import numpy as np

from . import backend, funny_score, nn
from .corpus import BOS, EOS, PAD, UNK, detokenize

PARAM_NAMES = ("W_img", "E", "W_x", "W_h", "b", "W_out", "b_out")


def param_shapes(feat_dim, embed_dim, hidden_dim, vocab_size):
    d, h, v = embed_dim, hidden_dim, vocab_size
    return {
        "W_img": (feat_dim, d),
        "E": (v, d),
        "W_x": (d, 4 * h),
        "W_h": (h, 4 * h),
        "b": (4 * h,),
        "W_out": (h, v),
        "b_out": (v,),
    }


def init_params(feat_dim, embed_dim, hidden_dim, vocab_size, rng, scale=0.08):
    """Seeded initialization: uniform weights, zero biases.

    Tensors are drawn in PARAM_NAMES order so a given rng state always
    produces the same parameters.
    """
    shapes = param_shapes(feat_dim, embed_dim, hidden_dim, vocab_size)
    params = {}
    for name in PARAM_NAMES:
        if name in ("b", "b_out"):
            params[name] = np.zeros(shapes[name])
        else:
            params[name] = nn.init_uniform(shapes[name], rng, scale)
    return params


def model_dims(params):
    """(feat_dim, embed_dim, hidden_dim, vocab_size) from parameter shapes."""
    feat_dim, d = params["W_img"].shape
    h = params["W_h"].shape[0]
    v = params["b_out"].shape[0]
    return feat_dim, d, h, v


def lstm_cell(x, h, c, params):
    """One LSTM cell step: returns (h', c')."""
    w_x, w_h, b = params["W_x"], params["W_h"], params["b"]
    if x.shape != (w_x.shape[0],) or h.shape != c.shape or h.shape != (w_h.shape[0],):
        raise ValueError("lstm_cell shape mismatch")
    hd = h.shape[0]
    a = x @ w_x + h @ w_h + b
    gi = nn.sigmoid(a[:hd])
    gf = nn.sigmoid(a[hd:2 * hd])
    go = nn.sigmoid(a[2 * hd:3 * hd])
    gg = nn.tanh(a[3 * hd:])
    c_new = gf * c + gi * gg
    return go * nn.tanh(c_new), c_new


@dataclass
class Batch:
    """Padded caption batch: tokens/targets/mask are (n, S) with S = max steps."""

    tokens: np.ndarray    # int64, PAD-padded caption ids
    steps: np.ndarray     # int64, live LSTM steps per example (= caption length)
    targets: np.ndarray   # int64, target ids at predicted positions
    mask: np.ndarray      # bool, True at predicted positions
    feats: np.ndarray     # float64 (n, D)
    stars: np.ndarray     # int64


def assemble_batch(captions, feats, stars):
    """Pad id-list captions into a Batch; feats (n, D), stars length n."""
    if not captions:
        raise ValueError("empty batch")
    for cap in captions:
        if len(cap) < 2:
            raise ValueError("caption shorter than 2")
    n = len(captions)
    steps = np.array([len(c) for c in captions], dtype=np.int64)
    s_max = int(steps.max())
    tokens = np.full((n, s_max), PAD, dtype=np.int64)
    targets = np.full((n, s_max), PAD, dtype=np.int64)
    mask = np.zeros((n, s_max), dtype=bool)
    for r, cap in enumerate(captions):
        t = len(cap)
        tokens[r, :t] = cap
        targets[r, 1:t] = cap[1:]
        mask[r, 1:t] = True
    return Batch(tokens=tokens, steps=steps, targets=targets, mask=mask,
                 feats=np.asarray(feats, dtype=np.float64),
                 stars=np.asarray(stars, dtype=np.int64))


def make_batch(corpus, indices, max_len=None):
    indices = list(indices)
    if not indices:
        raise ValueError("empty batch")
    caps = []
    for i in indices:
        cap = corpus.records[i].caption
        if max_len is not None and len(cap) > max_len:
            cap = cap[:max_len - 1] + [EOS]
        caps.append(cap)
    feats = np.stack([corpus.features[corpus.records[i].image_id] for i in indices])
    stars = [corpus.records[i].stars for i in indices]
    return assemble_batch(caps, feats, stars)


def forward_batch(params, batch):
    """Per-example mean token losses plus the cache backward needs."""
    kern = backend.kernels()
    n, s_max = batch.tokens.shape
    feat_dim, d, h, v = model_dims(params)
    if batch.feats.shape[1] != feat_dim:
        raise ValueError(f"feature dim {batch.feats.shape[1]} != model {feat_dim}")
    x = np.empty((n, s_max, d))
    x[:, 0] = batch.feats @ params["W_img"]
    if s_max > 1:
        x[:, 1:] = params["E"][batch.tokens[:, :-1]]
    ax = (x.reshape(n * s_max, d) @ params["W_x"] + params["b"]).reshape(n, s_max, 4 * h)
    h_seq, c_seq, gates = kern.lstm_forward(ax, batch.steps, params["W_h"])
    pos = np.nonzero(batch.mask.ravel())[0]
    h_rows = h_seq.reshape(n * s_max, h)[pos]
    logits = h_rows @ params["W_out"] + params["b_out"]
    targets_m = batch.targets.ravel()[pos]
    ce, probs = kern.softmax_xent(logits, targets_m)
    row_example = pos // s_max
    losses = np.zeros(n)
    np.add.at(losses, row_example, ce)
    losses /= (batch.steps - 1)
    cache = {"x": x, "h_seq": h_seq, "c_seq": c_seq, "gates": gates,
             "pos": pos, "h_rows": h_rows, "probs": probs,
             "targets_m": targets_m, "row_example": row_example}
    return losses, cache


def backward_batch(params, batch, cache, example_weights):
    """Gradients of sum_i example_weights[i] * loss_i for every tensor."""
    kern = backend.kernels()
    n, s_max = batch.tokens.shape
    feat_dim, d, h, v = model_dims(params)
    pos, probs = cache["pos"], cache["probs"]
    row_example = cache["row_example"]
    m = pos.shape[0]
    scale = example_weights[row_example] / (batch.steps[row_example] - 1)
    dlogits = probs * scale[:, None]
    dlogits[np.arange(m), cache["targets_m"]] -= scale
    grads = {}
    grads["W_out"] = cache["h_rows"].T @ dlogits
    grads["b_out"] = dlogits.sum(axis=0)
    d_h = np.zeros((n * s_max, h))
    d_h[pos] = dlogits @ params["W_out"].T
    d_h = d_h.reshape(n, s_max, h)
    d_ax, d_wh = kern.lstm_backward(batch.steps, params["W_h"],
                                    cache["h_seq"], cache["c_seq"],
                                    cache["gates"], d_h)
    grads["W_h"] = d_wh
    d_ax_flat = d_ax.reshape(n * s_max, 4 * h)
    grads["b"] = d_ax_flat.sum(axis=0)
    grads["W_x"] = cache["x"].reshape(n * s_max, d).T @ d_ax_flat
    d_x = (d_ax_flat @ params["W_x"].T).reshape(n, s_max, d)
    grads["W_img"] = batch.feats.T @ d_x[:, 0]
    d_e = np.zeros_like(params["E"])
    if s_max > 1:
        np.add.at(d_e, batch.tokens[:, :-1], d_x[:, 1:])
    grads["E"] = d_e
    return grads


def forward_backward(params, batch, policy):
    """Forward, policy batch loss, and gradients of that batch loss."""
    losses, cache = forward_batch(params, batch)
    value, report = funny_score.batch_loss(losses, batch.stars, policy)
    weights = funny_score.gradient_weights(batch.stars, policy)
    grads = backward_batch(params, batch, cache, weights)
    return value, report, grads


def forward(params, features, caption):
    """Single-caption forward: (per-step logits (T-1, V), mean token loss)."""
    feats = np.asarray(features, dtype=np.float64).reshape(1, -1)
    batch = assemble_batch([list(caption)], feats, [0])
    losses, cache = forward_batch(params, batch)
    logits = cache["h_rows"] @ params["W_out"] + params["b_out"]
    return logits, float(losses[0])


def random_batch(feat_dim, vocab_size, n, rng, min_words=2, max_words=5):
    """Well-formed random batch: used by gradient checks and benchmarks."""
    n_special = len((PAD, BOS, EOS, UNK))
    if vocab_size <= n_special:
        raise ValueError(f"vocab_size must exceed {n_special}")
    caps = []
    for _ in range(n):
        k = int(rng.integers(min_words, max_words + 1))
        body = rng.integers(n_special, vocab_size, size=k).tolist()
        caps.append([BOS] + body + [EOS])
    feats = rng.standard_normal((n, feat_dim))
    stars = rng.integers(0, 200, size=n)
    return assemble_batch(caps, feats, stars)


def gradient_check(dims, epsilon=1e-4, n_records=2, seed=0, policy=None):
    """Max relative error, full-model BPTT vs central finite differences.

    dims is (feat_dim, embed_dim, hidden_dim, vocab_size); every
    parameter coordinate is perturbed, none sampled.
    """
    feat_dim, d, h, v = dims
    rng = np.random.default_rng(seed)
    params = init_params(feat_dim, d, h, v, rng)
    batch = random_batch(feat_dim, v, n_records, rng)
    if policy is None:
        policy = funny_score.FunnyScorePolicy()

    def loss_fn(p):
        losses, _ = forward_batch(p, batch)
        return funny_score.batch_loss(losses, batch.stars, policy)[0]

    _, _, grads = forward_backward(params, batch, policy)
    return nn.grad_check(loss_fn, params, grads, epsilon=epsilon)


def caption_score(params, features, caption):
    """(total log probability, per-token perplexity) of a caption."""
    _, loss = forward(params, features, caption)
    n_pred = len(caption) - 1
    return -n_pred * loss, float(np.exp(loss))


@dataclass
class DecodeResult:
    tokens: list     # emitted ids, EOS-terminated unless truncated at max_len
    log_prob: float

    def text(self, vocab):
        return detokenize(self.tokens, vocab)


class _DecodeState:
    """Shared precomputation for decoding: projected embeddings and start state."""

    def __init__(self, params, features):
        kern = backend.kernels()
        feat_dim, d, h, v = model_dims(params)
        self.kern = kern
        self.params = params
        self.v = v
        self.ex_proj = params["E"] @ params["W_x"] + params["b"]   # (V, 4h)
        img_ax = np.asarray(features, dtype=np.float64) @ params["W_img"] @ params["W_x"] \
            + params["b"]
        h0, c0 = kern.lstm_cell_pre(img_ax, np.zeros(h), np.zeros(h), params["W_h"])
        self.start = kern.lstm_cell_pre(self.ex_proj[BOS], h0, c0, params["W_h"])

    def advance(self, state, token):
        return self.kern.lstm_cell_pre(self.ex_proj[token], state[0], state[1],
                                       self.params["W_h"])

    def log_probs(self, state):
        logits = state[0] @ self.params["W_out"] + self.params["b_out"]
        shifted = logits - logits.max()
        return shifted - np.log(np.exp(shifted).sum())

    def allowed(self, n_emitted):
        banned = {PAD, BOS, UNK}
        if n_emitted == 0:
            banned.add(EOS)
        return [t for t in range(self.v) if t not in banned]


def decode_greedy(params, features, max_len=20):
    """Argmax decode; ties go to the lowest token id."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    st = _DecodeState(params, features)
    state = st.start
    tokens = []
    log_prob = 0.0
    while len(tokens) < max_len:
        logp = st.log_probs(state)
        allowed = st.allowed(len(tokens))
        best = allowed[int(np.argmax(logp[allowed]))]   # first max = lowest id
        tokens.append(best)
        log_prob += float(logp[best])
        if best == EOS:
            break
        state = st.advance(state, best)
    return DecodeResult(tokens=tokens, log_prob=log_prob)


def decode_beam(params, features, width=3, max_len=20):
    """Beam search over summed log probabilities.

    At each step the top `width` candidates overall survive; hypotheses
    that emitted EOS retire. Results are sorted by (log_prob descending,
    token sequence ascending), at most `width` of them.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    st = _DecodeState(params, features)
    live = [(0.0, (), st.start)]
    done = []
    for step in range(max_len):
        allowed = st.allowed(step)
        candidates = []
        for score, toks, state in live:
            logp = st.log_probs(state)
            for t in allowed:
                candidates.append((score + float(logp[t]), toks + (t,), state))
        candidates.sort(key=lambda cand: (-cand[0], cand[1]))
        live = []
        for score, toks, state in candidates[:width]:
            if toks[-1] == EOS:
                done.append((score, toks))
            else:
                live.append((score, toks, state))
        if not live:
            break
        if step < max_len - 1:
            live = [(score, toks, st.advance(state, toks[-1]))
                    for score, toks, state in live]
    done.extend((score, toks) for score, toks, _ in live)
    done.sort(key=lambda item: (-item[0], item[1]))
    return [DecodeResult(tokens=list(toks), log_prob=score)
            for score, toks in done[:width]]
