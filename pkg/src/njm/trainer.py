"""Deterministic minibatch training loop and checkpoint persistence.

Determinism contract: parameter init is drawn from default_rng([seed, 0])
and the epoch-e shuffle from default_rng([seed, 1, e]), so any point in
training is fully determined by (config, corpus, epoch, batch index).
Checkpoints therefore store counters, not serialized generator state,
and resuming from one reproduces an uninterrupted run bit for bit.

Checkpoint file layout (version 1):

  magic "NJMC" | u32 version | u64 header length | header JSON (utf-8)
  then per tensor, in header order:
    u16 name length | name utf-8 | u32 ndim | u64 dims... | f64 LE data
  trailing u32 CRC32 of everything before it

The header carries the config, vocabulary, and loop counters; tensors
are the model parameters plus both Adam moment tables.
"""

import json
import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import model, nn
from .corpus import SPECIAL_TOKENS, Vocabulary
from .errors import DataFormatError, DivergenceError
from .funny_score import FunnyScorePolicy

CHECKPOINT_MAGIC = b"NJMC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainingConfig:
    feat_dim: int
    embed_dim: int = 128
    hidden_dim: int = 128
    seed: int = 0
    epochs: int = 1
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0          # None disables clipping
    policy: FunnyScorePolicy = field(default_factory=FunnyScorePolicy)
    min_freq: int = 1
    max_caption_len: int = None     # None means never truncate

    def __post_init__(self):
        if self.feat_dim < 1 or self.embed_dim < 1 or self.hidden_dim < 1:
            raise ValueError("model dims must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")
        if self.max_caption_len is not None and self.max_caption_len < 2:
            raise ValueError("max_caption_len must be >= 2")

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "feat_dim", "embed_dim", "hidden_dim", "seed", "epochs",
            "batch_size", "lr", "beta1", "beta2", "eps", "clip_norm",
            "min_freq", "max_caption_len")}
        d["policy"] = self.policy.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["policy"] = FunnyScorePolicy.from_dict(d["policy"])
        return cls(**d)


@dataclass
class Checkpoint:
    """Everything needed to resume training or run inference.

    epoch/step_in_epoch point at the NEXT batch to run; together with
    config.seed they stand in for RNG state (see module docstring).
    """

    config: TrainingConfig
    vocab: Vocabulary
    params: dict
    adam: nn.AdamState
    epoch: int = 0
    step_in_epoch: int = 0
    global_step: int = 0
    version: int = CHECKPOINT_VERSION


def _copy_adam(adam):
    return nn.AdamState(lr=adam.lr, beta1=adam.beta1, beta2=adam.beta2,
                        eps=adam.eps, t=adam.t,
                        m={k: v.copy() for k, v in adam.m.items()},
                        v={k: v.copy() for k, v in adam.v.items()})


def train(config, corpus, resume_from=None, max_steps=None, log_fn=None):
    """Run the loop; returns (Checkpoint, metrics list).

    Metrics rows are dicts (step, epoch, loss, n_high, n_low, grad_norm,
    wallclock) appended after every update; log_fn, when given, receives
    each row as it is produced. max_steps caps the GLOBAL step count,
    which makes interrupted-run tests exact: train to 100, save, resume
    with max_steps=200 matches a straight 200-step run bitwise.
    """
    if corpus.dim != config.feat_dim:
        raise ValueError(f"corpus dim {corpus.dim} != config feat_dim {config.feat_dim}")
    n = len(corpus.records)
    if n == 0:
        raise ValueError("empty corpus")
    if resume_from is not None:
        if resume_from.config != config:
            raise ValueError("resume config mismatch")
        params = {k: v.copy() for k, v in resume_from.params.items()}
        adam = _copy_adam(resume_from.adam)
        vocab = resume_from.vocab
        epoch, next_batch = resume_from.epoch, resume_from.step_in_epoch
        global_step = resume_from.global_step
    else:
        rng = np.random.default_rng([config.seed, 0])
        params = model.init_params(config.feat_dim, config.embed_dim,
                                   config.hidden_dim, corpus.vocab.size, rng)
        adam = nn.AdamState.init(params, lr=config.lr, beta1=config.beta1,
                                 beta2=config.beta2, eps=config.eps)
        vocab = corpus.vocab
        epoch, next_batch, global_step = 0, 0, 0
    if vocab.size != corpus.vocab.size:
        raise ValueError("vocabulary size mismatch with corpus")

    bs = config.batch_size
    n_batches = (n + bs - 1) // bs
    metrics = []
    t0 = time.perf_counter()
    while epoch < config.epochs:
        perm = np.random.default_rng([config.seed, 1, epoch]).permutation(n)
        b = next_batch
        while b < n_batches:
            if max_steps is not None and global_step >= max_steps:
                ckpt = Checkpoint(config=config, vocab=vocab, params=params,
                                  adam=adam, epoch=epoch, step_in_epoch=b,
                                  global_step=global_step)
                return ckpt, metrics
            idx = perm[b * bs:(b + 1) * bs]
            batch = model.make_batch(corpus, idx, config.max_caption_len)
            value, report, grads = model.forward_backward(params, batch,
                                                          config.policy)
            if not np.isfinite(value):
                raise DivergenceError(f"divergence at step {global_step + 1}")
            grad_norm = nn.clip_global_norm(grads, config.clip_norm)
            nn.adam_step(params, grads, adam)
            global_step += 1
            b += 1
            row = {"step": global_step, "epoch": epoch, "loss": float(value),
                   "n_high": report.n_high, "n_low": report.n_low,
                   "grad_norm": grad_norm,
                   "wallclock": time.perf_counter() - t0}
            metrics.append(row)
            if log_fn is not None:
                log_fn(row)
        epoch += 1
        next_batch = 0
    ckpt = Checkpoint(config=config, vocab=vocab, params=params, adam=adam,
                      epoch=epoch, step_in_epoch=0, global_step=global_step)
    return ckpt, metrics


def _tensor_table(ckpt):
    tensors = {name: ckpt.params[name] for name in model.PARAM_NAMES}
    for name in model.PARAM_NAMES:
        tensors[f"adam.m.{name}"] = ckpt.adam.m[name]
        tensors[f"adam.v.{name}"] = ckpt.adam.v[name]
    return tensors


def save_checkpoint(ckpt, path):
    tensors = _tensor_table(ckpt)
    names = sorted(tensors)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "vocab": {"version": 1,
                  "tokens": ckpt.vocab.id_to_token[len(SPECIAL_TOKENS):]},
        "epoch": ckpt.epoch,
        "step_in_epoch": ckpt.step_in_epoch,
        "global_step": ckpt.global_step,
        "adam_t": ckpt.adam.t,
        "tensors": names,
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION),
             struct.pack("<Q", len(blob)), blob]
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.off = 0

    def take(self, k):
        if self.off + k > len(self.blob):
            raise DataFormatError("truncated checkpoint")
        out = self.blob[self.off:self.off + k]
        self.off += k
        return out


def load_checkpoint(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 20:
        raise DataFormatError("truncated checkpoint")
    payload, crc_bytes = raw[:-4], raw[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(payload):
        raise DataFormatError("checkpoint checksum mismatch")
    r = _Reader(payload)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise DataFormatError("bad checkpoint magic")
    version = struct.unpack("<I", r.take(4))[0]
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}")
    hlen = struct.unpack("<Q", r.take(8))[0]
    try:
        header = json.loads(r.take(hlen).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"bad checkpoint header: {exc}") from exc
    try:
        config = TrainingConfig.from_dict(header["config"])
        vocab = Vocabulary.from_tokens(header["vocab"]["tokens"])
        names = header["tensors"]
        counters = (int(header["epoch"]), int(header["step_in_epoch"]),
                    int(header["global_step"]), int(header["adam_t"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad checkpoint header: {exc}") from exc
    tensors = {}
    for expected in names:
        nlen = struct.unpack("<H", r.take(2))[0]
        name = r.take(nlen).decode("utf-8")
        if name != expected:
            raise DataFormatError(f"checkpoint tensor order mismatch at {name}")
        ndim = struct.unpack("<I", r.take(4))[0]
        dims = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        count = 1
        for d in dims:
            count *= d
        data = np.frombuffer(r.take(8 * count), dtype="<f8")
        tensors[name] = data.astype(np.float64).reshape(dims)
    if r.off != len(payload):
        raise DataFormatError("trailing bytes in checkpoint")
    missing = [n for n in model.PARAM_NAMES
               if n not in tensors or f"adam.m.{n}" not in tensors
               or f"adam.v.{n}" not in tensors]
    if missing:
        raise DataFormatError(f"checkpoint missing tensors: {missing}")
    params = {n: tensors[n] for n in model.PARAM_NAMES}
    adam = nn.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                        eps=config.eps, t=counters[3],
                        m={n: tensors[f"adam.m.{n}"] for n in model.PARAM_NAMES},
                        v={n: tensors[f"adam.v.{n}"] for n in model.PARAM_NAMES})
    return Checkpoint(config=config, vocab=vocab, params=params, adam=adam,
                      epoch=counters[0], step_in_epoch=counters[1],
                      global_step=counters[2], version=version)
