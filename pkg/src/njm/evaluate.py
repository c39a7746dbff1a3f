"""Evaluation: bucketed perplexity, candidate ranking, experiment grids.

Captions are split at the star threshold into a low and a high bucket
and each bucket gets a token-weighted mean loss (total cross entropy
over total predicted tokens) with perplexity = exp(loss). Ranking
orders candidate captions by total log probability under the model, a
machine proxy for human funniness ranking. The experiment driver runs
a policies x seeds grid where cells sharing a seed also share corpus,
split, parameter init, and batch order, so policy is the only varying
factor within a pair.
"""

import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import model
from .corpus import Corpus, CorpusRecord, detokenize, generate_synthetic_corpus, tokenize
from .funny_score import FunnyScorePolicy, bucket_stats
from .trainer import TrainingConfig, train


@dataclass
class EvalReport:
    model_id: str
    policy_mode: str        # policy the checkpoint was trained with
    threshold: int
    n_high: int             # record counts per bucket
    n_low: int
    loss_high: float        # None when the bucket is empty
    ppl_high: float
    loss_low: float
    ppl_low: float
    loss_overall: float
    ppl_overall: float

    def to_dict(self):
        return dict(self.__dict__)


def _retokenized(corpus, vocab):
    """Corpus re-expressed in another vocabulary (unknown words -> UNK)."""
    if vocab.id_to_token == corpus.vocab.id_to_token:
        return corpus
    records = [CorpusRecord(image_id=r.image_id,
                            caption=tokenize(detokenize(r.caption, corpus.vocab), vocab),
                            stars=r.stars)
               for r in corpus.records]
    return Corpus(records=records, features=corpus.features, dim=corpus.dim,
                  vocab=vocab)


def eval_buckets(ckpt, corpus, threshold=100, batch_size=64, model_id=None):
    """Token-weighted per-bucket loss and perplexity over all records.

    Empty buckets are reported as None, not an error. Records are
    re-tokenized under the checkpoint vocabulary when it differs.
    """
    if len(corpus.records) == 0:
        raise ValueError("empty corpus")
    work = _retokenized(corpus, ckpt.vocab)
    ce = np.zeros(3)        # high, low, overall
    toks = np.zeros(3)
    counts = [0, 0]
    n = len(work.records)
    for lo in range(0, n, batch_size):
        idx = range(lo, min(lo + batch_size, n))
        batch = model.make_batch(work, idx)
        losses, _ = model.forward_batch(ckpt.params, batch)
        n_pred = batch.steps - 1
        sums = losses * n_pred
        high = batch.stars >= threshold
        ce += [sums[high].sum(), sums[~high].sum(), sums.sum()]
        toks += [n_pred[high].sum(), n_pred[~high].sum(), n_pred.sum()]
        counts[0] += int(high.sum())
        counts[1] += int((~high).sum())

    def bucket(i):
        if toks[i] == 0:
            return None, None
        loss = float(ce[i] / toks[i])
        return loss, float(np.exp(loss))

    loss_high, ppl_high = bucket(0)
    loss_low, ppl_low = bucket(1)
    loss_all, ppl_all = bucket(2)
    return EvalReport(model_id=model_id or f"checkpoint@step{ckpt.global_step}",
                      policy_mode=ckpt.config.policy.mode, threshold=threshold,
                      n_high=counts[0], n_low=counts[1],
                      loss_high=loss_high, ppl_high=ppl_high,
                      loss_low=loss_low, ppl_low=ppl_low,
                      loss_overall=loss_all, ppl_overall=ppl_all)


def split_by_image(corpus, frac_held=0.1, seed=0):
    """(train, held) corpora split by image_id so no image leaks across.

    The held set gets max(1, int(n_images * frac_held)) images chosen by
    a seeded permutation.
    """
    if not 0.0 < frac_held < 1.0:
        raise ValueError("frac_held must be in (0, 1)")
    image_ids = list(dict.fromkeys(r.image_id for r in corpus.records))
    if len(image_ids) < 2:
        raise ValueError("need at least 2 images to split")
    perm = np.random.default_rng([seed, 2]).permutation(len(image_ids))
    n_held = max(1, int(len(image_ids) * frac_held))
    held = {image_ids[i] for i in perm[:n_held]}
    return (corpus.subset(lambda r: r.image_id not in held),
            corpus.subset(lambda r: r.image_id in held))


@dataclass
class RankedCandidate:
    label: str
    text: str
    log_prob: float
    perplexity: float


@dataclass
class RankingResult:
    entries: list           # RankedCandidate, best first
    label_ranks: dict       # label -> 1-based rank

    def to_dict(self):
        return {"entries": [dict(e.__dict__) for e in self.entries],
                "label_ranks": self.label_ranks}


def rank_candidates(ckpt, features, candidates, labels=None):
    """Order candidate captions by caption_score log probability.

    candidates are raw texts; ties break by caption text ascending.
    labels default to cand0, cand1, ... in input order.
    """
    if len(candidates) < 2:
        raise ValueError("need at least 2 candidates")
    if labels is None:
        labels = [f"cand{i}" for i in range(len(candidates))]
    if len(labels) != len(candidates):
        raise ValueError("labels and candidates length mismatch")
    entries = []
    for label, text in zip(labels, candidates):
        ids = tokenize(text, ckpt.vocab)
        log_prob, ppl = model.caption_score(ckpt.params, features, ids)
        entries.append(RankedCandidate(label=label, text=text,
                                       log_prob=log_prob, perplexity=ppl))
    entries.sort(key=lambda e: (-e.log_prob, e.text))
    ranks = {e.label: i + 1 for i, e in enumerate(entries)}
    return RankingResult(entries=entries, label_ranks=ranks)


GRID_DEFAULTS = {
    "policies": ("uniform", "weighted"),
    "seeds": (0, 1, 2),
    "images": 200,
    "captions_per": 10,
    "dim": 16,
    "frac_high": 0.3,
    "threshold": 100,
    "w_high": 2.0,
    "w_low": 1.0,
    "held_frac": 0.1,
    "corpus_seed_base": 1000,
    "epochs": 3,
    "batch_size": 32,
    "embed_dim": 32,
    "hidden_dim": 32,
    "lr": 1e-3,
    "clip_norm": 5.0,
}


@dataclass
class ExperimentResult:
    grid: dict
    rows: list              # one dict per (policy, seed) cell
    summary: dict

    def to_dict(self):
        return {"grid": self.grid, "rows": self.rows, "summary": self.summary}

    def format_table(self):
        lines = [f"{'policy':<10} {'seed':>4} {'ppl_high':>10} {'ppl_low':>10}"]
        for row in self.rows:
            ph = "-" if row["ppl_high"] is None else f"{row['ppl_high']:.4f}"
            pl = "-" if row["ppl_low"] is None else f"{row['ppl_low']:.4f}"
            lines.append(f"{row['policy']:<10} {row['seed']:>4} {ph:>10} {pl:>10}")
        lines.append("")
        for mode, agg in self.summary["per_policy"].items():
            hi, lo = agg["mean_ppl_high"], agg["mean_ppl_low"]
            lines.append(f"{mode}: mean ppl_high "
                         f"{'-' if hi is None else format(hi, '.4f')}, "
                         f"mean ppl_low "
                         f"{'-' if lo is None else format(lo, '.4f')}")
        for pair in self.summary["pairs"]:
            lines.append(f"{pair['a']} beats {pair['b']} on high-bucket ppl in "
                         f"{pair['wins_a']}/{pair['n_seeds']} seeds")
        return "\n".join(lines)


def _cell_policy(entry, grid):
    if isinstance(entry, str):
        return FunnyScorePolicy(mode=entry, threshold=grid["threshold"],
                                w_high=grid["w_high"], w_low=grid["w_low"])
    return FunnyScorePolicy.from_dict(entry)


def run_experiment(grid, log_fn=None):
    """Train and evaluate every (policy, seed) cell of the grid.

    Pairing: the corpus, its split, the parameter init, and the batch
    order depend only on the seed, never on the policy. Cell failures
    are re-raised annotated with the cell id.
    """
    unknown = set(grid) - set(GRID_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    grid = {**GRID_DEFAULTS, **grid}
    policies = [_cell_policy(p, grid) for p in grid["policies"]]
    seeds = list(grid["seeds"])
    if not policies or not seeds:
        raise ValueError("grid needs at least one policy and one seed")
    if len({p.mode for p in policies}) != len(policies):
        raise ValueError("duplicate policy modes in grid")

    rows = []
    for seed, policy in itertools.product(seeds, policies):
        cell = f"policy={policy.mode} seed={seed}"
        try:
            corpus, _ = generate_synthetic_corpus(
                seed=grid["corpus_seed_base"] + seed, n_images=grid["images"],
                captions_per_image=grid["captions_per"], dim=grid["dim"],
                frac_high=grid["frac_high"])
            fit, held = split_by_image(corpus, grid["held_frac"], seed=seed)
            config = TrainingConfig(
                feat_dim=grid["dim"], embed_dim=grid["embed_dim"],
                hidden_dim=grid["hidden_dim"], seed=seed,
                epochs=grid["epochs"], batch_size=grid["batch_size"],
                lr=grid["lr"], clip_norm=grid["clip_norm"], policy=policy)
            ckpt, _ = train(config, fit)
            report = eval_buckets(ckpt, held, grid["threshold"],
                                  model_id=cell)
        except Exception as exc:
            raise RuntimeError(f"experiment cell {cell} failed: {exc}") from exc
        row = {"policy": policy.mode, "seed": seed,
               "loss_high": report.loss_high, "ppl_high": report.ppl_high,
               "loss_low": report.loss_low, "ppl_low": report.ppl_low,
               "n_high": report.n_high, "n_low": report.n_low}
        rows.append(row)
        if log_fn is not None:
            log_fn(row)

    def _mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    per_policy = {}
    for policy in policies:
        mine = [r for r in rows if r["policy"] == policy.mode]
        per_policy[policy.mode] = {
            "mean_ppl_high": _mean(r["ppl_high"] for r in mine),
            "mean_ppl_low": _mean(r["ppl_low"] for r in mine),
        }
    by_cell = {(r["policy"], r["seed"]): r for r in rows}
    pairs = []
    for a, b in itertools.combinations([p.mode for p in policies], 2):
        wins = sum(1 for s in seeds
                   if by_cell[(a, s)]["ppl_high"] is not None
                   and by_cell[(b, s)]["ppl_high"] is not None
                   and by_cell[(a, s)]["ppl_high"] < by_cell[(b, s)]["ppl_high"])
        pairs.append({"a": a, "b": b, "wins_a": wins, "n_seeds": len(seeds)})
    summary = {"per_policy": per_policy, "pairs": pairs}
    return ExperimentResult(grid=grid, rows=rows, summary=summary)


def load_grid(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)
