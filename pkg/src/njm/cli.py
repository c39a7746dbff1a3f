"""Command-line interface.

Commands: gen-corpus, build-vocab, train, caption, eval, rank,
gradcheck, experiment. Outputs are JSON lines on stdout (the experiment
command also prints a human-readable table). Exit codes: 0 success,
1 usage error, 2 data/format error, 3 numerical divergence.
"""

import argparse
import json
import sys

from . import backend, evaluate, model, trainer
from .corpus import (DEFAULT_CAPTIONS_PER_IMAGE, DEFAULT_STAR_TAIL_P, build_vocab,
                     generate_synthetic_corpus, load_corpus, load_features,
                     load_manifest, load_vocab, save_corpus, save_vocab)
from .errors import DataFormatError, DivergenceError
from .funny_score import FunnyScorePolicy


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors by default; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _emit(obj):
    print(json.dumps(obj, ensure_ascii=False))


def _cmd_gen_corpus(args):
    corpus, _ = generate_synthetic_corpus(
        seed=args.seed, n_images=args.images,
        captions_per_image=args.captions_per, dim=args.dim,
        frac_high=args.frac_high)
    save_corpus(corpus, args.out_manifest, args.out_features)
    meta = {"seed": args.seed, "images": args.images,
            "captions_per": args.captions_per, "dim": args.dim,
            "frac_high": args.frac_high, "tail_p": DEFAULT_STAR_TAIL_P}
    with open(str(args.out_manifest) + ".meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True)
    _emit({"images": args.images, "records": len(corpus.records),
           "vocab_size": corpus.vocab.size, "manifest": args.out_manifest,
           "features": args.out_features})
    return 0


def _cmd_build_vocab(args):
    rows = load_manifest(args.manifest)
    if not rows:
        raise DataFormatError("empty manifest")
    vocab = build_vocab([caption.split() for _, _, caption in rows],
                        min_freq=args.min_freq)
    save_vocab(vocab, args.out)
    _emit({"vocab_size": vocab.size, "out": args.out})
    return 0


def _cmd_train(args):
    vocab = load_vocab(args.vocab) if args.vocab else None
    corpus = load_corpus(args.manifest, args.features, vocab=vocab)
    policy = FunnyScorePolicy(mode=args.policy, threshold=args.threshold,
                              offset=args.offset, w_high=args.w_high,
                              w_low=args.w_low)
    config = trainer.TrainingConfig(feat_dim=corpus.dim, seed=args.seed,
                                    epochs=args.epochs, batch_size=args.batch,
                                    policy=policy)
    backend.warmup()
    ckpt, _ = trainer.train(config, corpus, log_fn=_emit)
    trainer.save_checkpoint(ckpt, args.out_ckpt)
    _emit({"checkpoint": args.out_ckpt, "steps": ckpt.global_step,
           "vocab_size": ckpt.vocab.size, "backend": backend.active_name()})
    return 0


def _load_image_features(path, image_id):
    features, _ = load_features(path)
    if image_id not in features:
        raise DataFormatError(f"unknown image_id: {image_id}")
    return features[image_id]


def _cmd_caption(args):
    ckpt = trainer.load_checkpoint(args.ckpt)
    feats = _load_image_features(args.features, args.image_id)
    backend.warmup()
    results = model.decode_beam(ckpt.params, feats, width=args.beam,
                                max_len=args.max_len)
    best = results[0]
    _emit({"image_id": args.image_id,
           "caption": best.text(ckpt.vocab),
           "log_prob": best.log_prob,
           "candidates": [{"caption": r.text(ckpt.vocab),
                           "log_prob": r.log_prob} for r in results]})
    return 0


def _cmd_eval(args):
    ckpt = trainer.load_checkpoint(args.ckpt)
    corpus = load_corpus(args.manifest, args.features, vocab=ckpt.vocab)
    backend.warmup()
    report = evaluate.eval_buckets(ckpt, corpus, threshold=args.threshold,
                                   model_id=args.ckpt)
    _emit(report.to_dict())
    return 0


def _cmd_rank(args):
    ckpt = trainer.load_checkpoint(args.ckpt)
    feats = _load_image_features(args.features, args.image_id)
    labels, texts = [], []
    with open(args.candidates_file, encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" in line:
                label, text = line.split("\t", 1)
            else:
                label, text = f"cand{i}", line
            labels.append(label)
            texts.append(text)
    backend.warmup()
    result = evaluate.rank_candidates(ckpt, feats, texts, labels)
    _emit(result.to_dict())
    return 0


def _cmd_gradcheck(args):
    try:
        dims = tuple(int(v) for v in args.dims.split(","))
        if len(dims) != 4 or any(v < 1 for v in dims):
            raise ValueError
    except ValueError:
        raise ValueError(f"--dims expects D,d,h,V of positive ints, got {args.dims!r}")
    backend.warmup()
    err = model.gradient_check(dims, epsilon=args.eps, n_records=2, seed=0)
    passed = bool(err < 1e-4)
    _emit({"dims": list(dims), "epsilon": args.eps,
           "max_rel_error": err, "passed": passed})
    return 0 if passed else 3


def _cmd_experiment(args):
    grid = evaluate.load_grid(args.grid)
    backend.warmup()
    result = evaluate.run_experiment(grid, log_fn=_emit)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(result.to_dict(), f, indent=2, sort_keys=True)
    print(result.format_table())
    return 0


def build_parser():
    parser = _Parser(prog="njm",
                     description="Humor-weighted LSTM caption generator")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-corpus", help="write a synthetic caption corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images", type=int, default=50)
    p.add_argument("--captions-per", type=int, default=DEFAULT_CAPTIONS_PER_IMAGE)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--frac-high", type=float, default=0.3)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--out-features", required=True)
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("build-vocab", help="build a vocabulary from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_vocab)

    p = sub.add_parser("train", help="train a captioner")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--policy", choices=("uniform", "literal", "weighted"),
                   default="uniform")
    p.add_argument("--threshold", type=int, default=100)
    p.add_argument("--offset", type=float, default=1.0)
    p.add_argument("--w-high", type=float, default=2.0)
    p.add_argument("--w-low", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--out-ckpt", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("caption", help="decode a caption for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--max-len", type=int, default=20)
    p.set_defaults(func=_cmd_caption)

    p = sub.add_parser("eval", help="bucketed perplexity over a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--threshold", type=int, default=100)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("rank", help="rank candidate captions for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--candidates-file", required=True)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--dims", default="4,4,4,8", help="D,d,h,V")
    p.add_argument("--eps", type=float, default=1e-4)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("experiment", help="run a policies x seeds grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"njm: data error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"njm: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"njm: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"njm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
