"""Humor-weighted image caption generator.

A small, self-contained training and inference stack: a synthetic
star-rated caption corpus, a feature-conditioned LSTM captioner with
hand-written backpropagation, star-thresholded loss policies, a
deterministic Adam training loop with binary checkpoints, beam-search
decoding, and bucketed perplexity evaluation. Numeric kernels run on
numba when available, pure numpy otherwise (NJM_BACKEND selects).
"""

__version__ = "0.1.0"

from .corpus import (Corpus, CorpusRecord, Vocabulary, build_vocab,
                     generate_synthetic_corpus, load_corpus, tokenize)
from .errors import DataFormatError, DivergenceError
from .evaluate import EvalReport, eval_buckets, rank_candidates, run_experiment, split_by_image
from .funny_score import FunnyScorePolicy, batch_loss, bucket_stats, example_transform
from .model import (caption_score, decode_beam, decode_greedy, forward,
                    init_params, make_batch)
from .trainer import Checkpoint, TrainingConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "Corpus", "CorpusRecord", "Vocabulary", "build_vocab",
    "generate_synthetic_corpus", "load_corpus", "tokenize",
    "DataFormatError", "DivergenceError",
    "EvalReport", "eval_buckets", "rank_candidates", "run_experiment",
    "split_by_image",
    "FunnyScorePolicy", "batch_loss", "bucket_stats", "example_transform",
    "caption_score", "decode_beam", "decode_greedy", "forward",
    "init_params", "make_batch",
    "Checkpoint", "TrainingConfig", "load_checkpoint", "save_checkpoint",
    "train",
]
