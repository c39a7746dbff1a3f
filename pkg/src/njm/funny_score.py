"""Star-thresholded loss policies and batch objective assembly.

Three modes over a per-caption loss L and its star count:

  uniform   L unchanged; batch objective is the plain mean.
  literal   L - offset when stars >= threshold, else L; plain mean of the
            transformed values. The offset is an additive constant per
            example, so parameter gradients are identical to uniform --
            by construction the two modes share one gradient-weight path.
  weighted  normalized weighted mean sum(w_i L_i) / sum(w_i) with
            w_i = w_high when stars >= threshold else w_low. This is the
            mode that actually changes training.

Stars exactly at the threshold count as high.
"""

from dataclasses import dataclass

import numpy as np

MODES = ("uniform", "literal", "weighted")


@dataclass(frozen=True)
class FunnyScorePolicy:
    mode: str = "uniform"
    threshold: int = 100
    offset: float = 1.0
    w_high: float = 2.0
    w_low: float = 1.0

    def __post_init__(self):
        mode = self.mode
        if mode == "literal_offset":      # accepted alias
            object.__setattr__(self, "mode", "literal")
            mode = "literal"
        if mode not in MODES:
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")
        if self.w_high <= 0 or self.w_low <= 0:
            raise ValueError("weights must be positive")

    def is_high(self, stars):
        return stars >= self.threshold

    def to_dict(self):
        return {"mode": self.mode, "threshold": self.threshold,
                "offset": self.offset, "w_high": self.w_high,
                "w_low": self.w_low}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class BatchLossReport:
    per_example_losses: np.ndarray
    stars: np.ndarray
    batch_loss: float
    n_high: int
    n_low: int


def example_transform(loss, stars, policy):
    """Transformed loss for a single example under the policy."""
    if policy.mode == "uniform":
        return loss
    if policy.mode == "literal":
        return loss - policy.offset if policy.is_high(stars) else loss
    w = policy.w_high if policy.is_high(stars) else policy.w_low
    return w * loss


def gradient_weights(stars, policy):
    """Per-example weights of the batch objective's gradient.

    uniform and literal share the exact same computation (1/n each), so
    their gradients are bitwise identical; weighted returns w_i/sum(w),
    reducing to 1/n when w_high == w_low.
    """
    n = len(stars)
    if n == 0:
        raise ValueError("empty batch")
    if policy.mode == "weighted" and policy.w_high != policy.w_low:
        w = np.where(np.asarray(stars) >= policy.threshold,
                     policy.w_high, policy.w_low).astype(np.float64)
        return w / w.sum()
    return np.full(n, 1.0 / n)


def batch_loss(losses, stars, policy):
    """Assemble per-example losses into the training objective.

    Returns (batch_loss, BatchLossReport). uniform/literal take the
    arithmetic mean of the transformed losses; weighted takes the
    normalized weighted mean (equal weights reduce to the plain mean).
    """
    losses = np.asarray(losses, dtype=np.float64)
    stars = np.asarray(stars)
    if losses.shape != stars.shape or losses.ndim != 1:
        raise ValueError("losses and stars must be equal-length 1-d")
    n = losses.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    high = stars >= policy.threshold
    n_high = int(high.sum())
    if policy.mode == "weighted" and policy.w_high != policy.w_low:
        w = np.where(high, policy.w_high, policy.w_low)
        value = float((w * losses).sum() / w.sum())
    elif policy.mode == "literal":
        value = float(np.mean(losses - policy.offset * high))
    else:
        value = float(np.mean(losses))
    return value, BatchLossReport(per_example_losses=losses, stars=stars,
                                  batch_loss=value, n_high=n_high,
                                  n_low=n - n_high)


@dataclass
class BucketStats:
    threshold: int
    n_high: int
    n_low: int
    mean_stars_high: float | None
    mean_stars_low: float | None


def bucket_stats(corpus, threshold):
    """Partition counts and mean stars for the two star buckets."""
    if len(corpus.records) == 0:
        raise ValueError("empty corpus")
    high = [r.stars for r in corpus.records if r.stars >= threshold]
    low = [r.stars for r in corpus.records if r.stars < threshold]
    return BucketStats(
        threshold=threshold,
        n_high=len(high),
        n_low=len(low),
        mean_stars_high=float(np.mean(high)) if high else None,
        mean_stars_low=float(np.mean(low)) if low else None,
    )
