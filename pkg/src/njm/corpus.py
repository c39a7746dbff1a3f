"""Corpus data model, tokenization, file formats, synthetic generation.

On disk a corpus is two files plus a sidecar:

  manifest       UTF-8 JSON lines, one caption per line:
                 {"image_id": str, "stars": int, "caption": str}
  features       binary: magic "BKDB", version u32=1, count u32, dim u32,
                 then count*dim little-endian float32, row-major
  features.idx   sidecar text file, one image_id per line, row order

In memory captions are token-id sequences wrapped BOS...EOS. Feature
values are float64 but quantized to float32 at generation time so the
save/load roundtrip is bit-exact.
"""

import json
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

FEATURE_MAGIC = b"BKDB"
FEATURE_VERSION = 1

# Planted word inventories for the synthetic generator. Records in the
# high-star bucket draw from HIGH_WORDS, the rest from LOW_WORDS; both
# mix in SHARED_WORDS. Zipf-ish weights, see _word_table.
HIGH_WORDS = [
    "boke", "tsukkomi", "warota", "kusa", "jiwaru", "bakusho", "neta",
    "gag", "zukkoke", "manzai", "ochi", "dotabata", "niyari", "kusukusu",
    "yabai", "haha", "fufu", "gera", "pun", "oogiri",
]
LOW_WORDS = [
    "photo", "image", "scene", "object", "person", "room", "day", "still",
    "view", "plain", "thing", "place", "normal", "usual", "quiet",
    "simple", "gray", "flat", "calm", "static",
]
SHARED_WORDS = ["a", "no", "to", "wa", "desu"]

MIN_CAPTION_WORDS = 4
MAX_CAPTION_WORDS = 9
DEFAULT_CAPTIONS_PER_IMAGE = 14
DEFAULT_STAR_TAIL_P = 0.02


@dataclass
class Vocabulary:
    """Dense bidirectional token<->id mapping with four reserved ids."""

    token_to_id: dict
    id_to_token: list

    @property
    def size(self):
        return len(self.id_to_token)

    @classmethod
    def from_tokens(cls, tokens):
        """Build from the non-special token list in id order."""
        id_to_token = list(SPECIAL_TOKENS) + list(tokens)
        token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        if len(token_to_id) != len(id_to_token):
            raise DataFormatError("duplicate token in vocabulary")
        return cls(token_to_id=token_to_id, id_to_token=id_to_token)


@dataclass
class CorpusRecord:
    image_id: str
    caption: list       # token ids, BOS-prefixed, EOS-terminated
    stars: int

    def validate(self, vocab_size):
        if len(self.caption) < 2:
            raise DataFormatError(f"caption too short for {self.image_id}")
        if self.caption[0] != BOS or self.caption[-1] != EOS:
            raise DataFormatError(f"caption not BOS...EOS for {self.image_id}")
        if any(t == PAD for t in self.caption):
            raise DataFormatError(f"PAD inside caption for {self.image_id}")
        if any(not (0 <= t < vocab_size) for t in self.caption):
            raise DataFormatError(f"token id out of range for {self.image_id}")
        if self.stars < 0:
            raise DataFormatError(f"negative stars for {self.image_id}")


@dataclass
class Corpus:
    """Caption records plus the image-feature table they key into."""

    records: list
    features: dict      # image_id -> float64 vector of length dim
    dim: int
    vocab: Vocabulary

    def __len__(self):
        return len(self.records)

    def validate(self):
        for image_id, vec in self.features.items():
            if vec.shape != (self.dim,):
                raise DataFormatError(f"feature dim mismatch for {image_id}")
        for rec in self.records:
            if rec.image_id not in self.features:
                raise DataFormatError(f"dangling image_id: {rec.image_id}")
            rec.validate(self.vocab.size)

    def subset(self, keep):
        """New corpus with the records for which keep(record) is true."""
        records = [r for r in self.records if keep(r)]
        used = {r.image_id for r in records}
        features = {k: v for k, v in self.features.items() if k in used}
        return Corpus(records=records, features=features, dim=self.dim,
                      vocab=self.vocab)


def build_vocab(raw_captions, min_freq=1):
    """Vocabulary over all tokens with frequency >= min_freq.

    Ids are assigned in descending frequency, ties broken lexicographically,
    after the four reserved ids.
    """
    if not raw_captions:
        raise ValueError("empty corpus")
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter()
    for tokens in raw_captions:
        counts.update(tokens)
    # special surface forms never get regular ids; tokenize maps them to UNK
    kept = sorted((tok for tok, c in counts.items()
                   if c >= min_freq and tok not in SPECIAL_TOKENS),
                  key=lambda tok: (-counts[tok], tok))
    return Vocabulary.from_tokens(kept)


def tokenize(text, vocab):
    """Whitespace-split text to ids, unknown -> UNK, wrapped BOS...EOS.

    Special surface forms occurring inside the text map to UNK so the
    BOS/EOS framing stays unambiguous.
    """
    ids = [BOS]
    for tok in text.split():
        tid = vocab.token_to_id.get(tok, UNK)
        if tid < len(SPECIAL_TOKENS) and tid != UNK:
            tid = UNK
        ids.append(tid)
    ids.append(EOS)
    return ids


def detokenize(ids, vocab):
    """Strip BOS/EOS/PAD and join the remaining surface tokens."""
    words = []
    for tid in ids:
        if tid >= vocab.size or tid < 0:
            raise ValueError(f"unknown id: {tid}")
        if tid in (PAD, BOS, EOS):
            continue
        words.append(vocab.id_to_token[tid])
    return " ".join(words)


def _word_table():
    high = HIGH_WORDS + SHARED_WORDS
    low = LOW_WORDS + SHARED_WORDS
    def zipf(words):
        w = np.array([1.0 / (k + 1) for k in range(len(words))])
        return w / w.sum()
    return (np.array(high), zipf(high)), (np.array(low), zipf(low))


def generate_synthetic_corpus(seed, n_images, captions_per_image=DEFAULT_CAPTIONS_PER_IMAGE,
                              dim=16, frac_high=0.3, tail_p=DEFAULT_STAR_TAIL_P):
    """Seeded synthetic corpus with planted bimodal caption distributions.

    Every image gets exactly captions_per_image captions. Each record is
    independently high-star with probability frac_high; high records get
    stars = 100 + geometric tail noise and captions from the HIGH word
    distribution, low records get stars uniform in [0, 99] and captions
    from the LOW distribution. Features are standard normal, quantized
    to float32 precision. Returns (corpus, raw_texts).
    """
    if n_images < 1 or captions_per_image < 1 or dim < 1:
        raise ValueError("counts must be >= 1")
    if not (0.0 <= frac_high <= 1.0):
        raise ValueError("frac_high must be in [0, 1]")
    rng = np.random.default_rng(seed)
    (high_words, high_p), (low_words, low_p) = _word_table()

    features = {}
    image_ids = []
    for i in range(n_images):
        image_id = f"img{i:05d}"
        image_ids.append(image_id)
        vec = rng.standard_normal(dim).astype(np.float32).astype(np.float64)
        features[image_id] = vec

    texts = []
    meta = []          # (image_id, stars) per record
    for image_id in image_ids:
        for _ in range(captions_per_image):
            is_high = rng.random() < frac_high
            if is_high:
                stars = 100 + int(rng.geometric(tail_p)) - 1
                words, probs = high_words, high_p
            else:
                stars = int(rng.integers(0, 100))
                words, probs = low_words, low_p
            length = int(rng.integers(MIN_CAPTION_WORDS, MAX_CAPTION_WORDS + 1))
            text = " ".join(rng.choice(words, size=length, p=probs))
            texts.append(text)
            meta.append((image_id, stars))

    vocab = build_vocab([t.split() for t in texts], min_freq=1)
    records = [CorpusRecord(image_id=imid, caption=tokenize(text, vocab), stars=stars)
               for (imid, stars), text in zip(meta, texts)]
    corpus = Corpus(records=records, features=features, dim=dim, vocab=vocab)
    corpus.validate()
    return corpus, texts


def save_corpus(corpus, manifest_path, features_path):
    """Write manifest JSON lines plus the binary feature file and sidecar."""
    with open(manifest_path, "w", encoding="utf-8") as f:
        for rec in corpus.records:
            line = json.dumps(
                {"image_id": rec.image_id, "stars": rec.stars,
                 "caption": detokenize(rec.caption, corpus.vocab)},
                ensure_ascii=False)
            f.write(line + "\n")
    image_ids = list(corpus.features)
    with open(features_path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<III", FEATURE_VERSION, len(image_ids), corpus.dim))
        for image_id in image_ids:
            f.write(corpus.features[image_id].astype("<f4").tobytes())
    with open(str(features_path) + ".idx", "w", encoding="utf-8") as f:
        for image_id in image_ids:
            f.write(image_id + "\n")


def load_features(features_path):
    """Read the binary feature table; returns (features dict, dim)."""
    with open(features_path, "rb") as f:
        blob = f.read()
    if blob[:4] != FEATURE_MAGIC:
        raise DataFormatError("bad feature magic")
    if len(blob) < 16:
        raise DataFormatError("truncated feature header")
    version, count, dim = struct.unpack("<III", blob[4:16])
    if version != FEATURE_VERSION:
        raise DataFormatError(f"unsupported feature version {version}")
    data = np.frombuffer(blob[16:], dtype="<f4")
    if data.size != count * dim:
        raise DataFormatError("feature count mismatch")
    with open(str(features_path) + ".idx", encoding="utf-8") as f:
        image_ids = [line.rstrip("\n") for line in f if line.strip()]
    if len(image_ids) != count:
        raise DataFormatError("feature index mismatch")
    if len(set(image_ids)) != count:
        raise DataFormatError("duplicate image_id in feature index")
    rows = data.astype(np.float64).reshape(count, dim)
    return {image_id: rows[i] for i, image_id in enumerate(image_ids)}, dim


def load_manifest(manifest_path):
    """Read manifest lines; returns list of (image_id, stars, caption text)."""
    out = []
    with open(manifest_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                image_id = obj["image_id"]
                stars = int(obj["stars"])
                caption = obj["caption"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(
                    f"bad manifest record at line {lineno}: {exc}") from exc
            out.append((image_id, stars, caption))
    return out


def load_corpus(manifest_path, features_path, vocab=None):
    """Load manifest + features into a Corpus.

    When vocab is None it is rebuilt from the manifest captions at
    min_freq=1, which reproduces generated corpora exactly.
    """
    features, dim = load_features(features_path)
    rows = load_manifest(manifest_path)
    if not rows:
        raise DataFormatError("empty manifest")
    if vocab is None:
        vocab = build_vocab([caption.split() for _, _, caption in rows], min_freq=1)
    records = []
    for image_id, stars, caption in rows:
        if image_id not in features:
            raise DataFormatError(f"dangling image_id: {image_id}")
        records.append(CorpusRecord(image_id=image_id, stars=stars,
                                    caption=tokenize(caption, vocab)))
    corpus = Corpus(records=records, features=features, dim=dim, vocab=vocab)
    corpus.validate()
    return corpus


def save_vocab(vocab, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"version": 1, "tokens": vocab.id_to_token[len(SPECIAL_TOKENS):]},
                  f, ensure_ascii=False)


def load_vocab(path):
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
        tokens = obj["tokens"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataFormatError(f"bad vocab file: {exc}") from exc
    return Vocabulary.from_tokens(tokens)
