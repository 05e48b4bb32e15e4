"""Synthetic paired corpus of motions and captions, plus preprocessing.

Each motion class is a distinct parameterized trajectory family (sinusoid
mixtures over pseudo-joint channels plus root ramps). Captions are drawn
from per-class templates with synonym substitution, so several wordings
describe the same class and every motion carries multiple caption
variants. Word embeddings are synthetic but cluster by synonym group,
which is the structure the retrofit layer adapts.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, VocabularyError

log = logging.getLogger(__name__)

BOS_ID = 0
EOS_ID = 1
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"

PARTITIONS = ("train", "val", "test")

# seed-stream tags for corpus generation
_SEED_MOTIONS = 101
_SEED_CAPTIONS = 102
_SEED_SPLIT = 103
_SEED_EMBED = 104

_ARTICLES = ("a", "the")
_PERSONS = ("person", "man", "woman", "human")
_MODIFIERS = {
    # name -> (frequency scale, amplitude scale, adverb synonyms)
    "none": (1.0, 1.0, ()),
    "slow": (0.8, 0.8, ("slowly", "gently")),
    "fast": (1.25, 1.2, ("quickly", "rapidly")),
}


@dataclass(frozen=True)
class MotionClass:
    name: str
    verbs: tuple[str, str]
    complements: tuple[tuple[str, ...], ...]
    freq: float
    amp: tuple[float, float, float, float]
    phase: tuple[float, float, float, float]
    root: tuple[float, float]


_CLASSES = (
    MotionClass("walk", ("walks", "strolls"), (("forward",), ("ahead",)),
                0.60, (0.80, 0.80, 0.15, 0.10), (0.0, 3.1, 1.6, 0.0), (1.0, 0.0)),
    MotionClass("run", ("runs", "sprints"), (("forward",), ("ahead",)),
                1.70, (0.95, 0.90, 0.30, 0.20), (0.0, 3.1, 0.8, 2.4), (0.7, 0.7)),
    MotionClass("jump", ("jumps", "hops"), (("up",), ("upward",)),
                1.10, (0.20, 0.25, 1.00, 0.95), (1.6, 1.6, 0.0, 0.0), (0.0, 1.0)),
    MotionClass("wave", ("waves", "gestures"), (("both", "arms"), ("the", "hands")),
                1.40, (1.00, 0.15, 0.70, 0.10), (0.0, 0.8, 1.6, 2.4), (-0.7, 0.7)),
    MotionClass("squat", ("squats", "crouches"), (("down",), ("downward",)),
                0.45, (0.15, 0.20, 0.85, 0.80), (0.8, 0.8, 3.1, 3.1), (-1.0, 0.0)),
    MotionClass("turn", ("turns", "spins"), (("around",), ("in", "a", "circle")),
                0.80, (0.50, 0.50, 0.50, 0.50), (0.0, 1.6, 3.1, 4.7), (-0.7, -0.7)),
    MotionClass("bow", ("bows", "nods"), (("politely",), ("deeply",)),
                0.30, (0.30, 0.90, 0.10, 0.60), (0.0, 0.0, 1.6, 1.6), (0.0, -1.0)),
    MotionClass("stretch", ("stretches", "reaches"), (("the", "body"), ("both", "arms")),
                0.95, (0.70, 0.10, 0.90, 0.30), (2.4, 0.0, 0.8, 1.6), (0.7, -0.7)),
)


@dataclass(frozen=True)
class GenConfig:
    classes: int = 8
    motions_per_class: int = 64
    captions_per_motion: int = 2
    action_dim: int = 6
    raw_len_min: int = 100
    raw_len_max: int = 240
    noise: float = 0.02
    downsample_factor: int = 10
    embedding_dim: int = 16
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"need >= 2 classes, got {self.classes}")
        if self.classes > len(_CLASSES):
            raise ConfigError(f"at most {len(_CLASSES)} classes available, got {self.classes}")
        if self.captions_per_motion < 1 or self.captions_per_motion > 3:
            raise ConfigError("captions_per_motion must be 1..3")
        if self.action_dim != 6:
            raise ConfigError("the generator produces 6-channel motions")
        if self.raw_len_min < 2 * self.downsample_factor:
            raise ConfigError("raw motions too short for the downsampling factor")


@dataclass
class MotionSequence:
    frames: np.ndarray
    label: str
    raw_len: int
    modifier: str = "none"


@dataclass
class Caption:
    caption_id: str
    motion_id: str
    words: list[str]


class Vocabulary:
    """Bijection between token strings and ids; ids 0 and 1 are BOS and EOS."""

    def __init__(self, words, synonym_groups: list[list[str]] | None = None):
        self.tokens: list[str] = [BOS_TOKEN, EOS_TOKEN] + sorted(set(words))
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigError("reserved marker tokens collide with corpus words")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        self.synonym_groups = synonym_groups or []

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise VocabularyError(f"unknown token '{token}'") from None

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise VocabularyError(f"token id {token_id} out of range")
        return self.tokens[token_id]

    def encode(self, words) -> list[int]:
        """Word list -> id list wrapped with BOS and EOS."""
        return [BOS_ID] + [self.id(w) for w in words] + [EOS_ID]

    def decode(self, ids) -> list[str]:
        """Id list -> word list with BOS/EOS markers stripped."""
        return [self.token(i) for i in ids if i not in (BOS_ID, EOS_ID)]


@dataclass
class Corpus:
    motions: dict[str, MotionSequence]
    captions: dict[str, Caption]
    pairs: list[tuple[str, str]]  # (motion id, caption id)
    partition: dict[str, str]  # motion id -> train/val/test
    vocab: Vocabulary
    embeddings: np.ndarray
    norm_min: np.ndarray
    norm_max: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def action_dim(self) -> int:
        return next(iter(self.motions.values())).frames.shape[1]

    def motion_ids(self, part: str | None = None) -> list[str]:
        ids = sorted(self.motions.keys())
        if part is None:
            return ids
        return [m for m in ids if self.partition[m] == part]

    def pairs_in(self, part: str) -> list[tuple[str, str]]:
        return [(m, c) for m, c in self.pairs if self.partition[m] == part]

    def caption_ids(self, part: str | None = None) -> list[str]:
        ids = sorted(self.captions.keys())
        if part is None:
            return ids
        return [c for c in ids if self.partition[self.captions[c].motion_id] == part]

    def caption_tokens(self, caption_id: str) -> list[int]:
        return self.vocab.encode(self.captions[caption_id].words)

    def references_for_motion(self, motion_id: str) -> list[list[str]]:
        refs = [self.captions[c].words for m, c in self.pairs if m == motion_id]
        return refs

    def mean_first_frame(self, part: str = "train") -> np.ndarray:
        ids = self.motion_ids(part)
        return np.mean([self.motions[m].frames[0] for m in ids], axis=0)

    def mean_motion_len(self, part: str = "train") -> int:
        ids = self.motion_ids(part)
        return int(round(float(np.mean([self.motions[m].frames.shape[0] for m in ids]))))

    def max_caption_len(self) -> int:
        return max(len(c.words) for c in self.captions.values()) + 2


# ---------------------------------------------------------------------------
# preprocessing operations

def downsample(frames: np.ndarray, factor: int) -> np.ndarray:
    """Keep every factor-th frame starting at the first."""
    frames = np.asarray(frames, dtype=np.float64)
    if factor < 1:
        raise InputError(f"downsample factor must be >= 1, got {factor}")
    if frames.shape[0] < 2 * factor:
        raise InputError(f"{frames.shape[0]} frames cannot be downsampled by {factor}")
    out = frames[::factor]
    if out.shape[0] < 2:
        raise InputError("downsampling left fewer than 2 frames")
    return out.copy()


def normalize(frames: np.ndarray, per_dim_min: np.ndarray, per_dim_max: np.ndarray) -> np.ndarray:
    """Affine map of [min, max] to [-0.9, 0.9] per dimension, clamped outside.

    A dimension whose training min equals its max maps to constant 0.
    """
    frames = np.asarray(frames, dtype=np.float64)
    lo = np.asarray(per_dim_min, dtype=np.float64)
    hi = np.asarray(per_dim_max, dtype=np.float64)
    span = hi - lo
    degenerate = span <= 0
    if np.any(degenerate):
        log.warning("normalize: %d dimension(s) have max == min, mapping to 0",
                    int(degenerate.sum()))
    safe = np.where(degenerate, 1.0, span)
    out = (frames - lo) / safe * 1.8 - 0.9
    out = np.where(degenerate, 0.0, out)
    return np.clip(out, -0.9, 0.9)


def denormalize(frames: np.ndarray, per_dim_min: np.ndarray, per_dim_max: np.ndarray) -> np.ndarray:
    """Inverse of `normalize` for in-range values."""
    lo = np.asarray(per_dim_min, dtype=np.float64)
    hi = np.asarray(per_dim_max, dtype=np.float64)
    return (np.asarray(frames, dtype=np.float64) + 0.9) / 1.8 * (hi - lo) + lo


def partition_sizes(n: int, ratios) -> tuple[int, ...]:
    """Floor sizes for all partitions except the last, which takes the rest."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InputError(f"ratios must sum to 1, got {sum(ratios)}")
    sizes = [int(math.floor(n * r)) for r in ratios[:-1]]
    sizes.append(n - sum(sizes))
    return tuple(sizes)


def split_motion_ids(motion_ids: list[str], ratios, seed: int) -> dict[str, str]:
    """Deterministic shuffled partition of motion ids into train/val/test."""
    sizes = partition_sizes(len(motion_ids), ratios)
    if any(s <= 0 for s in sizes):
        raise ConfigError(f"a partition would be empty: sizes {sizes}")
    rng = np.random.default_rng([seed, _SEED_SPLIT])
    order = [motion_ids[i] for i in rng.permutation(len(motion_ids))]
    out: dict[str, str] = {}
    start = 0
    for part, size in zip(PARTITIONS, sizes):
        for mid in order[start:start + size]:
            out[mid] = part
        start += size
    return out


def split(corpus: Corpus, ratios, seed: int) -> Corpus:
    """Corpus with a fresh partition assignment; captions follow motions."""
    new_partition = split_motion_ids(sorted(corpus.motions.keys()), ratios, seed)
    return Corpus(corpus.motions, corpus.captions, corpus.pairs, new_partition,
                  corpus.vocab, corpus.embeddings, corpus.norm_min, corpus.norm_max,
                  dict(corpus.meta))


def build_embeddings(vocab: Vocabulary, dim: int, seed: int) -> np.ndarray:
    """Synthetic clustered word embeddings.

    Words in the same synonym group share a base direction plus small
    per-word noise (at most a tenth of the base norm), so synonyms stay
    nearest neighbors. BOS and EOS get fixed orthogonal unit vectors.
    """
    if dim < 2:
        raise InputError(f"embedding dim must be >= 2, got {dim}")
    rng = np.random.default_rng([seed, _SEED_EMBED])
    group_of = {}
    for gi, group in enumerate(vocab.synonym_groups):
        for w in group:
            group_of[w] = gi
    next_group = len(vocab.synonym_groups)
    for tok in vocab.tokens[2:]:
        if tok not in group_of:
            group_of[tok] = next_group
            next_group += 1

    # base directions resampled until pairwise cosine stays below 0.8,
    # which keeps every cross-group cosine under the synonym floor
    bases = []
    for _ in range(next_group):
        for _ in range(1000):
            v = rng.normal(size=dim)
            v /= np.linalg.norm(v)
            if all(abs(float(v @ u)) < 0.8 for u in bases):
                bases.append(v)
                break
        else:
            raise ConfigError(f"cannot place {next_group} separated groups in {dim} dims")

    table = np.zeros((vocab.size, dim))
    table[BOS_ID, 0] = 1.0
    table[EOS_ID, 1] = 1.0
    for tok in vocab.tokens[2:]:
        base = bases[group_of[tok]] * rng.uniform(0.8, 1.6)
        noise = rng.normal(size=dim)
        noise *= rng.uniform(0.0, 0.1) * np.linalg.norm(base) / np.linalg.norm(noise)
        table[vocab.id(tok)] = base + noise
    return table


# ---------------------------------------------------------------------------
# generation

def _trajectory(cls: MotionClass, raw_len: int, amp_scale: float, freq_scale: float,
                phase_jitter: float, noise: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(raw_len)
    tau = t / (raw_len - 1)
    # the cycle count is defined over the whole motion, so class waveforms
    # are length-invariant up to time stretching
    angle = 2.0 * math.pi * (2.0 * cls.freq * freq_scale) * tau
    # motions start from rest: a short onset envelope takes the joint
    # channels from the neutral pose into the periodic pattern
    envelope = np.minimum(1.0, t / 30.0)
    channels = [amp_scale * a * np.sin(angle + p + phase_jitter) * envelope
                for a, p in zip(cls.amp, cls.phase)]
    channels.append(cls.root[0] * tau)
    channels.append(cls.root[1] * tau)
    frames = np.stack(channels, axis=1)
    if noise > 0:
        frames = frames + rng.normal(0.0, noise, size=frames.shape)
    return frames


def _caption_words(cls: MotionClass, modifier: str, rng: np.random.Generator) -> list[str]:
    words = [
        _ARTICLES[rng.integers(len(_ARTICLES))],
        _PERSONS[rng.integers(len(_PERSONS))],
        cls.verbs[rng.integers(len(cls.verbs))],
    ]
    words.extend(cls.complements[rng.integers(len(cls.complements))])
    adverbs = _MODIFIERS[modifier][2]
    if adverbs:
        words.append(adverbs[rng.integers(len(adverbs))])
    return words


def _vocabulary_for(classes) -> Vocabulary:
    groups: list[list[str]] = [list(_PERSONS)]
    words: set[str] = set(_ARTICLES) | set(_PERSONS)
    for cls in classes:
        groups.append(list(cls.verbs))
        words.update(cls.verbs)
        for comp in cls.complements:
            words.update(comp)
    comp_groups = [["forward", "ahead"], ["up", "upward"], ["down", "downward"],
                   ["arms", "hands"]]
    for g in comp_groups:
        if all(w in words for w in g):
            groups.append(g)
    for adverbs in (m[2] for m in _MODIFIERS.values()):
        if adverbs:
            groups.append(list(adverbs))
            words.update(adverbs)
    return Vocabulary(sorted(words), synonym_groups=groups)


def generate_corpus(gen_config: GenConfig, seed: int) -> Corpus:
    """Generate, downsample, split, and normalize a synthetic paired corpus."""
    cfg = gen_config
    classes = _CLASSES[:cfg.classes]
    rng_m = np.random.default_rng([seed, _SEED_MOTIONS])
    rng_c = np.random.default_rng([seed, _SEED_CAPTIONS])

    motions: dict[str, MotionSequence] = {}
    modifier_names = list(_MODIFIERS.keys())
    for ci, cls in enumerate(classes):
        for k in range(cfg.motions_per_class):
            mid = f"m{ci * cfg.motions_per_class + k:05d}"
            raw_len = int(rng_m.integers(cfg.raw_len_min, cfg.raw_len_max + 1))
            modifier = modifier_names[rng_m.integers(len(modifier_names))]
            freq_scale, amp_scale = _MODIFIERS[modifier][:2]
            amp_scale = amp_scale * rng_m.uniform(0.9, 1.1)
            phase_jitter = rng_m.uniform(0.0, 0.3)
            raw = _trajectory(cls, raw_len, amp_scale, freq_scale, phase_jitter,
                              cfg.noise, rng_m)
            frames = downsample(raw, cfg.downsample_factor)
            motions[mid] = MotionSequence(frames, cls.name, raw_len, modifier)

    partition = split_motion_ids(sorted(motions.keys()), cfg.ratios, seed)

    train_frames = np.concatenate(
        [motions[m].frames for m in sorted(motions) if partition[m] == "train"])
    norm_min = train_frames.min(axis=0)
    norm_max = train_frames.max(axis=0)
    for seq in motions.values():
        seq.frames = normalize(seq.frames, norm_min, norm_max)

    vocab = _vocabulary_for(classes)
    captions: dict[str, Caption] = {}
    pairs: list[tuple[str, str]] = []
    counter = 0
    for ci, cls in enumerate(classes):
        for k in range(cfg.motions_per_class):
            mid = f"m{ci * cfg.motions_per_class + k:05d}"
            for _ in range(cfg.captions_per_motion):
                cid = f"c{counter:05d}"
                counter += 1
                captions[cid] = Caption(cid, mid, _caption_words(
                    cls, motions[mid].modifier, rng_c))
                pairs.append((mid, cid))

    embeddings = build_embeddings(vocab, cfg.embedding_dim, seed)
    meta = {
        "classes": cfg.classes, "motions_per_class": cfg.motions_per_class,
        "captions_per_motion": cfg.captions_per_motion, "action_dim": cfg.action_dim,
        "raw_len_min": cfg.raw_len_min, "raw_len_max": cfg.raw_len_max,
        "noise": cfg.noise, "downsample_factor": cfg.downsample_factor,
        "embedding_dim": cfg.embedding_dim, "seed": seed,
    }
    return Corpus(motions, captions, pairs, partition, vocab, embeddings,
                  norm_min, norm_max, meta)


# ---------------------------------------------------------------------------
# corpus directory I/O

def _fmt(x: float) -> str:
    return repr(float(x))


def save_corpus(corpus: Corpus, root) -> None:
    """Write the corpus directory layout (UTF-8, LF line endings)."""
    from pathlib import Path
    root = Path(root)
    (root / "motions").mkdir(parents=True, exist_ok=True)
    for mid in sorted(corpus.motions):
        seq = corpus.motions[mid]
        lines = [",".join(_fmt(v) for v in frame) for frame in seq.frames]
        (root / "motions" / f"{mid}.csv").write_text("\n".join(lines) + "\n", newline="\n")
    cap_lines = [f"{cid}\t{corpus.captions[cid].motion_id}\t{' '.join(corpus.captions[cid].words)}"
                 for cid in sorted(corpus.captions)]
    (root / "captions.tsv").write_text("\n".join(cap_lines) + "\n", newline="\n")
    (root / "vocab.txt").write_text("\n".join(corpus.vocab.tokens) + "\n", newline="\n")
    emb_lines = [",".join(_fmt(v) for v in row) for row in corpus.embeddings]
    (root / "embeddings.csv").write_text("\n".join(emb_lines) + "\n", newline="\n")
    pair_lines = [f"{m}\t{c}" for m, c in corpus.pairs]
    (root / "pairs.tsv").write_text("\n".join(pair_lines) + "\n", newline="\n")
    split_lines = [
        f"{mid}\t{corpus.partition[mid]}\t{corpus.motions[mid].label}"
        f"\t{corpus.motions[mid].raw_len}\t{corpus.motions[mid].modifier}"
        for mid in sorted(corpus.motions)]
    (root / "split.tsv").write_text("\n".join(split_lines) + "\n", newline="\n")
    meta_lines = [f"{k}={v}" for k, v in corpus.meta.items()]
    meta_lines.append("norm_min=" + ",".join(_fmt(v) for v in corpus.norm_min))
    meta_lines.append("norm_max=" + ",".join(_fmt(v) for v in corpus.norm_max))
    groups = ";".join(" ".join(g) for g in corpus.vocab.synonym_groups)
    meta_lines.append(f"synonym_groups={groups}")
    (root / "meta").write_text("\n".join(meta_lines) + "\n", newline="\n")


def load_corpus(root) -> Corpus:
    """Read a corpus directory written by save_corpus."""
    from pathlib import Path
    root = Path(root)
    if not (root / "meta").is_file():
        raise InputError(f"no corpus at {root}")
    meta: dict = {}
    for line in (root / "meta").read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, value = line.split("=", 1)
        meta[key] = value
    norm_min = np.array([float(v) for v in meta.pop("norm_min").split(",")])
    norm_max = np.array([float(v) for v in meta.pop("norm_max").split(",")])
    groups = [g.split(" ") for g in meta.pop("synonym_groups").split(";") if g]
    for key in ("classes", "motions_per_class", "captions_per_motion", "action_dim",
                "raw_len_min", "raw_len_max", "downsample_factor", "embedding_dim", "seed"):
        if key in meta:
            meta[key] = int(meta[key])
    if "noise" in meta:
        meta["noise"] = float(meta["noise"])

    tokens = (root / "vocab.txt").read_text().splitlines()
    if tokens[:2] != [BOS_TOKEN, EOS_TOKEN]:
        raise InputError("vocab.txt must begin with the BOS and EOS markers")
    vocab = Vocabulary(tokens[2:], synonym_groups=groups)
    embeddings = np.array([[float(v) for v in line.split(",")]
                           for line in (root / "embeddings.csv").read_text().splitlines()])

    partition: dict[str, str] = {}
    labels: dict[str, tuple[str, int, str]] = {}
    for line in (root / "split.tsv").read_text().splitlines():
        mid, part, label, raw_len, modifier = line.split("\t")
        partition[mid] = part
        labels[mid] = (label, int(raw_len), modifier)

    motions: dict[str, MotionSequence] = {}
    for mid, (label, raw_len, modifier) in labels.items():
        text = (root / "motions" / f"{mid}.csv").read_text()
        frames = np.array([[float(v) for v in line.split(",")]
                           for line in text.splitlines()])
        motions[mid] = MotionSequence(frames, label, raw_len, modifier)

    captions: dict[str, Caption] = {}
    for line in (root / "captions.tsv").read_text().splitlines():
        cid, mid, words = line.split("\t")
        captions[cid] = Caption(cid, mid, words.split(" "))
    pairs = [tuple(line.split("\t"))
             for line in (root / "pairs.tsv").read_text().splitlines()]
    return Corpus(motions, captions, pairs, partition, vocab, embeddings,
                  norm_min, norm_max, meta)
