"""Seeded synthetic language whose pronunciation classes contain homophones.

Every character belongs to one pronunciation class. Its frames are the class
embedding plus Gaussian noise, so homophones cannot be told apart
acoustically. Which member of a class is written is skewed toward one
preferred member; with ``context_choice`` the preferred member depends on
the previous class, so only language context separates homophones.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..lexicon import Lexicon, Vocabulary, parse_lexicon, parse_syllable, write_lexicon

# Pool of syllables rich in z/zh, c/ch, s/sh and in/ing-style fuzzy neighbours.
_SYLLABLE_POOL = tuple(
    f"{i}{f}{t}"
    for t in (1, 4)
    for i in ("z", "zh", "c", "ch", "s", "sh", "b", "m", "l", "d")
    for f in ("an", "ang", "in", "ing", "en", "eng")
)
_FIRST_CHAR = 0x4E00


@dataclass(frozen=True)
class SyntheticLanguageConfig:
    num_classes: int = 20
    class_size_weights: tuple = (0.1, 0.2, 0.3, 0.4)
    frame_dim: int = 16
    frames_per_char: tuple = (2, 3)
    noise_sigma: float = 0.5
    transition_temperature: float = 1.0
    within_class_skew: float = 1.0
    context_choice: bool = True
    sentence_length: tuple = (4, 8)
    num_train: int = 2000
    num_heldout: int = 300
    seed: int = 7

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two pronunciation classes")
        if self.num_classes > len(_SYLLABLE_POOL):
            raise ValueError(f"at most {len(_SYLLABLE_POOL)} classes supported")
        w = np.asarray(self.class_size_weights, dtype=float)
        if w.size == 0 or w.size > 4 or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("class_size_weights must give sizes 1..4 non-negative weight")
        if w.size < 2 or w[1:].sum() == 0:
            raise ValueError("some class must have two or more members")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        if not 0.0 <= self.within_class_skew <= 1.0:
            raise ValueError("within_class_skew must lie in [0, 1]")
        lo, hi = self.frames_per_char
        if not 1 <= lo <= hi:
            raise ValueError("frames_per_char must be a range with lower bound >= 1")
        lo, hi = self.sentence_length
        if not 1 <= lo <= hi:
            raise ValueError("sentence_length must be a range with lower bound >= 1")
        if self.transition_temperature <= 0:
            raise ValueError("transition_temperature must be positive")


@dataclass
class Utterance:
    frames: np.ndarray
    labels: list


@dataclass
class ToyDataset:
    train: list
    heldout: list
    vocabulary: Vocabulary
    lexicon: Lexicon
    class_of: dict = field(default_factory=dict)

    def split(self, name: str) -> list:
        return {"train": self.train, "heldout": self.heldout}[name]


class _Language:
    def __init__(self, cfg: SyntheticLanguageConfig, rng: np.random.Generator):
        P = cfg.num_classes
        weights = np.asarray(cfg.class_size_weights, dtype=float)
        sizes = rng.choice(np.arange(1, weights.size + 1), size=P, p=weights / weights.sum())
        if sizes.max() < 2:
            sizes[int(np.argmax(weights[1:])) % P] = 2
        self.members: list[list[int]] = []
        k = 0
        for n in sizes:
            self.members.append(list(range(k, k + int(n))))
            k += int(n)
        self.num_chars = k
        pool = rng.permutation(len(_SYLLABLE_POOL))[:P]
        self.syllables = [_SYLLABLE_POOL[i] for i in pool]
        self.embeddings = rng.normal(size=(P, cfg.frame_dim))
        # Row P is the sentence-initial context.
        logits = rng.normal(size=(P + 1, P)) / cfg.transition_temperature
        trans = np.exp(logits - logits.max(axis=1, keepdims=True))
        self.transitions = trans / trans.sum(axis=1, keepdims=True)
        self.choice = np.zeros((P + 1, P, int(sizes.max())))
        for prev in range(P + 1):
            for c in range(P):
                n = len(self.members[c])
                probs = np.full(n, (1.0 - cfg.within_class_skew) / n)
                preferred = int(rng.integers(n))
                probs[preferred if cfg.context_choice else 0] += cfg.within_class_skew
                self.choice[prev, c, :n] = probs


def _sample(lang: _Language, cfg: SyntheticLanguageConfig, rng: np.random.Generator,
            count: int) -> list:
    P = cfg.num_classes
    lo_len, hi_len = cfg.sentence_length
    lo_f, hi_f = cfg.frames_per_char
    out = []
    for _ in range(count):
        U = int(rng.integers(lo_len, hi_len + 1))
        prev = P
        chars, frames = [], []
        for _ in range(U):
            c = int(rng.choice(P, p=lang.transitions[prev]))
            n = len(lang.members[c])
            j = int(rng.choice(n, p=lang.choice[prev, c, :n]))
            chars.append(lang.members[c][j])
            nf = int(rng.integers(lo_f, hi_f + 1))
            frames.append(lang.embeddings[c] + cfg.noise_sigma * rng.normal(size=(nf, cfg.frame_dim)))
            prev = c
        out.append((np.concatenate(frames, axis=0), chars))
    return out


def generate_dataset(config: SyntheticLanguageConfig) -> ToyDataset:
    rng = np.random.default_rng(config.seed)
    lang = _Language(config, rng)
    chars = [chr(_FIRST_CHAR + i) for i in range(lang.num_chars)]
    vocab = Vocabulary.from_chars(chars)
    readings = {}
    class_of = {}
    for c, members in enumerate(lang.members):
        syl = parse_syllable(lang.syllables[c])
        for m in members:
            readings[chars[m]] = (syl,)
            class_of[vocab.index_of[chars[m]]] = c
    lexicon = Lexicon(readings)

    def to_utts(raw):
        return [Utterance(f, [vocab.index_of[chars[m]] for m in labels]) for f, labels in raw]

    train = to_utts(_sample(lang, config, rng, config.num_train))
    heldout = to_utts(_sample(lang, config, rng, config.num_heldout))
    return ToyDataset(train, heldout, vocab, lexicon, class_of)


def write_utterances(utts: Sequence[Utterance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u in utts:
            fh.write(json.dumps({"frames": u.frames.tolist(), "labels": [int(x) for x in u.labels]}) + "\n")


def read_utterances(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                frames = np.asarray(rec["frames"], dtype=np.float64)
                labels = [int(x) for x in rec["labels"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed utterance ({exc})") from None
            if frames.ndim != 2 or frames.shape[0] < len(labels):
                raise ValueError(f"{path}:{lineno}: frames must be (T, d) with T >= number of labels")
            out.append(Utterance(frames, labels))
    return out


def config_to_json(cfg: SyntheticLanguageConfig) -> str:
    return json.dumps(asdict(cfg), sort_keys=True)


def save_dataset(ds: ToyDataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_utterances(ds.train, d / "train.jsonl")
    write_utterances(ds.heldout, d / "heldout.jsonl")
    ds.vocabulary.save(d / "vocab.txt")
    write_lexicon(ds.lexicon, d / "lexicon.tsv")


def load_dataset(directory) -> ToyDataset:
    d = Path(directory)
    vocab = Vocabulary.load(d / "vocab.txt")
    lexicon = parse_lexicon(d / "lexicon.tsv", vocab)
    train = read_utterances(d / "train.jsonl")
    heldout = read_utterances(d / "heldout.jsonl")
    return ToyDataset(train, heldout, vocab, lexicon)
