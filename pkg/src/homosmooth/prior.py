"""Label-smoothing priors: uniform, unigram, homophone, fuzzy and N-gram variants."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distribution import SmoothingDistribution
from .homophones import FuzzyRules, HomophoneIndex
from .lexicon import Lexicon, Syllable, Vocabulary, pronounce_sentence
from .ngram import BigramLM, UnigramDistribution, bigram_predict

UNIGRAM_FLOOR = 1e-8

STRATEGIES = ("non_ls", "uniform", "unigram", "homo_unigram", "homo_ngram", "homo_fuzzy")


class PriorError(ValueError):
    pass


def uniform_prior(K: int) -> SmoothingDistribution:
    if K < 1:
        raise PriorError("uniform prior needs K >= 1")
    return SmoothingDistribution(K, np.empty(0, np.int64), np.empty(0), 1.0 / K)


def unigram_prior(unigram: UnigramDistribution, floor: float = UNIGRAM_FLOOR) -> SmoothingDistribution:
    """Corpus frequencies plus ``floor`` on every class, renormalised."""
    probs = unigram.probs
    K = probs.size
    z = 1.0 + K * floor
    nz = np.flatnonzero(probs > 0)
    tail = floor / z if nz.size < K else 0.0
    return SmoothingDistribution(K, nz, (probs[nz] + floor) / z, tail)


def homophone_prior(k0: int, homo, K: int, truth_mass: float = 0.6,
                    homo_mass: float = 0.3, other_mass: float = 0.1) -> SmoothingDistribution:
    """``truth_mass`` on ``k0``, ``homo_mass`` split over ``homo``, the rest uniform."""
    homo = sorted(set(homo))
    N = len(homo)
    if N == 0:
        raise PriorError("no homophones; use dispatch")
    if k0 in homo:
        raise PriorError("k0 must not be in its own homophone set")
    if K <= N + 1:
        raise PriorError("degenerate vocabulary")
    idx = np.array([k0] + homo, dtype=np.int64)
    vals = np.empty(N + 1)
    vals[0] = truth_mass
    vals[1:] = homo_mass / N
    return SmoothingDistribution(K, idx, vals, other_mass / (K - (N + 1)))


def fuzzy_homophone_prior(k0: int, homo, simi, K: int, truth_mass: float = 0.6,
                          homo_mass: float = 0.15, simi_mass: float = 0.15,
                          other_mass: float = 0.1) -> SmoothingDistribution:
    """Homophone prior with a further share for fuzzy-pronunciation neighbours.

    When one of the two sets is empty its mass moves to the other.
    """
    homo, simi = sorted(set(homo)), sorted(set(simi))
    N, M = len(homo), len(simi)
    if N == 0 and M == 0:
        raise PriorError("no homophones or fuzzy neighbours; use dispatch")
    if k0 in homo or k0 in simi or set(homo) & set(simi):
        raise PriorError("k0, homophones and fuzzy neighbours must be disjoint")
    if K <= N + M + 1:
        raise PriorError("degenerate vocabulary")
    if N == 0:
        simi_mass, homo_mass = simi_mass + homo_mass, 0.0
    elif M == 0:
        homo_mass, simi_mass = homo_mass + simi_mass, 0.0
    idx = np.array([k0] + homo + simi, dtype=np.int64)
    vals = np.empty(N + M + 1)
    vals[0] = truth_mass
    if N:
        vals[1:N + 1] = homo_mass / N
    if M:
        vals[N + 1:] = simi_mass / M
    return SmoothingDistribution(K, idx, vals, other_mass / (K - (N + M + 1)))


@dataclass
class StrategyConfig:
    """Which prior to build, its mass split, and the resources it reads."""

    kind: str = "homo_unigram"
    truth_mass: float = 0.6
    homo_mass: float = 0.3
    other_mass: float = 0.1
    fuzzy_truth_mass: float = 0.6
    fuzzy_homo_mass: float = 0.15
    fuzzy_simi_mass: float = 0.15
    fuzzy_other_mass: float = 0.1
    fuzzy_tone_match: Optional[bool] = None
    K: Optional[int] = None
    unigram: Optional[UnigramDistribution] = None
    bigram: Optional[BigramLM] = None
    index: Optional[HomophoneIndex] = None
    rules: Optional[FuzzyRules] = None
    _unigram_prior: Optional[SmoothingDistribution] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise PriorError(f"unknown strategy {self.kind!r}; expected one of {STRATEGIES}")
        check_masses((self.truth_mass, self.homo_mass, self.other_mass))
        check_masses((self.fuzzy_truth_mass, self.fuzzy_homo_mass,
                      self.fuzzy_simi_mass, self.fuzzy_other_mass))
        needs = {
            "unigram": ("unigram",),
            "homo_unigram": ("unigram", "index"),
            "homo_ngram": ("bigram", "index"),
            "homo_fuzzy": ("unigram", "index", "rules"),
        }.get(self.kind, ())
        for name in needs:
            if getattr(self, name) is None:
                raise PriorError(f"strategy {self.kind!r} needs a {name}")
        if self.K is None:
            for res in (self.unigram, self.bigram, self.index):
                if res is not None:
                    self.K = res.K
                    break
        if self.K is None:
            raise PriorError("vocabulary size K is unknown")

    def unigram_prior(self) -> SmoothingDistribution:
        if self._unigram_prior is None:
            self._unigram_prior = unigram_prior(self.unigram)
        return self._unigram_prior


def check_masses(masses: Sequence[float]) -> None:
    for m in masses:
        if not 0.0 <= m <= 1.0:
            raise PriorError(f"mass {m} outside [0, 1]")
    if not math.isclose(sum(masses), 1.0, abs_tol=1e-12):
        raise PriorError(f"masses {tuple(masses)} do not sum to 1")


def build_prior(k0: int, syllable: Optional[Syllable], prev: int,
                config: StrategyConfig) -> SmoothingDistribution:
    """Prior for ground-truth class ``k0`` read as ``syllable`` after ``prev``.

    Homophone strategies fall back to the unigram (or bigram, for
    ``homo_ngram``) prior at positions without homophones.
    """
    kind = config.kind
    if kind in ("uniform", "non_ls"):
        return uniform_prior(config.K)
    if kind == "unigram":
        return config.unigram_prior()

    homo = config.index.homo_of(k0, syllable) if k0 in config.index.readings else frozenset()
    if kind == "homo_fuzzy":
        simi = frozenset()
        if syllable is not None and k0 in config.index.readings:
            simi = config.index.simi_of(k0, syllable, config.rules, config.fuzzy_tone_match)
        if homo or simi:
            return fuzzy_homophone_prior(
                k0, homo, simi, config.K, config.fuzzy_truth_mass, config.fuzzy_homo_mass,
                config.fuzzy_simi_mass, config.fuzzy_other_mass)
        return config.unigram_prior()
    if homo:
        return homophone_prior(k0, homo, config.K, config.truth_mass,
                               config.homo_mass, config.other_mass)
    if kind == "homo_ngram":
        return bigram_predict(config.bigram, prev)
    return config.unigram_prior()


def build_sequence_priors(sentence: str, config: StrategyConfig, vocabulary: Vocabulary,
                          lexicon: Lexicon) -> list[SmoothingDistribution]:
    """One prior per character plus one for the closing EOS position."""
    pron = pronounce_sentence(sentence, lexicon)
    priors = []
    prev = vocabulary.sos
    for ch, syl in pron:
        k0 = vocabulary.encode_char(ch)
        priors.append(build_prior(k0, syl, prev, config))
        prev = k0
    priors.append(build_prior(vocabulary.eos, None, prev, config))
    return priors


def build_label_priors(labels: Sequence[int], syllables: Sequence[Optional[Syllable]],
                       config: StrategyConfig, sos: int, eos: int) -> list[SmoothingDistribution]:
    """Index-level twin of ``build_sequence_priors`` for pre-encoded labels."""
    priors = []
    prev = sos
    for k0, syl in zip(labels, syllables):
        priors.append(build_prior(k0, syl, prev, config))
        prev = k0
    priors.append(build_prior(eos, None, prev, config))
    return priors


def export_priors(priors: Sequence[SmoothingDistribution], path,
                  k0s: Optional[Sequence[int]] = None) -> None:
    """Write one JSON object per position: ``{"k0", "K", "entries", "tail"}``."""
    with open(path, "w", encoding="utf-8") as fh:
        for pos, dist in enumerate(priors):
            k0 = None if k0s is None else int(k0s[pos])
            rec = {
                "k0": k0,
                "K": dist.K,
                "entries": [[int(i), float(v)] for i, v in zip(dist.indices, dist.values)],
                "tail": dist.tail,
            }
            fh.write(json.dumps(rec) + "\n")


def import_priors(path) -> tuple[list[SmoothingDistribution], list[Optional[int]]]:
    priors, k0s = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entries = rec["entries"]
                idx = np.array([int(e[0]) for e in entries], dtype=np.int64)
                val = np.array([float(e[1]) for e in entries])
                priors.append(SmoothingDistribution(int(rec["K"]), idx, val, float(rec["tail"])))
                k0s.append(rec.get("k0"))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                raise PriorError(f"{path}:{lineno}: malformed prior record ({exc})") from None
    return priors, k0s
