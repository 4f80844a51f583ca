"""Unigram statistics and a bigram language model with ARPA import/export."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .distribution import SmoothingDistribution
from .lexicon import Vocabulary

ARPA_ZERO = -99.0


class ArpaError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class UnigramDistribution:
    probs: np.ndarray
    counts: np.ndarray

    @property
    def K(self) -> int:
        return self.probs.size


def count_unigrams(corpus: Iterable[str], vocabulary: Vocabulary) -> UnigramDistribution:
    """Character frequencies over the vocabulary; unknown characters count as UNK."""
    counts = np.zeros(vocabulary.K, dtype=np.int64)
    for line in corpus:
        ids = vocabulary.encode(line)
        if ids:
            np.add.at(counts, ids, 1)
    total = counts.sum()
    if total == 0:
        raise ValueError("corpus contains no characters")
    return UnigramDistribution(counts / total, counts)


@dataclass(frozen=True)
class BigramSmoothing:
    kind: str = "add_k"
    k: float = 0.01
    lam: float = 0.9

    def __post_init__(self):
        if self.kind not in ("add_k", "interpolated"):
            raise ValueError(f"unknown smoothing kind {self.kind!r}")
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise ValueError(f"add-k constant must be >= 0, got {self.k}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"interpolation weight must lie in [0, 1], got {self.lam}")


@dataclass(frozen=True, eq=False)
class BigramLM:
    """Backoff bigram model over ``K`` tokens.

    For a context ``i`` listed in ``rows``, ``p(j|i)`` is the explicit value if
    ``j`` is listed, else ``alpha[i] * base[j]``. Contexts never seen use the
    dense ``unseen`` distribution.
    """

    K: int
    rows: Mapping[int, tuple[np.ndarray, np.ndarray]]
    alpha: Mapping[int, float]
    base: np.ndarray
    unseen: np.ndarray
    base_uniform: bool = False
    counts: Mapping[int, Mapping[int, int]] = field(default_factory=dict, repr=False)

    def conditional(self, prev: int) -> np.ndarray:
        return bigram_predict(self, prev).dense()


def add_k_conditional(row_counts: np.ndarray, k: float) -> np.ndarray:
    """``(c(i,j) + k) / (c(i,.) + k*K)`` for one context row."""
    row_counts = np.asarray(row_counts, dtype=np.float64)
    return (row_counts + k) / (row_counts.sum() + k * row_counts.size)


def _sentence_ids(line: str, vocabulary: Vocabulary) -> list[int]:
    return [vocabulary.sos] + vocabulary.encode(line) + [vocabulary.eos]


def train_bigram(corpus: Sequence[str], vocabulary: Vocabulary,
                 smoothing: BigramSmoothing = BigramSmoothing()) -> BigramLM:
    K = vocabulary.K
    counts: dict[int, dict[int, int]] = {}
    successor = np.zeros(K, dtype=np.int64)
    for line in corpus:
        ids = _sentence_ids(line, vocabulary)
        for a, b in zip(ids, ids[1:]):
            row = counts.setdefault(a, {})
            row[b] = row.get(b, 0) + 1
            successor[b] += 1
    if successor.sum() == 0:
        raise ValueError("corpus contains no bigrams")
    unigram = successor / successor.sum()

    rows, alpha = {}, {}
    if smoothing.kind == "add_k":
        k = smoothing.k
        base = np.full(K, 1.0 / K)
        for i, row in counts.items():
            idx = np.array(sorted(row), dtype=np.int64)
            c = np.array([row[j] for j in idx], dtype=np.float64)
            denom = c.sum() + k * K
            rows[i] = (idx, (c + k) / denom)
            alpha[i] = k * K / denom
        unseen = base.copy() if k > 0 else unigram.copy()
        return BigramLM(K, rows, alpha, base, unseen, True, counts)

    lam = smoothing.lam
    for i, row in counts.items():
        idx = np.array(sorted(row), dtype=np.int64)
        c = np.array([row[j] for j in idx], dtype=np.float64)
        rows[i] = (idx, lam * c / c.sum() + (1.0 - lam) * unigram[idx])
        alpha[i] = 1.0 - lam
    return BigramLM(K, rows, alpha, unigram, unigram.copy(), False, counts)


def bigram_predict(lm: BigramLM, prev: int) -> SmoothingDistribution:
    if not 0 <= prev < lm.K:
        raise IndexError(f"context index {prev} out of range [0, {lm.K})")
    row = lm.rows.get(prev)
    if row is None:
        return SmoothingDistribution.from_dense(lm.unseen)
    idx, vals = row
    a = lm.alpha[prev]
    if lm.base_uniform and idx.size < lm.K:
        return SmoothingDistribution(lm.K, idx, vals, a / lm.K)
    out = a * lm.base
    out[idx] = vals
    return SmoothingDistribution.from_dense(out)


def _token_name(vocabulary: Vocabulary, i: int) -> str:
    return vocabulary.chars[i]


def _log10(p: float) -> float:
    return math.log10(p) if p > 0 else ARPA_ZERO


def export_arpa(lm: BigramLM, vocabulary: Vocabulary, path) -> None:
    """Write ``lm`` as a two-order ARPA file.

    The unigram section holds the backoff base distribution, so reading the
    file back reproduces every conditional.
    """
    if lm.K != vocabulary.K:
        raise ValueError("vocabulary size does not match model")
    bigrams: list[tuple[int, int, float]] = []
    backoff: dict[int, float] = {}
    for i in range(lm.K):
        if i in lm.rows:
            idx, vals = lm.rows[i]
            bigrams.extend((i, int(j), float(p)) for j, p in zip(idx, vals))
            backoff[i] = lm.alpha[i]
        elif not np.array_equal(lm.unseen, lm.base):
            bigrams.extend((i, j, float(p)) for j, p in enumerate(lm.unseen) if p > 0)
            backoff[i] = 0.0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n\\data\\\n")
        fh.write(f"ngram 1={lm.K}\n")
        fh.write(f"ngram 2={len(bigrams)}\n\n")
        fh.write("\\1-grams:\n")
        for j in range(lm.K):
            line = f"{_log10(lm.base[j]):.12g}\t{_token_name(vocabulary, j)}"
            if j in backoff:
                line += f"\t{_log10(backoff[j]):.12g}"
            fh.write(line + "\n")
        fh.write("\n\\2-grams:\n")
        for i, j, p in bigrams:
            fh.write(f"{_log10(p):.12g}\t{_token_name(vocabulary, i)} {_token_name(vocabulary, j)}\n")
        fh.write("\n\\end\\\n")


_SECTION = re.compile(r"^\\(\d)-grams:$")


def _parse_float(text: str, path, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ArpaError(f"{path}:{lineno}: non-numeric field {text!r}") from None


def import_arpa(path, vocabulary: Vocabulary) -> BigramLM:
    """Load unigram and bigram sections of an ARPA file into a ``BigramLM``.

    Tokens outside the vocabulary map to UNK as next tokens; their contexts
    are dropped unless the token is literally ``<unk>``. Every row is
    renormalised over the vocabulary.
    """
    K = vocabulary.K
    lookup = dict(vocabulary.index_of)
    lookup.setdefault("<unk>", vocabulary.unk)

    def to_index(tok: str) -> tuple[int, bool]:
        hit = lookup.get(tok)
        return (vocabulary.unk, False) if hit is None else (hit, True)

    uni_raw = np.zeros(K)
    backoff: dict[int, float] = {}
    bigram_raw: dict[int, dict[int, float]] = {}
    section = None
    seen_sections = set()
    saw_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line == "\\data\\":
                saw_data, section = True, "data"
                continue
            if line == "\\end\\":
                section = "end"
                break
            m = _SECTION.match(line)
            if m:
                section = int(m.group(1))
                seen_sections.add(section)
                continue
            if section == "data":
                if not line.startswith("ngram "):
                    raise ArpaError(f"{path}:{lineno}: unexpected line in \\data\\ {line!r}")
                continue
            if section == 1:
                parts = line.split()
                if len(parts) not in (2, 3):
                    raise ArpaError(f"{path}:{lineno}: malformed unigram line {line!r}")
                lp = _parse_float(parts[0], path, lineno)
                j, known = to_index(parts[1])
                uni_raw[j] += 10.0 ** lp
                if len(parts) == 3 and known:
                    backoff[j] = 10.0 ** _parse_float(parts[2], path, lineno)
            elif section == 2:
                parts = line.split()
                if len(parts) not in (3, 4):
                    raise ArpaError(f"{path}:{lineno}: malformed bigram line {line!r}")
                lp = _parse_float(parts[0], path, lineno)
                i, known = to_index(parts[1])
                if not known:
                    continue
                j, _ = to_index(parts[2])
                row = bigram_raw.setdefault(i, {})
                row[j] = row.get(j, 0.0) + 10.0 ** lp
            elif isinstance(section, int):
                # Higher orders are outside the bigram model.
                continue
            else:
                raise ArpaError(f"{path}:{lineno}: content outside any section {line!r}")
    if not saw_data:
        raise ArpaError(f"{path}: missing \\data\\ section")
    if 1 not in seen_sections:
        raise ArpaError(f"{path}: missing \\1-grams: section")
    if section != "end":
        raise ArpaError(f"{path}: missing \\end\\ marker")
    if uni_raw.sum() <= 0:
        raise ArpaError(f"{path}: unigram section carries no probability mass")

    base = uni_raw / uni_raw.sum()
    rows, alpha = {}, {}
    for i, row in bigram_raw.items():
        idx = np.array(sorted(row), dtype=np.int64)
        vals = np.array([row[j] for j in idx])
        bo = backoff.get(i, 1.0)
        missing = np.ones(K, dtype=bool)
        missing[idx] = False
        z = vals.sum() + bo * base[missing].sum()
        rows[i] = (idx, vals / z)
        alpha[i] = bo / z
    return BigramLM(K, rows, alpha, base, base.copy(), False)

