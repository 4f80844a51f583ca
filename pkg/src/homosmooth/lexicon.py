"""Vocabulary, pinyin syllables, pronunciation lexicon and sentence pronunciation."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

UNK = "<unk>"
SPACE = "<space>"
SOS = "<s>"
EOS = "</s>"
SPECIALS = (UNK, SPACE, SOS, EOS)

# 21 standard initials plus the glide spellings y/w.
INITIALS = (
    "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h",
    "j", "q", "x", "zh", "ch", "sh", "r", "z", "c", "s", "y", "w",
)
FINALS = (
    "a", "o", "e", "i", "u", "v", "ai", "ei", "ao", "ou", "an", "en", "ang",
    "eng", "ong", "er", "ia", "ie", "iao", "iu", "ian", "in", "iang", "ing",
    "iong", "ua", "uo", "uai", "ui", "uan", "un", "uang", "ueng", "ue", "ve",
    "van", "vn",
)
_INITIALS_BY_LENGTH = sorted(INITIALS, key=len, reverse=True)
_FINAL_SET = frozenset(FINALS)


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Bijection between characters and indices ``0..K-1``.

    The four special tokens always occupy indices 0-3.
    """

    chars: tuple[str, ...]
    index_of: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("vocabulary characters must be unique")
        for i, tok in enumerate(SPECIALS):
            if self.chars[i] != tok:
                raise ValueError(f"special token {tok!r} must sit at index {i}")
        object.__setattr__(self, "index_of", {c: i for i, c in enumerate(self.chars)})

    def __len__(self):
        return len(self.chars)

    def __contains__(self, char):
        return char in self.index_of

    @property
    def K(self) -> int:
        return len(self.chars)

    @property
    def unk(self) -> int:
        return 0

    @property
    def space(self) -> int:
        return 1

    @property
    def sos(self) -> int:
        return 2

    @property
    def eos(self) -> int:
        return 3

    def encode_char(self, char: str) -> int:
        if char == " ":
            return self.space
        return self.index_of.get(char, self.unk)

    def encode(self, text: Iterable[str]) -> list[int]:
        return [self.encode_char(c) for c in text]

    def decode(self, indices: Iterable[int]) -> str:
        out = []
        for i in indices:
            tok = self.chars[i]
            out.append(" " if i == self.space else tok)
        return "".join(out)

    @classmethod
    def from_chars(cls, chars: Iterable[str]) -> "Vocabulary":
        return cls(SPECIALS + tuple(chars))

    def save(self, path) -> None:
        Path(path).write_text("".join(c + "\n" for c in self.chars[len(SPECIALS):]), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        return cls.from_chars(line for line in lines if line)


def build_vocabulary(corpus_lines: Sequence[str], min_count: int = 1) -> Vocabulary:
    """Collect characters seen at least ``min_count`` times.

    Order is by descending count, ties broken by codepoint. Spaces map to the
    ``<space>`` special and are not counted as characters.
    """
    if not corpus_lines:
        raise ValueError("empty corpus")
    counts = Counter()
    for line in corpus_lines:
        counts.update(c for c in line if c != " ")
    kept = [c for c, n in counts.items() if n >= min_count and c not in SPECIALS]
    kept.sort(key=lambda c: (-counts[c], ord(c)))
    return Vocabulary.from_chars(kept)


@dataclass(frozen=True, order=True)
class Syllable:
    initial: str
    final: str
    tone: int = 0

    def __post_init__(self):
        if self.initial and self.initial not in INITIALS:
            raise LexiconError(f"unknown initial {self.initial!r}")
        if self.final not in _FINAL_SET:
            raise LexiconError(f"unknown final {self.final!r}")
        if not 0 <= self.tone <= 5:
            raise LexiconError(f"tone out of range: {self.tone}")

    def key(self, tone_sensitive: bool = True) -> tuple:
        if tone_sensitive:
            return (self.initial, self.final, self.tone)
        return (self.initial, self.final)

    def __str__(self):
        return format_syllable(self)


def parse_syllable(s: str) -> Syllable:
    """Split ``zhong1`` into initial ``zh``, final ``ong`` and tone 1.

    ``ü`` is accepted and canonicalised to ``v``. A missing tone digit
    gives tone 0.
    """
    text = s.strip().lower().replace("ü", "v")
    tone = 0
    if text and text[-1].isdigit():
        tone = int(text[-1])
        text = text[:-1]
        if tone > 5:
            raise LexiconError(f"bad tone in syllable {s!r}")
    initial = ""
    for cand in _INITIALS_BY_LENGTH:
        if text.startswith(cand):
            initial = cand
            break
    final = text[len(initial):]
    if final not in _FINAL_SET:
        raise LexiconError(f"cannot parse syllable {s!r}: unknown final {final!r}")
    return Syllable(initial, final, tone)


def format_syllable(syl: Syllable) -> str:
    tone = str(syl.tone) if syl.tone else ""
    return f"{syl.initial}{syl.final}{tone}"


@dataclass(frozen=True)
class Lexicon:
    """Per-character readings (most frequent first) and word readings."""

    readings: Mapping[str, tuple[Syllable, ...]]
    word_readings: Mapping[str, tuple[Syllable, ...]] = field(default_factory=dict)
    out_of_vocab: frozenset = frozenset()

    def __post_init__(self):
        for ch, syls in self.readings.items():
            if not syls:
                raise LexiconError(f"character {ch!r} has no readings")
        for w, syls in self.word_readings.items():
            if len(syls) != len(w):
                raise LexiconError(f"word {w!r} has {len(w)} chars but {len(syls)} syllables")

    @property
    def max_word_len(self) -> int:
        return max((len(w) for w in self.word_readings), default=1)


def parse_lexicon(path, vocabulary: Optional[Vocabulary] = None) -> Lexicon:
    """Read a ``CHAR<TAB>syl[,syl...]`` / ``WORD<TAB>syl syl ...`` file."""
    readings: dict[str, list[Syllable]] = {}
    words: dict[str, tuple[Syllable, ...]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise LexiconError(f"{path}:{lineno}: malformed line {line!r}")
            key, value = parts[0], parts[1].strip()
            try:
                if len(key) == 1:
                    syls = [parse_syllable(t) for t in value.split(",") if t.strip()]
                    if not syls:
                        raise LexiconError("no readings")
                    merged = readings.setdefault(key, [])
                    merged.extend(s for s in syls if s not in merged)
                else:
                    syls = tuple(parse_syllable(t) for t in value.split())
                    if len(syls) != len(key):
                        raise LexiconError(
                            f"word {key!r} has {len(key)} chars but {len(syls)} syllables")
                    words[key] = syls
            except LexiconError as exc:
                raise LexiconError(f"{path}:{lineno}: {exc}") from None
    oov = frozenset()
    if vocabulary is not None:
        oov = frozenset(c for c in readings if c not in vocabulary)
        if oov:
            logger.info("lexicon %s: %d characters not in vocabulary", path, len(oov))
    return Lexicon({c: tuple(s) for c, s in readings.items()}, words, oov)


def write_lexicon(lexicon: Lexicon, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ch, syls in lexicon.readings.items():
            fh.write(f"{ch}\t{','.join(map(format_syllable, syls))}\n")
        for w, syls in lexicon.word_readings.items():
            fh.write(f"{w}\t{' '.join(map(format_syllable, syls))}\n")


def pronounce_sentence(sentence: Sequence[str], lexicon: Lexicon) -> list[tuple[str, Optional[Syllable]]]:
    """Assign one reading per character.

    Greedy longest match against word entries decides polyphones; other
    characters take their first reading. Characters missing from the lexicon
    get ``None``.
    """
    chars = list(sentence)
    out: list[tuple[str, Optional[Syllable]]] = []
    longest = lexicon.max_word_len
    i = 0
    while i < len(chars):
        for n in range(min(longest, len(chars) - i), 1, -1):
            word = "".join(chars[i:i + n])
            syls = lexicon.word_readings.get(word)
            if syls is not None:
                out.extend(zip(chars[i:i + n], syls))
                i += n
                break
        else:
            ch = chars[i]
            syls = lexicon.readings.get(ch)
            out.append((ch, syls[0] if syls else None))
            i += 1
    return out
