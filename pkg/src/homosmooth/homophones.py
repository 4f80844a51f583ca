"""Homophone and fuzzy-pronunciation neighbour sets over a vocabulary."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional

from .lexicon import FINALS, INITIALS, Lexicon, Syllable, Vocabulary

TONE_SENSITIVE = "sensitive"
TONE_INSENSITIVE = "insensitive"
TONE_MODES = (TONE_SENSITIVE, TONE_INSENSITIVE)


class FuzzyRuleError(ValueError):
    pass


@dataclass(frozen=True)
class FuzzyRules:
    """Unordered pairs of interchangeable initials and finals."""

    initial_pairs: frozenset = frozenset()
    final_pairs: frozenset = frozenset()

    def __post_init__(self):
        for pair in self.initial_pairs:
            if len(pair) != 2 or not pair <= set(INITIALS):
                raise FuzzyRuleError(f"bad initial pair {sorted(pair)}")
        for pair in self.final_pairs:
            if len(pair) != 2 or not pair <= set(FINALS):
                raise FuzzyRuleError(f"bad final pair {sorted(pair)}")

    def initial_partners(self, initial: str) -> list[str]:
        return sorted(x for p in self.initial_pairs if initial in p for x in p if x != initial)

    def final_partners(self, final: str) -> list[str]:
        return sorted(x for p in self.final_pairs if final in p for x in p if x != final)

    def __bool__(self):
        return bool(self.initial_pairs or self.final_pairs)


def parse_fuzzy_rules_text(text: str, source: str = "<string>") -> FuzzyRules:
    initials, finals = set(), set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FuzzyRuleError(f"{source}:{lineno}: expected 'KIND A B', got {raw!r}")
        kind, a, b = parts
        if kind == "initial":
            known, target = INITIALS, initials
        elif kind == "final":
            known, target = FINALS, finals
        else:
            raise FuzzyRuleError(f"{source}:{lineno}: unknown kind {kind!r}")
        for ph in (a, b):
            if ph not in known:
                raise FuzzyRuleError(f"{source}:{lineno}: unknown {kind} {ph!r}")
        if a == b:
            raise FuzzyRuleError(f"{source}:{lineno}: pair members must differ")
        target.add(frozenset((a, b)))
    return FuzzyRules(frozenset(initials), frozenset(finals))


def parse_fuzzy_rules(path) -> FuzzyRules:
    with open(path, encoding="utf-8") as fh:
        return parse_fuzzy_rules_text(fh.read(), str(path))


def default_fuzzy_rules() -> FuzzyRules:
    text = resources.files("homosmooth").joinpath("data/fuzzy_rules.txt").read_text(encoding="utf-8")
    return parse_fuzzy_rules_text(text, "default fuzzy_rules.txt")


@dataclass(frozen=True)
class HomophoneIndex:
    """Characters grouped by reading.

    Lookups are per (character, reading) so polyphones get the homophone set
    of the reading used in context.
    """

    K: int
    tone_mode: str
    by_syllable: Mapping[tuple, frozenset]
    readings: Mapping[int, tuple[Syllable, ...]]
    _homo_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def tone_sensitive(self) -> bool:
        return self.tone_mode == TONE_SENSITIVE

    def key(self, syl: Syllable) -> tuple:
        return syl.key(self.tone_sensitive)

    def homo_of(self, k0: int, syl: Optional[Syllable]) -> frozenset:
        if syl is None:
            return frozenset()
        ck = (k0, self.key(syl))
        hit = self._homo_cache.get(ck)
        if hit is None:
            hit = self.by_syllable.get(ck[1], frozenset()) - {k0}
            self._homo_cache[ck] = hit
        return hit

    def simi_of(self, k0: int, syl: Optional[Syllable], rules: FuzzyRules,
                tone_match: Optional[bool] = None) -> frozenset:
        return fuzzy_neighbors(self, k0, syl, rules, tone_match)

    def has_homophones(self, k0: int, syl: Optional[Syllable]) -> bool:
        return bool(self.homo_of(k0, syl))


def build_homophone_index(lexicon: Lexicon, vocabulary: Vocabulary,
                          tone_mode: str = TONE_SENSITIVE) -> HomophoneIndex:
    if tone_mode not in TONE_MODES:
        raise ValueError(f"tone_mode must be one of {TONE_MODES}, got {tone_mode!r}")
    sensitive = tone_mode == TONE_SENSITIVE
    groups: dict[tuple, set] = {}
    readings: dict[int, tuple[Syllable, ...]] = {}
    # Word entries contribute readings too, since polyphones may only appear there.
    per_char: dict[str, list[Syllable]] = {c: list(s) for c, s in lexicon.readings.items()}
    for word, syls in lexicon.word_readings.items():
        for ch, syl in zip(word, syls):
            lst = per_char.setdefault(ch, [])
            if syl not in lst:
                lst.append(syl)
    for ch, syls in per_char.items():
        k = vocabulary.index_of.get(ch)
        if k is None:
            continue
        readings[k] = tuple(syls)
        for syl in syls:
            groups.setdefault(syl.key(sensitive), set()).add(k)
    return HomophoneIndex(
        K=vocabulary.K,
        tone_mode=tone_mode,
        by_syllable={key: frozenset(v) for key, v in groups.items()},
        readings=readings,
    )


def fuzzy_neighbors(index: HomophoneIndex, k0: int, syl: Optional[Syllable],
                    rules: FuzzyRules, tone_match: Optional[bool] = None) -> frozenset:
    """Characters whose reading differs from ``syl`` by exactly one fuzzy pair.

    Exact homophones and ``k0`` itself are excluded. ``tone_match`` defaults
    to the index's tone mode.
    """
    if syl is None or not rules:
        return frozenset()
    if tone_match is None:
        tone_match = index.tone_sensitive
    found: set = set()
    variants = [(i, syl.final) for i in rules.initial_partners(syl.initial)]
    variants += [(syl.initial, f) for f in rules.final_partners(syl.final)]
    for initial, final in variants:
        if index.tone_sensitive:
            if tone_match:
                keys = [(initial, final, syl.tone)]
            else:
                keys = [(initial, final, t) for t in range(6)]
        else:
            keys = [(initial, final)]
        for key in keys:
            found |= index.by_syllable.get(key, frozenset())
    return frozenset(found) - index.homo_of(k0, syl) - {k0}

