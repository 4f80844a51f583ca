"""Levenshtein alignment statistics and corpus-level character error rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class EditStats:
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def cer(self) -> float:
        if self.ref_len == 0:
            raise ZeroDivisionError("CER undefined for an empty reference")
        return self.errors / self.ref_len


def edit_distance(ref: Sequence, hyp: Sequence) -> EditStats:
    """Unit-cost alignment of ``hyp`` against ``ref``.

    Among minimal alignments the backtrace prefers substitution (or match),
    then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ri == hyp[j - 1] else 1
            row[j] = min(prev[j - 1] + cost, prev[j] + 1, row[j - 1] + 1)

    s = dl = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            if d[i][j] == d[i - 1][j - 1] + cost:
                s += cost
                i, j = i - 1, j - 1
                continue
        if i > 0 and d[i][j] == d[i - 1][j] + 1:
            dl += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditStats(s, dl, ins, n)


def corpus_cer(refs: Sequence[Sequence], hyps: Sequence[Sequence]) -> float:
    """Pooled CER in percent: total edits over total reference characters."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    errors = total = 0
    for r, h in zip(refs, hyps):
        st = edit_distance(r, h)
        errors += st.errors
        total += st.ref_len
    if total == 0:
        raise ValueError("references contain no characters")
    return 100.0 * errors / total
