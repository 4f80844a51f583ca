"""Sparse probability vectors with a uniform tail."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SmoothingDistribution:
    """Distribution over ``K`` classes.

    Indices listed in ``indices`` carry the matching ``values``; every other
    index carries ``tail``.
    """

    K: int
    indices: np.ndarray
    values: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise ValueError("indices and values differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.K):
            raise ValueError(f"index out of range for K={self.K}")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate indices")
        if idx.size == self.K and self.tail != 0.0:
            raise ValueError("tail must be 0 when every index is explicit")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "tail", float(self.tail))

    @classmethod
    def from_dense(cls, probs) -> "SmoothingDistribution":
        probs = np.asarray(probs, dtype=np.float64)
        return cls(probs.size, np.arange(probs.size), probs.copy(), 0.0)

    @classmethod
    def from_entries(cls, K: int, entries: dict, tail: float = 0.0) -> "SmoothingDistribution":
        keys = sorted(entries)
        return cls(K, np.array(keys, dtype=np.int64), np.array([entries[k] for k in keys]), tail)

    @property
    def n_tail(self) -> int:
        return self.K - self.indices.size

    def dense(self) -> np.ndarray:
        out = np.full(self.K, self.tail)
        out[self.indices] = self.values
        return out

    def __getitem__(self, k: int) -> float:
        hit = np.flatnonzero(self.indices == k)
        return float(self.values[hit[0]]) if hit.size else self.tail

    def total(self) -> float:
        return float(self.values.sum() + self.tail * self.n_tail)

    def entropy(self) -> float:
        v = self.values[self.values > 0]
        h = -float(np.sum(v * np.log(v)))
        if self.tail > 0 and self.n_tail:
            h -= self.n_tail * self.tail * np.log(self.tail)
        return h

    def is_valid(self, atol: float = 1e-12) -> bool:
        return (self.tail >= 0 and bool(np.all(self.values >= 0))
                and abs(self.total() - 1.0) <= atol)

    def __eq__(self, other):
        if not isinstance(other, SmoothingDistribution):
            return NotImplemented
        a, b = np.argsort(self.indices), np.argsort(other.indices)
        return (self.K == other.K and self.tail == other.tail
                and np.array_equal(self.indices[a], other.indices[b])
                and np.array_equal(self.values[a], other.values[b]))

    def __repr__(self):
        return (f"SmoothingDistribution(K={self.K}, entries={self.indices.size}, "
                f"tail={self.tail:.3g})")
