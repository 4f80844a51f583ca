"""Label-smoothing loss on logits: NLL plus a KL penalty toward a prior."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distribution import SmoothingDistribution


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if np.isnan(z).any():
        raise ValueError("NaN in logits")
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_dim(v: SmoothingDistribution, logp: np.ndarray) -> None:
    if logp.shape[-1] != v.K:
        raise ValueError(f"prior has K={v.K} but log-probs have {logp.shape[-1]} classes")


def kl_divergence(v: SmoothingDistribution, logp) -> float:
    """``KL(v || p)`` evaluated over explicit entries plus the uniform tail."""
    logp = np.asarray(logp, dtype=np.float64)
    _check_dim(v, logp)
    pos = v.values > 0
    vals, idx = v.values[pos], v.indices[pos]
    kl = float(np.sum(vals * (np.log(vals) - logp[idx])))
    if v.tail > 0 and v.n_tail:
        tail_logp = logp.sum() - logp[v.indices].sum()
        kl += v.tail * (v.n_tail * np.log(v.tail) - tail_logp)
    return kl


def cross_entropy(target: SmoothingDistribution, logp) -> float:
    logp = np.asarray(logp, dtype=np.float64)
    _check_dim(target, logp)
    ce = -float(np.dot(target.values, logp[target.indices]))
    if target.tail and target.n_tail:
        ce -= target.tail * (logp.sum() - logp[target.indices].sum())
    return ce


def mixed_target(k0: int, v: SmoothingDistribution, beta: float) -> SmoothingDistribution:
    """``(1 - beta) * onehot(k0) + beta * v``."""
    if not 0 <= k0 < v.K:
        raise IndexError(f"k0={k0} out of range for K={v.K}")
    idx = v.indices
    vals = beta * v.values
    hit = np.flatnonzero(idx == k0)
    if hit.size:
        vals = vals.copy()
        vals[hit[0]] += 1.0 - beta
    else:
        idx = np.append(idx, k0)
        vals = np.append(vals, beta * v.tail + (1.0 - beta))
    return SmoothingDistribution(v.K, idx, vals, beta * v.tail if idx.size < v.K else 0.0)


def ls_loss(logits, k0: int, v: SmoothingDistribution, beta: float) -> float:
    """``-(1 - beta) log p[k0] + beta * KL(v || p)`` at one position."""
    logp = log_softmax(logits)
    _check_dim(v, logp)
    loss = -(1.0 - beta) * logp[k0]
    if beta:
        loss += beta * kl_divergence(v, logp)
    return float(loss)


def ls_loss_grad(logits, k0: int, v: SmoothingDistribution, beta: float) -> np.ndarray:
    return softmax(logits) - mixed_target(k0, v, beta).dense()


def sequence_ls_loss(logits: Sequence, targets: Sequence[int],
                     priors: Sequence[SmoothingDistribution], beta: float) -> float:
    if not (len(logits) == len(targets) == len(priors)):
        raise ValueError("logits, targets and priors differ in length")
    return float(sum(ls_loss(z, k, v, beta) for z, k, v in zip(logits, targets, priors)))
