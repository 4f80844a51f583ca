"""Mini-batch training with label-smoothing priors, evaluation and the homophone probe."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..homophones import HomophoneIndex
from ..lexicon import Lexicon, Vocabulary, pronounce_sentence
from ..loss import LossConfig, log_softmax
from ..metrics import corpus_cer
from ..prior import StrategyConfig, build_label_priors
from . import autodiff as ad
from .model import ToyModelParams, greedy_decode_batch, teacher_forced_graph
from .synthetic import ToyDataset, Utterance

logger = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "train_loss", "heldout_loss", "heldout_cer")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.03
    momentum: float = 0.9
    clip_norm: float = 5.0
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    ls_start_epoch: int = 1
    decode_slack: int = 5

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ValueError("learning_rate must be >= 0 and momentum in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.clip_norm <= 0:
            raise ValueError("batch_size >= 1, epochs >= 0 and clip_norm > 0 required")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    heldout_loss: float
    heldout_cer: float


def utterance_syllables(labels: Sequence[int], vocabulary: Vocabulary, lexicon: Lexicon):
    text = "".join(vocabulary.chars[k] for k in labels)
    return [syl for _, syl in pronounce_sentence(text, lexicon)]


class TargetTable:
    """Dense mixed targets and entropy offsets for every utterance position."""

    def __init__(self, utts: Sequence[Utterance], strategy: StrategyConfig, beta: float,
                 vocabulary: Vocabulary, lexicon: Lexicon):
        if strategy.kind == "non_ls":
            beta = 0.0
        self.beta = beta
        K = vocabulary.K
        self.targets: list[np.ndarray] = []
        self.offsets: list[np.ndarray] = []
        for u in utts:
            labels = list(u.labels) + [vocabulary.eos]
            if beta == 0.0:
                t = np.zeros((len(labels), K))
                t[np.arange(len(labels)), labels] = 1.0
                self.targets.append(t)
                self.offsets.append(np.zeros(len(labels)))
                continue
            sy = utterance_syllables(u.labels, vocabulary, lexicon)
            priors = build_label_priors(u.labels, sy, strategy, vocabulary.sos, vocabulary.eos)
            dense = np.stack([p.dense() for p in priors])
            t = beta * dense
            t[np.arange(len(labels)), labels] += 1.0 - beta
            self.targets.append(t)
            self.offsets.append(np.array([beta * p.entropy() for p in priors]))


def _batch_loss(params: ToyModelParams, utts: Sequence[Utterance], idx: Sequence[int],
                table: TargetTable, with_grad: bool):
    frames = [utts[i].frames for i in idx]
    labels = [list(utts[i].labels) for i in idx]
    g, steps = teacher_forced_graph(params, frames, labels)
    B = len(idx)
    K = params.config.K
    terms = []
    for u, logits in enumerate(steps):
        tgt = np.zeros((B, K))
        off = np.zeros(B)
        w = np.zeros(B)
        for b, i in enumerate(idx):
            if u <= len(labels[b]):
                tgt[b] = table.targets[i][u]
                off[b] = table.offsets[i][u]
                w[b] = 1.0 / B
        terms.append(ad.smoothed_nll(logits, tgt, off, w))
    loss = ad.total(terms)
    if with_grad:
        ad.backward(loss)
        return float(loss.value), g.grads()
    return float(loss.value), None


def sequence_loss_and_grad(params: ToyModelParams, utts: Sequence[Utterance],
                           table: TargetTable) -> tuple[float, dict]:
    """Mean per-utterance smoothed loss over ``utts`` and its gradient."""
    return _batch_loss(params, utts, list(range(len(utts))), table, True)


def dataset_loss(params: ToyModelParams, utts: Sequence[Utterance], table: TargetTable,
                 batch_size: int = 64) -> float:
    total = 0.0
    for start in range(0, len(utts), batch_size):
        idx = list(range(start, min(start + batch_size, len(utts))))
        loss, _ = _batch_loss(params, utts, idx, table, False)
        total += loss * len(idx)
    return total / max(len(utts), 1)


def decode_all(params: ToyModelParams, utts: Sequence[Utterance], slack: int = 5,
               batch_size: int = 64) -> list[list[int]]:
    out = []
    for start in range(0, len(utts), batch_size):
        chunk = utts[start:start + batch_size]
        max_len = max(len(u.labels) for u in chunk) + slack
        out.extend(greedy_decode_batch(params, [u.frames for u in chunk], max_len))
    return out


def heldout_cer(params: ToyModelParams, utts: Sequence[Utterance], slack: int = 5) -> float:
    hyps = decode_all(params, utts, slack)
    return corpus_cer([u.labels for u in utts], hyps)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(params: ToyModelParams, dataset: ToyDataset, strategy: StrategyConfig,
          loss_config: LossConfig, opt: OptimizerConfig,
          evaluate: bool = True) -> tuple[ToyModelParams, list[EpochRecord]]:
    """SGD with momentum and global-norm clipping.

    Epochs before ``opt.ls_start_epoch`` train on one-hot targets.
    """
    params = params.copy()
    vocab, lexicon = dataset.vocabulary, dataset.lexicon
    smooth_train = TargetTable(dataset.train, strategy, loss_config.beta, vocab, lexicon)
    smooth_held = TargetTable(dataset.heldout, strategy, loss_config.beta, vocab, lexicon)
    if opt.ls_start_epoch > 1:
        onehot = StrategyConfig(kind="non_ls", K=vocab.K)
        plain_train = TargetTable(dataset.train, onehot, 0.0, vocab, lexicon)
    rng = np.random.default_rng(opt.seed)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    log: list[EpochRecord] = []
    n = len(dataset.train)
    for epoch in range(1, opt.epochs + 1):
        table = smooth_train if epoch >= opt.ls_start_epoch else plain_train
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, opt.batch_size):
            idx = order[start:start + opt.batch_size].tolist()
            loss, grads = _batch_loss(params, dataset.train, idx, table, True)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in epoch {epoch}")
            running += loss * len(idx)
            clip_global_norm(grads, opt.clip_norm)
            for k in params:
                velocity[k] *= opt.momentum
                velocity[k] -= opt.learning_rate * grads[k]
                params[k] += velocity[k]
        train_loss = running / max(n, 1)
        if evaluate and dataset.heldout:
            h_loss = dataset_loss(params, dataset.heldout, smooth_held)
            h_cer = heldout_cer(params, dataset.heldout, opt.decode_slack)
        else:
            h_loss = h_cer = float("nan")
        if not math.isfinite(train_loss) or (evaluate and dataset.heldout and not math.isfinite(h_loss)):
            raise TrainingDiverged(f"loss became non-finite in epoch {epoch}")
        log.append(EpochRecord(epoch, train_loss, h_loss, h_cer))
        logger.info("epoch %d train %.4f heldout %.4f cer %.2f%%", epoch, train_loss, h_loss, h_cer)
    return params, log


def format_log_csv(log: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for r in log:
        w.writerow([r.epoch, repr(r.train_loss), repr(r.heldout_loss), repr(r.heldout_cer)])
    return buf.getvalue()


@dataclass
class GapStats:
    positions: int
    mean_truth_prob: float
    median_truth_prob: float
    mean_homo_mass: float
    median_homo_mass: float
    mean_gap: float
    median_gap: float


def probe_homophone_gap(params: ToyModelParams, dataset: ToyDataset, index: HomophoneIndex,
                        split: str = "heldout", batch_size: int = 64) -> GapStats:
    """Teacher-forced probabilities at positions whose truth has homophones.

    The gap is ``log p(truth) - max log p(homophone)``.
    """
    utts = dataset.split(split)
    vocab, lexicon = dataset.vocabulary, dataset.lexicon
    truth, mass, gap = [], [], []
    for start in range(0, len(utts), batch_size):
        chunk = utts[start:start + batch_size]
        _, steps = teacher_forced_graph(params, [u.frames for u in chunk], [u.labels for u in chunk])
        for b, u in enumerate(chunk):
            sy = utterance_syllables(u.labels, vocab, lexicon)
            for pos, (k0, syl) in enumerate(zip(u.labels, sy)):
                homo = index.homo_of(k0, syl)
                if not homo:
                    continue
                logp = log_softmax(steps[pos].value[b])
                h = np.fromiter(homo, dtype=np.int64)
                truth.append(math.exp(logp[k0]))
                mass.append(float(np.exp(logp[h]).sum()))
                gap.append(float(logp[k0] - logp[h].max()))
    if not truth:
        raise ValueError("no positions with homophones in the probed split")
    return GapStats(
        len(truth),
        float(np.mean(truth)), float(np.median(truth)),
        float(np.mean(mass)), float(np.median(mass)),
        float(np.mean(gap)), float(np.median(gap)),
    )

