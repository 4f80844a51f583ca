"""Glue between the config file and the individual modules."""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Optional

from .config import ExperimentConfig
from .homophones import (FuzzyRules, HomophoneIndex, build_homophone_index,
                         default_fuzzy_rules, parse_fuzzy_rules)
from .lexicon import Lexicon, Vocabulary, build_vocabulary, parse_lexicon
from .loss import LossConfig
from .ngram import BigramLM, BigramSmoothing, count_unigrams, import_arpa, train_bigram
from .prior import StrategyConfig
from .toy.model import ModelConfig, init_params, save_checkpoint
from .toy.synthetic import SyntheticLanguageConfig, ToyDataset
from .toy.training import (OptimizerConfig, decode_all, format_log_csv,
                           probe_homophone_gap, train)


def read_corpus(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln for ln in lines if ln.strip()]


def vocabulary_for(cfg: ExperimentConfig, corpus: Optional[list[str]], lexicon: Optional[Lexicon]) -> Vocabulary:
    if corpus:
        return build_vocabulary(corpus, cfg.min_count)
    if lexicon is not None:
        chars = sorted(set(lexicon.readings) | {c for w in lexicon.word_readings for c in w})
        return Vocabulary.from_chars(chars)
    raise ValueError("need a corpus or a lexicon to build the vocabulary")


def fuzzy_rules_for(cfg: ExperimentConfig) -> FuzzyRules:
    return parse_fuzzy_rules(cfg.fuzzy_rules) if cfg.fuzzy_rules else default_fuzzy_rules()


def bigram_for(cfg: ExperimentConfig, corpus: list[str], vocab: Vocabulary) -> BigramLM:
    if cfg.arpa:
        return import_arpa(cfg.arpa, vocab)
    smoothing = BigramSmoothing(cfg.lm_smoothing, cfg.lm_k, cfg.lm_lambda)
    return train_bigram(corpus, vocab, smoothing)


def strategy_for(kind: str, cfg: ExperimentConfig, vocab: Vocabulary, corpus: list[str],
                 index: Optional[HomophoneIndex]) -> StrategyConfig:
    needs_uni = kind in ("unigram", "homo_unigram", "homo_fuzzy")
    return StrategyConfig(
        kind=kind,
        truth_mass=cfg.truth_mass, homo_mass=cfg.homo_mass, other_mass=cfg.other_mass,
        fuzzy_truth_mass=cfg.fuzzy_truth_mass, fuzzy_homo_mass=cfg.fuzzy_homo_mass,
        fuzzy_simi_mass=cfg.fuzzy_simi_mass, fuzzy_other_mass=cfg.fuzzy_other_mass,
        fuzzy_tone_match=cfg.fuzzy_tone_match,
        K=vocab.K,
        unigram=count_unigrams(corpus, vocab) if needs_uni else None,
        bigram=bigram_for(cfg, corpus, vocab) if kind == "homo_ngram" else None,
        index=index if kind.startswith("homo") else None,
        rules=fuzzy_rules_for(cfg) if kind == "homo_fuzzy" else None,
    )


def homophone_report(vocab: Vocabulary, index: HomophoneIndex, rules: FuzzyRules) -> dict:
    n_hist: Counter = Counter()
    m_hist: Counter = Counter()
    with_homo = 0
    for k in sorted(index.readings):
        any_homo = False
        for syl in index.readings[k]:
            n = len(index.homo_of(k, syl))
            m = len(index.simi_of(k, syl, rules))
            n_hist[n] += 1
            m_hist[m] += 1
            any_homo |= n > 0
        with_homo += any_homo
    return {
        "K": vocab.K,
        "chars_with_homophones": with_homo,
        "histogram_N": {str(k): n_hist[k] for k in sorted(n_hist)},
        "histogram_M": {str(k): m_hist[k] for k in sorted(m_hist)},
    }


def synthetic_config(cfg: ExperimentConfig, seed: int) -> SyntheticLanguageConfig:
    return SyntheticLanguageConfig(
        num_classes=cfg.num_classes,
        class_size_weights=tuple(cfg.class_size_weights),
        frame_dim=cfg.frame_dim,
        frames_per_char=tuple(cfg.frames_per_char),
        noise_sigma=cfg.noise_sigma,
        transition_temperature=cfg.transition_temperature,
        within_class_skew=cfg.within_class_skew,
        context_choice=cfg.context_choice,
        sentence_length=tuple(cfg.sentence_length),
        num_train=cfg.num_train,
        num_heldout=cfg.num_heldout,
        seed=seed,
    )


def optimizer_config(cfg: ExperimentConfig, seed: int) -> OptimizerConfig:
    return OptimizerConfig(
        learning_rate=cfg.learning_rate, momentum=cfg.momentum, clip_norm=cfg.clip_norm,
        batch_size=cfg.batch_size, epochs=cfg.epochs, seed=seed,
        ls_start_epoch=cfg.ls_start_epoch, decode_slack=cfg.decode_slack,
    )


def toy_index(cfg: ExperimentConfig, ds: ToyDataset) -> HomophoneIndex:
    return build_homophone_index(ds.lexicon, ds.vocabulary, cfg.tone_mode)


def toy_corpus(ds: ToyDataset) -> list[str]:
    return [ds.vocabulary.decode(u.labels) for u in ds.train]


def run_toy_strategy(cfg: ExperimentConfig, ds: ToyDataset, kind: str, seed: int, out: Path) -> dict:
    """Train one strategy and write its log, checkpoint, probe and decodes under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    index = toy_index(cfg, ds)
    strategy = strategy_for(kind, cfg, ds.vocabulary, toy_corpus(ds), index)
    vocab = ds.vocabulary
    mcfg = ModelConfig(K=vocab.K, d_in=ds.train[0].frames.shape[1], hidden=cfg.hidden,
                       attention=cfg.attention, embedding=cfg.embedding,
                       sos=vocab.sos, eos=vocab.eos)
    params0 = init_params(mcfg, seed)
    params, log = train(params0, ds, strategy, LossConfig(cfg.beta), optimizer_config(cfg, seed))
    (out / "log.csv").write_text(format_log_csv(log), encoding="utf-8")
    save_checkpoint(params, out / "checkpoint.json")
    probe = probe_homophone_gap(params, ds, index)
    (out / "probe.json").write_text(json.dumps(probe.__dict__, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")
    write_decodes(params, ds, out, cfg.decode_slack)
    final = log[-1] if log else None
    return {
        "strategy": kind,
        "heldout_cer": final.heldout_cer if final else float("nan"),
        "heldout_loss": final.heldout_loss if final else float("nan"),
        "mean_homo_mass": probe.mean_homo_mass,
        "median_gap": probe.median_gap,
    }


def write_decodes(params, ds: ToyDataset, out: Path, slack: int) -> None:
    hyps = decode_all(params, ds.heldout, slack)
    vocab = ds.vocabulary
    (out / "ref.txt").write_text("".join(vocab.decode(u.labels) + "\n" for u in ds.heldout), encoding="utf-8")
    (out / "hyp.txt").write_text("".join(vocab.decode(h) + "\n" for h in hyps), encoding="utf-8")


def format_cer_table(rows: list[dict]) -> str:
    lines = [
        "| strategy | held-out CER (%) | mean homophone mass | median log-gap |",
        "|---|---|---|---|",
    ]
    for r in rows:
        lines.append(f"| {r['strategy']} | {r['heldout_cer']:.2f} | "
                     f"{r['mean_homo_mass']:.4f} | {r['median_gap']:.3f} |")
    return "\n".join(lines) + "\n"
