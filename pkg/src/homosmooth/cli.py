"""``homosmooth`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import gradcheck, pipeline
from .config import ConfigError, ExperimentConfig, load_config, require_seed
from .homophones import build_homophone_index
from .lexicon import parse_lexicon
from .metrics import corpus_cer
from .ngram import export_arpa
from .prior import build_sequence_priors, export_priors
from .toy.model import load_checkpoint
from .toy.synthetic import generate_dataset, load_dataset, save_dataset

logger = logging.getLogger("homosmooth")

COMMANDS = ("build-homophones", "train-lm", "build-priors", "gradcheck", "gen-toy",
            "train-toy", "decode-toy", "eval-cer", "sweep")


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _need(cfg: ExperimentConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def cmd_build_homophones(cfg: ExperimentConfig) -> int:
    _need(cfg, "lexicon")
    corpus = pipeline.read_corpus(cfg.corpus) if cfg.corpus else None
    lex0 = parse_lexicon(cfg.lexicon)
    vocab = pipeline.vocabulary_for(cfg, corpus, lex0)
    lexicon = parse_lexicon(cfg.lexicon, vocab)
    index = build_homophone_index(lexicon, vocab, cfg.tone_mode)
    report = pipeline.homophone_report(vocab, index, pipeline.fuzzy_rules_for(cfg))
    report["out_of_vocab"] = len(lexicon.out_of_vocab)
    out = _out(cfg)
    vocab.save(out / "vocab.txt")
    _write_json(out / "homophones.json", report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_train_lm(cfg: ExperimentConfig) -> int:
    _need(cfg, "corpus")
    corpus = pipeline.read_corpus(cfg.corpus)
    vocab = pipeline.vocabulary_for(cfg, corpus, None)
    lm = pipeline.bigram_for(cfg, corpus, vocab)
    out = _out(cfg)
    vocab.save(out / "vocab.txt")
    export_arpa(lm, vocab, out / "bigram.arpa")
    print(f"wrote {out / 'bigram.arpa'} (K={vocab.K})")
    return 0


def cmd_build_priors(cfg: ExperimentConfig) -> int:
    _need(cfg, "corpus", "lexicon")
    corpus = pipeline.read_corpus(cfg.corpus)
    vocab = pipeline.vocabulary_for(cfg, corpus, None)
    lexicon = parse_lexicon(cfg.lexicon, vocab)
    index = build_homophone_index(lexicon, vocab, cfg.tone_mode)
    strategy = pipeline.strategy_for(cfg.strategy, cfg, vocab, corpus, index)
    priors, k0s = [], []
    for line in corpus:
        priors.extend(build_sequence_priors(line, strategy, vocab, lexicon))
        k0s.extend(vocab.encode(line) + [vocab.eos])
    out = _out(cfg)
    vocab.save(out / "vocab.txt")
    export_priors(priors, out / f"priors.{cfg.strategy}.jsonl", k0s)
    print(f"wrote {len(priors)} priors to {out / f'priors.{cfg.strategy}.jsonl'}")
    return 0


def cmd_gradcheck(cfg: ExperimentConfig) -> int:
    seed = require_seed(cfg)
    results = gradcheck.run_all(seed)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name} rel_err={r.rel_error:.3e}")
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} gradient checks within {gradcheck.TOLERANCE:g}")
    return 1 if failed else 0


def _data_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.data_dir) if cfg.data_dir else Path(cfg.out_dir) / "data"


def cmd_gen_toy(cfg: ExperimentConfig) -> int:
    seed = require_seed(cfg)
    ds = generate_dataset(pipeline.synthetic_config(cfg, seed))
    d = _data_dir(cfg)
    save_dataset(ds, d)
    print(f"wrote {len(ds.train)} train / {len(ds.heldout)} held-out utterances to {d} (K={ds.vocabulary.K})")
    return 0


def _load_toy(cfg: ExperimentConfig, seed: int):
    d = _data_dir(cfg)
    if not (d / "train.jsonl").exists():
        ds = generate_dataset(pipeline.synthetic_config(cfg, seed))
        save_dataset(ds, d)
    return load_dataset(d)


def cmd_train_toy(cfg: ExperimentConfig) -> int:
    seed = require_seed(cfg)
    ds = _load_toy(cfg, seed)
    row = pipeline.run_toy_strategy(cfg, ds, cfg.strategy, seed, _out(cfg) / cfg.strategy)
    print(json.dumps(row, sort_keys=True))
    return 0


def cmd_decode_toy(cfg: ExperimentConfig) -> int:
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else _out(cfg) / cfg.strategy / "checkpoint.json"
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    ds = load_dataset(_data_dir(cfg))
    params = load_checkpoint(ckpt)
    out = ckpt.parent
    pipeline.write_decodes(params, ds, out, cfg.decode_slack)
    print(f"wrote {out / 'hyp.txt'} and {out / 'ref.txt'}")
    return 0


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").split("\n")[:-1]


def cmd_eval_cer(cfg: ExperimentConfig) -> int:
    if cfg.ref or cfg.hyp:
        _need(cfg, "ref", "hyp")
        cer = corpus_cer(_read_lines(cfg.ref), _read_lines(cfg.hyp))
        print(f"CER {cer:.1f}%")
        return 0
    rows = []
    root = Path(cfg.out_dir)
    for strat in cfg.strategies:
        d = root / strat
        if (d / "ref.txt").exists() and (d / "hyp.txt").exists():
            probe = json.loads((d / "probe.json").read_text()) if (d / "probe.json").exists() else {}
            rows.append({
                "strategy": strat,
                "heldout_cer": corpus_cer(_read_lines(d / "ref.txt"), _read_lines(d / "hyp.txt")),
                "mean_homo_mass": probe.get("mean_homo_mass", float("nan")),
                "median_gap": probe.get("median_gap", float("nan")),
            })
    if not rows:
        raise FileNotFoundError(f"no decoded strategies under {root}")
    print(pipeline.format_cer_table(rows), end="")
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    seed = require_seed(cfg)
    ds = _load_toy(cfg, seed)
    out = _out(cfg)
    rows = []
    for strat in cfg.strategies:
        logger.info("training strategy %s", strat)
        rows.append(pipeline.run_toy_strategy(cfg, ds, strat, seed, out / strat))
    _write_json(out / "cer_table.json", rows)
    table = pipeline.format_cer_table(rows)
    (out / "cer_table.md").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


HANDLERS = {
    "build-homophones": cmd_build_homophones,
    "train-lm": cmd_train_lm,
    "build-priors": cmd_build_priors,
    "gradcheck": cmd_gradcheck,
    "gen-toy": cmd_gen_toy,
    "train-toy": cmd_train_toy,
    "decode-toy": cmd_decode_toy,
    "eval-cer": cmd_eval_cer,
    "sweep": cmd_sweep,
}


def _parse_overrides(extra: Sequence[str]) -> dict:
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(extra) and not extra[i + 1].startswith("--"):
            value = extra[i + 1]
            i += 2
        else:
            value = "true"
            i += 1
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homosmooth",
        description="Homophone-based label smoothing experiments. Any config key can "
                    "be overridden with --key value.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _parse_overrides(extra))
        if args.command in ("train-toy", "gen-toy", "sweep", "gradcheck"):
            require_seed(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as exit code 1 with a diagnostic
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
