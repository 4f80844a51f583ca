"""Flat JSON experiment configuration with ``--key value`` overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .homophones import TONE_MODES
from .prior import STRATEGIES, PriorError, check_masses

SEED_ENV = "HOMOSMOOTH_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # paths
    out_dir: str = "experiment"
    corpus: Optional[str] = None
    lexicon: Optional[str] = None
    fuzzy_rules: Optional[str] = None
    arpa: Optional[str] = None
    data_dir: Optional[str] = None
    checkpoint: Optional[str] = None
    ref: Optional[str] = None
    hyp: Optional[str] = None
    seed: Optional[int] = None
    # vocabulary / lexicon
    min_count: int = 1
    tone_mode: str = "sensitive"
    fuzzy_tone_match: Optional[bool] = None
    # prior strategy
    strategy: str = "homo_unigram"
    strategies: list = field(default_factory=lambda: list(STRATEGIES))
    truth_mass: float = 0.6
    homo_mass: float = 0.3
    other_mass: float = 0.1
    fuzzy_truth_mass: float = 0.6
    fuzzy_homo_mass: float = 0.15
    fuzzy_simi_mass: float = 0.15
    fuzzy_other_mass: float = 0.1
    # loss
    beta: float = 0.4
    # bigram LM
    lm_smoothing: str = "add_k"
    lm_k: float = 0.01
    lm_lambda: float = 0.9
    # model / optimizer
    hidden: int = 64
    attention: int = 64
    embedding: int = 32
    learning_rate: float = 0.03
    momentum: float = 0.9
    clip_norm: float = 5.0
    batch_size: int = 32
    epochs: int = 30
    ls_start_epoch: int = 1
    decode_slack: int = 5
    # synthetic language
    num_classes: int = 20
    class_size_weights: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4])
    frame_dim: int = 16
    frames_per_char: list = field(default_factory=lambda: [2, 3])
    noise_sigma: float = 0.5
    transition_temperature: float = 1.0
    within_class_skew: float = 1.0
    context_choice: bool = True
    sentence_length: list = field(default_factory=lambda: [4, 8])
    num_train: int = 2000
    num_heldout: int = 300

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if value is None:
        return None
    try:
        if kind in ("int", "Optional[int]"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if kind in ("bool", "Optional[bool]"):
            if isinstance(value, bool):
                return value
            text = str(value).lower()
            if text in ("true", "1", "yes"):
                return True
            if text in ("false", "0", "no"):
                return False
            raise ValueError
        if kind == "list":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
            return list(value)
        if kind in ("str", "Optional[str]"):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return value


def _parse_override(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    for key, raw in (overrides or {}).items():
        data[key] = _parse_override(raw) if isinstance(raw, str) else raw
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in data.items()})
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if not 0.0 <= cfg.beta <= 1.0:
        raise ConfigError(f"beta must lie in [0, 1], got {cfg.beta}")
    try:
        check_masses((cfg.truth_mass, cfg.homo_mass, cfg.other_mass))
        check_masses((cfg.fuzzy_truth_mass, cfg.fuzzy_homo_mass,
                      cfg.fuzzy_simi_mass, cfg.fuzzy_other_mass))
    except PriorError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.strategy not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}, got {cfg.strategy!r}")
    bad = [s for s in cfg.strategies if s not in STRATEGIES]
    if bad:
        raise ConfigError(f"unknown strategies in sweep: {bad}")
    if cfg.tone_mode not in TONE_MODES:
        raise ConfigError(f"tone_mode must be one of {TONE_MODES}")
    if cfg.lm_smoothing not in ("add_k", "interpolated"):
        raise ConfigError("lm_smoothing must be add_k or interpolated")
    for name in ("corpus", "lexicon", "fuzzy_rules", "arpa", "checkpoint", "ref", "hyp"):
        p = getattr(cfg, name)
        if p is not None and not Path(p).exists():
            raise ConfigError(f"{name} path does not exist: {p}")


def require_seed(cfg: ExperimentConfig) -> int:
    if cfg.seed is not None:
        return cfg.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    raise ConfigError(f"a seed is required: pass --seed or set {SEED_ENV}")
