"""Attention encoder-decoder: tanh RNN encoder, additive attention, tanh RNN decoder."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad

CHECKPOINT_FORMAT = "homosmooth-checkpoint"
CHECKPOINT_VERSION = 1

PARAM_NAMES = (
    "enc_Wx", "enc_Wh", "enc_b",
    "att_We", "att_Ws", "att_b", "att_v",
    "emb",
    "dec_Wi", "dec_Ws", "dec_b",
    "out_W", "out_b",
)


@dataclass(frozen=True)
class ModelConfig:
    K: int
    d_in: int
    hidden: int = 64
    attention: int = 64
    embedding: int = 32
    sos: int = 2
    eos: int = 3


class ToyModelParams(dict):
    """Named parameter arrays plus the config they were built for."""

    def __init__(self, config: ModelConfig, arrays: dict):
        super().__init__(arrays)
        self.config = config
        missing = set(PARAM_NAMES) - set(arrays)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} has non-finite entries")
        want = param_shapes(config)
        for name, shape in want.items():
            if arrays[name].shape != shape:
                raise ValueError(f"{name} has shape {arrays[name].shape}, expected {shape}")

    def copy(self) -> "ToyModelParams":
        return ToyModelParams(self.config, {k: v.copy() for k, v in self.items()})


def param_shapes(c: ModelConfig) -> dict:
    H, A, E = c.hidden, c.attention, c.embedding
    return {
        "enc_Wx": (c.d_in, H), "enc_Wh": (H, H), "enc_b": (H,),
        "att_We": (H, A), "att_Ws": (H, A), "att_b": (A,), "att_v": (A, 1),
        "emb": (c.K, E),
        "dec_Wi": (E + H, H), "dec_Ws": (H, H), "dec_b": (H,),
        "out_W": (2 * H, c.K), "out_b": (c.K,),
    }


def init_params(config: ModelConfig, seed: int) -> ToyModelParams:
    rng = np.random.default_rng(seed)
    arrays = {}
    for name in PARAM_NAMES:
        shape = param_shapes(config)[name]
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
    return ToyModelParams(config, arrays)


@dataclass
class DecoderStep:
    state: np.ndarray
    context: np.ndarray
    logits: np.ndarray
    attention: np.ndarray


class _Graph:
    """Parameters wrapped as tensors for one forward pass."""

    def __init__(self, params: ToyModelParams):
        self.params = params
        self.t = {k: ad.Tensor(v) for k, v in params.items()}

    def grads(self) -> dict:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
                for k, t in self.t.items()}


def _encode(g: _Graph, frames: np.ndarray) -> ad.Tensor:
    """``frames``: ``(B, T, d_in)`` -> states ``(B, T, H)``."""
    B, T, _ = frames.shape
    p = g.t
    h = ad.constant(np.zeros((B, g.params.config.hidden)))
    xw = ad.matmul(ad.constant(frames), p["enc_Wx"])
    states = []
    for t in range(T):
        x_t = _take_time(xw, t)
        h = ad.tanh(ad.add(ad.add(x_t, ad.matmul(h, p["enc_Wh"])), p["enc_b"]))
        states.append(h)
    return ad.stack(states, axis=1)


def _take_time(x: ad.Tensor, t: int) -> ad.Tensor:
    out = ad.Tensor(x.value[:, t], (x,))

    def bw(g):
        full = np.zeros_like(x.value)
        full[:, t] = g
        x.accumulate(full)
    out.backward_fn = bw
    return out


def _decode_step(g: _Graph, s_prev: ad.Tensor, prev_ids: np.ndarray, enc: ad.Tensor,
                 enc_proj: ad.Tensor, mask: Optional[np.ndarray]):
    p = g.t
    B = prev_ids.shape[0]
    A = g.params.config.attention
    query = ad.reshape(ad.add(ad.matmul(s_prev, p["att_Ws"]), p["att_b"]), (B, 1, A))
    scores = ad.reshape(ad.matmul(ad.tanh(ad.add(enc_proj, query)), p["att_v"]), enc.shape[:2])
    weights = ad.masked_softmax(scores, mask)
    context = ad.weighted_sum(weights, enc)
    inp = ad.concat([ad.embed(p["emb"], prev_ids), context])
    s = ad.tanh(ad.add(ad.add(ad.matmul(inp, p["dec_Wi"]), ad.matmul(s_prev, p["dec_Ws"])), p["dec_b"]))
    logits = ad.add(ad.matmul(ad.concat([s, context]), p["out_W"]), p["out_b"])
    return s, context, logits, weights


def _pad_frames(batch_frames: Sequence[np.ndarray]):
    B = len(batch_frames)
    T = max(f.shape[0] for f in batch_frames)
    d = batch_frames[0].shape[1]
    out = np.zeros((B, T, d))
    mask = np.zeros((B, T), dtype=bool)
    for b, f in enumerate(batch_frames):
        out[b, :f.shape[0]] = f
        mask[b, :f.shape[0]] = True
    return out, mask


def teacher_forced_graph(params: ToyModelParams, batch_frames: Sequence[np.ndarray],
                         batch_labels: Sequence[Sequence[int]]):
    """Forward pass with ground-truth history. Returns the graph and per-step logits tensors.

    Step ``u`` predicts label ``u`` (EOS after the last label).
    """
    cfg = params.config
    if any(len(f) == 0 for f in batch_frames):
        raise ValueError("empty frame sequence")
    frames, mask = _pad_frames(batch_frames)
    g = _Graph(params)
    enc = _encode(g, frames)
    enc_proj = ad.matmul(enc, g.t["att_We"])
    B = len(batch_labels)
    U = max(len(l) for l in batch_labels) + 1
    prev = np.full((B, U), cfg.eos, dtype=np.int64)
    prev[:, 0] = cfg.sos
    for b, lab in enumerate(batch_labels):
        prev[b, 1:len(lab) + 1] = lab
    s = ad.constant(np.zeros((B, cfg.hidden)))
    steps = []
    for u in range(U):
        s, _, logits, _ = _decode_step(g, s, prev[:, u], enc, enc_proj, mask)
        steps.append(logits)
    return g, steps


def encode(params: ToyModelParams, frames) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("frames must be a non-empty (T, d_in) matrix")
    g = _Graph(params)
    return _encode(g, frames[None]).value[0]


def decode_step(params: ToyModelParams, s_prev, prev_char: int, encoder_states) -> DecoderStep:
    g = _Graph(params)
    enc = ad.constant(np.asarray(encoder_states, dtype=np.float64)[None])
    enc_proj = ad.matmul(enc, g.t["att_We"])
    s, a, logits, w = _decode_step(g, ad.constant(np.asarray(s_prev, dtype=np.float64)[None]),
                                   np.array([prev_char]), enc, enc_proj, None)
    return DecoderStep(s.value[0], a.value[0], logits.value[0], w.value[0])


def forward_teacher_forced(params: ToyModelParams, frames, labels: Sequence[int]) -> np.ndarray:
    """Logits ``(U + 1, K)``: one row per label plus the closing EOS step."""
    _, steps = teacher_forced_graph(params, [np.asarray(frames, dtype=np.float64)], [list(labels)])
    return np.stack([z.value[0] for z in steps])


def batch_teacher_forced_logits(params: ToyModelParams, batch_frames, batch_labels) -> list[np.ndarray]:
    _, steps = teacher_forced_graph(params, batch_frames, batch_labels)
    out = []
    for b, lab in enumerate(batch_labels):
        out.append(np.stack([steps[u].value[b] for u in range(len(lab) + 1)]))
    return out


def greedy_decode_batch(params: ToyModelParams, batch_frames: Sequence[np.ndarray],
                        max_len: int) -> list[list[int]]:
    cfg = params.config
    B = len(batch_frames)
    if max_len <= 0:
        return [[] for _ in range(B)]
    frames, mask = _pad_frames(batch_frames)
    g = _Graph(params)
    enc = _encode(g, frames)
    enc_proj = ad.matmul(enc, g.t["att_We"])
    s = ad.constant(np.zeros((B, cfg.hidden)))
    prev = np.full(B, cfg.sos, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    out: list[list[int]] = [[] for _ in range(B)]
    for _ in range(max_len):
        s, _, logits, _ = _decode_step(g, s, prev, enc, enc_proj, mask)
        # Drop the graph as we go; inference needs no gradients.
        s = ad.constant(s.value)
        prev = np.argmax(logits.value, axis=-1)
        for b in range(B):
            if done[b]:
                continue
            if prev[b] == cfg.eos:
                done[b] = True
            else:
                out[b].append(int(prev[b]))
        if done.all():
            break
    return out


def greedy_decode(params: ToyModelParams, frames, max_len: int) -> list[int]:
    return greedy_decode_batch(params, [np.asarray(frames, dtype=np.float64)], max_len)[0]


def save_checkpoint(params: ToyModelParams, path) -> None:
    cfg = params.config
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.__dict__,
        "tensors": {k: {"shape": list(params[k].shape), "data": params[k].ravel().tolist()}
                    for k in PARAM_NAMES},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> ToyModelParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    cfg = ModelConfig(**doc["config"])
    arrays = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["tensors"].items()}
    return ToyModelParams(cfg, arrays)
