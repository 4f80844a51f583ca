"""Central finite-difference checks for the autodiff ops and the full model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distribution import SmoothingDistribution
from .loss import ls_loss, ls_loss_grad
from .prior import homophone_prior
from .toy import autodiff as ad
from .toy.model import ModelConfig, init_params, teacher_forced_graph
from .toy.synthetic import Utterance

FD_STEP = 1e-5
TOLERANCE = 1e-5


@dataclass
class GradCheck:
    name: str
    rel_error: float

    @property
    def ok(self) -> bool:
        return self.rel_error <= TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``, or the absolute gap when both vanish."""
    num = float(np.linalg.norm(analytic - numeric))
    den = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return num / den if den > 1e-12 else num


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of ``f`` with respect to ``x``, perturbed in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def _check_op(name: str, build: Callable[[list], ad.Tensor], inputs: list[np.ndarray],
              rng: np.random.Generator) -> list[GradCheck]:
    out0 = build([ad.Tensor(x) for x in inputs]).value
    seed = rng.normal(size=out0.shape)

    def scalar() -> float:
        return float(np.sum(build([ad.Tensor(x) for x in inputs]).value * seed))

    tensors = [ad.Tensor(x) for x in inputs]
    ad.backward(build(tensors), seed)
    results = []
    for k, (x, t) in enumerate(zip(inputs, tensors)):
        analytic = t.grad if t.grad is not None else np.zeros_like(x)
        results.append(GradCheck(f"{name}[{k}]", relative_error(analytic, numeric_grad(scalar, x))))
    return results


def check_ops(seed: int = 0) -> list[GradCheck]:
    rng = np.random.default_rng(seed)
    B, T, H, K = 3, 4, 5, 6
    ids = rng.integers(0, K, size=B)
    mask = np.ones((B, T), dtype=bool)
    mask[0, -1] = False
    tgt = rng.dirichlet(np.ones(K), size=B)
    off = rng.normal(size=B)
    w = rng.uniform(0.5, 1.5, size=B)
    cases = [
        ("add", lambda a: ad.add(a[0], a[1]), [rng.normal(size=(B, H)), rng.normal(size=(H,))]),
        ("matmul", lambda a: ad.matmul(a[0], a[1]), [rng.normal(size=(B, T, H)), rng.normal(size=(H, K))]),
        ("tanh", lambda a: ad.tanh(a[0]), [rng.normal(size=(B, H))]),
        ("reshape", lambda a: ad.reshape(a[0], (B, 1, H)), [rng.normal(size=(B, H))]),
        ("concat", lambda a: ad.concat([a[0], a[1]]), [rng.normal(size=(B, H)), rng.normal(size=(B, K))]),
        ("stack", lambda a: ad.stack([a[0], a[1]], axis=1), [rng.normal(size=(B, H)), rng.normal(size=(B, H))]),
        ("embed", lambda a: ad.embed(a[0], ids), [rng.normal(size=(K, H))]),
        ("masked_softmax", lambda a: ad.masked_softmax(a[0], mask), [rng.normal(size=(B, T))]),
        ("weighted_sum", lambda a: ad.weighted_sum(a[0], a[1]), [rng.dirichlet(np.ones(T), size=B), rng.normal(size=(B, T, H))]),
        ("smoothed_nll", lambda a: ad.smoothed_nll(a[0], tgt, off, w), [rng.normal(size=(B, K))]),
        ("scale", lambda a: ad.scale(a[0], 0.7), [rng.normal(size=(B, H))]),
        ("total", lambda a: ad.total([a[0], a[1]]), [rng.normal(size=(B, H)), rng.normal(size=(B, H))]),
    ]
    results = []
    for name, build, inputs in cases:
        results.extend(_check_op(name, build, inputs, rng))

    # The per-position loss head against its closed-form gradient.
    logits = rng.normal(size=K)
    prior = homophone_prior(1, {2, 4}, K)
    analytic = ls_loss_grad(logits, 1, prior, 0.4)
    numeric = numeric_grad(lambda: ls_loss(logits, 1, prior, 0.4), logits)
    results.append(GradCheck("ls_loss", relative_error(analytic, numeric)))
    return results


def tiny_problem(seed: int = 0, K: int = 8, H: int = 4, T: int = 3, U: int = 2, d_in: int = 3):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(K=K, d_in=d_in, hidden=H, attention=H, embedding=H)
    params = init_params(cfg, seed)
    # Non-zero biases so their gradients are exercised at a generic point.
    for name in ("enc_b", "att_b", "dec_b", "out_b"):
        params[name][:] = rng.normal(scale=0.3, size=params[name].shape)
    labels = [int(x) for x in rng.integers(4, K, size=U)]
    utt = Utterance(rng.normal(size=(T, d_in)), labels)
    priors = [homophone_prior(k, {4 + (k - 3) % (K - 4)}, K) for k in labels]
    priors.append(SmoothingDistribution(K, np.empty(0, np.int64), np.empty(0), 1.0 / K))
    return params, utt, priors


def model_loss(params, utt: Utterance, priors, beta: float):
    """Sequence loss of one utterance and the graph holding its gradients."""
    g, steps = teacher_forced_graph(params, [utt.frames], [utt.labels])
    targets = list(utt.labels) + [params.config.eos]
    terms = []
    for u, logits in enumerate(steps):
        v = priors[u].dense()
        t = beta * v
        t[targets[u]] += 1.0 - beta
        terms.append(ad.smoothed_nll(logits, t[None], np.array([beta * priors[u].entropy()]), np.ones(1)))
    return g, ad.total(terms)


def check_model(seed: int = 0, beta: float = 0.4) -> list[GradCheck]:
    params, utt, priors = tiny_problem(seed)
    g, loss = model_loss(params, utt, priors, beta)
    ad.backward(loss)
    grads = g.grads()
    results = []
    for name in params:
        numeric = numeric_grad(lambda: float(model_loss(params, utt, priors, beta)[1].value), params[name])
        results.append(GradCheck(f"model.{name}", relative_error(grads[name], numeric)))
    return results


def run_all(seed: int = 0) -> list[GradCheck]:
    return check_ops(seed) + check_model(seed)
