import itertools
import math

import numpy as np
import pytest

from homosmooth import gradcheck
from homosmooth.homophones import build_homophone_index
from homosmooth.lexicon import Lexicon, Vocabulary, parse_syllable
from homosmooth.loss import LossConfig, log_softmax
from homosmooth.prior import StrategyConfig, homophone_prior
from homosmooth.toy import autodiff as ad
from homosmooth.toy import training
from homosmooth.toy.model import (ModelConfig, ToyModelParams, decode_step, encode,
                                  forward_teacher_forced, batch_teacher_forced_logits,
                                  greedy_decode, greedy_decode_batch, init_params,
                                  load_checkpoint, save_checkpoint)
from homosmooth.toy.synthetic import (SyntheticLanguageConfig, ToyDataset, Utterance,
                                      generate_dataset, load_dataset, save_dataset,
                                      write_utterances)
from homosmooth.toy.training import (LOG_FIELDS, OptimizerConfig, TargetTable, TrainingDiverged,
                                     format_log_csv, probe_homophone_gap, train)


def small_params(seed=0, K=7, d_in=3, H=4):
    cfg = ModelConfig(K=K, d_in=d_in, hidden=H, attention=5, embedding=3)
    p = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 100)
    for name in ("enc_b", "att_b", "dec_b", "out_b"):
        p[name][:] = rng.normal(scale=0.5, size=p[name].shape)
    return p


# Scalar reference implementation, one element at a time.

def ref_encode(p, frames):
    H = p["enc_Wh"].shape[0]
    h = [0.0] * H
    out = []
    for x in frames:
        new = []
        for j in range(H):
            acc = p["enc_b"][j]
            for i in range(len(x)):
                acc += x[i] * p["enc_Wx"][i, j]
            for i in range(H):
                acc += h[i] * p["enc_Wh"][i, j]
            new.append(math.tanh(acc))
        h = new
        out.append(h)
    return np.array(out)


def ref_decode_step(p, s_prev, prev, enc):
    T, H = enc.shape
    A = p["att_b"].shape[0]
    scores = []
    for t in range(T):
        sc = 0.0
        for a in range(A):
            acc = p["att_b"][a]
            for i in range(H):
                acc += enc[t, i] * p["att_We"][i, a] + s_prev[i] * p["att_Ws"][i, a]
            sc += math.tanh(acc) * p["att_v"][a, 0]
        scores.append(sc)
    m = max(scores)
    e = [math.exp(s - m) for s in scores]
    w = [x / sum(e) for x in e]
    ctx = [sum(w[t] * enc[t, i] for t in range(T)) for i in range(H)]
    inp = list(p["emb"][prev]) + ctx
    s = []
    for j in range(H):
        acc = p["dec_b"][j]
        for i in range(len(inp)):
            acc += inp[i] * p["dec_Wi"][i, j]
        for i in range(H):
            acc += s_prev[i] * p["dec_Ws"][i, j]
        s.append(math.tanh(acc))
    feat = s + ctx
    K = p["out_b"].shape[0]
    logits = [p["out_b"][k] + sum(feat[i] * p["out_W"][i, k] for i in range(len(feat))) for k in range(K)]
    return np.array(s), np.array(ctx), np.array(logits), np.array(w)


class TestEncoder:
    def test_single_frame(self):
        p = small_params()
        x = np.array([[0.3, -0.1, 0.7]])
        np.testing.assert_allclose(encode(p, x)[0], np.tanh(x[0] @ p["enc_Wx"] + p["enc_b"]), atol=1e-15)

    def test_zero_weights(self):
        p = small_params()
        for k in p:
            p[k][:] = 0
        np.testing.assert_array_equal(encode(p, np.ones((4, 3))), 0)

    def test_scalar_reference(self):
        p = small_params(1)
        x = np.random.default_rng(1).normal(size=(5, 3))
        np.testing.assert_allclose(encode(p, x), ref_encode(p, x), atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            encode(small_params(), np.zeros((0, 3)))


class TestDecoder:
    def test_single_state(self):
        p = small_params()
        enc = np.array([[0.1, 0.2, 0.3, 0.4]])
        step = decode_step(p, np.zeros(4), 2, enc)
        np.testing.assert_allclose(step.attention, [1.0])
        np.testing.assert_allclose(step.context, enc[0])

    def test_identical_states(self):
        p = small_params(2)
        enc = np.tile([0.5, -0.2, 0.1, 0.0], (6, 1))
        step = decode_step(p, np.random.default_rng(0).normal(size=4), 3, enc)
        np.testing.assert_allclose(step.context, enc[0], atol=1e-15)
        assert abs(step.attention.sum() - 1) < 1e-9

    def test_scalar_reference(self):
        p = small_params(3)
        rng = np.random.default_rng(3)
        enc = rng.normal(size=(4, 4))
        s_prev = np.tanh(rng.normal(size=4))
        step = decode_step(p, s_prev, 5, enc)
        s, ctx, logits, w = ref_decode_step(p, s_prev, 5, enc)
        np.testing.assert_allclose(step.state, s, atol=1e-12)
        np.testing.assert_allclose(step.context, ctx, atol=1e-12)
        np.testing.assert_allclose(step.logits, logits, atol=1e-12)
        np.testing.assert_allclose(step.attention, w, atol=1e-12)


class TestTeacherForced:
    def test_length(self):
        p = small_params()
        assert forward_teacher_forced(p, np.ones((2, 3)), [4]).shape == (2, 7)

    def test_deterministic(self):
        p = small_params()
        x = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_array_equal(forward_teacher_forced(p, x, [4, 5]), forward_teacher_forced(p, x, [4, 5]))

    def test_recomposition(self):
        p = small_params(4)
        x = np.random.default_rng(4).normal(size=(6, 3))
        labels = [4, 6, 5]
        got = forward_teacher_forced(p, x, labels)
        enc = encode(p, x)
        s = np.zeros(4)
        prev = p.config.sos
        for u, nxt in enumerate(labels + [p.config.eos]):
            step = decode_step(p, s, prev, enc)
            np.testing.assert_allclose(got[u], step.logits, atol=1e-12)
            s, prev = step.state, nxt

    def test_padding_does_not_leak(self):
        p = small_params(5)
        rng = np.random.default_rng(5)
        xs = [rng.normal(size=(n, 3)) for n in (2, 6, 4)]
        ls = [[4], [5, 6, 4], [6, 6]]
        batched = batch_teacher_forced_logits(p, xs, ls)
        for x, lab, got in zip(xs, ls, batched):
            np.testing.assert_allclose(got, forward_teacher_forced(p, x, lab), atol=1e-12)


def sequence_scores(p, x, max_len):
    """Log-probability of every output greedy decoding could return."""
    K, eos = p.config.K, p.config.eos
    out = {}
    for L in range(max_len + 1):
        for seq in itertools.product([k for k in range(K) if k != eos], repeat=L):
            logp = log_softmax(forward_teacher_forced(p, x, list(seq)))
            score = sum(logp[u, seq[u]] for u in range(L))
            if L < max_len:
                score += logp[L, eos]
            out[seq] = score
    return out


class TestGreedy:
    def test_max_len_zero(self):
        assert greedy_decode(small_params(), np.ones((2, 3)), 0) == []

    def test_exhaustive_enumeration(self):
        checked = 0
        for seed in range(6):
            p = small_params(seed, K=5)
            p["out_W"] *= 8
            p["out_b"] *= 8
            x = np.random.default_rng(seed).normal(size=(3, 3))
            scores = sequence_scores(p, x, 3)
            ranked = sorted(scores.values(), reverse=True)
            if ranked[0] - ranked[1] < 1e-6:
                continue
            best = max(scores, key=scores.get)
            assert tuple(greedy_decode(p, x, 3)) == best
            checked += 1
        assert checked >= 3

    def test_batch_matches_single(self):
        p = small_params(6)
        rng = np.random.default_rng(6)
        xs = [rng.normal(size=(n, 3)) for n in (3, 5, 2)]
        assert greedy_decode_batch(p, xs, 6) == [greedy_decode(p, x, 6) for x in xs]


def tiny_dataset(utts, K=8):
    chars = [chr(0x4E00 + i) for i in range(K - 4)]
    vocab = Vocabulary.from_chars(chars)
    lex = Lexicon({c: (parse_syllable("ma1" if i < 2 else f"b{['a', 'o', 'i', 'u'][i % 4]}1"),)
                   for i, c in enumerate(chars)})
    return ToyDataset(utts, [], vocab, lex)


class TestTraining:
    def test_lr_zero_keeps_params(self):
        ds = tiny_dataset([Utterance(np.ones((3, 3)), [4, 5])])
        p = init_params(ModelConfig(K=8, d_in=3, hidden=4, attention=4, embedding=4), 0)
        strategy = StrategyConfig(kind="non_ls", K=8)
        out, log = train(p, ds, strategy, LossConfig(0.4), OptimizerConfig(learning_rate=0.0, epochs=3))
        for k in p:
            np.testing.assert_array_equal(out[k], p[k])
        assert len(log) == 3

    def test_overfit_single_example(self):
        rng = np.random.default_rng(0)
        utt = Utterance(rng.normal(size=(6, 3)), [4, 6, 5])
        ds = tiny_dataset([utt])
        p = init_params(ModelConfig(K=8, d_in=3, hidden=8, attention=8, embedding=4), 0)
        strategy = StrategyConfig(kind="non_ls", K=8)
        opt = OptimizerConfig(learning_rate=0.1, epochs=200, batch_size=1)
        out, log = train(p, ds, strategy, LossConfig(0.0), opt, evaluate=False)
        assert log[-1].train_loss < log[0].train_loss
        assert greedy_decode(out, utt.frames, 6) == utt.labels

    def test_divergence_names_epoch(self, monkeypatch):
        ds = tiny_dataset([Utterance(np.ones((2, 3)), [4])])
        p = init_params(ModelConfig(K=8, d_in=3, hidden=4, attention=4, embedding=4), 0)
        monkeypatch.setattr(training, "_batch_loss", lambda *a, **k: (float("nan"), {n: np.zeros_like(v) for n, v in p.items()}))
        with pytest.raises(TrainingDiverged, match="epoch 1"):
            train(p, ds, StrategyConfig(kind="non_ls", K=8), LossConfig(), OptimizerConfig(epochs=2))

    def test_sequence_grad_matches_finite_differences(self):
        results = gradcheck.check_model(seed=2)
        assert all(r.ok for r in results), [(r.name, r.rel_error) for r in results if not r.ok]

    def test_non_ls_targets_are_one_hot(self):
        ds = tiny_dataset([Utterance(np.ones((2, 3)), [4, 5])])
        t = TargetTable(ds.train, StrategyConfig(kind="non_ls", K=8), 0.4, ds.vocabulary, ds.lexicon)
        np.testing.assert_array_equal(t.targets[0], np.eye(8)[[4, 5, 3]])

    def test_log_csv_format(self):
        log = [training.EpochRecord(1, 0.5, 0.25, 10.0)]
        assert format_log_csv(log) == ",".join(LOG_FIELDS) + "\n1,0.5,0.25,10.0\n"

    def test_reproducible(self):
        ds = generate_dataset(SyntheticLanguageConfig(num_classes=4, num_train=20, num_heldout=5, seed=1))
        cfg = ModelConfig(K=ds.vocabulary.K, d_in=16, hidden=6, attention=6, embedding=4)
        idx = build_homophone_index(ds.lexicon, ds.vocabulary)
        from homosmooth.ngram import count_unigrams
        corpus = [ds.vocabulary.decode(u.labels) for u in ds.train]
        strategy = StrategyConfig(kind="homo_unigram", unigram=count_unigrams(corpus, ds.vocabulary), index=idx)
        opt = OptimizerConfig(epochs=2, batch_size=8)
        runs = [format_log_csv(train(init_params(cfg, 0), ds, strategy, LossConfig(), opt)[1]) for _ in range(2)]
        assert runs[0] == runs[1]


class TestProbe:
    def dataset(self):
        # Class {A, B} reads ma1; every label is A.
        rng = np.random.default_rng(0)
        utts = [Utterance(rng.normal(size=(4, 3)), [4, 4]) for _ in range(3)]
        ds = tiny_dataset(utts)
        return ToyDataset([], utts, ds.vocabulary, ds.lexicon)

    def zero_output(self):
        p = init_params(ModelConfig(K=8, d_in=3, hidden=4, attention=4, embedding=4), 0)
        p["out_W"][:] = 0
        return p

    def test_uniform_logits(self):
        ds = self.dataset()
        idx = build_homophone_index(ds.lexicon, ds.vocabulary)
        g = probe_homophone_gap(self.zero_output(), ds, idx)
        assert g.median_gap == 0 and g.mean_gap == 0
        assert g.positions == 6

    def test_prior_matching_model(self):
        ds = self.dataset()
        idx = build_homophone_index(ds.lexicon, ds.vocabulary)
        p = self.zero_output()
        p["out_b"][:] = np.log(homophone_prior(4, {5}, 8).dense())
        g = probe_homophone_gap(p, ds, idx)
        assert g.median_gap == pytest.approx(math.log(2), abs=1e-12)
        assert g.mean_homo_mass == pytest.approx(0.3, abs=1e-12)

    def test_naive_recomputation(self):
        ds = generate_dataset(SyntheticLanguageConfig(num_classes=5, num_train=5, num_heldout=12, seed=3))
        idx = build_homophone_index(ds.lexicon, ds.vocabulary)
        p = init_params(ModelConfig(K=ds.vocabulary.K, d_in=16, hidden=5, attention=5, embedding=4), 1)
        gaps, masses = [], []
        for u in ds.heldout:
            logp = log_softmax(forward_teacher_forced(p, u.frames, u.labels))
            for pos, k in enumerate(u.labels):
                ch = ds.vocabulary.chars[k]
                homo = idx.homo_of(k, ds.lexicon.readings[ch][0])
                if homo:
                    h = sorted(homo)
                    gaps.append(logp[pos, k] - logp[pos, h].max())
                    masses.append(np.exp(logp[pos, h]).sum())
        g = probe_homophone_gap(p, ds, idx, batch_size=5)
        assert g.positions == len(gaps)
        assert g.median_gap == pytest.approx(np.median(gaps), abs=1e-12)
        assert g.mean_homo_mass == pytest.approx(np.mean(masses), abs=1e-12)

    def test_no_positions(self):
        ds = self.dataset()
        ds.heldout[:] = [Utterance(np.ones((2, 3)), [7])]
        with pytest.raises(ValueError):
            probe_homophone_gap(self.zero_output(), ds, build_homophone_index(ds.lexicon, ds.vocabulary))


class TestSynthetic:
    def test_skew_boundary(self):
        cfg = SyntheticLanguageConfig(num_classes=6, within_class_skew=1.0, context_choice=False,
                                      num_train=300, num_heldout=0, seed=2)
        ds = generate_dataset(cfg)
        idx = build_homophone_index(ds.lexicon, ds.vocabulary)
        seen = {k for u in ds.train for k in u.labels}
        classes = {}
        for k, c in ds.class_of.items():
            classes.setdefault(c, []).append(k)
        multi = [m for m in classes.values() if len(m) >= 2]
        assert multi
        for members in multi:
            first, rest = min(members), sorted(members)[1:]
            assert not set(rest) & seen
            syl = ds.lexicon.readings[ds.vocabulary.chars[first]][0]
            assert idx.homo_of(first, syl) == set(rest)

    def test_low_noise_homophone_frames(self):
        cfg = SyntheticLanguageConfig(num_classes=4, noise_sigma=1e-300, within_class_skew=0.0,
                                      num_train=50, num_heldout=0, seed=3)
        ds = generate_dataset(cfg)
        # Every frame equals its class embedding, so homophones share identical frames.
        distinct = {tuple(row) for u in ds.train for row in u.frames}
        assert len(distinct) == len({ds.class_of[k] for u in ds.train for k in u.labels})

    def test_deterministic(self, tmp_path):
        cfg = SyntheticLanguageConfig(num_train=1000, num_heldout=0, seed=7)
        write_utterances(generate_dataset(cfg).train, tmp_path / "a.jsonl")
        write_utterances(generate_dataset(cfg).train, tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_invariants(self):
        ds = generate_dataset(SyntheticLanguageConfig(num_train=100, num_heldout=10))
        for u in ds.train + ds.heldout:
            assert u.frames.shape[0] >= len(u.labels)
            assert all(4 <= k < ds.vocabulary.K for k in u.labels)

    @pytest.mark.parametrize("kw", [dict(noise_sigma=0.0), dict(num_classes=1),
                                    dict(class_size_weights=(1.0,))])
    def test_config_errors(self, kw):
        with pytest.raises(ValueError):
            SyntheticLanguageConfig(**kw)

    def test_save_load(self, tmp_path):
        ds = generate_dataset(SyntheticLanguageConfig(num_classes=4, num_train=10, num_heldout=3))
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.vocabulary == ds.vocabulary
        assert [u.labels for u in back.train] == [u.labels for u in ds.train]
        np.testing.assert_array_equal(back.heldout[0].frames, ds.heldout[0].frames)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = small_params(7)
        save_checkpoint(p, tmp_path / "c.json")
        back = load_checkpoint(tmp_path / "c.json")
        assert back.config == p.config
        for k in p:
            np.testing.assert_array_equal(back[k], p[k])

    def test_rejects_other_format(self, tmp_path):
        (tmp_path / "c.json").write_text('{"format": "x", "version": 1}')
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "c.json")


class TestAutodiff:
    def test_all_ops(self):
        results = gradcheck.check_ops(seed=1)
        assert all(r.ok for r in results), [(r.name, r.rel_error) for r in results if not r.ok]

    def test_masked_softmax_ignores_padding(self):
        x = ad.Tensor(np.array([[1.0, 2.0, 50.0]]))
        w = ad.masked_softmax(x, np.array([[True, True, False]])).value
        assert w[0, 2] == 0
        np.testing.assert_allclose(w.sum(), 1.0)

    def test_gradient_accumulates_over_reuse(self):
        a = ad.Tensor(np.array([2.0]))
        ad.backward(ad.add(a, a))
        np.testing.assert_array_equal(a.grad, [2.0])
