import json

import pytest

from homosmooth.cli import main
from homosmooth.config import ConfigError, load_config

TINY = ["--num_classes", "4", "--num_train", "30", "--num_heldout", "8", "--epochs", "1",
        "--hidden", "6", "--attention", "6", "--embedding", "4"]


@pytest.fixture
def text_inputs(tmp_path):
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("甲乙丙\n乙甲丁\n戊甲\n", encoding="utf-8")
    lex = tmp_path / "lex.tsv"
    lex.write_text("甲\tma1\n乙\tma1\n丙\tzin1\n丁\tzing1\n戊\tbo2\n己\tma1\n", encoding="utf-8")
    return corpus, lex


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.beta == 0.4 and cfg.truth_mass == 0.6

    def test_file_and_override(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"beta": 0.2, "epochs": 3}))
        cfg = load_config(str(p), {"epochs": "5", "strategies": "non_ls,uniform"})
        assert cfg.beta == 0.2 and cfg.epochs == 5
        assert cfg.strategies == ["non_ls", "uniform"]

    @pytest.mark.parametrize("over", [{"beta": "1.5"}, {"truth_mass": "0.7"}, {"nope": "1"},
                                      {"strategy": "magic"}, {"corpus": "/does/not/exist"}])
    def test_rejects(self, over):
        with pytest.raises(ConfigError):
            load_config(None, over)


class TestCommands:
    def test_build_homophones(self, tmp_path, text_inputs, capsys):
        corpus, lex = text_inputs
        out = tmp_path / "o"
        assert main(["build-homophones", "--lexicon", str(lex), "--out_dir", str(out)]) == 0
        report = json.loads((out / "homophones.json").read_text())
        assert report["chars_with_homophones"] == 3
        assert report["histogram_N"] == {"0": 3, "2": 3}

    def test_build_homophones_no_shared(self, tmp_path):
        lex = tmp_path / "lex.tsv"
        lex.write_text("甲\tma1\n乙\tmo1\n", encoding="utf-8")
        assert main(["build-homophones", "--lexicon", str(lex), "--out_dir", str(tmp_path / "o")]) == 0
        assert json.loads((tmp_path / "o" / "homophones.json").read_text())["chars_with_homophones"] == 0

    def test_lm_and_priors(self, tmp_path, text_inputs):
        corpus, lex = text_inputs
        out = tmp_path / "o"
        assert main(["train-lm", "--corpus", str(corpus), "--out_dir", str(out)]) == 0
        assert (out / "bigram.arpa").exists()
        args = ["build-priors", "--corpus", str(corpus), "--lexicon", str(lex), "--out_dir", str(out),
                "--strategy", "homo_ngram", "--arpa", str(out / "bigram.arpa")]
        assert main(args) == 0
        lines = (out / "priors.homo_ngram.jsonl").read_text().splitlines()
        assert len(lines) == 3 + 3 + 2 + 3

    def test_eval_cer_identical(self, tmp_path, capsys):
        ref = tmp_path / "ref.txt"
        ref.write_text("abc\nde\n")
        assert main(["eval-cer", "--ref", str(ref), "--hyp", str(ref)]) == 0
        assert "0.0%" in capsys.readouterr().out

    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--seed", "3"]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_gradcheck_failure_exit(self, monkeypatch):
        from homosmooth import gradcheck
        monkeypatch.setattr(gradcheck, "run_all", lambda seed: [gradcheck.GradCheck("bad", 1.0)])
        assert main(["gradcheck", "--seed", "0"]) == 1

    def test_seed_required(self, monkeypatch):
        monkeypatch.delenv("HOMOSMOOTH_SEED", raising=False)
        assert main(["gen-toy"]) == 2

    def test_seed_from_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HOMOSMOOTH_SEED", "4")
        assert main(["gen-toy", "--out_dir", str(tmp_path)] + TINY) == 0
        assert (tmp_path / "data" / "train.jsonl").exists()

    def test_bad_beta_exit_2(self):
        assert main(["train-toy", "--seed", "1", "--beta", "2"]) == 2

    def test_missing_input_exit_1(self, tmp_path):
        assert main(["decode-toy", "--out_dir", str(tmp_path)]) == 1

    def test_train_two_strategies_and_table(self, tmp_path, capsys):
        base = ["--seed", "0", "--out_dir", str(tmp_path)] + TINY
        assert main(["gen-toy"] + base) == 0
        for s in ("non_ls", "homo_unigram"):
            assert main(["train-toy", "--strategy", s] + base) == 0
            assert (tmp_path / s / "log.csv").exists()
            assert (tmp_path / s / "checkpoint.json").exists()
        first = (tmp_path / "non_ls" / "log.csv").read_bytes()
        assert main(["train-toy", "--strategy", "non_ls"] + base) == 0
        assert (tmp_path / "non_ls" / "log.csv").read_bytes() == first
        assert main(["decode-toy", "--strategy", "homo_unigram"] + base) == 0
        capsys.readouterr()
        assert main(["eval-cer", "--out_dir", str(tmp_path)]) == 0
        table = capsys.readouterr().out
        assert "| non_ls |" in table and "| homo_unigram |" in table

    def test_sweep(self, tmp_path):
        args = ["sweep", "--seed", "0", "--out_dir", str(tmp_path)] + TINY
        assert main(args) == 0
        rows = json.loads((tmp_path / "cer_table.json").read_text())
        assert [r["strategy"] for r in rows] == ["non_ls", "uniform", "unigram", "homo_unigram",
                                                 "homo_ngram", "homo_fuzzy"]
        assert (tmp_path / "cer_table.md").read_text().startswith("| strategy |")
