"""End-to-end pipeline: CLI commands, file contracts, determinism, report."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

import biaslab as bl
from biaslab import cli, pipeline, synth
from biaslab.errors import ConfigError


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthetic corpus plus a small experiment config file."""
    root = tmp_path_factory.mktemp("exp")
    corpus_dir = root / "corpus"
    paths = synth.write_synthetic_corpus(corpus_dir, n_train=900, n_valid=150,
                                         n_test=150, seed=21)
    config = {
        "corpus": {
            "name": "synth",
            "train": str(paths["train"]),
            "valid": str(paths["valid"]),
            "test": str(paths["test"]),
            "tokenize": "ptb",
        },
        "defining_sets": str(paths["defining_sets"]),
        "schemes": {"fixed": {"k": 10}, "infinite": {}},
        "lambdas": [0.0, 0.1],
        "model": {
            "layers": 2, "hidden": 12, "embed_dim": 8, "batch_size": 16,
            "bptt_len": 8, "epochs": 3, "learning_rate": 5.0,
        },
        "generation": {"num_seeds": 30, "max_len": 20},
        "out_dir": str(root / "runs"),
        "seed": 11,
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))
    return {"root": root, "config_path": cfg_path, "config": config, "paths": paths}


def run_cli(*args):
    return cli.main([str(a) for a in args])


def tree_bytes(root: Path, exclude_suffixes=(".meta.json",)) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and not any(p.name.endswith(s) for s in exclude_suffixes):
            out[str(p.relative_to(root))] = p.read_bytes()
    return out


class TestConfigLoading:
    def test_json_and_toml_agree(self, workdir, tmp_path):
        toml_path = tmp_path / "config.toml"
        c = workdir["config"]
        lines = [
            f'seed = {c["seed"]}',
            f'out_dir = "{c["out_dir"]}"',
            f'defining_sets = "{c["defining_sets"]}"',
            f'lambdas = [0.0, 0.1]',
            "[corpus]",
            f'name = "synth"',
            f'train = "{c["corpus"]["train"]}"',
            f'tokenize = "ptb"',
            "[schemes.fixed]",
            "k = 10",
            "[schemes.infinite]",
            "[model]",
            "layers = 2",
        ]
        toml_path.write_text("\n".join(lines) + "\n")
        a = pipeline.ExperimentConfig.from_file(workdir["config_path"])
        b = pipeline.ExperimentConfig.from_file(toml_path)
        assert a.seed == b.seed and a.lambdas == b.lambdas
        assert a.schemes["fixed"].k == b.schemes["fixed"].k

    def test_missing_config_file(self, tmp_path):
        assert run_cli("analyze", "--config", tmp_path / "absent.json") == 2

    def test_negative_lambda_rejected(self, workdir, tmp_path):
        bad = dict(workdir["config"], lambdas=[-0.5])
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        assert run_cli("analyze", "--config", path) == 2

    def test_packaged_defaults_resolve(self, workdir):
        cfg = dict(workdir["config"])
        del cfg["defining_sets"]
        cfg["corpus"] = dict(cfg["corpus"], name="ptb")
        parsed = pipeline.ExperimentConfig.from_dict(cfg)
        assert parsed.defining_sets_path.name == "ptb.json"
        assert parsed.stop_words_path.name == "english.txt"


class TestAnalyze:
    def test_analyze_writes_outputs(self, workdir, tmp_path):
        out = tmp_path / "a1"
        assert run_cli("analyze", "--config", workdir["config_path"], "--out", out) == 0
        for label in ("fixed", "infinite"):
            assert (out / f"scores_train_{label}.csv").is_file()
            data = json.loads((out / f"summary_train_{label}.json").read_text())
            assert data["mu"] >= 0 and data["sigma"] >= 0 and data["n"] >= 1

    def test_analyze_byte_identical_across_runs(self, workdir, tmp_path):
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        assert run_cli("analyze", "--config", workdir["config_path"], "--out", out1) == 0
        assert run_cli("analyze", "--config", workdir["config_path"], "--out", out2) == 0
        assert tree_bytes(out1) == tree_bytes(out2)

    def test_missing_defining_sets_exit_2(self, workdir, tmp_path, capsys):
        missing = tmp_path / "nowhere" / "sets.json"
        code = run_cli("analyze", "--config", workdir["config_path"],
                       "--defining-sets", missing)
        assert code == 2
        assert str(missing) in capsys.readouterr().err

    def test_planted_skew_is_visible(self, workdir, tmp_path):
        out = tmp_path / "skew"
        assert run_cli("analyze", "--config", workdir["config_path"], "--out", out) == 0
        rows = (out / "scores_train_fixed.csv").read_text().splitlines()[1:]
        scores = {line.split(",")[0]: float(line.rsplit(",", 1)[1]) for line in rows}
        male_occ = [scores[w] for w in synth.MALE_SKEW_OCCUPATIONS if w in scores]
        female_occ = [scores[w] for w in synth.FEMALE_SKEW_OCCUPATIONS if w in scores]
        assert male_occ and female_occ
        assert np.mean(male_occ) < -0.2 and np.mean(female_occ) > 0.2


@pytest.fixture(scope="module")
def trained(workdir):
    """One full train run over the sweep, shared by downstream tests."""
    assert run_cli("train", "--config", workdir["config_path"]) == 0
    return pipeline.ExperimentConfig.from_file(workdir["config_path"])


class TestTrain:
    def test_checkpoints_and_logs_per_lambda(self, trained):
        for lam in (0.0, 0.1):
            assert trained.checkpoint_path(lam).is_file()
            log_lines = trained.log_path(lam).read_text().splitlines()
            records = [json.loads(l) for l in log_lines]
            epochs = [r for r in records if "epoch" in r]
            assert len(epochs) == 3
            assert epochs[-1]["k"] >= 1

    def test_distinct_regularizer_trajectories(self, trained):
        trajs = {}
        for lam in (0.0, 0.1):
            records = [json.loads(l) for l in trained.log_path(lam).read_text().splitlines()]
            trajs[lam] = [r["reg_value"] for r in records if "epoch" in r]
        assert trajs[0.0] != trajs[0.1]
        assert trajs[0.1][-1] < trajs[0.0][-1]

    def test_beats_unigram_baseline(self, workdir, trained):
        # unigram cross-entropy of the validation split is the oracle bound
        train_tokens = bl.tokenize(Path(workdir["config"]["corpus"]["train"]).read_bytes(), "ptb")
        valid_tokens = bl.tokenize(Path(workdir["config"]["corpus"]["valid"]).read_bytes(), "ptb")
        vocab = bl.build_vocab(train_tokens)
        probs = vocab.counts / vocab.counts.sum()
        ids = vocab.encode(valid_tokens)
        unigram_ppl = math.exp(-np.mean(np.log(probs[ids])))
        records = [json.loads(l) for l in trained.log_path(0.0).read_text().splitlines()]
        val_ppl = [r["val_ppl"] for r in records if "epoch" in r][-1]
        assert val_ppl < unigram_ppl

    def test_divergent_lambda_exit_3(self, workdir, tmp_path, capsys):
        cfg = dict(workdir["config"], lambdas=[1e6], out_dir=str(tmp_path / "div"))
        path = tmp_path / "div.json"
        path.write_text(json.dumps(cfg))
        assert run_cli("train", "--config", path) == 3
        parsed = pipeline.ExperimentConfig.from_file(path)
        assert parsed.log_path(1e6).exists()  # partial log preserved

    def test_single_lambda_flag(self, workdir, tmp_path):
        out = tmp_path / "single"
        assert run_cli("train", "--config", workdir["config_path"], "--out", out,
                       "--lambda", "0.1") == 0
        parsed = pipeline.ExperimentConfig.from_file(workdir["config_path"])
        parsed.out_dir = out
        assert parsed.checkpoint_path(0.1).is_file()
        assert not parsed.checkpoint_path(0.0).exists()


class TestGenerateAndEvaluate:
    def test_generate_files_readable(self, workdir, trained):
        assert run_cli("generate", "--config", workdir["config_path"]) == 0
        model = bl.load_checkpoint(trained.checkpoint_path(0.0))
        for lam in (0.0, 0.1):
            text = trained.generated_path(lam).read_text()
            stream = bl.TokenStream.from_tokens(
                bl.tokenize(text, "cased"), model.vocab, "reread"
            )
            assert len(stream) > 30 * 20

    def test_missing_checkpoint_exit_2_lists_lambda(self, workdir, tmp_path, capsys):
        cfg = dict(workdir["config"], lambdas=[0.7], out_dir=str(tmp_path / "nockpt"))
        path = tmp_path / "nockpt.json"
        path.write_text(json.dumps(cfg))
        assert run_cli("evaluate", "--config", path) == 2
        assert "0.7" in capsys.readouterr().err

    def test_evaluate_report_shape_and_schema(self, workdir, trained):
        assert run_cli("evaluate", "--config", workdir["config_path"]) == 0
        report = json.loads(trained.report_path().read_text())
        assert [row["lambda"] for row in report["rows"]] == [0.0, 0.1]
        for row in report["rows"]:
            for label in ("fixed", "infinite"):
                assert set(row[label]) == {"mu", "sigma", "beta"}
                assert row[label]["mu"] >= 0 and row[label]["sigma"] >= 0
            assert row["ppl"] > 1
        import jsonschema

        schema = json.loads(pipeline.report_schema_path().read_text())
        jsonschema.validate(report, schema)
        assert (trained.out_dir / "report.csv").is_file()
        assert (trained.out_dir / "scores_gen_lambda0.1_fixed.csv").is_file()

    def test_evaluate_deterministic(self, workdir, trained, tmp_path):
        # a fresh out dir with only checkpoints and logs reproduces the report
        import shutil

        clone = tmp_path / "clone"
        shutil.copytree(trained.out_dir / "checkpoints", clone / "checkpoints")
        shutil.copytree(trained.out_dir / "logs", clone / "logs")
        assert run_cli("evaluate", "--config", workdir["config_path"],
                       "--out", clone) == 0
        a = tree_bytes(trained.out_dir)
        b = tree_bytes(clone)
        drop = {k for k in a if k.startswith("checkpoints") or k.startswith("logs")}
        for key in set(a) - drop:
            assert a[key] == b[key], key

    def test_identical_generated_text_gives_constant_rows(self, workdir, trained, tmp_path):
        import shutil

        clone = tmp_path / "const"
        shutil.copytree(trained.out_dir / "checkpoints", clone / "checkpoints")
        shutil.copytree(trained.out_dir / "logs", clone / "logs")
        parsed = pipeline.ExperimentConfig.from_file(workdir["config_path"])
        parsed.out_dir = clone
        fixture_text = trained.generated_path(0.0).read_text()
        for lam in (0.0, 0.1):
            parsed.generated_path(lam).parent.mkdir(parents=True, exist_ok=True)
            parsed.generated_path(lam).write_text(fixture_text)
        assert run_cli("evaluate", "--config", workdir["config_path"],
                       "--out", clone) == 0
        report = json.loads(parsed.report_path().read_text())
        rows = report["rows"]
        for label in ("fixed", "infinite"):
            assert rows[0][label] == rows[1][label]


class TestReportCommand:
    def test_report_prints_table(self, workdir, trained, capsys):
        assert run_cli("report", "--config", workdir["config_path"]) == 0
        out = capsys.readouterr().out
        assert "lambda" in out and "train" in out
        assert "fixed:mu" in out

    def test_report_without_evaluate_exit_2(self, workdir, tmp_path):
        assert run_cli("report", "--config", workdir["config_path"],
                       "--out", tmp_path / "empty") == 2


class TestSeedSeparation:
    def test_different_seeds_different_outputs(self, workdir, tmp_path):
        outs = []
        for seed in (1, 2):
            out = tmp_path / f"s{seed}"
            assert run_cli("train", "--config", workdir["config_path"], "--out", out,
                           "--seed", seed, "--lambda", "0.0") == 0
            parsed = pipeline.ExperimentConfig.from_file(workdir["config_path"])
            parsed.out_dir = out
            parsed.seed = seed
            outs.append(parsed.checkpoint_path(0.0).read_bytes())
        assert outs[0] != outs[1]
