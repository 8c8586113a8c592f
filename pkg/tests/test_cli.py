import json
import os

import pytest

from watune.cli import main
from watune.config import ExperimentConfig, save_config
from watune.datagen import file_hash, load_dataset


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    """A scaled-down experiment so CLI runs stay fast."""
    d = tmp_path_factory.mktemp("cli")
    cfg = ExperimentConfig(seed=1)
    cfg.dataset.logs_per_session = 60
    cfg.train.epochs = 1
    cfg.train.layers = 1
    p = d / "config.json"
    save_config(p, cfg)
    return str(p)


@pytest.fixture(scope="module")
def gen_dir(tiny_config, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("artifacts"))
    assert main(["--config", tiny_config, "gen", "--out", out]) == 0
    return out


def test_gen_outputs(gen_dir):
    names = set(os.listdir(gen_dir))
    assert {"train.jsonl", "test.jsonl", "ood.jsonl", "config.json", "manifest.json"} <= names
    with open(os.path.join(gen_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    assert manifest["counts"]["in_distribution"] == 16 * 60
    assert manifest["counts"]["train"] + manifest["counts"]["test"] == 16 * 60
    assert manifest["counts"]["ood"] == 16 * 60
    for k in ("train", "test", "ood"):
        path = os.path.join(gen_dir, f"{k}.jsonl")
        assert manifest["hashes"][k] == file_hash(path)
        assert len(load_dataset(path)) == manifest["counts"][k]


def test_gen_deterministic(tiny_config, gen_dir, tmp_path):
    out2 = str(tmp_path / "again")
    assert main(["--config", tiny_config, "gen", "--out", out2]) == 0
    with open(os.path.join(out2, "manifest.json")) as fh:
        m2 = json.load(fh)
    with open(os.path.join(gen_dir, "manifest.json")) as fh:
        m1 = json.load(fh)
    # same seed + config => byte-identical dataset files
    assert m1["hashes"] == m2["hashes"]


def test_train_and_eval_head(tiny_config, gen_dir, tmp_path, capsys):
    ckpt = str(tmp_path / "head.ckpt.json")
    assert main(["--config", tiny_config, "train", "--data", gen_dir,
                 "--loss", "kl", "--layers", "1", "--out", ckpt]) == 0
    assert os.path.exists(ckpt)
    rep_path = str(tmp_path / "report.json")
    assert main(["--config", tiny_config, "eval", "--data", gen_dir,
                 "--policy", "head", "--checkpoint", ckpt, "--out", rep_path]) == 0
    with open(rep_path) as fh:
        rep = json.load(fh)
    assert "head" in rep
    assert rep["head"]["n_samples"] > 0


def test_train_dpo_requires_ref(tiny_config, gen_dir, tmp_path, capsys):
    ckpt = str(tmp_path / "dpo.ckpt.json")
    assert main(["--config", tiny_config, "train", "--data", gen_dir,
                 "--loss", "dpo", "--out", ckpt]) == 1
    assert "requires --ref" in capsys.readouterr().err


def test_eval_baselines_and_slices(tiny_config, gen_dir, capsys):
    assert main(["--config", tiny_config, "eval", "--data", gen_dir,
                 "--policy", "oracle"]) == 0
    agg = json.loads(capsys.readouterr().out)["oracle"]
    assert main(["--config", tiny_config, "eval", "--data", gen_dir,
                 "--policy", "rule", "--scenario", "coop"]) == 0
    coop = json.loads(capsys.readouterr().out)["rule"]
    # cooperative slice = 4 of the 16 scenarios
    assert coop["n_samples"] == agg["n_samples"] // 4
    assert main(["--config", tiny_config, "eval", "--data", gen_dir,
                 "--policy", "fix-rt-iv", "--ood"]) == 0
    assert json.loads(capsys.readouterr().out)["fix-rt-iv"]["n_samples"] == 16 * 60


def test_eval_unknown_policy(tiny_config, gen_dir, capsys):
    assert main(["--config", tiny_config, "eval", "--data", gen_dir,
                 "--policy", "bogus"]) == 1
    assert "unknown policy" in capsys.readouterr().err


def test_eval_missing_data(tiny_config, tmp_path, capsys):
    assert main(["--config", tiny_config, "eval", "--data", str(tmp_path),
                 "--policy", "oracle"]) == 1
    assert "run `watune gen` first" in capsys.readouterr().err


def test_replay(tiny_config, gen_dir, capsys):
    assert main(["--config", tiny_config, "replay", "--data", gen_dir,
                 "--policies", "oracle,rule,fix-bulk-bg",
                 "--scenario", "night/pubHighSubLow", "--steps", "4"]) == 0
    out = capsys.readouterr().out
    assert out.count("step ") == 4
    assert out.count("oracle") == 4 and out.count("rule") == 4
    assert "night" in out


def test_replay_bad_scenario(tiny_config, gen_dir, capsys):
    assert main(["--config", tiny_config, "replay", "--data", gen_dir,
                 "--policies", "oracle", "--scenario", "noon"]) == 1
    assert "bad scenario" in capsys.readouterr().err


def test_compare_end_to_end_and_hash_guard(tiny_config, tmp_path, capsys):
    out = str(tmp_path / "cmp")
    assert main(["--config", tiny_config, "compare", "--out", out]) == 0
    capsys.readouterr()
    table = open(os.path.join(out, "compare.tsv")).read()
    lines = table.strip().split("\n")
    assert lines[0].startswith("# config_hash:")
    assert len(lines) == 2 + 8  # comment + header + 8 policy rows
    assert os.path.exists(os.path.join(out, "compare_full.tsv"))

    # rerun with cached artifacts is byte-identical
    before = {f: file_hash(os.path.join(out, f)) for f in os.listdir(out)}
    assert main(["--config", tiny_config, "compare", "--out", out]) == 0
    capsys.readouterr()
    after = {f: file_hash(os.path.join(out, f)) for f in os.listdir(out)}
    assert before == after

    # a different seed must refuse the stale artifacts
    assert main(["--config", tiny_config, "--seed", "2", "compare", "--out", out]) == 1
    assert "remove" in capsys.readouterr().err
