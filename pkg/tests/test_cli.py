from __future__ import annotations

import json

import pytest

from fewshot_icsf.cli import build_parser, main
from fewshot_icsf.toy import write_toy_workspace


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    paths = write_toy_workspace(root / "raw", seed=0, dim=6, per_intent=24)
    assert main(["prepare-splits", "--data", str(paths["corpus"]), "--splits", str(paths["splits"]),
                 "--out", str(root / "splits")]) == 0
    return root, paths


def write_config(root, folder, name, algorithm, out):
    cfg = {"algorithm": algorithm, "k_max": 20, "datasets": ["toy"], "epochs": 1, "episodes_per_epoch": 3,
           "baseline_batch": 32, "encoder": {"hidden_dim": 4},
           "paths": {"data": str(root / "splits"), "embeddings": str(root / "raw" / "embeddings.txt"),
                     "output": str(out)}}
    path = folder / name
    path.write_text(json.dumps(cfg))
    return path


def test_prepare_splits_outputs(workspace):
    root, _ = workspace
    names = sorted(p.name for p in (root / "splits").iterdir())
    assert names == ["stats.json", "stats.txt", "toy.test.txt", "toy.train.txt"]
    stats = json.loads((root / "splits" / "stats.json").read_text())
    assert stats["toy"]["train"]["intents"] == 5 and stats["toy"]["test"]["intents"] == 3
    assert stats["toy"]["total"]["utterances"] == 8 * 24


def test_sample_is_byte_identical(workspace, tmp_path):
    root, _ = workspace
    split = str(root / "splits" / "toy.train.txt")
    for name in ("a", "b"):
        assert main(["sample", "--split", split, "--kmax", "20", "--count", "100", "--seed", "7",
                     "--out", str(tmp_path / f"{name}.jsonl")]) == 0
    a = (tmp_path / "a.jsonl").read_bytes()
    assert a == (tmp_path / "b.jsonl").read_bytes() and a.count(b"\n") == 100
    first = json.loads(a.splitlines()[0])
    assert {"support", "query", "trace"} <= set(first)


@pytest.mark.parametrize("algorithm", ["proto", "fomaml", "finetune"])
def test_train_and_eval_are_byte_identical(workspace, tmp_path, algorithm):
    root, _ = workspace
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        cfg = write_config(root, tmp_path, f"{run}.json", algorithm, out)
        assert main(["train", "--config", str(cfg), "--seeds", "0,1"]) == 0
        ckpt = out / f"{algorithm}-k20-toy-seed{{seed}}.ckpt"
        assert main(["eval", "--checkpoint", str(ckpt), "--split", str(root / "splits" / "toy.test.txt"),
                     "--episodes", "3", "--seeds", "0,1", "--out", str(out / "results.csv")]) == 0
        outputs.append(out)
    for name in (f"{algorithm}-k20-toy-seed0.ckpt", f"{algorithm}-k20-toy-seed1.ckpt",
                 f"{algorithm}-k20-toy-seed0.ckpt.meta.json", "results.csv", "results.txt"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes(), name
    assert main(["report", "--in", str(outputs[0]), "--out", str(tmp_path / "merged.csv")]) == 0
    assert (tmp_path / "merged.csv").read_text().count("\n") == 2


def test_missing_config_is_io_error(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["train", "--config", str(missing), "--seeds", "0"]) == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_is_validation_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"algorithm": "nope"}))
    assert main(["train", "--config", str(path), "--seeds", "0"]) == 1
    assert "ConfigError" in capsys.readouterr().err


def test_bad_usage(capsys):
    assert main(["sample", "--split", "x"]) == 1
    assert main(["train", "--config", "x.json"]) == 1  # seeds are mandatory
    assert main(["frobnicate"]) == 1
    assert main(["gradcheck", "--unknown-flag"]) == 1


def test_gradcheck_succeeds(capsys):
    assert main(["gradcheck", "--trials", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.endswith("ok") for line in lines)


@pytest.mark.parametrize("command", ["prepare-splits", "sample", "train", "eval", "gradcheck", "report"])
def test_help_lists_flags_and_defaults(command, capsys):
    assert main([command, "--help"]) == 0
    text = capsys.readouterr().out
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command").choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
    if command == "train":
        assert "inner_lr=0.01" in text and "0.0029" in text and "baseline_batch=512" in text
    if command == "eval":
        assert "(default: 100)" in text
