import json

import pytest

from conftest import SMALL
from webly.cli import main


def argv(fx, out, *extra):
    args = ["--concept", "horse", "--corpus", str(fx.corpus), "--docs", str(fx.docs),
            "--images", str(fx.images), "--negatives", str(fx.negatives), "--out", str(out)]
    for k, v in SMALL.items():
        args += ["--" + k.replace("_", "-"), str(v)]
    return args + list(extra)


def test_run_and_report(small_fixture, tmp_path, capsys):
    assert main(["run"] + argv(small_fixture, tmp_path, "--seed", "7")) == 0
    assert "seed: 7" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["config"]["svm_epochs"] == 100
    assert main(["report", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "concept:" in out and "fetched" in out


def test_two_stage_equals_run(small_fixture, tmp_path):
    assert main(["run"] + argv(small_fixture, tmp_path / "a")) == 0
    assert main(["variations"] + argv(small_fixture, tmp_path / "b")) == 0
    assert main(["images", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


@pytest.mark.parametrize("args", [[], ["run"], ["run", "--seed", "x"], ["frobnicate"]])
def test_usage_errors(args, capsys):
    assert main(args) == 1
    assert "usage:" in capsys.readouterr().err


def test_bad_config(tmp_path, small_fixture):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nope": 1}))
    assert main(["run", "--config", str(cfg)] + argv(small_fixture, tmp_path)) == 1


def test_config_file(tmp_path, small_fixture):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5}))
    assert main(["variations", "--config", str(cfg)] + argv(small_fixture, tmp_path)) == 0
    assert json.loads((tmp_path / "variations.json").read_text())["seed"] == 5


def test_missing_corpus(small_fixture, tmp_path, capsys):
    args = argv(small_fixture, tmp_path)
    args[args.index("--corpus") + 1] = "/nope/corpus.ngrams"
    assert main(["run"] + args) == 2
    assert "/nope/corpus.ngrams" in capsys.readouterr().err


def test_no_surviving_variations(small_fixture, tmp_path, capsys):
    args = argv(small_fixture, tmp_path)
    args[args.index("--concept") + 1] = "zebra"
    assert main(["run"] + args) == 2
    assert "'discover'" in capsys.readouterr().err


def test_report_without_outputs(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 2
