import json

import pytest
import yaml

from mgtd.cli import main
from mgtd.corpus import MONO, MULTI, CorpusVersion, Document, load_corpus, read_predictions, save_version, write_documents


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def corpus(tmp_path):
    assert run("synth", "--output", tmp_path / "data", "--seed", 1, "--n-train", 160, "--n-dev", 40) == 0
    return tmp_path / "data" / "train.jsonl", tmp_path / "data" / "dev.jsonl"


def test_errors_are_json_on_stderr(tmp_path, capsys):
    assert run("clean", "--input", tmp_path / "missing.jsonl", "--output", tmp_path / "o.jsonl") == 1
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "FileNotFoundError"


def test_training_requires_seed(corpus, tmp_path, capsys):
    train, dev = corpus
    assert run("train", "--train", train, "--dev", dev, "--output", tmp_path / "m.safetensors") == 1
    assert "--seed" in json.loads(capsys.readouterr().err)["message"]


def test_clean_and_manifest(tmp_path, capsys):
    src = tmp_path / "in.jsonl"
    write_documents([Document("a", "Visit http://x.co now"), Document("b", "http://gone.com")], src)
    out = tmp_path / "out.jsonl"
    assert run("clean", "--input", src, "--output", out) == 0
    assert [d.text for d in load_corpus(out)] == ["Visit now"]
    manifest = json.loads((tmp_path / "out.jsonl.manifest.json").read_text())
    assert set(manifest) >= {"config_hash", "inputs", "seed", "version", "command"}
    assert list(manifest["inputs"]) == [str(src)]
    assert manifest["summary"]["documents_emptied"] == 1


def test_config_file_with_flag_override(corpus, tmp_path, capsys):
    train, dev = corpus
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"train": str(train), "dev": str(dev), "seed": 3, "epochs": 2,
                                   "training": {"batch_size": 32}}))
    out = tmp_path / "m.safetensors"
    assert run("train", "--config", cfg, "--epochs", 1, "--output", out) == 0
    result = json.loads(capsys.readouterr().out)
    assert len(result["history"]) == 1
    manifest = json.loads((tmp_path / "m.safetensors.manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config"]["config_data"]["training"] == {"batch_size": 32}


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("evaluate", "--config", cfg) == 1
    assert "bogus" in capsys.readouterr().err


def test_train_predict_stack_evaluate(corpus, tmp_path, capsys):
    train, dev = corpus
    for name, method in [("lora", "fine-tune+lora"), ("mpu", "mpu")]:
        assert run("train", "--train", train, "--dev", dev, "--seed", 0, "--epochs", 1, "--method", method,
                   "--output", tmp_path / f"{name}.safetensors") == 0
    assert run("predict", "--model", tmp_path / "mpu.safetensors", "--input", dev,
               "--output", tmp_path / "p.jsonl", "--logits", tmp_path / "logits.json") == 0
    assert len(read_predictions(tmp_path / "p.jsonl")) == 40
    assert run("stack", "--models", tmp_path / "lora.safetensors", tmp_path / "mpu.safetensors", "--dev", dev,
               "--seed", 0, "--epochs", 5, "--output", tmp_path / "stack.json",
               "--input", dev, "--predictions", tmp_path / "sp.jsonl") == 0
    capsys.readouterr()
    assert run("evaluate", "--predictions", tmp_path / "sp.jsonl", "--gold", dev,
               "--output", tmp_path / "acc.json") == 0
    acc = json.loads(capsys.readouterr().out)["accuracy"]
    assert 0 <= acc <= 1
    assert json.loads((tmp_path / "acc.json").read_text())["accuracy"] == acc


def test_augment_with_fake_provider(tmp_path, capsys):
    src = tmp_path / "multi.jsonl"
    write_documents([Document("a", "你好 世界", "zh", 1), Document("b", "hello", "en", 0)], src)
    out = tmp_path / "bt.jsonl"
    assert run("augment", "--input", src, "--output", out, "--provider", "fake", "--cache", tmp_path / "c.jsonl") == 0
    docs = load_corpus(out)
    assert [(d.id, d.text, d.language) for d in docs] == [("a", "[MT] 世界 你好", "en")]
    assert (tmp_path / "c.jsonl").exists()


def test_build_version_and_stats(tmp_path, capsys):
    v1 = CorpusVersion("v1", {
        (MONO, "train"): [Document("m1", "Mono one.", "en", 0)],
        (MONO, "dev"): [Document("d2", "Dev two.", "en", 1)],
        (MULTI, "train"): [Document("d1", "One.", "en", 0), Document("d2", "Dev two.", "en", 1)],
        (MULTI, "dev"): [Document("x", "Xx.", "bg", 1)],
    })
    save_version(v1, tmp_path / "v1")
    write_documents([Document("t1", "[MT] translated", "en", 1)], tmp_path / "bt.jsonl")
    assert run("build-version", "--v1", tmp_path / "v1", "--translated", tmp_path / "bt.jsonl", "--plan", "v3",
               "--output", tmp_path / "v3") == 0
    sizes = json.loads(capsys.readouterr().out)
    assert sizes[f"{MONO}/train"] == 3 and sizes[f"{MULTI}/train"] == 2
    assert (tmp_path / "v3" / "manifest.json").exists()
    assert run("stats", "--version-dir", tmp_path / "v3", "--output", tmp_path / "stats.jsonl") == 0
    assert f"{MONO}/train" in capsys.readouterr().out
    assert len((tmp_path / "stats.jsonl").read_text().splitlines()) == 4


def test_relabel(tmp_path):
    src = tmp_path / "b.jsonl"
    write_documents([Document(str(i), "t", source=s) for i, s in enumerate(["human"] * 5 + ["dolly"] * 2)], src)
    assert run("relabel", "--input", src, "--output", tmp_path / "r.jsonl", "--cap", 3, "--seed", 0) == 0
    labels = sorted(d.label for d in load_corpus(tmp_path / "r.jsonl"))
    assert labels == [0, 0, 0, 5, 5]


def test_ovr_command(tmp_path, capsys):
    assert run("synth", "--output", tmp_path / "b", "--seed", 0, "--classes", 6, "--n-train", 120, "--n-dev", 30) == 0
    assert run("ovr", "--train", tmp_path / "b" / "train.jsonl", "--dev", tmp_path / "b" / "dev.jsonl", "--seed", 0,
               "--epochs", 1, "--output", tmp_path / "ovr", "--input", tmp_path / "b" / "dev.jsonl",
               "--predictions", tmp_path / "op.jsonl") == 0
    assert len(list((tmp_path / "ovr").glob("class-*.safetensors"))) == 6
    assert json.loads(capsys.readouterr().out)["classifiers"] == 6


def test_ablate_with_runs_section(corpus, tmp_path, capsys):
    train, dev = corpus
    cfg = tmp_path / "ablate.yaml"
    cfg.write_text(yaml.safe_dump({"runs": [
        {"label": "base", "method": "fine-tune"},
        {"label": "stack", "method": "stacking", "members": ["base"], "stack": {"epochs": 3}},
    ]}))
    assert run("ablate", "--config", cfg, "--train", train, "--dev", dev, "--seed", 0, "--epochs", 1,
               "--output", tmp_path / "abl") == 0
    rows = [json.loads(l) for l in (tmp_path / "abl" / "table.jsonl").read_text().splitlines()]
    assert [r["label"] for r in rows] == ["base", "stack"]
    assert (tmp_path / "abl" / "table.txt").read_text() in capsys.readouterr().out
