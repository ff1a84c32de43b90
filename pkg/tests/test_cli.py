import json
import os

import numpy as np
import pytest

from emoctc import cli, dataset


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1]) if out else None


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("clidata")
    corpus = dataset.generate_synthetic_corpus(seed=3, n_per_class=3)
    dataset.save_manifest(corpus, str(out))
    return out


def test_synth_data(tmp_path, capsys):
    code, body = run(capsys, "synth-data", "--seed", "7",
                     "--per-class", "2", "--out", str(tmp_path / "d"))
    assert code == 0
    assert body["utterances"] == 8
    assert os.path.exists(body["manifest"])
    assert len(os.listdir(tmp_path / "d" / "audio")) == 8


def test_force_refusal_and_override(tmp_path, capsys):
    args = ("synth-data", "--seed", "7", "--per-class", "1",
            "--out", str(tmp_path / "d"))
    assert run(capsys, *args)[0] == 0
    code, body = run(capsys, *args)
    assert code == 1 and "error" in body
    assert run(capsys, *args, "--force")[0] == 0


def test_features_command(data_dir, tmp_path, capsys):
    out = tmp_path / "feats.bin"
    code, body = run(capsys, "features",
                     "--manifest", str(data_dir / "manifest.jsonl"),
                     "--out", str(out))
    assert code == 0
    assert body["utterances"] == 12 and body["dim"] == 34
    from emoctc.features import load_feature_dump
    seqs, unified = load_feature_dump(str(out))
    assert unified == 78 and len(seqs) == 12


def test_train_decode_dummy_and_framewise(data_dir, tmp_path, capsys):
    manifest = str(data_dir / "manifest.jsonl")
    dummy = str(tmp_path / "dummy.json")
    code, _ = run(capsys, "train", "--method", "dummy",
                  "--manifest", manifest, "--out", dummy, "--seed", "0")
    assert code == 0
    code, body = run(capsys, "decode", "--model", dummy,
                     "--manifest", manifest)
    assert code == 0
    assert len(set(body["predictions"].values())) == 1  # constant model

    forest = str(tmp_path / "forest.json")
    code, _ = run(capsys, "train", "--method", "framewise",
                  "--manifest", manifest, "--out", forest, "--seed", "0")
    assert code == 0
    code, body = run(capsys, "decode", "--model", forest,
                     "--manifest", manifest)
    assert code == 0
    # forest fits its own (separable) training data well
    hits = sum(uid.split("-")[1] == label
               for uid, label in body["predictions"].items())
    assert hits >= 9


def test_train_decode_nn(data_dir, tmp_path, capsys):
    manifest = str(data_dir / "manifest.jsonl")
    model = str(tmp_path / "net.npz")
    code, body = run(capsys, "train", "--method", "onelabel",
                     "--manifest", manifest, "--out", model,
                     "--seed", "1", "--epochs", "2", "--hidden", "6")
    assert code == 0 and body["epochs_run"] == 2
    out_json = str(tmp_path / "preds.json")
    code, body = run(capsys, "decode", "--model", model,
                     "--manifest", manifest, "--out", out_json)
    assert code == 0
    with open(out_json) as fh:
        saved = json.load(fh)
    assert saved == body["predictions"]
    assert set(saved.values()) <= set(dataset.EMOTIONS)


def test_crossval_and_report(data_dir, tmp_path, capsys):
    rep = str(tmp_path / "rep")
    code, body = run(capsys, "crossval",
                     "--manifest", str(data_dir / "manifest.jsonl"),
                     "--methods", "dummy", "--seed", "2", "--out", rep)
    assert code == 0 and "dummy" in body["methods"]
    code, body = run(capsys, "report", "--report-dir", rep)
    assert code == 0
    assert body["table1"][0]["method"] == "dummy"


def test_gradcheck_command(capsys):
    code, body = run(capsys, "gradcheck", "--seed", "3", "--samples", "10")
    assert code == 0
    assert body["pass"] is True and body["max_rel_err"] <= 1e-4


def test_config_file_defaults_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(f'seed = 7\nper_class = 1\nout = "{tmp_path}/a"\n')
    code, body = run(capsys, "synth-data", "--config", str(cfg))
    assert code == 0 and body["seed"] == 7 and body["utterances"] == 4
    # explicit flags beat the config file
    code, body = run(capsys, "synth-data", "--config", str(cfg),
                     "--out", str(tmp_path / "b"))
    assert code == 0 and os.path.isdir(tmp_path / "b")


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--method", "bogus", "--manifest", "m",
                  "--out", "o", "--seed", "0"])
    assert exc.value.code == 2


def test_runtime_errors_exit_1(tmp_path, capsys):
    code, body = run(capsys, "features",
                     "--manifest", str(tmp_path / "missing.jsonl"),
                     "--out", str(tmp_path / "f.bin"))
    assert code == 1 or body is None


def test_thread_env_var(monkeypatch):
    monkeypatch.setenv("EMOCTC_THREADS", "3")
    assert cli._max_workers() == 3
    monkeypatch.delenv("EMOCTC_THREADS")
    assert cli._max_workers() >= 1
