import json

import numpy as np
import pytest

from emmixformer import cli, selfcheck
from emmixformer.config import RunConfig, parse_config
from emmixformer.attention import ConfigError
from emmixformer.data import load_csv
from emmixformer.numerics import Tensor

TINY = """\
# tiny model for smoke tests
epochs = 2
window_length = 128
window_stride = 128
cnn_channels = 4, 6, 8, 8
heads = 2
lstm_tokens = 4
"""


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--subjects", "4", "--sessions", "2", "--duration", "12", "--seed", "3",
                     "--out", str(out)]) == 0
    return out / "recordings.csv"


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def test_synth_counts_and_manifest(synth_csv):
    recs = load_csv(synth_csv)
    assert len(recs) == 8
    manifest = json.loads((synth_csv.parent / "manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 3
    assert str(synth_csv) in manifest["outputs"]


def test_synth_rows_per_recording(tmp_path):
    assert cli.main(["synth", "--subjects", "1", "--sessions", "1", "--rate", "50", "--duration", "10",
                     "--out", str(tmp_path)]) == 0
    assert len(load_csv(tmp_path / "recordings.csv")[0]) == 500


def test_synth_same_seed_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["synth", "--subjects", "2", "--duration", "5", "--seed", "11",
                         "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "recordings.csv").read_bytes() == (tmp_path / "b" / "recordings.csv").read_bytes()


def test_seed_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "11")
    assert cli.main(["synth", "--subjects", "2", "--duration", "5", "--out", str(tmp_path / "env")]) == 0
    monkeypatch.delenv(cli.SEED_ENV)
    assert cli.main(["synth", "--subjects", "2", "--duration", "5", "--seed", "11",
                     "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "recordings.csv").read_bytes() == (tmp_path / "flag" / "recordings.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["synth", "--subjects", "0", "--out", "x"],
    ["synth", "--subjects", "two", "--out", "x"],
    ["synth", "--rate", "-5", "--out", "x"],
    ["train"],
    ["frobnicate"],
    ["gradcheck", "--modules", "nope"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        code = cli.main(argv)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_bad_config_is_usage_error(tmp_path, synth_csv):
    bad = tmp_path / "bad.cfg"
    bad.write_text("epochs = many\n")
    assert cli.main(["train", "--data", str(synth_csv), "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_train_then_eval(tmp_path, synth_csv, tiny_config):
    out = tmp_path / "run"
    assert cli.main(["train", "--data", str(synth_csv), "--config", str(tiny_config), "--out", str(out)]) == 0
    assert (out / "model.ckpt").exists() and (out / "model_log.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train" and str(out / "model.ckpt") in manifest["outputs"]
    assert parse_config(manifest["config"]["config"]).train.epochs == 2
    report = tmp_path / "eval" / "report.txt"
    assert cli.main(["eval", "--model", str(out / "model.ckpt"), "--data", str(synth_csv),
                     "--report", str(report)]) == 0
    text = report.read_text()
    assert text.startswith("eer=") and "n_impostor=" in text
    assert (report.parent / "roc.csv").exists() and (report.parent / "manifest.json").exists()


def test_eval_errors(tmp_path, synth_csv, tiny_config):
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"garbage")
    assert cli.main(["eval", "--model", str(junk), "--data", str(synth_csv), "--report", str(tmp_path / "r")]) == 2
    out = tmp_path / "run"
    assert cli.main(["train", "--data", str(synth_csv), "--config", str(tiny_config), "--out", str(out)]) == 0
    other = tmp_path / "other"
    assert cli.main(["synth", "--subjects", "3", "--duration", "12", "--out", str(other)]) == 0
    assert cli.main(["eval", "--model", str(out / "model.ckpt"), "--data", str(other / "recordings.csv"),
                     "--report", str(tmp_path / "r2")]) == 2


def test_missing_data_file_is_data_error(tmp_path, tiny_config):
    assert cli.main(["train", "--data", str(tmp_path / "none.csv"), "--config", str(tiny_config),
                     "--out", str(tmp_path)]) == 2


def test_gradcheck_passes_for_recurrent_cells(capsys):
    assert cli.main(["gradcheck", "--modules", "attlstm"]) == 0
    out = capsys.readouterr().out
    assert "attention.cell.q_c" in out and "FAIL" not in out


def test_gradcheck_detects_a_wrong_gradient(monkeypatch, capsys):
    def broken(seed):
        # x**2 with a backward pass that is off by 1 %
        x = Tensor(np.random.default_rng(seed).standard_normal(5), requires_grad=True)

        def loss():
            return Tensor._make(x.data**2, (x,), lambda g: (g * 2.02 * x.data,)).sum()

        from emmixformer.numerics import check_gradients
        return check_gradients(loss, {"x": x})

    monkeypatch.setitem(selfcheck.SUITES, "broken", broken)
    assert cli.main(["gradcheck", "--modules", "broken"]) == cli.EXIT_NUMERIC
    assert "FAIL" in capsys.readouterr().out


def test_config_round_trip_and_errors():
    cfg = parse_config(TINY + "ablation = lstm_transformer\nseed = 4\n")
    assert cfg.model.mix.lstm_kind == "peephole" and cfg.seed == 4
    assert parse_config(cfg.to_text()) == cfg
    assert parse_config("") == RunConfig(seed=None)
    assert parse_config("ablation = siamese_cnn").model.mix is None
    assert parse_config("enable_fourier = no").model.mix.enable_fourier is False
    for bad in ("nonsense", "colour = red", "ablation = resnet", "window_length = 100",
                "ablation = siamese_cnn\nenable_fourier = yes", "heads = 3", "lr = -1"):
        with pytest.raises(ConfigError):
            parse_config(bad)
