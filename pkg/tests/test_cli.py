import json
from pathlib import Path

import numpy as np
import pytest

from limbhar import cli, kernels
from limbhar.autodiff.checkpoint import load_checkpoint
from limbhar.dataset import FILE_PATTERN

TINY = """\
synth: {n_subjects: 8, n_channels: 3, duration_s: 3.0}
models:
  - {kind: DNN, widths: [8]}
  - {kind: CNN, widths: [4, 4, 4], kernel_widths: [3, 3]}
  - {kind: CNN_LSTM, widths: [4, 4], kernel_widths: [3]}
  - {kind: LSTM_CNN, widths: [4, 4], kernel_widths: [3]}
  - {kind: LSTM, widths: [4, 4]}
  - {kind: LSTM_AE, widths: [4, 3]}
train: {max_epochs: 2, lr: 1e-3}
folds: {k: 4, n_val: 2, seed: 0}
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY)
    return str(path)


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("cmd", ["synth", "ingest", "train", "crossval", "gradcheck", "report"])
def test_every_subcommand_has_help(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([cmd, "--help"])
    assert exc.value.code == 0
    assert "usage: limbhar" in capsys.readouterr().out


def test_synth_writes_every_recording_once(tiny, tmp_path):
    out = tmp_path / "data"
    assert cli.main(["synth", "--config", tiny, "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert all(FILE_PATTERN.match(n) for n in names)
    # 8 subjects x 8 activities x 1 trial, for each modality
    assert len(names) == 2 * 8 * 8
    assert sum(n.endswith("_imu.csv") for n in names) == 64


def test_synth_is_deterministic(tiny, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["synth", "--config", tiny, "--out", str(a)])
    cli.main(["synth", "--config", tiny, "--out", str(b)])
    assert _tree(a) == _tree(b)


def test_synth_refuses_to_overwrite(tiny, tmp_path, capsys):
    out = tmp_path / "data"
    cli.main(["synth", "--config", tiny, "--out", str(out)])
    before = _tree(out)
    assert cli.main(["synth", "--config", tiny, "--out", str(out)]) == cli.EXIT_REFUSED
    assert "--force" in capsys.readouterr().err
    assert _tree(out) == before
    assert cli.main(["synth", "--config", tiny, "--out", str(out), "--force"]) == 0
    assert _tree(out) == before


def test_ingest_summarises_csvs(tiny, tmp_path):
    data, summary = tmp_path / "data", tmp_path / "summary.json"
    cli.main(["synth", "--config", tiny, "--out", str(data), "--modality", "imu"])
    assert cli.main(["ingest", "--data", str(data), "--modality", "imu", "--out", str(summary)]) == 0
    info = json.loads(summary.read_text())["imu"]
    assert info["n_subjects"] == 8 and info["n_recordings"] == 64
    assert info["window_shape"] == [100, 6]
    assert info["sample_rates_hz"] == [50.0]


def test_ingest_without_data_is_a_config_error(capsys):
    assert cli.main(["ingest"]) == cli.EXIT_CONFIG


def test_ingest_of_missing_directory_is_a_data_error(tmp_path):
    assert cli.main(["ingest", "--data", str(tmp_path / "nowhere")]) == cli.EXIT_DATA


def test_ingest_of_empty_directory_reports_zero(tmp_path, capsys):
    assert cli.main(["ingest", "--data", str(tmp_path), "--modality", "imu"]) == 0
    assert "0 recordings" in capsys.readouterr().out


def test_malformed_csv_is_a_data_error(tiny, tmp_path):
    data = tmp_path / "data"
    cli.main(["synth", "--config", tiny, "--out", str(data), "--modality", "imu"])
    victim = sorted(data.iterdir())[0]
    victim.write_text("not,a,valid\nfile\n")
    assert cli.main(["ingest", "--data", str(data), "--modality", "imu"]) == cli.EXIT_DATA


@pytest.mark.parametrize(
    "text",
    [
        "train: {lrr: 0.1}\n",
        "train: {max_epochs: ten}\n",
        "bogus: {}\n",
        "models: [{widths: [3]}]\n",
        "folds: {k: 1}\n",
        "data: {modalities: [sonar]}\n",
        "train: [1, 2\n",
    ],
)
def test_bad_config_exits_2(text, tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert cli.main(["crossval", "--config", str(path), "--out", str(tmp_path / "r")]) == cli.EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_unknown_config_key_is_named(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("train: {lrr: 0.1}\n")
    cli.main(["crossval", "--config", str(path)])
    err = capsys.readouterr().err
    assert "train.lrr" in err and "lr" in err


def test_unknown_architecture_exits_2(tmp_path):
    assert cli.main(["crossval", "--arch", "GRU", "--out", str(tmp_path / "r")]) == cli.EXIT_CONFIG


def test_train_single_fold(tiny, tmp_path):
    out = tmp_path / "r"
    code = cli.main(["train", "--config", tiny, "--arch", "DNN", "--modality", "imu", "--fold", "1", "--out", str(out)])
    assert code == 0
    fold = out / "DNN_imu" / "fold1"
    assert {p.name for p in fold.iterdir()} >= {"model.ckpt", "history.csv", "metrics.json", "confusion.svg"}
    m = json.loads((fold / "metrics.json").read_text())
    assert m["fold"] == 1 and not set(m["test_subjects"]) & set(m["train_subjects"])


def test_train_needs_one_pair(tiny, tmp_path):
    assert cli.main(["train", "--config", tiny, "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["train", "--config", tiny, "--arch", "DNN", "--modality", "imu", "--fold", "9", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    cfg = root / "tiny.yaml"
    cfg.write_text(TINY)
    serial, parallel = root / "serial", root / "parallel"
    assert cli.main(["crossval", "--config", str(cfg), "--out", str(serial), "--workers", "1"]) == 0
    assert cli.main(["crossval", "--config", str(cfg), "--out", str(parallel), "--workers", "2"]) == 0
    return cfg, serial, parallel


def test_crossval_writes_every_pair(sweep):
    _, serial, _ = sweep
    pairs = sorted(p.parent.name for p in serial.glob("*/report.json"))
    assert len(pairs) == 12
    rows = (serial / "comparison.csv").read_text().splitlines()
    assert rows[0] == "architecture,imu,video"
    assert [r.split(",")[0] for r in rows[1:]] == ["DNN", "CNN", "CNN_LSTM", "LSTM_CNN", "LSTM", "LSTM_AE"]
    for pair in (p.parent for p in serial.glob("*/report.json")):
        for k in range(4):
            assert (pair / f"fold{k}" / "history.csv").exists()
    plans = [json.loads((serial / f"folds_{m}.json").read_text()) for m in ("imu", "video")]
    assert plans[0] == plans[1]


def test_crossval_serial_equals_parallel(sweep):
    _, serial, parallel = sweep
    a, b = _tree(serial), _tree(parallel)
    # the echoed config names its own output directory; nothing else may differ
    ca, cb = a.pop("config.yaml").decode(), b.pop("config.yaml").decode()
    assert ca.replace(str(serial), str(parallel)) == cb
    assert a == b


def test_crossval_refuses_nonempty_output(sweep):
    cfg, serial, _ = sweep
    before = _tree(serial)
    assert cli.main(["crossval", "--config", str(cfg), "--out", str(serial)]) == cli.EXIT_REFUSED
    assert _tree(serial) == before


def test_report_rebuilds_identical_tables(sweep, tmp_path):
    _, serial, _ = sweep
    before = _tree(serial)
    assert cli.main(["report", str(serial)]) == 0
    assert _tree(serial) == before


def test_report_on_empty_directory_is_a_data_error(tmp_path):
    assert cli.main(["report", str(tmp_path)]) == cli.EXIT_DATA


def test_crossval_on_user_csvs(tiny, tmp_path):
    data, out = tmp_path / "data", tmp_path / "r"
    cli.main(["synth", "--config", tiny, "--out", str(data), "--modality", "video"])
    code = cli.main(["crossval", "--config", tiny, "--data", str(data), "--modality", "video", "--arch", "DNN", "--out", str(out)])
    assert code == 0
    rep = json.loads((out / "DNN_video" / "report.json").read_text())
    assert rep["modality"] == "video" and len(rep["folds"]) == 4


def test_gradcheck_subset_passes(capsys):
    assert cli.main(["gradcheck", "--seeds", "2", "--only", "tanh", "--only", "lstm_cell"]) == 0
    assert "2/2 checks" in capsys.readouterr().out


def test_gradcheck_unknown_case_exits_2():
    assert cli.main(["gradcheck", "--only", "nope"]) == cli.EXIT_CONFIG


def test_gradcheck_catches_an_injected_gradient_bug(monkeypatch, capsys):
    honest = kernels.lstm_gates_backward

    def off_by_a_bit(*args):
        dz, dc = honest(*args)
        return dz * 1.01, dc

    monkeypatch.setattr(kernels, "lstm_gates_backward", off_by_a_bit)
    assert cli.main(["gradcheck", "--seeds", "1", "--only", "lstm_sequence", "--only", "matmul"]) == cli.EXIT_ACCEPTANCE
    out = capsys.readouterr().out
    assert "lstm_sequence" in out and "FAIL" in out and "1/2 checks" in out


def test_precision_flag_reaches_training(tiny, tmp_path):
    out = tmp_path / "r"
    assert cli.main(["train", "--config", tiny, "--arch", "DNN", "--modality", "imu", "--precision", "float32", "--out", str(out)]) == 0
    _, params = load_checkpoint(out / "DNN_imu" / "fold0" / "model.ckpt")
    assert all(v.dtype == np.float32 for v in params.values())


def test_classifier_is_sized_from_the_data(tmp_path):
    cfg = tmp_path / "five.yaml"
    cfg.write_text("synth: {n_subjects: 8, n_activities: 5, n_channels: 3}\nmodels: [{kind: DNN, widths: [8]}]\ntrain: {max_epochs: 1}\n")
    data, out = tmp_path / "data", tmp_path / "r"
    cli.main(["synth", "--config", str(cfg), "--out", str(data), "--modality", "imu"])
    assert cli.main(["crossval", "--config", str(cfg), "--data", str(data), "--modality", "imu", "--out", str(out)]) == 0
    rep = json.loads((out / "DNN_imu" / "report.json").read_text())
    assert rep["spec"]["n_classes"] == 5 and len(rep["activities"]) == 5
    assert np.array(rep["aggregate"]["pooled"]["confusion"]).shape == (5, 5)
