"""명령줄 진입점 테스트 (작은 설정으로 실제 명령 실행)"""

import json

import pandas as pd
import pytest

from dataset_io import MAGIC, load_dataset
from main import EXIT_OK, EXIT_USAGE, main

SMALL_DATA = [
    "--set", "k_I=2", "--set", "k_II=2", "--set", "k_III=2", "--set", "k_IV=2",
    "--set", "n_domains=3", "--set", "n_classes=2", "--set", "n_per_domain=20",
]
SHORT_TRAINING = ["--set", "steps=6", "--set", "sma_start=3", "--set", "batch_size=8", "--set", "log_every=3"]


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "data.txt"
    assert main(["gen-data", "--out", str(path), "--seed", "3", *SMALL_DATA]) == EXIT_OK
    return path


def test_gen_data_writes_dataset(data_file, capsys):
    assert data_file.read_text(encoding="utf-8").splitlines()[0] == MAGIC
    data = load_dataset(data_file)
    assert data.n_samples == 60
    assert data.generator_seed == 3


def test_gen_data_same_seed_same_file(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for path in (a, b):
        assert main(["gen-data", "--out", str(path), "--seed", "9", *SMALL_DATA]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_gen_data_requires_out():
    with pytest.raises(SystemExit) as exc:
        main(["gen-data"])
    assert exc.value.code == 2


def test_train_writes_outputs(data_file, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["train", "--data", str(data_file), "--holdout-domain", "1",
                 "--out-dir", str(out), *SHORT_TRAINING])
    assert code == EXIT_OK
    assert {p.name for p in out.iterdir()} == {"checkpoint.npz", "metrics.csv", "manifest.json"}
    assert len(pd.read_csv(out / "metrics.csv")) == 6
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "train"
    assert 0.0 <= manifest["final"]["heldout_accuracy"] <= 1.0
    assert "보지 않은 도메인 정확도" in capsys.readouterr().out


def test_train_single_source_on_one_domain(tmp_path):
    data = tmp_path / "one.txt"
    assert main(["gen-data", "--out", str(data), *SMALL_DATA, "--set", "n_domains=1"]) == EXIT_OK
    out = tmp_path / "run"
    code = main(["train", "--data", str(data), "--mode", "single-dg", "--out-dir", str(out), *SHORT_TRAINING])
    assert code == EXIT_OK
    assert (out / "checkpoint.npz").exists()
    assert main(["eval", "--checkpoint", str(out / "checkpoint.npz"), "--data", str(data), "--domain", "0"]) == EXIT_OK


def test_train_unknown_holdout_domain(data_file, tmp_path):
    code = main(["train", "--data", str(data_file), "--holdout-domain", "5",
                 "--out-dir", str(tmp_path / "run"), *SHORT_TRAINING])
    assert code == EXIT_USAGE


def test_train_holdout_of_only_domain(tmp_path):
    data = tmp_path / "one.txt"
    assert main(["gen-data", "--out", str(data), *SMALL_DATA, "--set", "n_domains=1"]) == EXIT_OK
    code = main(["train", "--data", str(data), "--holdout-domain", "0",
                 "--out-dir", str(tmp_path / "run"), *SHORT_TRAINING])
    assert code == EXIT_USAGE
    assert not (tmp_path / "run" / "checkpoint.npz").exists()


def test_train_missing_data_file(tmp_path):
    code = main(["train", "--data", str(tmp_path / "missing.txt"), "--out-dir", str(tmp_path / "run")])
    assert code == EXIT_USAGE


def test_bad_override_is_usage_error(data_file, tmp_path):
    code = main(["train", "--data", str(data_file), "--out-dir", str(tmp_path / "run"), "--set", "bogus=1"])
    assert code == EXIT_USAGE


def test_eval_checkpoint(data_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--data", str(data_file), "--holdout-domain", "0",
                 "--out-dir", str(out), *SHORT_TRAINING]) == EXIT_OK
    capsys.readouterr()
    code = main(["eval", "--checkpoint", str(out / "checkpoint.npz"), "--data", str(data_file), "--domain", "0"])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "정확도" in printed
    assert "마스크 복원" in printed
    assert "두 인코더 분리기 파라미터: 144" in printed


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == EXIT_OK


def test_tiny_ablation_table(tmp_path):
    out = tmp_path / "ablate"
    code = main(["ablate", "--out-dir", str(out), "--seed", "0", *SMALL_DATA, *SHORT_TRAINING])
    assert code == EXIT_OK
    table = pd.read_csv(out / "ablation.csv")
    assert len(table) == 8
    assert table["variant"].iloc[-1] == "Full"
    assert len(pd.read_csv(out / "seed_stats.csv")) == 8 * 3
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seeds"] == [0]
