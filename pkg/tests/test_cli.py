import json
import os

import pytest

from src.config_pipeline import sdt_config
from src.data import load_dataset
from src.services import CommandHandler, model_manager
from src.services.checkpoint_manager import CHECKPOINT_FILE

SMALL_MODEL = ["--set", "model.d_model=8", "--set", "model.heads=2", "--set", "model.d_ff=8",
               "--set", "model.dropout=0.0", "--set", "val_fraction=0.0", "--set", "batch_size=4"]


def run(*argv):
    lines = []
    code = CommandHandler(out=lines.append).run(list(argv))
    return code, lines


@pytest.fixture
def synth_dataset():
    code, _ = run("synth", "--out", "toy", "--conversations", "4", "--min-len", "3", "--max-len", "5",
                  "--classes", "3")
    assert code == 0
    return sdt_config.get_dataset_path("toy")


@pytest.fixture
def checkpoint(synth_dataset):
    code, _ = run("train", "--dataset", "toy", "--run-name", "cli", "--set", "epochs=2", *SMALL_MODEL)
    assert code == 0
    path = os.path.join(sdt_config.get_run_folder("cli"), CHECKPOINT_FILE)
    assert os.path.exists(path)
    yield path
    model_manager.clear_cache()


def test_synth_writes_a_dataset_under_the_data_folder(synth_dataset):
    dataset = load_dataset(synth_dataset)
    assert len(dataset.conversations) == 4
    assert dataset.header.name == "toy"
    assert dataset.header.num_classes == 3


def test_train_then_eval(tmp_path, checkpoint):
    out = str(tmp_path / "eval.json")
    code, lines = run("eval", "--checkpoint", checkpoint, "--dataset", "toy", "--out", out)
    assert code == 0
    assert lines and lines[0].startswith("| Model |")
    with open(out) as f:
        report = json.load(f)
    assert 0.0 <= report["accuracy"] <= 1.0
    assert len(report["confusion"]) == 3


def test_train_with_test_set_writes_eval_report(synth_dataset):
    code, lines = run("train", "--dataset", "toy", "--test", "toy", "--run-name", "with-test",
                      "--set", "epochs=1", *SMALL_MODEL)
    assert code == 0
    assert os.path.exists(os.path.join(sdt_config.get_run_folder("with-test"), "eval_report.json"))
    assert any("Test set: toy" in line for line in lines)


@pytest.mark.parametrize("command,suffix", [("dump-attn", "json"), ("dump-gates", "json"), ("dump-repr", "jsonl")])
def test_dumps(tmp_path, checkpoint, command, suffix):
    out = str(tmp_path / f"dump.{suffix}")
    code, _ = run(command, "--checkpoint", checkpoint, "--dataset", "toy", "--out", out,
                  "--conversation", "toy_0000")
    assert code == 0
    assert os.path.getsize(out) > 0


def test_dump_with_unknown_conversation_fails(tmp_path, checkpoint):
    code, _ = run("dump-gates", "--checkpoint", checkpoint, "--dataset", "toy",
                  "--out", str(tmp_path / "g.json"), "--conversation", "no-such-id")
    assert code == 1


def test_convert(tmp_path):
    source = tmp_path / "export.jsonl"
    record = {"id": "c1", "utterances": [
        {"speaker": "A", "label": "joy", "text": [1.0], "audio": [2.0], "visual": [3.0]},
        {"speaker": "B", "label": "sad", "text": [0.0], "audio": [1.0], "visual": [0.0]},
    ]}
    source.write_text(json.dumps(record) + "\n")
    code, _ = run("convert", str(source), "--out", "converted", "--labels", "sad,joy")
    assert code == 0
    dataset = load_dataset(sdt_config.get_dataset_path("converted"))
    assert dataset.header.label_names == ["sad", "joy"]
    assert list(dataset.conversations[0].labels) == [1, 0]


def test_gradcheck_command_reports_json():
    code, lines = run("gradcheck", "--samples", "2")
    assert code == 0
    assert json.loads(lines[0])["passed"] is True


def test_missing_dataset_and_bad_config_exit_with_one(tmp_path):
    assert run("train", "--set", "epochs=1")[0] == 1
    assert run("train", "--dataset", "does-not-exist")[0] == 1
    assert run("train", "--dataset", "toy", "--set", "model.heads=3")[0] == 1
    assert run("eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--dataset", "toy")[0] == 1
