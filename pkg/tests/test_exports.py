import json

import numpy as np

from src.core import make_rng
from src.model import SDTModel
from src.services import dump_attention, dump_gates, dump_representations
from src.services.export_service import collect, write_json, write_jsonl

from .conftest import TINY


def build(tiny_config, **overrides):
    return SDTModel(tiny_config.model_copy(update=overrides), make_rng(0, "init"))


def test_attention_rows_are_distributions(tiny_config, small_dataset):
    conv = small_dataset.conversations[0]
    rows = dump_attention(build(tiny_config), conv)
    assert len({r["block"] for r in rows}) == 9
    assert len(rows) == 9 * TINY["heads"]
    for row in rows:
        weights = np.array(row["rows"])
        assert weights.shape == (len(conv), len(conv))
        assert np.allclose(weights.sum(axis=1), 1.0)


def test_gate_rows_sum_to_one(tiny_config, small_dataset):
    conv = small_dataset.conversations[1]
    rows = dump_gates(build(tiny_config), conv)
    assert len(rows) == len(conv)
    for row in rows:
        assert abs(row["w_text"] + row["w_audio"] + row["w_visual"] - 1.0) < 1e-9
        assert row["conversation"] == conv.id


def test_no_gates_without_gated_fusion(tiny_config, small_dataset, caplog):
    rows = dump_gates(build(tiny_config, fusion="add"), small_dataset.conversations[0])
    assert rows == []
    assert "no multimodal gates" in caplog.text


def test_representation_rows(tiny_config, small_dataset):
    conv = small_dataset.conversations[0]
    rows = dump_representations(build(tiny_config), conv)
    assert [r["utterance"] for r in rows] == list(range(len(conv)))
    first = rows[0]
    assert len(first["fused"]) == TINY["d_model"]
    assert set(first["enhanced"]) == {"t", "a", "v"}
    assert first["label"] == conv.utterances[0].label


def test_writers(tmp_path, tiny_config, small_dataset):
    model = build(tiny_config)
    rows = collect(dump_gates, model, small_dataset.conversations)
    assert len(rows) == small_dataset.num_utterances
    path = write_json(rows, str(tmp_path / "out" / "gates.json"))
    with open(path) as f:
        assert json.load(f) == rows
    path = write_jsonl(rows[:2], str(tmp_path / "out" / "gates.jsonl"))
    with open(path) as f:
        assert [json.loads(line) for line in f] == rows[:2]
