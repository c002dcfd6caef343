import pytest
from fastapi.testclient import TestClient

from src.api import app
from src.config_pipeline import sdt_config
from src.core import make_rng
from src.data import save_dataset
from src.model import SDTModel
from src.services import model_manager, save_checkpoint

client = TestClient(app)


def utterance(speaker=0, dims=(5, 4, 3)):
    return {"text": [0.1] * dims[0], "audio": [0.2] * dims[1], "visual": [0.3] * dims[2], "speaker": speaker}


@pytest.fixture
def served(tmp_path, tiny_config, small_dataset):
    model = SDTModel(tiny_config, make_rng(0, "init"))
    path = save_checkpoint(str(tmp_path / "served.ckpt"), model.config, model.state_dict())
    save_dataset(small_dataset, sdt_config.get_dataset_path("small"))
    sdt_config.set("API_CHECKPOINT", path)
    model_manager.clear_cache()
    yield model
    model_manager.clear_cache()


def test_health_without_checkpoint():
    sdt_config.set("API_CHECKPOINT", None)
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok", "checkpoint": None}


def test_model_endpoints_need_a_checkpoint():
    sdt_config.set("API_CHECKPOINT", None)
    assert client.get("/model").status_code == 503
    assert client.post("/predict", json={"utterances": [utterance()]}).status_code == 503


def test_unreadable_checkpoint_is_unavailable(tmp_path):
    sdt_config.set("API_CHECKPOINT", str(tmp_path / "missing.ckpt"))
    assert client.get("/model").status_code == 503


def test_model_info(served):
    response = client.get("/model")
    assert response.status_code == 200
    body = response.json()
    assert body["num_parameters"] == served.num_parameters()
    assert body["config"]["d_model"] == 8


def test_predict(served):
    response = client.post("/predict", json={"id": "c1", "utterances": [utterance(0), utterance(1), utterance(0)]})
    assert response.status_code == 200
    body = response.json()
    assert body["id"] == "c1"
    assert [p["utterance"] for p in body["predictions"]] == [0, 1, 2]
    for p in body["predictions"]:
        assert abs(sum(p["probs"]) - 1.0) < 1e-9
        assert p["label"] == max(range(3), key=lambda k: p["probs"][k])
        assert set(p["gates"]) == {"w_text", "w_audio", "w_visual"}


def test_predict_rejects_wrong_feature_sizes(served):
    response = client.post("/predict", json={"utterances": [utterance(dims=(6, 4, 3))]})
    assert response.status_code == 422


def test_predict_rejects_mixed_feature_sizes(served):
    utterances = [utterance(), utterance(speaker=1, dims=(6, 4, 3))]
    response = client.post("/predict", json={"utterances": utterances})
    assert response.status_code == 422
    assert response.json()["detail"].startswith("Feature error")


def test_predict_rejects_empty_conversations(served):
    assert client.post("/predict", json={"utterances": []}).status_code == 422


def test_evaluate(served, small_dataset):
    response = client.post("/evaluate/small")
    assert response.status_code == 200
    body = response.json()
    assert body["num_utterances"] == small_dataset.num_utterances
    assert "shift" in body


def test_evaluate_unknown_dataset(served):
    assert client.post("/evaluate/unknown").status_code == 404
