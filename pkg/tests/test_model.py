import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.config_pipeline import ModelConfig
from src.core import DimensionError, make_rng, no_grad
from src.data import collate, make_batches, synth_generate
from src.model import SDTModel, block_parameter_count, parameter_count
from src.services import conversation_losses

from .conftest import TINY


def config(**overrides) -> ModelConfig:
    return ModelConfig.model_validate({**TINY, **overrides})


def inputs(cfg: ModelConfig, b=2, n=4, seed=0):
    rng = make_rng(seed, "synth")
    features = {m: rng.normal(size=(b, n, cfg.feature_dims[m])) for m in cfg.modalities}
    speakers = rng.integers(0, cfg.num_speakers, size=(b, n))
    labels = rng.integers(0, cfg.num_classes, size=(b, n))
    return features, speakers, labels


@pytest.mark.parametrize("overrides", [
    {},
    {"no_pe": True},
    {"no_se": True},
    {"no_intra": True},
    {"no_inter": True},
    {"modalities": ["t"]},
    {"modalities": ["a", "v"]},
    {"fusion": "add"},
    {"fusion": "concat"},
    {"fusion": "unicat"},
    {"layers": 2},
    {"kernel_sizes": {"t": 3, "a": 1, "v": 5}},
])
def test_parameter_count_matches_analytic_formula(overrides):
    cfg = config(**overrides)
    assert SDTModel(cfg, make_rng(0, "init")).num_parameters() == parameter_count(cfg)


def test_ablation_parameter_deltas():
    d, d_ff = 8, 8
    full = parameter_count(config())
    block = block_parameter_count(d, d_ff)
    assert block == 4 * d * d + 4 * d + 2 * d * d_ff + d_ff + d + 4 * d
    assert full - parameter_count(config(no_intra=True)) == 3 * block
    assert full - parameter_count(config(no_inter=True)) == 6 * block + 6 * d * d
    assert full - parameter_count(config(no_se=True)) == d * (TINY["num_speakers"] + 1)
    assert parameter_count(config(no_pe=True)) == full


def test_forward_shapes_and_padding_predictions():
    cfg = config()
    model = SDTModel(cfg, make_rng(0, "init"))
    features, speakers, _ = inputs(cfg)
    mask = np.array([[True, True, True, True], [True, True, False, False]])
    out = model.forward(features, speakers, mask)
    assert out.probs.shape == (2, 4, 3)
    assert_allclose(out.probs.data.sum(axis=-1), 1.0)
    assert out.students == {}
    preds = out.predictions()
    assert_array_equal(preds[1, 2:], [-1, -1])
    assert np.all(preds[0] >= 0)
    assert out.gates.shape == (3, 2, 4, 8)
    assert len(out.attention) == 9


def test_unbatched_features_get_a_batch_axis():
    cfg = config()
    model = SDTModel(cfg, make_rng(0, "init"))
    features, speakers, _ = inputs(cfg, b=1)
    batched = model.forward(features, speakers)
    single = model.forward({m: f[0] for m, f in features.items()}, speakers[0])
    assert_array_equal(batched.probs.data, single.probs.data)


def test_missing_or_misshaped_features():
    cfg = config()
    model = SDTModel(cfg, make_rng(0, "init"))
    features, speakers, _ = inputs(cfg)
    with pytest.raises(DimensionError):
        model.forward({"t": features["t"], "a": features["a"]}, speakers)
    features["v"] = features["v"][:, :3]
    with pytest.raises(DimensionError):
        model.forward(features, speakers)


def test_single_modality_model_uses_only_its_own_path():
    cfg = config(modalities=["t"])
    model = SDTModel(cfg, make_rng(0, "init"))
    names = {name.split(".")[0] for name, _ in model.named_parameters()}
    assert names == {"proj_t", "speakers", "encoder", "fuse_t", "teacher", "student_t"}
    assert {n.split(".")[1] for n, _ in model.named_parameters() if n.startswith("encoder.")} == {"t_to_t"}
    features, speakers, labels = inputs(cfg)
    report, out = model.compute_loss(features, speakers, None, labels)
    assert set(report.ce) == {"t"}
    assert_array_equal(out.gates, 1.0)


def test_unicat_fusion_forward():
    cfg = config(fusion="unicat")
    model = SDTModel(cfg, make_rng(0, "init"))
    features, speakers, labels = inputs(cfg)
    report, out = model.compute_loss(features, speakers, None, labels)
    assert out.gates is None
    assert list(out.attention) == [("tav", "tav")]
    assert set(report.ce) == {"t", "a", "v"}


def test_evaluation_is_deterministic_and_ignores_student_heads():
    cfg = config()
    model = SDTModel(cfg, make_rng(0, "init"))
    features, speakers, _ = inputs(cfg)
    first = model.forward(features, speakers).probs.data.copy()
    for m in cfg.modalities:
        head = model.student_heads[m]
        head.weight.data = make_rng(9, "init").normal(size=head.weight.shape)
    assert_array_equal(model.forward(features, speakers).probs.data, first)


def test_dropout_only_in_training_mode():
    cfg = config(dropout=0.3)
    model = SDTModel(cfg, make_rng(0, "init"))
    features, speakers, _ = inputs(cfg)
    eval_a = model.forward(features, speakers).probs.data
    eval_b = model.forward(features, speakers).probs.data
    train = model.forward(features, speakers, training=True, rng=make_rng(0, "dropout")).probs.data
    assert_array_equal(eval_a, eval_b)
    assert not np.allclose(train, eval_a)


def _backward(model, gammas, features, speakers, labels):
    model.zero_grad()
    report, _ = model.compute_loss(features, speakers, None, labels, gammas=gammas)
    report.objective.backward()
    return {name: None if p.grad is None else p.grad.copy() for name, p in model.named_parameters()}


def test_students_get_no_gradient_without_distillation_terms():
    cfg = config()
    model = SDTModel(cfg, make_rng(0, "init"))
    grads = _backward(model, (1.0, 0.0, 0.0), *inputs(cfg))
    students = [g for name, g in grads.items() if name.startswith("student_")]
    assert students and all(g is None for g in students)
    assert grads["teacher.weight"] is not None


def test_teacher_path_gradients_do_not_depend_on_kl_weight():
    cfg = config()
    model = SDTModel(cfg, make_rng(0, "init"))
    data = inputs(cfg)
    without_kl = _backward(model, (1.0, 1.0, 0.0), *data)
    with_kl = _backward(model, (1.0, 1.0, 1.0), *data)
    for name in ("teacher.weight", "teacher.bias", "fuse.weight"):
        assert_array_equal(with_kl[name], without_kl[name])


def test_backprop_through_teacher_changes_teacher_gradients():
    cfg = config(kl_backprop_teacher=True)
    model = SDTModel(cfg, make_rng(0, "init"))
    data = inputs(cfg)
    without_kl = _backward(model, (1.0, 1.0, 0.0), *data)
    with_kl = _backward(model, (1.0, 1.0, 1.0), *data)
    assert not np.allclose(with_kl["teacher.weight"], without_kl["teacher.weight"])


@pytest.mark.parametrize("kernel", [1, 3])
def test_padding_does_not_change_per_conversation_loss(kernel):
    dataset = synth_generate(5, n_conversations=3, len_range=(2, 7), num_classes=3,
                             dims={"t": 5, "a": 4, "v": 3})
    cfg = config(kernel_sizes={"t": kernel, "a": kernel, "v": kernel})
    model = SDTModel(cfg, make_rng(1, "init"))
    mixed = conversation_losses(model, collate(dataset.conversations))
    for conv, report in zip(dataset.conversations, mixed):
        alone = conversation_losses(model, collate([conv]))[0]
        assert abs(alone.total - report.total) < 1e-10
        assert abs(alone.task - report.task) < 1e-10


def test_batch_loss_averages_over_real_utterances_only():
    dataset = synth_generate(2, n_conversations=2, len_range=(3, 6), num_classes=3,
                             dims={"t": 5, "a": 4, "v": 3})
    model = SDTModel(config(), make_rng(0, "init"))
    batch = make_batches(dataset.conversations, 2)[0]
    with no_grad():
        report, _ = model.compute_loss(batch.features, batch.speakers, batch.mask, batch.labels)
    per_conv = conversation_losses(model, batch)
    weights = batch.lengths / batch.lengths.sum()
    assert abs(report.task - float(np.dot(weights, [r.task for r in per_conv]))) < 1e-10
