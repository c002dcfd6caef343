import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core import (
    Adam,
    AdamState,
    ConfigError,
    DimensionError,
    NumericalError,
    Parameter,
    Tensor,
    UsageError,
    adam_step,
    make_rng,
    make_streams,
    no_grad,
    ops,
)

from .conftest import check_op_grads


@pytest.fixture
def data():
    rng = make_rng(7, "synth")
    return lambda *shape: rng.normal(size=shape)


# ----- forward values -----------------------------------------------------------

def test_matmul_and_broadcast_add(data):
    a, b = data(2, 3, 4), data(4, 5)
    assert_allclose(ops.matmul(Tensor(a), Tensor(b)).data, a @ b)
    bias = data(5)
    assert_allclose(ops.add(Tensor(a @ b), Tensor(bias)).data, a @ b + bias)


def test_matmul_inner_dimension_mismatch():
    with pytest.raises(DimensionError):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(DimensionError):
        ops.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_add_shapes_that_do_not_broadcast():
    with pytest.raises(DimensionError):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_softmax_is_shift_invariant_and_normalised(data):
    x = data(4, 6)
    out = ops.softmax(Tensor(x)).data
    assert_allclose(out.sum(axis=-1), 1.0, atol=1e-15)
    assert_allclose(ops.softmax(Tensor(x + 1000.0)).data, out, atol=1e-12)


def test_softmax_values():
    exps = np.exp([1.0, 2.0, 3.0])
    out = ops.softmax(Tensor(np.array([1.0, 2.0, 3.0]))).data
    assert_allclose(out, exps / exps.sum(), rtol=0, atol=1e-15)
    assert_allclose(out, [0.09003057, 0.24472847, 0.66524096], atol=1e-8)


def test_softmax_of_huge_logits_stays_finite():
    out = ops.softmax(Tensor([[1e300, 0.0, -1e300]])).data
    assert_allclose(out, [[1.0, 0.0, 0.0]])


def test_softmax_bad_axis():
    with pytest.raises(DimensionError):
        ops.softmax(Tensor(np.ones((2, 3))), axis=2)


def test_masked_fill_gives_exact_zero_attention_weight():
    logits = Tensor(np.array([[0.3, 2.0, -1.0]]))
    weights = ops.softmax(ops.masked_fill(logits, np.array([[False, True, False]])), axis=-1).data
    assert weights[0, 1] == 0.0
    assert_allclose(weights.sum(), 1.0)


def test_layer_norm_zero_mean_unit_variance(data):
    x = data(5, 16)
    out = ops.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=0.0).data
    assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    assert_allclose(out.var(axis=-1), 1.0, atol=1e-12)


def test_sigmoid_is_stable_at_extremes():
    out = ops.sigmoid(Tensor([-1000.0, 0.0, 1000.0])).data
    assert_allclose(out, [0.0, 0.5, 1.0])


def test_log_floor_clamps_and_blocks_gradient():
    x = Tensor([0.0, 0.5], requires_grad=True)
    y = ops.log(x, 1e-12)
    assert_allclose(y.data, [np.log(1e-12), np.log(0.5)])
    ops.sum(y).backward()
    assert_allclose(x.grad, [0.0, 2.0])


def test_log_of_zero_without_floor_raises_numerical_error():
    with pytest.raises(NumericalError) as info:
        ops.log(Tensor([0.0, 1.0]))
    assert info.value.op == "log"


def test_dropout_identity_in_eval_mode(data):
    x = Tensor(data(3, 4))
    assert ops.dropout(x, 0.5, training=False, rng=None) is x


def test_dropout_rate_validation_and_rng_requirement():
    x = Tensor(np.ones((2, 2)))
    with pytest.raises(ConfigError):
        ops.dropout(x, 1.0, training=True, rng=make_rng(0))
    with pytest.raises(UsageError):
        ops.dropout(x, 0.5, training=True, rng=None)


def test_dropout_scales_survivors():
    out = ops.dropout(Tensor(np.ones((50, 50))), 0.5, training=True, rng=make_rng(0, "dropout")).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert 0.4 < (out > 0).mean() < 0.6


def test_dropout_preserves_the_mean():
    x = Tensor(np.full(100_000, 1.5))
    out = ops.dropout(x, 0.5, training=True, rng=make_rng(0, "dropout")).data
    assert abs(out.mean() - 1.5) < 0.02 * 1.5
    assert ops.dropout(x, 0.0, training=True, rng=make_rng(0, "dropout")) is x


def test_conv1d_kernel_one_is_a_matmul(data):
    x, w, b = data(2, 5, 3), data(1, 3, 4), data(4)
    out = ops.conv1d(Tensor(x), Tensor(w), Tensor(b)).data
    assert_allclose(out, x @ w[0] + b)


def test_conv1d_same_padding(data):
    x, w = data(4, 2), data(3, 2, 1)
    out = ops.conv1d(Tensor(x), Tensor(w)).data
    padded = np.vstack([np.zeros((1, 2)), x, np.zeros((1, 2))])
    expected = np.array([sum(padded[i + j] @ w[j] for j in range(3)) for i in range(4)])
    assert_allclose(out, expected)


def test_conv1d_all_ones_by_hand():
    out = ops.conv1d(Tensor(np.ones((3, 1))), Tensor(np.ones((3, 1, 1)))).data
    assert_array_equal(out[:, 0], [2.0, 3.0, 2.0])


def test_conv1d_rejects_even_kernel_and_wrong_channels():
    with pytest.raises(ConfigError):
        ops.conv1d(Tensor(np.ones((3, 2))), Tensor(np.ones((2, 2, 2))))
    with pytest.raises(DimensionError):
        ops.conv1d(Tensor(np.ones((3, 5))), Tensor(np.ones((1, 2, 2))))


def test_gather_columns_picks_table_columns():
    table = np.arange(12.0).reshape(3, 4)
    out = ops.gather_columns(Tensor(table), np.array([[3, 0]])).data
    assert_allclose(out, [[table[:, 3], table[:, 0]]])


# ----- gradients ----------------------------------------------------------------

@pytest.mark.parametrize("name, build, shapes", [
    ("add", lambda t: ops.add(t[0], t[1]), [(3, 4), (4,)]),
    ("sub", lambda t: ops.sub(t[0], t[1]), [(2, 3), (2, 1)]),
    ("mul", lambda t: ops.mul(t[0], t[1]), [(3, 4), (3, 4)]),
    ("matmul", lambda t: ops.matmul(t[0], t[1]), [(2, 3, 4), (4, 5)]),
    ("sum", lambda t: ops.sum(t[0], axis=1, keepdims=False), [(3, 4, 2)]),
    ("mean", lambda t: ops.mean(t[0], axis=-1), [(3, 4)]),
    ("transpose", lambda t: ops.transpose(t[0], (0, 2, 1, 3)), [(2, 3, 4, 2)]),
    ("reshape", lambda t: ops.reshape(t[0], (6, 2)), [(3, 4)]),
    ("concat", lambda t: ops.concat([t[0], t[1]], axis=-1), [(2, 3), (2, 2)]),
    ("stack", lambda t: ops.stack([t[0], t[1]], axis=0), [(2, 3), (2, 3)]),
    ("getitem", lambda t: t[0][1:, ::2], [(3, 4)]),
    ("sigmoid", lambda t: ops.sigmoid(t[0]), [(3, 4)]),
    ("softmax", lambda t: ops.softmax(t[0], axis=-1), [(3, 5)]),
    ("softmax0", lambda t: ops.softmax(t[0], axis=0), [(3, 2, 4)]),
    ("layer_norm", lambda t: ops.layer_norm(t[0], t[1], t[2]), [(2, 3, 6), (6,), (6,)]),
    ("conv1d", lambda t: ops.conv1d(t[0], t[1], t[2]), [(2, 5, 3), (3, 3, 4), (4,)]),
    ("gather", lambda t: ops.gather_columns(t[0], np.array([[0, 2, 2], [1, 0, 2]])), [(4, 3)]),
])
def test_op_gradients_match_central_differences(name, build, shapes, data):
    arrays = [data(*s) for s in shapes]
    assert check_op_grads(build, arrays) < 1e-6, name


def test_log_gradient(data):
    arrays = [np.abs(data(3, 4)) + 0.5]
    assert check_op_grads(lambda t: ops.log(t[0]), arrays) < 1e-6


def test_relu_gradient_away_from_kink():
    arrays = [np.array([[-1.5, 0.3, 2.0], [0.7, -0.2, -3.0]])]
    assert check_op_grads(lambda t: ops.relu(t[0]), arrays) < 1e-6


def test_masked_fill_gradient_is_zero_on_masked_entries(data):
    x = Tensor(data(2, 3), requires_grad=True)
    mask = np.array([[True, False, False], [False, False, True]])
    ops.sum(ops.masked_fill(x, mask, 0.0)).backward()
    assert_array_equal(x.grad, np.where(mask, 0.0, 1.0))


def test_shared_input_accumulates_gradient():
    x = Tensor([2.0], requires_grad=True)
    (x * x + x).sum().backward()
    assert_allclose(x.grad, [5.0])


def test_repeated_backward_accumulates_into_leaves():
    x = Tensor([1.0, 2.0], requires_grad=True)
    ops.sum(x).backward()
    ops.sum(x).backward()
    assert_allclose(x.grad, [2.0, 2.0])
    x.zero_grad()
    assert x.grad is None


def test_backward_needs_a_scalar_connected_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(UsageError):
        (x * 2.0).backward()
    with pytest.raises(UsageError):
        Tensor([1.0]).backward()


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 3.0
    assert not y.requires_grad
    assert (x * 3.0).requires_grad


# ----- optimizer and random streams -----------------------------------------------

def test_adam_first_step_moves_by_lr_against_the_gradient():
    p = Parameter(np.array([1.0, -1.0]), name="p")
    p.grad = np.array([0.5, -2.0])
    adam_step([p], AdamState(lr=0.1))
    assert_allclose(p.data, [0.9, -0.9], atol=1e-6)


def test_adam_weight_decay_is_added_to_the_gradient():
    p = Parameter(np.array([2.0]), name="p")
    p.grad = np.array([0.0])
    state = AdamState(lr=0.1, weight_decay=0.5)
    adam_step([p], state)
    assert_allclose(state.m["p"], [0.1 * 1.0])
    assert p.data[0] < 2.0


def test_adam_step_without_gradient_is_a_usage_error():
    with pytest.raises(UsageError):
        adam_step([Parameter(np.ones(2), name="p")], AdamState())


def test_adam_wrapper_fills_missing_gradients_with_zero():
    used = Parameter(np.array([1.0]), name="used")
    unused = Parameter(np.array([3.0]), name="unused")
    optimizer = Adam([used, unused], lr=0.1)
    optimizer.zero_grad()
    (used * 2.0).sum().backward()
    optimizer.step()
    assert_allclose(unused.data, [3.0])
    assert used.data[0] < 1.0


def test_adam_minimises_a_quadratic():
    w = Parameter(np.array([0.0]), name="w")
    state = AdamState(lr=0.1)
    for _ in range(200):
        w.grad = 2.0 * (w.data - 3.0)
        adam_step([w], state)
    assert abs(w.data[0] - 3.0) < 1e-2


def test_adam_with_zero_lr_leaves_parameters_unchanged():
    p = Parameter(np.array([1.0, -2.0, 0.5]), name="p")
    state = AdamState(lr=0.0, weight_decay=0.1)
    for _ in range(3):
        p.grad = np.array([0.3, -1.0, 4.0])
        adam_step([p], state)
    assert_array_equal(p.data, [1.0, -2.0, 0.5])


def test_adam_rejects_negative_lr():
    with pytest.raises(ConfigError):
        AdamState(lr=-1.0)


def test_named_streams_are_reproducible_and_independent():
    a, b = make_streams(3), make_streams(3)
    assert_array_equal(a["init"].normal(size=5), b["init"].normal(size=5))
    assert not np.array_equal(make_rng(3, "init").normal(size=5), make_rng(3, "dropout").normal(size=5))
    assert not np.array_equal(make_rng(3, "init").normal(size=5), make_rng(4, "init").normal(size=5))
