import os
import subprocess
import sys

import numpy as np
import pytest

from iiot_ids import kernels, layers as L
from iiot_ids import tensor as T
from iiot_ids.errors import ConfigError, ContractError, DimensionError
from iiot_ids.tensor import Tensor

from _oracles import (attention_loops, batchnorm_two_pass, conv1d_loops, gradcheck,
                      lstm_loops)

GRAD_TOL = 1e-6


@pytest.mark.parametrize("stride,padding", [(1, "valid"), (1, "same"), (2, "valid"), (2, "same")])
def test_conv1d_matches_loops(stride, padding):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 9, 3))
    k = rng.normal(size=(3, 3, 4))
    b = rng.normal(size=4)
    got = L.conv1d_forward(x, k, b, stride, padding).data
    np.testing.assert_allclose(got, conv1d_loops(x, k, b, stride, padding), atol=1e-12, rtol=0)


def test_conv1d_output_lengths():
    x = np.ones((1, 10, 2))
    k = np.ones((3, 2, 1))
    assert L.conv1d_forward(x, k, np.zeros(1), 1, "valid").shape == (1, 8, 1)
    assert L.conv1d_forward(x, k, np.zeros(1), 1, "same").shape == (1, 10, 1)
    assert L.conv1d_forward(x, k, np.zeros(1), 3, "same").shape == (1, 4, 1)


def test_conv1d_too_short_input():
    with pytest.raises(DimensionError, match="too short"):
        L.conv1d_forward(np.ones((1, 2, 1)), np.ones((3, 1, 1)), np.zeros(1))


def test_conv1d_rejects_bad_padding_and_channels():
    with pytest.raises(ConfigError):
        L.conv1d_forward(np.ones((1, 5, 1)), np.ones((3, 1, 1)), np.zeros(1), padding="full")
    with pytest.raises(DimensionError):
        L.conv1d_forward(np.ones((1, 5, 2)), np.ones((3, 1, 1)), np.zeros(1))


@pytest.mark.parametrize("stride,padding", [(1, "same"), (2, "valid")])
def test_conv1d_gradient(stride, padding):
    rng = np.random.default_rng(1)
    arrays = [rng.normal(size=(2, 6, 2)), rng.normal(size=(3, 2, 3)), rng.normal(size=3)]
    assert gradcheck(lambda x, k, b: L.conv1d_forward(x, k, b, stride, padding), arrays) < GRAD_TOL


def _lstm_arrays(rng, B, steps, F, H):
    return (rng.normal(size=(B, steps, F)), rng.normal(size=(F, 4 * H)) * 0.5,
            rng.normal(size=(H, 4 * H)) * 0.5, rng.normal(size=4 * H) * 0.5)


@pytest.mark.parametrize("B", [1, 2, 5])
def test_lstm_matches_scalar_equations(B):
    x, W, U, b = _lstm_arrays(np.random.default_rng(2), B, 6, 3, 4)
    np.testing.assert_allclose(L.lstm_forward(x, W, U, b).data, lstm_loops(x, W, U, b),
                               atol=1e-12, rtol=0)


def test_lstm_hand_case_one_unit():
    # a single unit with all-zero weights: every gate is 0.5 (sigmoid) or 0 (tanh)
    out = L.lstm_forward(np.ones((1, 3, 1)), np.zeros((1, 4)), np.zeros((1, 4)), np.zeros(4))
    assert np.all(out.data == 0.0)
    # cell gate saturated at 1, input/output at sigmoid(0)=0.5, forget at 0.5
    b = np.array([0.0, 0.0, 50.0, 0.0])
    out = L.lstm_forward(np.zeros((1, 2, 1)), np.zeros((1, 4)), np.zeros((1, 4)), b).data
    c1 = 0.5
    c2 = 0.5 * c1 + 0.5
    np.testing.assert_allclose(out[0, :, 0], [0.5 * np.tanh(c1), 0.5 * np.tanh(c2)], atol=1e-15)


@pytest.mark.parametrize("B", [1, 3, 10])
def test_lstm_gradient(B):
    arrays = _lstm_arrays(np.random.default_rng(3), B, 4, 2, 3)
    assert gradcheck(L.lstm_forward, list(arrays)) < GRAD_TOL


def test_lstm_gradient_through_last_step():
    arrays = _lstm_arrays(np.random.default_rng(4), 2, 5, 2, 3)
    assert gradcheck(lambda *a: L.last_step(L.lstm_forward(*a)), list(arrays)) < GRAD_TOL


def test_lstm_hidden_state_bounded():
    rng = np.random.default_rng(5)
    x, W, U, b = _lstm_arrays(rng, 3, 20, 4, 5)
    out = L.lstm_forward(x * 100, W * 10, U * 10, b).data
    assert np.all(np.abs(out) <= 1.0)


def test_lstm_module_init():
    m = L.LSTM(3, 4, rng=np.random.default_rng(0))
    assert m.W.shape == (3, 16) and m.U.shape == (4, 16)
    np.testing.assert_array_equal(m.params.gate("forget")[2], 1.0)
    for gate in ("input", "cell", "output"):
        np.testing.assert_array_equal(m.params.gate(gate)[2], 0.0)
    limit = np.sqrt(6.0 / (3 + 16))
    assert np.all(np.abs(m.W.data) <= limit)


@pytest.mark.parametrize("B", [1, 2, 3, 9])
def test_fused_and_vectorized_kernels_agree(B):
    rng = np.random.default_rng(6)
    steps, H = 7, 5
    xp = rng.normal(size=(steps, B, 4 * H)) * 2
    U = rng.normal(size=(H, 4 * H)) * 0.5
    h0 = np.zeros((B, H))
    fused = kernels.lstm_forward_fused(xp, np.ascontiguousarray(U.T), h0, h0)
    vec = kernels.lstm_forward_vectorized(xp, U, h0, h0)
    for a, b in zip(fused, vec):
        np.testing.assert_allclose(a, b, atol=1e-13, rtol=0)
    hs, cs, acts = vec
    dhs = rng.normal(size=hs.shape)
    fb = kernels.lstm_backward_fused(dhs, acts, cs, h0, U)
    vb = kernels.lstm_backward_vectorized(dhs, acts, cs, h0, np.ascontiguousarray(U.T))
    for a, b in zip(fb, vb):
        np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


def test_knn_paths_agree():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(40, 3))
    pts[5] = pts[6]  # a tie
    q = np.arange(40)
    np.testing.assert_array_equal(kernels.knn_rows_fused(pts, q, 4),
                                  kernels.knn_rows_vectorized(pts, q, 4))


def test_numpy_backend_runs_without_numba():
    code = (
        "import numpy as np\n"
        "from iiot_ids import BACKEND, layers as L\n"
        "from iiot_ids.kernels import knn_rows\n"
        "assert BACKEND == 'numpy', BACKEND\n"
        "r = np.random.default_rng(0)\n"
        "out = L.lstm_forward(r.normal(size=(1,4,2)), r.normal(size=(2,12)), r.normal(size=(3,12)), np.zeros(12))\n"
        "print(repr(float(out.data.sum())))\n"
        "print(knn_rows(r.normal(size=(10,2)), np.arange(10), 3).sum())\n"
    )
    env = dict(os.environ, IDS_DISABLE_NUMBA="1")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    r = np.random.default_rng(0)
    x, W, U = r.normal(size=(1, 4, 2)), r.normal(size=(2, 12)), r.normal(size=(3, 12))
    expected = L.lstm_forward(x, W, U, np.zeros(12)).data.sum()
    assert abs(float(res.stdout.split()[0]) - expected) < 1e-12


def test_attention_matches_loops():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 5, 3))
    out, w = L.attention_forward(x, return_weights=True)
    ref_out, ref_w = attention_loops(x, x, x, 3)
    np.testing.assert_allclose(out.data, ref_out, atol=1e-12, rtol=0)
    np.testing.assert_allclose(w.data, ref_w, atol=1e-12, rtol=0)
    np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-12)


def test_attention_constant_sequence_is_fixed_point():
    x = np.tile(np.array([1.0, -2.0, 0.5]), (1, 4, 1))
    out, w = L.attention_forward(x, return_weights=True)
    np.testing.assert_allclose(w.data, 0.25, atol=1e-15)
    np.testing.assert_allclose(out.data, x, atol=1e-15)


def test_attention_learned_matches_loops():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(2, 4, 3))
    wq, wk, wv = rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), rng.normal(size=(3, 3))
    spec = L.AttentionSpec(d_q=2, projection_mode="learned")
    out = L.attention_forward(x, spec, wq, wk, wv).data
    ref, _ = attention_loops(x @ wq, x @ wk, x @ wv, 2)
    np.testing.assert_allclose(out, ref, atol=1e-12, rtol=0)


def test_attention_gradients():
    rng = np.random.default_rng(10)
    assert gradcheck(L.attention_forward, [rng.normal(size=(2, 4, 3))]) < GRAD_TOL
    spec = L.AttentionSpec(d_q=2, projection_mode="learned")
    arrays = [rng.normal(size=s) for s in [(2, 3, 3), (3, 2), (3, 2), (3, 3)]]
    assert gradcheck(lambda x, q, k, v: L.attention_forward(x, spec, q, k, v), arrays) < GRAD_TOL


def test_attention_spec_validation():
    with pytest.raises(ConfigError):
        L.AttentionSpec(d_q=0)
    with pytest.raises(ConfigError):
        L.AttentionSpec(d_q=2, projection_mode="other")
    with pytest.raises(DimensionError):
        L.attention_forward(np.ones((1, 3, 4)), L.AttentionSpec(d_q=2))


def test_batchnorm_training_matches_two_pass():
    rng = np.random.default_rng(11)
    x = rng.normal(loc=3.0, scale=2.0, size=(6, 4, 3))
    gamma, beta = rng.normal(size=3), rng.normal(size=3)
    rm, rv = np.zeros(3), np.ones(3)
    out = L.batchnorm_forward(x, gamma, beta, rm, rv, training=True).data
    ref, mean, var = batchnorm_two_pass(x, gamma, beta, 1e-5)
    np.testing.assert_allclose(out, ref, atol=1e-12, rtol=0)
    np.testing.assert_allclose(rm, 0.1 * mean, atol=1e-12)
    np.testing.assert_allclose(rv, 0.9 + 0.1 * var, atol=1e-12)


def test_batchnorm_inference_uses_running_stats():
    rm, rv = np.array([1.0, -1.0]), np.array([4.0, 0.25])
    x = np.array([[3.0, 0.0]])
    out = L.batchnorm_forward(x, np.ones(2), np.zeros(2), rm, rv, training=False).data
    np.testing.assert_allclose(out, [[2.0 / np.sqrt(4 + 1e-5), 1.0 / np.sqrt(0.25 + 1e-5)]])


def test_batchnorm_gradients():
    rng = np.random.default_rng(12)
    arrays = [rng.normal(size=(4, 3, 2)), rng.normal(size=2), rng.normal(size=2)]

    def train_fn(x, g, b):
        return L.batchnorm_forward(x, g, b, np.zeros(2), np.ones(2), training=True)

    def infer_fn(x, g, b):
        return L.batchnorm_forward(x, g, b, np.full(2, 0.3), np.full(2, 2.0), training=False)

    assert gradcheck(train_fn, arrays) < GRAD_TOL
    assert gradcheck(infer_fn, arrays) < GRAD_TOL


def test_batchnorm_needs_two_samples_in_training():
    with pytest.raises(ContractError):
        L.batchnorm_forward(np.ones((1, 3)), np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), True)


def test_dropout_inverted_scaling():
    x = np.ones((200, 50))
    out = L.dropout_forward(x, 0.3, True, np.random.default_rng(0)).data
    kept = out != 0
    np.testing.assert_allclose(out[kept], 1 / 0.7)
    assert abs(kept.mean() - 0.7) < 0.02
    np.testing.assert_array_equal(L.dropout_forward(x, 0.3, False).data, x)


def test_dropout_gradient_with_frozen_mask():
    rng = np.random.default_rng(13)
    mask = L.dropout_mask((3, 4), 0.5, rng)
    assert gradcheck(lambda x: L.dropout_forward(x, 0.5, True, mask=mask),
                     [rng.normal(size=(3, 4))]) < GRAD_TOL


def test_dropout_contract():
    with pytest.raises(ContractError):
        L.dropout_forward(np.ones(3), 1.0, True, np.random.default_rng(0))
    with pytest.raises(ContractError):
        L.dropout_forward(np.ones(3), 0.5, True)


@pytest.mark.parametrize("activation", ["linear", "relu", "tanh", "sigmoid"])
def test_dense_gradient(activation):
    rng = np.random.default_rng(14)
    arrays = [rng.normal(size=(4, 3)), rng.normal(size=(3, 2)), rng.normal(size=2)]
    fn = lambda x, w, b: L.dense_forward(x, w, b, activation)  # noqa: E731
    assert gradcheck(fn, arrays) < GRAD_TOL


def test_dense_unknown_activation():
    with pytest.raises(ConfigError):
        L.Dense(3, 2, activation="gelu")


def test_maxpool_and_gradient():
    x = np.array([[[1.0], [3.0], [2.0], [0.0], [9.0]]])
    assert L.maxpool1d_forward(x, 2).data[0, :, 0].tolist() == [3.0, 2.0]
    rng = np.random.default_rng(15)
    assert gradcheck(lambda a: L.maxpool1d_forward(a, 2), [rng.normal(size=(2, 7, 3))]) < GRAD_TOL


def test_flatten_and_reshape_round_trip():
    x = Tensor(np.arange(24.0).reshape(2, 3, 4))
    flat = L.flatten(x)
    assert flat.shape == (2, 12)
    assert L.reshape(flat, (2, 3, 4)).data.tobytes() == x.data.tobytes()


def test_parallel_concatenates_branches():
    rng = np.random.default_rng(16)
    p = L.Parallel([("a", L.Dense(3, 2, rng=rng)), ("b", L.Dense(3, 4, rng=rng))])
    out = p(np.ones((5, 3)))
    assert out.shape == (5, 6)
    assert len(dict(p.named_parameters())) == 4


def test_module_parameter_names_are_unique():
    rng = np.random.default_rng(17)
    seq = L.Sequential([("conv", L.Conv1D(1, 4, rng=rng)), ("bn", L.BatchNorm(4)),
                        ("lstm", L.LSTM(4, 3, rng=rng))])
    names = [n for n, _ in seq.named_parameters()]
    assert len(names) == len(set(names))
    assert {n for n, _ in seq.named_buffers()} == {"bn.running_mean", "bn.running_var"}
