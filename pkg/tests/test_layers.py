import math

import numpy as np
import pytest

from seqbind import autodiff as ad
from seqbind.autodiff import Tensor
from seqbind.errors import ConfigError, InputError
from seqbind.layers import (GROUP_FROZEN, GROUP_RAE, Linear, LstmWeights,
                            ParamSet, embedding_lookup, lstm_step)


def make_weights(input_dim, hidden_dim, seed=0):
    params = ParamSet()
    w = LstmWeights(params, "cell", input_dim, hidden_dim, np.random.default_rng(seed))
    return params, w


def zero_weights(input_dim, hidden_dim):
    params, w = make_weights(input_dim, hidden_dim)
    for p in params:
        p.tensor.data[...] = 0.0
    return params, w


def test_lstm_step_zero_weights_zero_state_stays_zero():
    _, w = zero_weights(3, 4)
    h, c = lstm_step(Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 4))),
                     Tensor(np.zeros((2, 4))), w)
    np.testing.assert_array_equal(h.data, np.zeros((2, 4)))
    np.testing.assert_array_equal(c.data, np.zeros((2, 4)))


def test_lstm_step_zero_weights_unit_cell():
    # gates sit at sigmoid(0) = 0.5 and the candidate at tanh(0) = 0, so a
    # unit cell state halves and the hidden becomes 0.5 * tanh(0.5)
    _, w = zero_weights(3, 4)
    h, c = lstm_step(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 4))),
                     Tensor(np.ones((1, 4))), w)
    np.testing.assert_allclose(c.data, np.full((1, 4), 0.5), rtol=1e-15)
    np.testing.assert_allclose(h.data, np.full((1, 4), 0.5 * math.tanh(0.5)), rtol=1e-15)
    assert abs(h.data[0, 0] - 0.2311) < 1e-4


def scalar_lstm_oracle(x, h, c, wx, wh, b):
    """Scalar-by-scalar recomputation of the four gate equations."""
    hd = len(h)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    pre = []
    for row in range(4 * hd):
        acc = b[row]
        for k, xv in enumerate(x):
            acc += wx[row][k] * xv
        for k, hv in enumerate(h):
            acc += wh[row][k] * hv
        pre.append(acc)
    h2, c2 = [], []
    for j in range(hd):
        i_g = sig(pre[j])
        f_g = sig(pre[hd + j])
        cand = math.tanh(pre[2 * hd + j])
        o_g = sig(pre[3 * hd + j])
        cj = f_g * c[j] + i_g * cand
        c2.append(cj)
        h2.append(o_g * math.tanh(cj))
    return h2, c2


def test_lstm_step_matches_scalar_oracle_seed7():
    params, w = make_weights(3, 3, seed=7)
    rng = np.random.default_rng(7)
    x = rng.normal(size=3)
    h0 = rng.normal(size=3)
    c0 = rng.normal(size=3)
    h, c = lstm_step(Tensor(x), Tensor(h0), Tensor(c0), w)
    h_ref, c_ref = scalar_lstm_oracle(
        x.tolist(), h0.tolist(), c0.tolist(),
        w.wx.data.tolist(), w.wh.data.tolist(), w.b.data.tolist())
    np.testing.assert_allclose(h.data, h_ref, rtol=1e-12)
    np.testing.assert_allclose(c.data, c_ref, rtol=1e-12)


def test_lstm_step_shape_mismatch_names_dimension():
    _, w = make_weights(3, 4)
    with pytest.raises(ConfigError, match="input dim 5"):
        lstm_step(Tensor(np.zeros((2, 5))), Tensor(np.zeros((2, 4))),
                  Tensor(np.zeros((2, 4))), w)
    with pytest.raises(ConfigError, match="state dim"):
        lstm_step(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 5))),
                  Tensor(np.zeros((2, 5))), w)


def test_lstm_step_single_vector_matches_batch_of_one():
    params, w = make_weights(4, 4, seed=3)
    rng = np.random.default_rng(1)
    x, h0, c0 = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
    h1, c1 = lstm_step(Tensor(x), Tensor(h0), Tensor(c0), w)
    h2, c2 = lstm_step(Tensor(x[None]), Tensor(h0[None]), Tensor(c0[None]), w)
    np.testing.assert_array_equal(h1.data, h2.data[0])
    np.testing.assert_array_equal(c1.data, c2.data[0])


def test_forget_gate_bias_starts_open():
    _, w = make_weights(3, 4, seed=5)
    hd = 4
    assert np.all(w.b.data[hd:2 * hd] > 0.5)


def test_param_set_rejects_duplicates_and_tracks_groups():
    params = ParamSet()
    params.add("a", GROUP_RAE, np.zeros(2))
    params.add("b", GROUP_FROZEN, np.zeros(2))
    with pytest.raises(ConfigError):
        params.add("a", GROUP_RAE, np.zeros(2))
    with pytest.raises(ConfigError):
        params.add("c", "NOPE", np.zeros(2))
    assert [p.name for p in params.group(GROUP_RAE)] == ["a"]
    assert len(params) == 2


def test_linear_validates_input_width():
    params = ParamSet()
    lin = Linear(params, "fc", 3, 2, np.random.default_rng(0))
    with pytest.raises(InputError):
        lin(Tensor(np.zeros((1, 4))))


def test_embedding_lookup_bounds():
    params = ParamSet()
    table = params.add("emb", GROUP_FROZEN, np.eye(3))
    out = embedding_lookup(table, [2, 0])
    np.testing.assert_array_equal(out.data, [[0, 0, 1], [1, 0, 0]])
    with pytest.raises(InputError):
        embedding_lookup(table, [3])
