import numpy as np
import pytest

from seqbind import autodiff as ad
from seqbind.autodiff import Tensor
from seqbind.errors import InputError
from seqbind.gradcheck import gradient_check
from seqbind.layers import LstmWeights, Parameter, ParamSet, lstm_step
from seqbind.losses import binding_loss_graph


def test_linear_map_is_exact_up_to_rounding():
    rng = np.random.default_rng(0)
    w = Parameter("w", "RAE", rng.normal(size=(3, 4)))
    x = Tensor(rng.normal(size=(4, 2)))

    def loss_fn():
        return ad.sum_all(ad.matmul(w.tensor, x))

    assert gradient_check(loss_fn, [w]) < 1e-9


def test_single_lstm_step_seed3():
    params = ParamSet()
    w = LstmWeights(params, "cell", 4, 4, np.random.default_rng(3))
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 4))
    h0 = rng.normal(size=(2, 4)) * 0.5
    c0 = rng.normal(size=(2, 4)) * 0.5

    def loss_fn():
        h, _ = lstm_step(Tensor(x), Tensor(h0), Tensor(c0), w)
        return ad.sum_all(h)

    assert gradient_check(loss_fn, list(params)) < 1e-4


def test_binding_loss_away_from_hinge_kinks():
    # one hinge strictly active, the rest strictly inactive
    za = Parameter("za", "RAE", np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 7.0]]))
    zd = Parameter("zd", "RAE", np.array([[0.3, 0.1], [4.2, -0.2], [0.1, 6.8]]))

    def loss_fn():
        return binding_loss_graph(za.tensor, zd.tensor, 1.5)

    assert gradient_check(loss_fn, [za, zd]) < 1e-4


def test_epsilon_bounds_enforced():
    p = Parameter("w", "RAE", np.ones(2))

    def loss_fn():
        return ad.sum_all(p.tensor)

    with pytest.raises(InputError):
        gradient_check(loss_fn, [p], epsilon=1e-3)
    with pytest.raises(InputError):
        gradient_check(loss_fn, [p], epsilon=1e-7)


def test_nan_loss_reports_infinite_error():
    p = Parameter("w", "RAE", np.array([0.0]))

    def loss_fn():
        data = np.where(p.data > 0, np.nan, 1.0) * p.data
        out = Tensor(np.asarray(data.sum()), (p.tensor,), lambda g: (np.full(1, np.nan),))
        return out

    assert gradient_check(loss_fn, [p]) == np.inf
