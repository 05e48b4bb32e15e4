"""Trainable parameters and layer primitives: LSTM cell, fully connected,
embedding lookup."""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InputError

GROUP_RAE = "RAE"
GROUP_RETROFIT = "RETROFIT"
GROUP_FROZEN = "FROZEN"
GROUPS = (GROUP_RAE, GROUP_RETROFIT, GROUP_FROZEN)


class Parameter:
    """A named leaf tensor assigned once to a parameter group."""

    __slots__ = ("name", "group", "tensor")

    def __init__(self, name: str, group: str, array: np.ndarray):
        if group not in GROUPS:
            raise ConfigError(f"unknown parameter group {group!r}")
        self.name = name
        self.group = group
        self.tensor = Tensor(np.array(array, dtype=np.float64))

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def __repr__(self):
        return f"Parameter({self.name!r}, {self.group}, shape={self.data.shape})"


class ParamSet:
    """Ordered, name-unique collection of parameters."""

    def __init__(self):
        self._by_name: dict[str, Parameter] = {}

    def add(self, name: str, group: str, array: np.ndarray) -> Parameter:
        if name in self._by_name:
            raise ConfigError(f"duplicate parameter name {name!r}")
        p = Parameter(name, group, array)
        self._by_name[name] = p
        return p

    def __iter__(self):
        return iter(self._by_name.values())

    def __len__(self):
        return len(self._by_name)

    def __getitem__(self, name: str) -> Parameter:
        return self._by_name[name]

    def group(self, group: str) -> list[Parameter]:
        return [p for p in self._by_name.values() if p.group == group]

    def names(self) -> list[str]:
        return list(self._by_name.keys())


def uniform_init(rng: np.random.Generator, shape, fan: int) -> np.ndarray:
    """U(-1/sqrt(fan), 1/sqrt(fan)) initialization."""
    k = 1.0 / math.sqrt(fan)
    return rng.uniform(-k, k, size=shape)


class LstmWeights:
    """One LSTM layer's weights, gate order: input, forget, candidate, output.

    Stored as an input-to-gates matrix (4H x I), a hidden-to-gates matrix
    (4H x H) and gate biases (4H,).
    """

    def __init__(self, params: ParamSet, prefix: str, input_dim: int, hidden_dim: int,
                 rng: np.random.Generator, group: str = GROUP_RAE):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        h = hidden_dim
        self.wx = params.add(f"{prefix}.wx", group, uniform_init(rng, (4 * h, input_dim), h))
        self.wh = params.add(f"{prefix}.wh", group, uniform_init(rng, (4 * h, h), h))
        bias = uniform_init(rng, (4 * h,), h)
        bias[h:2 * h] += 1.0  # open forget gates at init
        self.b = params.add(f"{prefix}.b", group, bias)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, w: LstmWeights) -> tuple[Tensor, Tensor]:
    """One LSTM cell update over a (B x I) input batch.

    Returns the next hidden and cell states, each (B x H). One-dimensional
    inputs are treated as a batch of one and returned one-dimensional.
    """
    single = x.ndim == 1
    if single:
        x = ad.reshape(x, (1, -1))
        h = ad.reshape(h, (1, -1))
        c = ad.reshape(c, (1, -1))
    hd = w.hidden_dim
    if x.shape[1] != w.input_dim:
        raise ConfigError(f"lstm_step: input dim {x.shape[1]} does not match weights ({w.input_dim})")
    if h.shape[1] != hd or c.shape[1] != hd:
        raise ConfigError(f"lstm_step: state dim {h.shape[1]}/{c.shape[1]} does not match weights ({hd})")
    gates = ad.affine2(x, h, w.wx.tensor, w.wh.tensor, w.b.tensor)
    hc = ad.lstm_cell(gates, c)
    h_next = ad.slice_cols(hc, 0, hd)
    c_next = ad.slice_cols(hc, hd, 2 * hd)
    if single:
        h_next = ad.reshape(h_next, (hd,))
        c_next = ad.reshape(c_next, (hd,))
    return h_next, c_next


class Linear:
    """Fully connected layer y = x @ w.T + b with a (out, in) weight."""

    def __init__(self, params: ParamSet, prefix: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator, group: str = GROUP_RAE):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = params.add(f"{prefix}.w", group, uniform_init(rng, (out_dim, in_dim), in_dim))
        self.b = params.add(f"{prefix}.b", group, uniform_init(rng, (out_dim,), in_dim))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise InputError(f"linear layer expects {self.in_dim} inputs, got {x.shape[-1]}")
        return ad.affine(x, self.w.tensor, self.b.tensor)


def embedding_lookup(table: Parameter, ids) -> Tensor:
    """Row lookup into an embedding table; differentiable w.r.t. the table."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise InputError(f"token id out of range for table of {table.data.shape[0]} rows")
    return ad.gather_rows(table.tensor, ids)
