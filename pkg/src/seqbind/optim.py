"""Adam optimizer with bias correction.

One AdamState is held per chain-thaw group so that each group's step
counter reflects only the updates actually applied to it.
"""
from __future__ import annotations

import numpy as np

from .layers import Parameter


class AdamState:
    """Adam moments for a fixed set of parameters."""

    def __init__(self, parameters, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Parameter] = list(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        """Apply one bias-corrected update to every covered parameter.

        Parameters outside this state are untouched; a covered parameter
        without a gradient entry is an internal error.
        """
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            if p.name not in grads:
                raise RuntimeError(f"missing gradient for selected parameter '{p.name}'")
            g = grads[p.name]
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.tensor.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment arrays under stable names, for checkpointing."""
        out = {}
        for p in self.params:
            out[f"m/{p.name}"] = self.m[p.name]
            out[f"v/{p.name}"] = self.v[p.name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        for p in self.params:
            self.m[p.name] = np.array(arrays[f"m/{p.name}"], dtype=np.float64)
            self.v[p.name] = np.array(arrays[f"v/{p.name}"], dtype=np.float64)
        self.t = int(t)


def adam_step(state: AdamState, grads: dict[str, np.ndarray]) -> None:
    """Functional alias for AdamState.step."""
    state.step(grads)
