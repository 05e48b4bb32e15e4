"""Finite-difference verification of backpropagated gradients."""
from __future__ import annotations

import math

from .autodiff import backward
from .errors import InputError


def gradient_check(loss_fn, parameters, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn` must be a deterministic zero-argument callable that rebuilds
    the forward graph and returns the scalar loss tensor. Every entry of
    every parameter is perturbed by +/- epsilon in place. The relative
    error is |a - b| / max(|a|, |b|, 1e-8); any NaN turns into +inf.
    """
    if not (1e-6 <= epsilon <= 1e-4):
        raise InputError(f"epsilon {epsilon} outside [1e-6, 1e-4]")
    parameters = list(parameters)
    analytic = backward(loss_fn(), parameters)
    worst = 0.0
    for p in parameters:
        flat = p.data.reshape(-1)
        ga = analytic[p.name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            f_plus = loss_fn().item()
            flat[k] = orig - epsilon
            f_minus = loss_fn().item()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = float(ga[k])
            if math.isnan(numeric) or math.isnan(a):
                return math.inf
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
