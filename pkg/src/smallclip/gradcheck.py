"""Finite-difference gradient checking at 64-bit precision.

The checker perturbs every coordinate of every supplied tensor with central
differences and compares against the analytic gradients the loss closure
produces. Inputs can be checked too: wrap them in a ParamTensor and have the
closure route the backward pass's input gradient into its ``.grad``.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .nn import ParamTensor


def grad_check(loss_fn, tensors, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(compute_grad)`` must return the scalar loss; when
    ``compute_grad`` is true it must also populate ``t.grad`` for every tensor
    in ``tensors``. It must be deterministic (fix any rng inside the closure).
    Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
    """
    if eps <= 0:
        raise ContractError("eps must be > 0")
    tensors = list(tensors)
    for t in tensors:
        if not isinstance(t, ParamTensor):
            raise ContractError(f"grad_check needs ParamTensors, got {type(t)!r}")
        t.zero_grad()
    loss_fn(True)
    analytic = [t.grad.copy() for t in tensors]

    max_rel = 0.0
    for t, ana in zip(tensors, analytic):
        flat = t.values.reshape(-1)
        ana_flat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn(False)
            flat[i] = orig - eps
            lm = loss_fn(False)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            rel = abs(ana_flat[i] - numeric) / max(abs(ana_flat[i]), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel
