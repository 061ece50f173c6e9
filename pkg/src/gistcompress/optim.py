"""Adam and gradient-norm clipping over named parameter collections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, state: AdamState) -> None:
    """Apply one Adam update in place to every tensor of ``params``.

    ``params`` is any collection exposing ``frozen`` and ``named_tensors()``
    (model parameters or gist pools).
    """
    if params.frozen:
        raise ContractError("refusing to update a frozen parameter collection")
    named = list(params.named_tensors())
    missing = [name for name, t in named if t.grad is None]
    if missing:
        raise ContractError(f"missing grads for: {', '.join(missing)}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for name, tensor in named:
        g = tensor.grad
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(tensor.data)
            state.second_moment[name] = np.zeros_like(tensor.data)
        v = state.second_moment[name]
        if m.shape != tensor.shape:
            raise ContractError(f"moment shape mismatch for {name}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
        tensor.data -= update.astype(tensor.data.dtype)


def grad_norm(collections) -> float:
    total = 0.0
    for params in collections:
        for _, t in params.named_tensors():
            if t.grad is not None:
                total += float((t.grad.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def clip_grad_norm(collections, max_norm: float) -> float:
    """Rescale grads so their joint L2 norm is at most ``max_norm``."""
    norm = grad_norm(collections)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for params in collections:
            for _, t in params.named_tensors():
                if t.grad is not None:
                    t.grad *= scale
    return norm
