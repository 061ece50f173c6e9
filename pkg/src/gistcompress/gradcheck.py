"""Central finite-difference check of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import NumericError, Tensor, backward, float64_mode, no_grad


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    max_coords: int = 12,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference grads.

    ``f`` re-evaluates the scalar loss from the current contents of
    ``params``. Everything runs in 64-bit floats; the params are restored to
    their original dtype afterwards. At most ``max_coords`` coordinates per
    tensor are probed.
    """
    rng = np.random.default_rng(seed)
    saved = [(p.data, p.grad) for p in params]
    try:
        with float64_mode():
            for p in params:
                p.data = p.data.astype(np.float64)
                p.grad = None
            loss = f()
            backward(loss)
            analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
            worst = 0.0
            for p, ga in zip(params, analytic):
                flat = p.data.reshape(-1)
                n = flat.size
                coords = np.arange(n) if n <= max_coords else rng.choice(n, max_coords, replace=False)
                for i in coords:
                    orig = flat[i]
                    with no_grad():
                        flat[i] = orig + eps
                        up = float(f().data)
                        flat[i] = orig - eps
                        down = float(f().data)
                    flat[i] = orig
                    if not (np.isfinite(up) and np.isfinite(down)):
                        raise NumericError(f"non-finite loss while probing coordinate {i}")
                    cd = (up - down) / (2 * eps)
                    an = float(ga.reshape(-1)[i])
                    err = abs(an - cd) / max(abs(an), abs(cd), 1e-8)
                    worst = max(worst, err)
            return worst
    finally:
        for p, (data, grad) in zip(params, saved):
            p.data = data
            p.grad = grad
