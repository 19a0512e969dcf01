from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tape, Tensor


def finite_diff_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
                      probe_count: int = 10, h: float = 1e-5, seed: int = 0,
                      detail: bool = False):
    """Compare tape gradients with central differences at random entries.

    `loss_fn` must rebuild the loss from the current parameter values each
    call. Returns the largest relative error, where the denominator is
    max(|analytic|, |numeric|, 1e-8). With ``detail=True`` also returns the
    per-probe records ``(name, index, analytic, numeric, rel_err)``.
    """
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = {k: (np.zeros_like(p.value) if p.grad is None else p.grad.copy())
                for k, p in params.items()}

    rng = np.random.default_rng(seed)
    worst = 0.0
    records = []
    for name, p in params.items():
        flat = p.value.reshape(-1)
        count = min(probe_count, flat.size)
        for idx in rng.choice(flat.size, size=count, replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            plus = loss_fn().item()
            flat[idx] = orig - h
            minus = loss_fn().item()
            flat[idx] = orig
            numeric = (plus - minus) / (2.0 * h)
            exact = float(analytic[name].reshape(-1)[idx])
            err = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
            worst = max(worst, err)
            records.append((name, int(idx), exact, numeric, err))
    return (worst, records) if detail else worst
