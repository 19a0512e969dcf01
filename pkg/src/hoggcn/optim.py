from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamSettings:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4


class Adam:
    """Adam with bias correction and L2 weight decay folded into the gradient.

    `decay` names the parameters that receive weight decay; by default all of them.
    """

    def __init__(self, params: dict[str, Tensor], settings: AdamSettings | None = None,
                 decay: set[str] | None = None):
        self.params = params
        self.settings = settings or AdamSettings()
        self.decay = set(params) if decay is None else set(decay)
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        """Update every parameter in place. Gradients default to each tensor's `.grad`."""
        s = self.settings
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.value)
            if g.shape != p.value.shape:
                raise ValueError(f"gradient for {name!r} has shape {g.shape}, expected {p.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
            grads[name] = g
        self.t += 1
        bc1 = 1.0 - s.beta1 ** self.t
        bc2 = 1.0 - s.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            if s.weight_decay and name in self.decay:
                g = g + s.weight_decay * p.value
            m, v = self.m[name], self.v[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + s.eps)
            p.value -= s.lr * update

    def state_dict(self) -> dict:
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}
