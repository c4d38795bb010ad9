"""Adam with bias correction, tuned for adversarial training (0.5 / 0.9)."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["Adam", "TrainingError", "BETA1", "BETA2", "EPS"]

BETA1 = 0.5
BETA2 = 0.9
EPS = 1e-8


class TrainingError(RuntimeError):
    """Raised when an update would corrupt the parameters (NaN/Inf grads)."""


class Adam:
    """Keeps first/second moment estimates per parameter.

    ``step()`` consumes ``p.grad`` for every tracked parameter and applies
    the bias-corrected update in place.  The step counter ``t`` advances by
    exactly one per call.
    """

    def __init__(self, named_params, lr: float = 1e-4,
                 beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS):
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = np.zeros_like(p.data)

    def step(self):
        for name, p in zip(self.names, self.params):
            if p.grad is None:
                raise TrainingError(f"missing gradient for {name}")
            if not np.all(np.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient in {name}; aborting update")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mh = m / b1t
            vh = v / b2t
            p.data -= self.lr * mh / (np.sqrt(vh) + self.eps)

    # -- checkpoint plumbing ------------------------------------------

    def state_arrays(self, prefix: str) -> dict:
        out = {}
        for name, m, v in zip(self.names, self.m, self.v):
            out[f"{prefix}{name}.m"] = m
            out[f"{prefix}{name}.v"] = v
        return out

    def load_state_arrays(self, prefix: str, arrays: dict, t: int):
        self.t = int(t)
        for i, name in enumerate(self.names):
            for slot, store in (("m", self.m), ("v", self.v)):
                arr = arrays[f"{prefix}{name}.{slot}"]
                if arr.shape != store[i].shape:
                    raise ValueError(
                        f"optimizer state {prefix}{name}.{slot} has shape "
                        f"{arr.shape}, expected {store[i].shape}"
                    )
                store[i] = arr.astype(store[i].dtype, copy=True)
