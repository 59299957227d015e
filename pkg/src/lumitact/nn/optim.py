"""Adaptive-moment gradient updates."""

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, frozen=None):
        """Update params in place. ``frozen`` is an optional per-array entry:
        True skips the array entirely, an ndarray masks elements (1 = frozen)."""
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("params/grads do not match optimizer state")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            if frozen is not None and frozen[i] is True:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            update = self.lr * (self.m[i] / bc1) / \
                (np.sqrt(self.v[i] / bc2) + self.eps)
            if frozen is not None and isinstance(frozen[i], np.ndarray):
                update = update * (1.0 - frozen[i])
            p -= update

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state):
        self.t = int(state["t"])
        self.m = [np.asarray(a, dtype=float) for a in state["m"]]
        self.v = [np.asarray(a, dtype=float) for a in state["v"]]
