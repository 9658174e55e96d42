"""Adam with bias-corrected moment estimates."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError


class Adam:
    """Adam over a fixed list of parameter arrays, updated in place.

    One first/second moment array is kept per parameter tensor. ``m`` and
    ``v`` may be supplied (e.g. views into flat buffers shared with the
    compiled training kernel); otherwise they are allocated as zeros.
    """

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, m=None, v=None):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = list(m) if m is not None else [np.zeros_like(p) for p in self.params]
        self.v = list(v) if v is not None else [np.zeros_like(p) for p in self.params]
        for p, m_, v_ in zip(self.params, self.m, self.v):
            if m_.shape != p.shape or v_.shape != p.shape:
                raise ShapeError("moment buffers must mirror parameter shapes")

    def step(self, grads) -> None:
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ShapeError(f"expected {len(self.params)} gradients, got {len(grads)}")
        for p, g in zip(self.params, grads):
            if np.shape(g) != p.shape:
                raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(state: Adam, grads) -> list:
    """Apply one update and return the (in-place updated) parameters."""
    state.step(grads)
    return state.params
