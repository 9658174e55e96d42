"""Layer forward/backward passes.

Every layer works on a batch of row vectors (shape ``(batch, features)``);
a 1-D input is treated as a batch of one and the result is returned 1-D.
Layers cache what ``backward`` needs, so each ``backward`` must follow a
``forward`` on the same layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError


def _batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ShapeError(f"expected vector or batch, got {x.ndim}-D input")
    return x, False


class DenseLayer:
    """Affine map ``W x + b`` with ``W`` stored as (out, in)."""

    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        self._x = None

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]

    def forward(self, x):
        xb, single = _batch(x)
        if xb.shape[1] != self.in_size:
            raise ShapeError(f"dense layer expects {self.in_size} inputs, got {xb.shape[1]}")
        self._x = xb
        out = xb @ self.weights.T + self.bias
        return out[0] if single else out

    def backward(self, upstream):
        """Store parameter gradients (summed over the batch); return input gradient."""
        if self._x is None:
            raise RuntimeError("backward called before forward")
        gb, single = _batch(upstream)
        if gb.shape != (self._x.shape[0], self.out_size):
            raise ShapeError(f"upstream shape {gb.shape} does not match forward output")
        self.grad_weights = gb.T @ self._x
        self.grad_bias = gb.sum(axis=0)
        grad_in = gb @ self.weights
        self._x = None
        return grad_in[0] if single else grad_in


def dense_forward(layer: DenseLayer, x):
    return layer.forward(x)


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


class ReluLayer:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, upstream):
        if self._mask is None:
            raise RuntimeError("backward called before forward")
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != self._mask.shape:
            raise ShapeError("upstream shape does not match forward output")
        grad = np.where(self._mask, upstream, 0.0)
        self._mask = None
        return grad


class DrLayer:
    """Differential rectifier units: one ``|x_i - y_i|`` per vector dimension.

    The input is the concatenation ``[vec1, vec2]`` of length ``2 * dim``.
    No trainable parameters; the connections from the inputs are fixed at 1.
    The subgradient of ``|z|`` at ``z = 0`` is taken as 0.
    """

    def __init__(self, dim: int):
        self.dim = int(dim)
        self._sign = None

    def _split(self, x) -> tuple[np.ndarray, bool]:
        xb, single = _batch(x)
        if xb.shape[1] % 2:
            raise ShapeError(f"DR input length must be even, got {xb.shape[1]}")
        if xb.shape[1] != 2 * self.dim:
            raise ShapeError(f"DR layer expects {2 * self.dim} inputs, got {xb.shape[1]}")
        return xb, single

    def forward(self, x):
        xb, single = self._split(x)
        diff = xb[:, : self.dim] - xb[:, self.dim :]
        self._sign = np.sign(diff)
        out = np.abs(diff)
        return out[0] if single else out

    def backward(self, upstream):
        if self._sign is None:
            raise RuntimeError("backward called before forward")
        gb, single = _batch(upstream)
        if gb.shape != self._sign.shape:
            raise ShapeError(f"DR upstream must have shape {self._sign.shape}, got {gb.shape}")
        g = self._sign * gb
        self._sign = None
        grad = np.concatenate([g, -g], axis=1)
        return grad[0] if single else grad

    def kink_mask(self, x) -> np.ndarray:
        """True where an input pair sits exactly on the |x - y| = 0 kink."""
        xb, single = self._split(x)
        mask = xb[:, : self.dim] == xb[:, self.dim :]
        return mask[0] if single else mask


def dr_forward(layer: DrLayer, concat_input):
    return layer.forward(concat_input)


def dr_backward(layer: DrLayer, upstream):
    return layer.backward(upstream)


@dataclass(frozen=True)
class LossOutput:
    loss: float
    probabilities: np.ndarray
    grad_logits: np.ndarray


def softmax(logits) -> np.ndarray:
    z, single = _batch(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if single else p


def softmax_xent(logits, true_class) -> LossOutput:
    """Softmax + cross-entropy for one sample, or the batch mean for a batch.

    For a batch, ``loss`` is the mean over rows and ``grad_logits`` is the
    gradient of that mean.
    """
    z, single = _batch(logits)
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite logits")
    labels = np.atleast_1d(np.asarray(true_class, dtype=np.intp))
    if labels.shape != (z.shape[0],):
        raise ShapeError("need one class label per row of logits")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_norm[:, None]
    p = np.exp(log_p)
    rows = np.arange(z.shape[0])
    losses = -log_p[rows, labels]
    grad = p.copy()
    grad[rows, labels] -= 1.0
    grad /= z.shape[0]
    if single:
        return LossOutput(float(losses[0]), p[0], grad[0])
    return LossOutput(float(losses.mean()), p, grad)
