"""Pure numpy training kernel, used when the compiled one is unavailable."""

from __future__ import annotations

from .layers import softmax_xent

NAME = "python"


def train_epoch(net, adam, m, v, x, y, order, batch_size) -> float:
    """One pass over ``x[order]`` in mini-batches; returns the summed loss.

    ``m`` and ``v`` are the flat moment buffers behind ``adam`` (unused
    here, kept for signature parity with the compiled kernel).
    """
    total = 0.0
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        out = softmax_xent(net.forward(x[idx]), y[idx])
        net.backward(out.grad_logits)
        adam.step(net.gradients())
        total += out.loss * len(idx)
    return total
