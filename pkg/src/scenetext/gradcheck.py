"""Central finite-difference checking of recorded gradients.

Checks run the function at float64 whenever the tensors are float64; the
difference quotient itself is always accumulated at 64-bit.
"""

import numpy as np

from .tensor import Tape, backward


def numeric_gradient(f, t, h=1e-3):
    """d f() / d t by central differences, perturbing t.data in place."""
    g = np.zeros(t.data.shape, dtype=np.float64)
    flat = t.data.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f().data)
        flat[i] = orig - h
        fm = float(f().data)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def check_gradients(f, tensors, h=1e-3):
    """Max relative error between recorded and numeric gradients.

    `f` rebuilds the forward pass (returning a scalar Tensor) from the given
    tensors; every tensor must have requires_grad set. Relative error is
    |a - n| / max(1, |a|, |n|) per element.
    """
    for t in tensors:
        t.grad = None
    with Tape():
        loss = f()
        backward(loss)
    worst = 0.0
    for t in tensors:
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        num = numeric_gradient(f, t, h)
        denom = np.maximum(1.0, np.maximum(np.abs(ana), np.abs(num)))
        worst = max(worst, float((np.abs(ana - num) / denom).max()))
    return worst
