"""Small layer library on top of the tensor ops."""

import numpy as np

from . import ops
from .tensor import Tensor, dropout as dropout_op, relu


class Module:
    """Base class: named parameter collection plus train/eval mode."""

    def __init__(self):
        self.training = True

    def params(self, prefix=""):
        """Flat dict of parameter name -> Tensor, walking submodules."""
        out = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.params(f"{name}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.params(f"{name}.{i}."))
        return out

    def _set_mode(self, training):
        self.training = training
        for val in vars(self).values():
            if isinstance(val, Module):
                val._set_mode(training)
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        item._set_mode(training)

    def train(self):
        self._set_mode(True)
        return self

    def eval(self):
        self._set_mode(False)
        return self

    def zero_grad(self):
        for p in self.params().values():
            p.grad = None

    def astype(self, dtype):
        """Cast every parameter in place (float64 casts are used by tests)."""
        for p in self.params().values():
            p.data = p.data.astype(dtype)
        return self

    def n_params(self):
        return sum(p.size for p in self.params().values())


def xavier_uniform(rng, n_in, n_out, shape=None):
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=shape or (n_in, n_out)).astype(np.float32)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True, w_scale=1.0):
        super().__init__()
        self.w = Tensor(xavier_uniform(rng, n_in, n_out) * w_scale, requires_grad=True)
        self.b = Tensor(np.zeros(n_out, dtype=np.float32), requires_grad=True) if bias else None

    def __call__(self, x):
        return ops.linear(x, self.w, self.b)


class Conv2d(Module):
    """3x3-style conv block building piece; NHWC, stride 1."""

    def __init__(self, kh, kw, c_in, c_out, rng, padding=(0, 0)):
        super().__init__()
        std = np.sqrt(2.0 / (kh * kw * c_in))
        self.w = Tensor(rng.normal(0.0, std, size=(kh, kw, c_in, c_out)).astype(np.float32),
                        requires_grad=True)
        self.b = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True)
        self.padding = padding

    def __call__(self, x):
        return ops.conv2d(x, self.w, self.b, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.gain = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return ops.layer_norm(x, self.gain, self.bias, eps=self.eps)


class Embedding(Module):
    def __init__(self, n_rows, dim, rng, std=0.02):
        super().__init__()
        self.table = Tensor(rng.normal(0.0, std, size=(n_rows, dim)).astype(np.float32),
                            requires_grad=True)

    def __call__(self, indices):
        return ops.embedding_lookup(self.table, indices)


class Dropout(Module):
    def __init__(self, p, rng):
        super().__init__()
        self.p = p
        self.rng = rng

    def __call__(self, x):
        return dropout_op(x, self.p, self.rng, training=self.training)


class MLP(Module):
    """Linear -> relu -> ... -> Linear over a list of widths."""

    def __init__(self, widths, rng, bias=True):
        super().__init__()
        self.layers = [Linear(a, b, rng, bias=bias) for a, b in zip(widths, widths[1:])]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x
