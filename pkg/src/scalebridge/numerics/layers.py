"""Parameterised layers built on the functional ops."""
import math

import numpy as np

from . import functional as F
from .tensor import Parameter


class Module:
    """Container that discovers ``Parameter`` and sub-``Module`` attributes."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f"{full}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def set_trainable(self, flag):
        for p in self.parameters():
            p.trainable = flag

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, n_in, n_out, rng=None, bias=True, zero=False):
        if zero or rng is None:
            w = np.zeros((n_out, n_in))
        else:
            w = _uniform(rng, (n_out, n_in), n_in)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def __call__(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv3x3(Module):
    def __init__(self, c_in, c_out, rng=None, bias=True, zero=False):
        if zero or rng is None:
            w = np.zeros((c_out, c_in, 3, 3))
        else:
            w = _uniform(rng, (c_out, c_in, 3, 3), 9 * c_in)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(c_out)) if bias else None

    def __call__(self, x):
        return F.conv3x3(x, self.weight, self.bias)


class Conv1x1(Module):
    def __init__(self, c_in, c_out, rng=None, bias=True, zero=False):
        if zero or rng is None:
            w = np.zeros((c_out, c_in))
        else:
            w = _uniform(rng, (c_out, c_in), c_in)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(c_out)) if bias else None

    def __call__(self, x):
        return F.conv1x1(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d):
        self.gamma = Parameter(np.ones(d))
        self.beta = Parameter(np.zeros(d))

    def __call__(self, x):
        return F.layer_norm(x, self.gamma, self.beta)


class MultiHeadAttention(Module):
    """Learned Q/K/V projections around ``functional.multi_head_attention``."""

    def __init__(self, d, heads, rng=None, out_proj=True):
        if d % heads:
            from ..errors import ConfigurationError
            raise ConfigurationError(f"model width {d} is not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = Linear(d, d, rng)
        self.k_proj = Linear(d, d, rng)
        self.v_proj = Linear(d, d, rng)
        self.out_proj = Linear(d, d, rng) if out_proj else None

    def __call__(self, query, key=None, value=None, return_weights=False):
        key = query if key is None else key
        value = key if value is None else value
        out, attn = F.multi_head_attention(
            self.q_proj(query), self.k_proj(key), self.v_proj(value), self.heads, return_weights=True
        )
        if self.out_proj is not None:
            out = self.out_proj(out)
        return (out, attn) if return_weights else out


class FeedForward(Module):
    def __init__(self, d, hidden, rng=None):
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng)

    def __call__(self, x):
        return self.fc2(F.relu(self.fc1(x)))
