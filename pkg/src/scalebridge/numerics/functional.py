"""Differentiable operations on ``Tensor``.

Every op returns a new ``Tensor``; the backward closure maps the output
gradient to one gradient per input (``None`` for inputs that need none).
"""
import math

import numpy as np

from ..errors import ConfigurationError, ShapeError
from . import kernels
from .tensor import Tensor, as_tensor, grad_enabled


def _make(data, parents, backward):
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# elementwise arithmetic ---------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g / (2.0 * out),))


def square(a):
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def abs(a):
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a):
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data
    return _make(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape),
                            _unbroadcast(g * ~pick_a, b.shape)))


def minimum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _make(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape),
                            _unbroadcast(g * ~pick_a, b.shape)))


def bce_with_logits(logits, target):
    """Elementwise binary cross-entropy of ``sigmoid(logits)`` against ``target``."""
    z = as_tensor(logits)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    out = np.maximum(z.data, 0.0) - z.data * t + np.log1p(np.exp(-np.abs(z.data)))
    return _make(out, (z,), lambda g: (g * (_sigmoid(z.data) - t),))


# reductions and shape ops ---------------------------------------------------

def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def max(a, axis):
    """Maximum along one axis; the gradient goes to the first maximiser."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis).squeeze(axis)

    def backward(g):
        ga = np.zeros(a.shape)
        np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (ga,)

    return _make(out, (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, index):
    a = as_tensor(a)

    def backward(g):
        ga = np.zeros(a.shape)
        np.add.at(ga, index, g)
        return (ga,)

    return _make(a.data[index], (a,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


# linear algebra ------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def backward(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _make(out, (a, b), backward)


def linear(x, weight, bias=None):
    """``y = W x + b`` for ``x`` of shape [in] or rows of [N, in]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: weight shape {weight.shape} does not conform to input shape {x.shape}")
    if bias is not None and as_tensor(bias).shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias shape {as_tensor(bias).shape} does not match weight shape {weight.shape}")
    y = matmul(weight, x) if x.ndim == 1 else matmul(x, transpose(weight))
    return y if bias is None else add(y, bias)


def softmax(v, axis=-1):
    v = as_tensor(v)
    if v.ndim == 0 or v.shape[axis] == 0:
        raise ValueError("empty softmax axis")
    shifted = v.data - v.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (v,), backward)


# spatial ops ---------------------------------------------------------------

def conv3x3(x, weight, bias=None):
    """3x3 convolution, stride 1, zero padding 1: [Cin,H,W] -> [Cout,H,W]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[2:] != (3, 3) or weight.shape[1] != x.shape[0]:
        raise ShapeError(f"conv3x3: weight shape {weight.shape} does not conform to input shape {x.shape}")
    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    out = kernels.conv3x3_forward(x.data, weight.data, None if bias is None else parents[2].data)

    def backward(g):
        gx, gw, gb = kernels.conv3x3_backward(x.data, weight.data, g)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _make(out, parents, backward)


def conv1x1(x, weight, bias=None):
    """Pointwise convolution: weight [Cout, Cin] applied at every pixel."""
    x = as_tensor(x)
    c, h, w = x.shape
    y = linear(transpose(reshape(x, (c, h * w))), weight, bias)
    return reshape(transpose(y), (-1, h, w))


def gap(f):
    """Global average pool [C,H,W] -> [C]."""
    f = as_tensor(f)
    if f.ndim != 3 or f.shape[1] < 1 or f.shape[2] < 1:
        raise ShapeError(f"gap expects [C,H,W] with H,W >= 1, got {f.shape}")
    return mean(f, axis=(1, 2))


def avg_pool(x, k):
    """Non-overlapping k x k average pooling on [C,H,W]."""
    x = as_tensor(x)
    c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"avg_pool: spatial size {(h, w)} not divisible by {k}")
    return mean(reshape(x, (c, h // k, k, w // k, k)), axis=(2, 4))


def max_pool(x, k):
    """Non-overlapping k x k max pooling on [C,H,W]."""
    x = as_tensor(x)
    c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"max_pool: spatial size {(h, w)} not divisible by {k}")
    blocks = transpose(reshape(x, (c, h // k, k, w // k, k)), (0, 1, 3, 2, 4))
    return max(reshape(blocks, (c, h // k, w // k, k * k)), axis=-1)


def layer_norm(x, gamma, beta, eps=1e-5):
    x = as_tensor(x)
    mu = mean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = mean(square(xc), axis=-1, keepdims=True)
    return add(mul(div(xc, sqrt(add(var, eps))), gamma), beta)


# attention -----------------------------------------------------------------

def multi_head_attention(q, k, v, heads, return_weights=False):
    """Scaled dot-product attention split over ``heads``.

    ``q`` is [Nq, D]; ``k`` and ``v`` are [Nk, D]. Each head attends with
    logits ``q_h k_h^T / sqrt(D / heads)``.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    nq, d = q.shape
    nk = k.shape[0]
    if heads < 1 or d % heads:
        raise ConfigurationError(f"model width {d} is not divisible by {heads} heads")
    if nq < 1 or nk < 1:
        raise ShapeError("attention needs at least one query and one key")
    if k.shape != v.shape or k.shape[1] != d:
        raise ShapeError(f"attention shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    dh = d // heads
    qh = transpose(reshape(q, (nq, heads, dh)), (1, 0, 2))
    kh = transpose(reshape(k, (nk, heads, dh)), (1, 2, 0))
    vh = transpose(reshape(v, (nk, heads, dh)), (1, 0, 2))
    attn = softmax(mul(matmul(qh, kh), 1.0 / math.sqrt(dh)), axis=-1)
    out = reshape(transpose(matmul(attn, vh), (1, 0, 2)), (nq, d))
    return (out, attn) if return_weights else out
