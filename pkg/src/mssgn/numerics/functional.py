"""Differentiable primitives.

Every function takes and returns :class:`Tensor` objects; the backward closure
of each returns one gradient (or ``None``) per parent.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, DataError, DimensionError
from .tensor import Tensor, _as_tensor, log_nonsmooth, make_result


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_result(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g * b.data, sa), _unbroadcast(g * a.data, sb)

    return make_result(a.data * b.data, (a, b), backward)


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def broadcast_to(x: Tensor, shape) -> Tensor:
    orig = x.shape
    out = np.broadcast_to(x.data, shape)
    return make_result(out, (x,), lambda g: (_unbroadcast(g, orig),))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    orig = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, orig).copy(),)

    return make_result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    s = sum(x, axis=axis, keepdims=keepdims)
    count = x.size // max(s.size, 1)
    return mul(s, np.asarray(1.0 / count, dtype=x.dtype))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    ax = axis % tensors[0].ndim
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=ax))

    return make_result(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def affine(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ W.T + b`` over the trailing axis of ``x``."""
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"affine: input shape {x.shape} does not match weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise DimensionError(f"affine: bias shape {b.shape} does not match weight shape {W.shape}")
    din, dout = W.shape[1], W.shape[0]
    y = x.data @ W.data.T
    if b is not None:
        y = y + b.data

    def backward(g):
        g2 = g.reshape(-1, dout)
        gx = g @ W.data
        gW = g2.T @ x.data.reshape(-1, din)
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return make_result(y, parents, backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with identical leading batch axes."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return make_result(a.data @ b.data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    log_nonsmooth(mask)
    # np.maximum keeps NaN visible instead of clamping it to 0
    return make_result(np.maximum(x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_result(s, (x,), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis; every row sums to one."""
    return softmax(x, axis=-1)


def batch_norm(x: Tensor, st, axis: int = 1) -> Tensor:
    """Per-channel batch normalization; ``st`` carries gamma/beta and running statistics.

    In training mode the statistics are taken over every axis except ``axis``
    and the running estimates are updated in place; in eval mode the stored
    estimates are used and the op is a fixed affine map.
    """
    ax = axis % x.ndim
    C = x.shape[ax]
    if st.gamma.shape != (C,):
        raise DimensionError(f"batch_norm: {C} channels but state holds {st.gamma.shape[0]}")
    bshape = [1] * x.ndim
    bshape[ax] = C
    red = tuple(i for i in range(x.ndim) if i != ax)
    gamma = st.gamma.data.reshape(bshape)
    beta = st.beta.data.reshape(bshape)

    if st.training:
        if x.shape[0] < 2:
            raise ConfigurationError("batch_norm in training mode needs a batch of at least 2")
        n = x.size // C
        mu = x.data.mean(axis=red, keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(axis=red, keepdims=True)
        inv = 1.0 / np.sqrt(var + st.eps)
        xhat = xc * inv
        m = st.momentum
        st.running_mean[...] = (1 - m) * st.running_mean + m * mu.reshape(C)
        st.running_var[...] = (1 - m) * st.running_var + m * var.reshape(C) * (n / max(n - 1, 1))

        def backward(g):
            gxhat = g * gamma
            gx = inv * (gxhat - gxhat.mean(axis=red, keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=red, keepdims=True))
            return gx, (g * xhat).sum(axis=red), g.sum(axis=red)
    else:
        inv = 1.0 / np.sqrt(st.running_var.reshape(bshape) + st.eps)
        xhat = (x.data - st.running_mean.reshape(bshape)) * inv

        def backward(g):
            return g * gamma * inv, (g * xhat).sum(axis=red), g.sum(axis=red)

    y = (gamma * xhat + beta).astype(x.dtype, copy=False)
    return make_result(y, (x, st.gamma, st.beta), backward)


def temporal_conv(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """1-D convolution over the last axis of ``x[N, Cin, T]`` with same-length zero padding."""
    if x.ndim != 3 or W.ndim != 3 or x.shape[1] != W.shape[1]:
        raise DimensionError(f"temporal_conv: input shape {x.shape} does not match kernel shape {W.shape}")
    cout, cin, K = W.shape
    if K % 2 == 0:
        raise ConfigurationError(f"temporal_conv: kernel size must be odd, got {K}")
    N, _, T = x.shape
    pad = (K - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    # cols[n, t, c, k] = xp[n, c, t + k]
    cols = sliding_window_view(xp, K, axis=2).transpose(0, 2, 1, 3).reshape(N, T, cin * K)
    Wm = W.data.reshape(cout, cin * K)
    y = cols @ Wm.T
    if b is not None:
        y = y + b.data
    y = np.ascontiguousarray(y.transpose(0, 2, 1))

    def backward(g):
        gt = g.transpose(0, 2, 1)
        gW = (gt.reshape(-1, cout).T @ cols.reshape(-1, cin * K)).reshape(W.shape)
        gcols = (gt @ Wm).reshape(N, T, cin, K)
        gxp = np.zeros_like(xp)
        for k in range(K):
            gxp[:, :, k:k + T] += gcols[:, :, :, k].transpose(0, 2, 1)
        gx = gxp[:, :, pad:pad + T]
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=(0, 2))

    parents = (x, W) if b is None else (x, W, b)
    return make_result(y, parents, backward)


def max_pool(x: Tensor, axis: int) -> Tensor:
    """Maximum over ``axis`` (kept with extent 1); ties resolve to the lowest index.

    The winning indices are attached to the result as ``.argmax``.
    """
    ax = axis % x.ndim
    idx = np.argmax(x.data, axis=ax)
    idx = np.expand_dims(idx, ax)
    log_nonsmooth(idx)
    out = np.take_along_axis(x.data, idx, axis=ax)
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(gx, idx, g, axis=ax)
        return (gx,)

    res = make_result(out, (x,), backward)
    res.argmax = idx
    return res


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def backward(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (x,), backward)


def cross_entropy_label_smoothed(logits: Tensor, labels, epsilon_ls: float = 0.0) -> Tensor:
    """Mean over the batch of ``-sum_k q_k log p_k`` with ``q = (1-eps)*onehot + eps/K``."""
    if logits.ndim != 2:
        raise DimensionError(f"cross entropy expects logits of shape [N, K], got {logits.shape}")
    if not 0.0 <= epsilon_ls < 1.0:
        raise ConfigurationError(f"label smoothing factor must lie in [0, 1), got {epsilon_ls}")
    N, K = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != N:
        raise DimensionError(f"{labels.shape[0]} labels for {N} rows of logits")
    bad = np.flatnonzero((labels < 0) | (labels >= K))
    if bad.size:
        raise DataError(f"label {labels[bad[0]]} at row {bad[0]} outside [0, {K})")
    q = np.full((N, K), epsilon_ls / K, dtype=logits.dtype)
    q[np.arange(N), labels] += 1.0 - epsilon_ls
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -(q * logp).sum() / N

    def backward(g):
        return (g * (np.exp(logp) - q) / N,)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)
