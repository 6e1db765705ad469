"""Differentiable neural-network primitives built on :mod:`.tensor`."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, unbroadcast

LN_EPS = 1e-5
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` (row-max subtracted for stability)."""
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (a,), back)


def softmax_rows(a: Tensor) -> Tensor:
    return softmax(a, axis=-1)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(out, (a,), back)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits`` (B x n)."""
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(logits, axis=-1)
    picked = logp[np.arange(len(labels)), labels]
    return -picked.mean()


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    out = x @ weight
    return out + bias if bias is not None else out


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalise over the last axis, then apply ``gain`` and ``bias``."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    x = a.data
    d = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gv = gain.data

    def back(g):
        dxhat = g * gv
        dx = inv / d * (
            d * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return dx, unbroadcast(g * xhat, gain.shape), unbroadcast(g, bias.shape)

    return Tensor._make(xhat * gv + bias.data, (a, gain, bias), back)


def batch_norm(
    a: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Batch normalisation of (B, C, W) input over the batch and width axes.

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, as is conventional).  In eval mode
    the running buffers are used and gradients flow through an affine map.
    """
    x = a.data
    if x.ndim != 3:
        raise ShapeError(f"batch_norm expects (B, C, W), got {x.shape}")
    gv = gamma.data[None, :, None]
    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)[None, :, None]
        xhat = (x - running_mean[None, :, None]) * inv

        def back_eval(g):
            return g * gv * inv, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))

        return Tensor._make(xhat * gv + beta.data[None, :, None], (a, gamma, beta), back_eval)

    n = x.shape[0] * x.shape[2]
    mu = x.mean(axis=(0, 2), keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=(0, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    running_mean *= 1.0 - momentum
    running_mean += momentum * mu.ravel()
    unbiased = var.ravel() * (n / (n - 1) if n > 1 else 1.0)
    running_var *= 1.0 - momentum
    running_var += momentum * unbiased

    def back(g):
        dxhat = g * gv
        dx = inv / n * (
            n * dxhat
            - dxhat.sum(axis=(0, 2), keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        )
        return dx, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))

    return Tensor._make(xhat * gv + beta.data[None, :, None], (a, gamma, beta), back)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 cross-correlation with "same" zero padding.

    ``x`` is (B, C_in, W), ``weight`` is (C_out, C_in, K).  For odd K the
    output at position i is ``sum_k w[k] * x[i + k - (K - 1) // 2]``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {weight.shape}")
    B, C_in, W = x.shape
    C_out, _, K = weight.shape
    left = (K - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (left, K - 1 - left)))
    # (B, C_in, W, K) -> (B*W, C_in*K), one GEMM against the flattened kernel
    cols = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)
    cols = cols.transpose(0, 2, 1, 3).reshape(B * W, C_in * K)
    wmat = weight.data.reshape(C_out, C_in * K)
    out = (cols @ wmat.T).reshape(B, W, C_out).transpose(0, 2, 1)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None]
        parents.append(bias)

    def back(g):
        g2 = g.transpose(0, 2, 1).reshape(B * W, C_out)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            # input gradient = cross-correlation of g with the flipped, transposed kernel
            gp = np.pad(g, ((0, 0), (0, 0), (K - 1 - left, left)))
            gcols = np.lib.stride_tricks.sliding_window_view(gp, K, axis=2)
            gcols = gcols.transpose(0, 2, 1, 3).reshape(B * W, C_out * K)
            wflip = weight.data[:, :, ::-1].transpose(1, 0, 2).reshape(C_in, C_out * K)
            gx = (gcols @ wflip.T).reshape(B, W, C_in).transpose(0, 2, 1)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    return Tensor._make(out, parents, back)


def avg_pool1d(x: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    """Non-overlapping average pooling over the last axis."""
    if kernel != stride:
        raise NotImplementedError("only kernel == stride pooling is supported")
    W = x.shape[-1]
    if W % kernel:
        raise ShapeError(f"avg_pool1d: width {W} not divisible by {kernel}")
    lead = x.shape[:-1]
    out = x.data.reshape(*lead, W // kernel, kernel).mean(axis=-1)

    def back(g):
        return (np.repeat(g / kernel, kernel, axis=-1),)

    return Tensor._make(out, (x,), back)
