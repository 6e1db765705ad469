"""Scaled dot-product attention and the transformer encoder block.

The block follows the residual layout

    Z   = X + MultiHead(LN(X))
    out = LN(MLP(LN(Z)) + Z)

where MLP is linear -> ReLU -> linear.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Module, Tensor


class ConfigError(ValueError):
    pass


@dataclass
class TransformerConfig:
    model_dim: int = 256
    heads: int = 4
    mlp_hidden: int | None = None  # defaults to 4 * model_dim
    layers: int = 1

    def __post_init__(self):
        if self.mlp_hidden is None:
            self.mlp_hidden = 4 * self.model_dim
        for name in ("model_dim", "heads", "mlp_hidden", "layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.model_dim % self.heads:
            raise ConfigError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """``softmax(q k^T / sqrt(d_k)) v`` over the last two axes (no masking)."""
    if q.shape[-1] != k.shape[-1]:
        raise nx.ShapeError(f"attention: query dim {q.shape[-1]} != key dim {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise nx.ShapeError(f"attention: {k.shape[-2]} keys but {v.shape[-2]} values")
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    return nx.softmax(scores, axis=-1) @ v


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal table: sin on even columns, cos on odd ones."""
    if dim % 2:
        raise ConfigError(f"positional encoding needs an even dimension, got {dim}")
    pos = np.arange(length)[:, None]
    freq = 10000.0 ** (-np.arange(0, dim, 2) / dim)
    table = np.empty((length, dim))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)
    return table


class LayerNorm(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gain = nx.const_param(1.0, dim)
        self.bias = nx.const_param(0.0, dim)

    def forward(self, x: Tensor) -> Tensor:
        return nx.layer_norm(x, self.gain, self.bias)


class Linear(Module):
    """``x @ weight + bias`` with weight stored (in, out)."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        super().__init__()
        self.weight = nx.uniform_param(rng, (d_in, d_out), d_in)
        self.bias = nx.uniform_param(rng, d_out, d_in) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return nx.linear(x, self.weight, self.bias)


class MultiHeadAttention(Module):
    """L heads with per-head (d x d/L) projections and a (d x d) output map."""

    def __init__(self, rng: np.random.Generator, cfg: TransformerConfig):
        super().__init__()
        d, h, dk = cfg.model_dim, cfg.heads, cfg.head_dim
        self.heads = h
        self.w_q = nx.uniform_param(rng, (h, d, dk), d)
        self.w_k = nx.uniform_param(rng, (h, d, dk), d)
        self.w_v = nx.uniform_param(rng, (h, d, dk), d)
        self.w_o = nx.uniform_param(rng, (d, d), d)

    def _split(self, x: Tensor, w: Tensor) -> Tensor:
        """Project with every head's (d x dk) matrix at once -> (..., L, T, dk)."""
        L, d, dk = w.shape
        proj = x @ w.transpose(1, 0, 2).reshape(d, L * dk)
        proj = proj.reshape(*proj.shape[:-1], L, dk)
        nd = proj.ndim
        return proj.transpose(tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.w_o.shape[0]:
            raise nx.ShapeError(f"multi-head attention expects width {self.w_o.shape[0]}, got {x.shape[-1]}")
        heads = attention(self._split(x, self.w_q), self._split(x, self.w_k), self._split(x, self.w_v))
        nd = heads.ndim
        perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
        merged = heads.transpose(perm)
        merged = merged.reshape(*merged.shape[:-2], -1)
        return merged @ self.w_o


class EncoderBlock(Module):
    def __init__(self, rng: np.random.Generator, cfg: TransformerConfig):
        super().__init__()
        self.ln_attn = LayerNorm(cfg.model_dim)
        self.attn = MultiHeadAttention(rng, cfg)
        self.ln_mlp = LayerNorm(cfg.model_dim)
        self.fc1 = Linear(rng, cfg.model_dim, cfg.mlp_hidden)
        self.fc2 = Linear(rng, cfg.mlp_hidden, cfg.model_dim)
        self.ln_out = LayerNorm(cfg.model_dim)

    def forward(self, x: Tensor) -> Tensor:
        z = x + self.attn(self.ln_attn(x))
        hidden = self.fc2(nx.relu(self.fc1(self.ln_mlp(z))))
        return self.ln_out(hidden + z)


class TransformerEncoder(Module):
    """Stack of encoder blocks, optionally adding the sinusoidal table first."""

    def __init__(self, rng: np.random.Generator, cfg: TransformerConfig, positional: bool = False):
        super().__init__()
        self.positional = positional
        self.blocks = [EncoderBlock(rng, cfg) for _ in range(cfg.layers)]

    def forward(self, x: Tensor) -> Tensor:
        if self.positional:
            x = x + Tensor(positional_encoding(x.shape[-2], x.shape[-1]))
        for block in self.blocks:
            x = block(x)
        return x
