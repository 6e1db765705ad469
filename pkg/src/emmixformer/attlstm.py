"""Peephole LSTM and the attention LSTM cell.

The attention cell reshapes each d-dimensional vector (input, previous
hidden state, previous cell state) into ``n_tokens`` tokens of width
``d / n_tokens`` and derives its gates from self- and cross-attention among
them:

    SA_x = Attn(Q_x, K_x, V_x)    SA_h = Attn(Q_h, K_h, V_h)
    CA_x = Attn(Q_x, K_h, V_h)    CA_h = Attn(Q_h, K_x, V_x)
    CA_c = Attn(Q_c, K_h, V_h)

    i = sigmoid(lin([SA_x, SA_h, CA_c]))     f = sigmoid(lin([CA_h, SA_x, CA_c]))
    o = sigmoid(lin([CA_x, SA_h]))           g = tanh(lin([SA_x, SA_h]))
    C = f * C_prev + i * g                   h = o * tanh(C)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .attention import ConfigError, Linear, attention
from .numerics import Module, Tensor


@dataclass
class LstmState:
    h: Tensor
    C: Tensor

    @classmethod
    def zeros(cls, batch_shape: tuple, dim: int) -> LstmState:
        return cls(nx.zeros((*batch_shape, dim)), nx.zeros((*batch_shape, dim)))


class PeepholeLSTMCell(Module):
    """LSTM whose forget/input gates see C_{t-1} and whose output gate sees C_t."""

    def __init__(self, rng: np.random.Generator, dim: int):
        super().__init__()
        self.dim = dim
        for gate in "fioc":
            setattr(self, f"W_{gate}", nx.uniform_param(rng, (dim, dim), dim))
            setattr(self, f"U_{gate}", nx.uniform_param(rng, (dim, dim), dim))
            setattr(self, f"b_{gate}", nx.uniform_param(rng, dim, dim))
        for gate in "fio":
            setattr(self, f"V_{gate}", nx.uniform_param(rng, (dim, dim), dim))

    def step(self, x: Tensor, s: LstmState) -> LstmState:
        h, c_prev = s.h, s.C
        f = nx.sigmoid(x @ self.W_f + h @ self.U_f + c_prev @ self.V_f + self.b_f)
        i = nx.sigmoid(x @ self.W_i + h @ self.U_i + c_prev @ self.V_i + self.b_i)
        cand = nx.tanh(x @ self.W_c + h @ self.U_c + self.b_c)
        c = f * c_prev + i * cand
        o = nx.sigmoid(x @ self.W_o + h @ self.U_o + c @ self.V_o + self.b_o)
        return LstmState(o * nx.tanh(c), c)


class AttentionLSTMCell(Module):
    def __init__(self, rng: np.random.Generator, dim: int, n_tokens: int = 16):
        super().__init__()
        if dim % n_tokens:
            raise ConfigError(f"dim {dim} not divisible into {n_tokens} tokens")
        self.dim = dim
        self.n_tokens = n_tokens
        tw = dim // n_tokens
        # K_c and V_c never enter the gate equations, so only Q_c is kept
        for name in ("q_x", "k_x", "v_x", "q_h", "k_h", "v_h", "q_c"):
            setattr(self, name, nx.uniform_param(rng, (tw, tw), tw))
        self.gate_i = Linear(rng, 3 * dim, dim)
        self.gate_f = Linear(rng, 3 * dim, dim)
        self.gate_o = Linear(rng, 2 * dim, dim)
        self.gate_c = Linear(rng, 2 * dim, dim)

    def _tokens(self, v: Tensor) -> Tensor:
        return v.reshape(*v.shape[:-1], self.n_tokens, self.dim // self.n_tokens)

    def _flat(self, v: Tensor) -> Tensor:
        return v.reshape(*v.shape[:-2], self.dim)

    def attention_gates(self, x: Tensor, s: LstmState) -> tuple[Tensor, Tensor, Tensor, Tensor, Tensor]:
        """Return ``(SA_x, SA_h, CA_x, CA_h, CA_c)``, each flattened to width d."""
        xt, ht, ct = self._tokens(x), self._tokens(s.h), self._tokens(s.C)
        qx, kx, vx = xt @ self.q_x, xt @ self.k_x, xt @ self.v_x
        qh, kh, vh = ht @ self.q_h, ht @ self.k_h, ht @ self.v_h
        qc = ct @ self.q_c
        out = (
            attention(qx, kx, vx),
            attention(qh, kh, vh),
            attention(qx, kh, vh),
            attention(qh, kx, vx),
            attention(qc, kh, vh),
        )
        return tuple(self._flat(o) for o in out)

    def step(self, x: Tensor, s: LstmState) -> LstmState:
        sa_x, sa_h, ca_x, ca_h, ca_c = self.attention_gates(x, s)
        i = nx.sigmoid(self.gate_i(nx.concat([sa_x, sa_h, ca_c], axis=-1)))
        f = nx.sigmoid(self.gate_f(nx.concat([ca_h, sa_x, ca_c], axis=-1)))
        o = nx.sigmoid(self.gate_o(nx.concat([ca_x, sa_h], axis=-1)))
        cand = nx.tanh(self.gate_c(nx.concat([sa_x, sa_h], axis=-1)))
        c = f * s.C + i * cand
        return LstmState(o * nx.tanh(c), c)


class RecurrentLayer(Module):
    """Runs a cell left to right from a zero state; returns all hidden states."""

    def __init__(self, cell: Module):
        super().__init__()
        self.cell = cell

    def forward(self, x: Tensor) -> Tensor:
        T = x.shape[-2]
        if T < 1:
            raise ValueError("sequence must have at least one step")
        state = LstmState.zeros(x.shape[:-2], self.cell.dim)
        hs = []
        for t in range(T):
            state = self.cell.step(x[..., t, :], state)
            hs.append(state.h)
        return nx.stack(hs, axis=-2)


def attlstm(rng: np.random.Generator, dim: int, n_tokens: int = 16) -> RecurrentLayer:
    return RecurrentLayer(AttentionLSTMCell(rng, dim, n_tokens))


def peephole_lstm(rng: np.random.Generator, dim: int) -> RecurrentLayer:
    return RecurrentLayer(PeepholeLSTMCell(rng, dim))
