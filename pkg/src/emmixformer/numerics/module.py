"""Parameter containers with deterministic naming."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor


def uniform_param(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def const_param(value: float, shape) -> Tensor:
    return Tensor(np.full(shape, float(value)), requires_grad=True)


class Module:
    """Base class: parameters are Tensor attributes with ``requires_grad``.

    Child modules may be attributes or lists of modules.  Non-trainable state
    (batch-norm running statistics) lives in ``self.buffers``.
    """

    def __init__(self):
        self.training = True
        self.buffers: dict[str, np.ndarray] = {}

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator[Module]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, buf in self.buffers.items():
            yield prefix + name, buf
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{name}.{i}.")

    def train(self, mode: bool = True) -> Module:
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {f"param:{n}": p.data.copy() for n, p in self.named_parameters()}
        state.update({f"buffer:{n}": b.copy() for n, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = {f"param:{n}" for n in params} | {f"buffer:{n}" for n in buffers}
        missing = expected - set(state)
        extra = set(state) - expected
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)[:5]} unexpected={sorted(extra)[:5]}")
        for n, p in params.items():
            src = state[f"param:{n}"]
            if src.shape != p.shape:
                raise ValueError(f"shape mismatch for {n}: {src.shape} vs {p.shape}")
            p.data = np.array(src, dtype=np.float64)
        for n, b in buffers.items():
            b[...] = state[f"buffer:{n}"]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)
