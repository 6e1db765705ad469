"""Two-branch 1-D CNN embedding the fast and slow velocity channels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .attention import ConfigError
from .numerics import Module, Tensor
from .preprocessing import PreprocessedSample


class InputLengthError(ValueError):
    pass


@dataclass
class CnnConfig:
    kernels: tuple[int, ...] = (3, 5, 7, 9)
    channels: tuple[int, ...] = (32, 64, 96, 128)
    pool: int = 2
    in_channels: int = 2

    def __post_init__(self):
        self.kernels = tuple(int(k) for k in self.kernels)
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.kernels) != 4 or len(self.channels) != 4:
            raise ConfigError("each branch has exactly 4 stages")
        if any(b <= a for a, b in zip(self.kernels, self.kernels[1:])):
            raise ConfigError(f"kernel sizes must strictly increase, got {self.kernels}")
        if min(self.kernels) < 1 or min(self.channels) < 1:
            raise ConfigError("kernel sizes and channel counts must be positive")

    @property
    def downsample(self) -> int:
        return self.pool ** len(self.kernels)

    @property
    def out_dim(self) -> int:
        """Width of the concatenated two-branch feature."""
        return 2 * self.channels[-1]


class ConvStage(Module):
    """conv1d -> batch norm -> ReLU -> average pool."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, kernel: int, pool: int = 2):
        super().__init__()
        fan_in = c_in * kernel
        self.pool = pool
        self.weight = nx.uniform_param(rng, (c_out, c_in, kernel), fan_in)
        self.bias = nx.uniform_param(rng, c_out, fan_in)
        self.gamma = nx.const_param(1.0, c_out)
        self.beta = nx.const_param(0.0, c_out)
        self.buffers["running_mean"] = np.zeros(c_out)
        self.buffers["running_var"] = np.ones(c_out)

    def pre_pool(self, x: Tensor) -> Tensor:
        y = nx.conv1d(x, self.weight, self.bias)
        y = nx.batch_norm(y, self.gamma, self.beta, self.buffers["running_mean"],
                          self.buffers["running_var"], self.training)
        return nx.relu(y)

    def forward(self, x: Tensor) -> Tensor:
        return nx.avg_pool1d(self.pre_pool(x), self.pool, self.pool)


class CnnBranch(Module):
    def __init__(self, rng: np.random.Generator, cfg: CnnConfig):
        super().__init__()
        self.downsample = cfg.downsample
        widths = (cfg.in_channels, *cfg.channels)
        self.stages = [ConvStage(rng, widths[i], widths[i + 1], k, cfg.pool) for i, k in enumerate(cfg.kernels)]

    def forward(self, x: Tensor) -> Tensor:
        """(B, 2, W) -> (B, C, W / 16)."""
        if x.shape[-1] % self.downsample:
            raise InputLengthError(
                f"window length {x.shape[-1]} is not divisible by {self.downsample}; "
                f"set window_length to a multiple of {self.downsample}"
            )
        for stage in self.stages:
            x = stage(x)
        return x


class SiameseCNN(Module):
    def __init__(self, rng: np.random.Generator, cfg: CnnConfig):
        super().__init__()
        self.cfg = cfg
        self.fast = CnnBranch(rng, cfg)
        self.slow = CnnBranch(rng, cfg)

    def forward(self, fast: Tensor, slow: Tensor) -> Tensor:
        """Batched (B, 2, W) pair -> time-major token sequence (B, W/16, 2C)."""
        if fast.shape != slow.shape:
            raise InputLengthError(f"fast {fast.shape} and slow {slow.shape} differ")
        feats = nx.concat([self.fast(fast), self.slow(slow)], axis=1)
        return feats.swapaxes(1, 2)

    def embed_sample(self, sample: PreprocessedSample) -> Tensor:
        """Single sample -> (W/16, 2C) token sequence."""
        out = self.forward(Tensor(sample.fast[None]), Tensor(sample.slow[None]))
        return out.reshape(out.shape[1:])
