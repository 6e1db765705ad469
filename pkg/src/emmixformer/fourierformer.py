"""Self-attention on the amplitude and phase of a per-channel DFT over time."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .attention import TransformerConfig, TransformerEncoder
from .numerics import ComplexTensor, Module, Tensor

TIME_AXIS = -2


@dataclass
class SpectralPair:
    amplitude: Tensor  # (..., T, d), >= 0 when produced by to_spectrum
    phase: Tensor  # (..., T, d), in (-pi, pi] when produced by to_spectrum


def to_spectrum(x: Tensor) -> SpectralPair:
    """Unitary DFT along time for every feature channel, as amplitude and phase."""
    f = nx.dft(x, axis=TIME_AXIS)
    return SpectralPair(f.abs(), f.angle())


def from_spectrum(sp: SpectralPair) -> Tensor:
    """Recombine ``A * exp(i * phi)`` and return the real part of the inverse DFT."""
    if sp.amplitude.shape != sp.phase.shape:
        raise nx.ShapeError(f"amplitude {sp.amplitude.shape} vs phase {sp.phase.shape}")
    spec = ComplexTensor(sp.amplitude * nx.cos(sp.phase), sp.amplitude * nx.sin(sp.phase))
    return nx.idft(spec, axis=TIME_AXIS)


class FourierFormer(Module):
    """DFT -> (amplitude, phase) transformers -> inverse DFT.

    With ``bypass=True`` the two transformers are replaced by the identity,
    which makes the block an exact (to rounding) identity map.
    """

    def __init__(self, rng: np.random.Generator, cfg: TransformerConfig, bypass: bool = False):
        super().__init__()
        self.bypass = bypass
        self.amplitude_encoder = TransformerEncoder(rng, cfg, positional=True)
        self.phase_encoder = TransformerEncoder(rng, cfg, positional=True)

    def spectral_attention(self, sp: SpectralPair) -> SpectralPair:
        if self.bypass:
            return sp
        return SpectralPair(self.amplitude_encoder(sp.amplitude), self.phase_encoder(sp.phase))

    def forward(self, x: Tensor) -> Tensor:
        return from_spectrum(self.spectral_attention(to_spectrum(x)))
