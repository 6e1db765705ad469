"""Gaze coordinates -> paired fast/slow velocity windows.

The fast channel is a z-scored velocity in which slow samples (speed below
``v_min``) are clamped to the z-score of zero velocity; the slow channel is
``tanh(c * velocity)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_V_MIN = 40.0
DEFAULT_SCALE = 0.02


class InputTooShortError(ValueError):
    pass


class DegenerateSignalWarning(UserWarning):
    pass


class ShortRecordingWarning(UserWarning):
    pass


@dataclass
class GazeRecording:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    subject_id: str
    session_id: str
    sample_rate_hz: float

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if not (len(self.t) == len(self.x) == len(self.y)):
            raise ValueError(f"length mismatch: t={len(self.t)} x={len(self.x)} y={len(self.y)}")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class PreprocessedSample:
    fast: np.ndarray  # (2, W): rows dx, dy
    slow: np.ndarray  # (2, W)
    subject_id: str
    session_id: str
    window_index: int

    @property
    def width(self) -> int:
        return self.fast.shape[1]


@dataclass
class PreprocessConfig:
    v_min: float = DEFAULT_V_MIN
    c: float = DEFAULT_SCALE
    window_length: int = 1000
    window_stride: int = 500

    def __post_init__(self):
        if self.window_length < 1 or self.window_stride < 1:
            raise ValueError("window_length and window_stride must be >= 1")
        if not self.c > 0 or not self.v_min >= 0:
            raise ValueError("c must be positive and v_min non-negative")


def _diff_quotient(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    d = np.zeros_like(p)
    d[1:] = np.diff(p) / np.diff(t)
    d[~np.isfinite(d)] = 0.0
    return d


def velocities(rec: GazeRecording) -> tuple[np.ndarray, np.ndarray]:
    """Backward difference quotients; index 0 and any NaN-touching difference are 0."""
    if len(rec) < 2:
        raise InputTooShortError(f"need at least 2 samples, got {len(rec)}")
    return _diff_quotient(rec.x, rec.t), _diff_quotient(rec.y, rec.t)


def truncation_mask(dx: np.ndarray, dy: np.ndarray, v_min: float = DEFAULT_V_MIN) -> np.ndarray:
    """True where the 2-D speed falls below ``v_min``."""
    return np.hypot(dx, dy) < v_min


def _zscore(d: np.ndarray) -> tuple[np.ndarray, float, float]:
    mu = float(d.mean())
    sigma = float(d.std())
    if sigma == 0.0:
        warnings.warn("velocity series has zero variance; using sigma = 1", DegenerateSignalWarning,
                      stacklevel=3)
        sigma = 1.0
    return (d - mu) / sigma, mu, sigma


def split_fast_slow(
    dx: np.ndarray, dy: np.ndarray, v_min: float = DEFAULT_V_MIN, c: float = DEFAULT_SCALE
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(fast, slow)``, each shaped (2, T).

    Statistics for the z-score come from the full series before truncation.
    """
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    if dx.shape != dy.shape or dx.ndim != 1:
        raise ValueError(f"expected equal-length 1-D series, got {dx.shape} and {dy.shape}")
    slow_mask = truncation_mask(dx, dy, v_min)
    fast = np.empty((2, len(dx)))
    for row, d in enumerate((dx, dy)):
        z, mu, sigma = _zscore(d)
        z[slow_mask] = (0.0 - mu) / sigma
        fast[row] = z
    # tanh rounds to exactly +-1 beyond |c * d| ~ 19; keep the open interval
    edge = np.nextafter(1.0, 0.0)
    slow = np.clip(np.tanh(c * np.stack([dx, dy])), -edge, edge)
    return fast, slow


def window(
    fast: np.ndarray,
    slow: np.ndarray,
    length: int,
    stride: int,
    subject_id: str = "",
    session_id: str = "",
) -> list[PreprocessedSample]:
    """Cut full-length windows at offsets 0, stride, 2*stride, ...; the tail is dropped."""
    if stride < 1 or length < 1:
        raise ValueError("window length and stride must be >= 1")
    if fast.shape != slow.shape:
        raise ValueError(f"fast/slow shape mismatch: {fast.shape} vs {slow.shape}")
    total = fast.shape[1]
    if length > total:
        warnings.warn(f"recording of {total} samples is shorter than window length {length}",
                      ShortRecordingWarning, stacklevel=2)
        return []
    return [
        PreprocessedSample(fast[:, o:o + length].copy(), slow[:, o:o + length].copy(),
                           subject_id, session_id, i)
        for i, o in enumerate(range(0, total - length + 1, stride))
    ]


def preprocess_recording(rec: GazeRecording, cfg: PreprocessConfig | None = None) -> list[PreprocessedSample]:
    cfg = cfg or PreprocessConfig()
    dx, dy = velocities(rec)
    fast, slow = split_fast_slow(dx, dy, cfg.v_min, cfg.c)
    return window(fast, slow, cfg.window_length, cfg.window_stride, rec.subject_id, rec.session_id)
