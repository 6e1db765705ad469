"""Flat ``key = value`` run configuration.

Keys mirror the fields of :class:`TrainConfig`, :class:`PreprocessConfig`,
:class:`MixBlockConfig` and :class:`CnnConfig`.  ``ablation`` selects one of
the named branch layouts; explicit mix keys then override it.  Lines starting
with ``#`` are comments.

Example::

    ablation = attlstm_transformer
    epochs = 50
    window_length = 256
    cnn_channels = 16, 32, 48, 64
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .attention import ConfigError
from .model import ABLATIONS, MixBlockConfig, ModelConfig, ablation_config
from .preprocessing import PreprocessConfig
from .siamese import CnnConfig
from .training import TrainConfig


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


_TRAIN_KEYS = {"lr": float, "batch": int, "epochs": int, "beta1": float, "beta2": float, "eps": float}
_PREP_KEYS = {"v_min": float, "c": float, "window_length": int, "window_stride": int}
_MIX_KEYS = {"enable_transformer": _bool, "enable_attlstm": _bool, "lstm_kind": str,
             "enable_fourier": _bool, "mix_layers": int}
_MODEL_KEYS = {"heads": int, "mlp_hidden": int, "lstm_tokens": int}
_CNN_KEYS = {"cnn_kernels": _ints, "cnn_channels": _ints}
_OTHER_KEYS = {"seed": int, "ablation": str}
# desk-scale windowing: the library default of 1000 samples is not a multiple of
# the CNN's 16x downsampling, so runs default to non-overlapping 256-sample windows
RUN_WINDOW = {"window_length": 256, "window_stride": 256}
KEYS = {**_TRAIN_KEYS, **_PREP_KEYS, **_MIX_KEYS, **_MODEL_KEYS, **_CNN_KEYS, **_OTHER_KEYS}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    preprocess: PreprocessConfig = field(default_factory=lambda: PreprocessConfig(**RUN_WINDOW))
    model: ModelConfig = field(default_factory=lambda: ModelConfig(n_subjects=1))
    ablation: str = "emmixformer"
    seed: int | None = None  # None means "not set in the file"

    def model_for(self, n_subjects: int, seed: int) -> ModelConfig:
        return replace(self.model, n_subjects=n_subjects, seed=seed)

    def to_text(self) -> str:
        """Canonical text form; parsing it gives back an equal config."""
        t, p, m = self.train, self.preprocess, self.model
        lines = [f"ablation = {self.ablation}"]
        lines += [f"{k} = {getattr(t, k)!r}" for k in _TRAIN_KEYS]
        lines += [f"{k} = {getattr(p, k)!r}" for k in _PREP_KEYS]
        if m.mix is not None:
            lines += [f"{k} = {getattr(m.mix, k)}" for k in _MIX_KEYS if k != "mix_layers"]
            lines.append(f"mix_layers = {m.mix.layers}")
        lines += [f"{k} = {getattr(m, k)}" for k in _MODEL_KEYS if getattr(m, k) is not None]
        lines.append("cnn_kernels = " + ", ".join(map(str, m.cnn.kernels)))
        lines.append("cnn_channels = " + ", ".join(map(str, m.cnn.channels)))
        if self.seed is not None:
            lines.append(f"seed = {self.seed}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return build_config(values)


def build_config(values: dict) -> RunConfig:
    ablation = values.get("ablation", "emmixformer")
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}; choose from {sorted(ABLATIONS)}")
    try:
        train = TrainConfig(**{k: values[k] for k in _TRAIN_KEYS if k in values})
        prep = PreprocessConfig(**{**RUN_WINDOW, **{k: values[k] for k in _PREP_KEYS if k in values}})
        cnn_args = {k[4:]: values[k] for k in _CNN_KEYS if k in values}
        cnn = CnnConfig(**cnn_args)
        base = ModelConfig(n_subjects=1, cnn=cnn, **{k: values[k] for k in _MODEL_KEYS if k in values})
        mix_over = {("layers" if k == "mix_layers" else k): values[k] for k in _MIX_KEYS if k in values}
        if "mix_layers" in values:
            base = replace(base, mix=MixBlockConfig(layers=values["mix_layers"]))
        model = ablation_config(ablation, base)
        if mix_over:
            if model.mix is None:
                raise ConfigError(f"ablation {ablation!r} has no mix block; drop {sorted(mix_over)}")
            model = replace(model, mix=replace(model.mix, **mix_over))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if prep.window_length % cnn.downsample:
        raise ConfigError(f"window_length {prep.window_length} must be a multiple of {cnn.downsample}")
    return RunConfig(train, prep, model, ablation, values.get("seed"))


def config_fields() -> list[str]:
    """All documented keys, for help text."""
    return sorted(KEYS)


__all__ = ["RunConfig", "parse_config", "build_config", "config_fields", "KEYS", "ConfigError"]
