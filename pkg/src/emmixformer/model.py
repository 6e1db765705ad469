"""EmMixformer assembly: Siamese CNN -> stacked mix blocks -> pooled embedding -> classifier."""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import numerics as nx
from .attention import ConfigError, Linear, TransformerConfig, TransformerEncoder, positional_encoding
from .attlstm import attlstm, peephole_lstm
from .fourierformer import FourierFormer
from .numerics import Module, Tensor
from .preprocessing import PreprocessedSample
from .siamese import CnnConfig, SiameseCNN

CHECKPOINT_VERSION = 1
CHECKPOINT_FORMAT = "emmixformer-checkpoint"


class CheckpointError(ValueError):
    pass


@dataclass
class MixBlockConfig:
    enable_transformer: bool = True
    enable_attlstm: bool = True
    lstm_kind: str = "attention"  # or "peephole"
    enable_fourier: bool = True
    layers: int = 2

    def __post_init__(self):
        if not (self.enable_transformer or self.enable_attlstm or self.enable_fourier):
            raise ConfigError("a mix block needs at least one enabled branch")
        if self.layers < 1:
            raise ConfigError("mix block layers must be >= 1")
        if self.lstm_kind not in ("attention", "peephole"):
            raise ConfigError(f"unknown lstm_kind {self.lstm_kind!r}")

    @property
    def n_branches(self) -> int:
        return int(self.enable_transformer) + int(self.enable_attlstm) + int(self.enable_fourier)


@dataclass
class ModelConfig:
    n_subjects: int
    cnn: CnnConfig = field(default_factory=CnnConfig)
    mix: MixBlockConfig | None = field(default_factory=MixBlockConfig)
    heads: int = 4
    mlp_hidden: int | None = None
    lstm_tokens: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ConfigError("n_subjects must be >= 1")
        if self.d_model % 2:
            raise ConfigError("model width must be even for the positional encoding")
        self.transformer()  # validates heads against the width
        if self.mix is not None and self.mix.enable_attlstm and self.mix.lstm_kind == "attention" \
                and self.d_model % self.lstm_tokens:
            raise ConfigError(f"model width {self.d_model} not divisible into {self.lstm_tokens} LSTM tokens")

    @property
    def d_model(self) -> int:
        return self.cnn.out_dim

    def transformer(self) -> TransformerConfig:
        return TransformerConfig(self.d_model, self.heads, self.mlp_hidden, layers=1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        d = dict(d)
        cnn = CnnConfig(**d.pop("cnn"))
        mix = d.pop("mix")
        return cls(cnn=cnn, mix=MixBlockConfig(**mix) if mix is not None else None, **d)


# ablation configurations, from the bare Siamese CNN up to the full model
ABLATIONS: dict[str, MixBlockConfig | None] = {
    "siamese_cnn": None,
    "transformer": MixBlockConfig(enable_transformer=True, enable_attlstm=False, enable_fourier=False),
    "lstm_transformer": MixBlockConfig(enable_attlstm=True, lstm_kind="peephole", enable_fourier=False),
    "attlstm_transformer": MixBlockConfig(enable_attlstm=True, lstm_kind="attention", enable_fourier=False),
    "emmixformer": MixBlockConfig(),
}


def ablation_config(name: str, base: ModelConfig) -> ModelConfig:
    if name not in ABLATIONS:
        raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
    mix = ABLATIONS[name]
    if mix is not None and base.mix is not None:
        mix = replace(mix, layers=base.mix.layers)
    return replace(base, mix=replace(mix) if mix is not None else None)


class MixBlock(Module):
    """Concatenate enabled branch outputs on the feature axis and project back to d."""

    def __init__(self, rng: np.random.Generator, cfg: MixBlockConfig, tcfg: TransformerConfig, lstm_tokens: int):
        super().__init__()
        d = tcfg.model_dim
        self.lstm = None
        self.transformer = None
        self.fourier = None
        if cfg.enable_attlstm:
            self.lstm = attlstm(rng, d, lstm_tokens) if cfg.lstm_kind == "attention" else peephole_lstm(rng, d)
        if cfg.enable_transformer:
            self.transformer = TransformerEncoder(rng, tcfg)
        if cfg.enable_fourier:
            self.fourier = FourierFormer(rng, tcfg)
        self.project = Linear(rng, cfg.n_branches * d, d)

    def branches(self) -> list[Module]:
        return [m for m in (self.lstm, self.transformer, self.fourier) if m is not None]

    def forward(self, x: Tensor) -> Tensor:
        outs = [branch(x) for branch in self.branches()]
        y = outs[0] if len(outs) == 1 else nx.concat(outs, axis=-1)
        return self.project(y)


class EmMixformer(Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.cnn = SiameseCNN(rng, cfg.cnn)
        tcfg = cfg.transformer()
        layers = cfg.mix.layers if cfg.mix is not None else 0
        self.mix = [MixBlock(rng, cfg.mix, tcfg, cfg.lstm_tokens) for _ in range(layers)]
        self.head = Linear(rng, cfg.d_model, cfg.n_subjects)

    def tokens(self, fast: Tensor, slow: Tensor) -> Tensor:
        """Per-token features after the last mix block, (B, W/16, d)."""
        x = self.cnn(fast, slow)
        if self.mix:
            x = x + Tensor(positional_encoding(x.shape[-2], x.shape[-1]))
            for block in self.mix:
                x = block(x)
        return x

    def forward_batch(self, fast, slow) -> tuple[Tensor, Tensor]:
        """(B, 2, W) fast/slow arrays -> (logits (B, n), embedding (B, d))."""
        emb = self.tokens(nx.as_tensor(fast), nx.as_tensor(slow)).mean(axis=-2)
        return self.head(emb), emb

    def forward(self, sample: PreprocessedSample) -> tuple[Tensor, Tensor]:
        logits, emb = self.forward_batch(sample.fast[None], sample.slow[None])
        return logits.reshape(-1), emb.reshape(-1)


def stack_samples(samples: list[PreprocessedSample]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([s.fast for s in samples]), np.stack([s.slow for s in samples])


# ------------------------------------------------------------------ checkpoints
def _array_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(model: EmMixformer, path, subjects: list[str], extra: dict | None = None) -> str:
    """Write a zip container of .npy tensors plus a JSON header; returns its sha256.

    Entry timestamps are fixed so identical models give identical bytes.
    """
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "subjects": list(subjects),
        "extra": extra or {},
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        def put(name: str, data: bytes):
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)

        put("meta.json", json.dumps(meta, sort_keys=True, indent=1).encode())
        for name, arr in model.state_dict().items():
            put(f"tensors/{name}.npy", _array_bytes(arr))
    data = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path) -> tuple[EmMixformer, list[str], dict]:
    """Inverse of :func:`save_checkpoint`; the model is returned in eval mode."""
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointError(f"{path}: not an emmixformer checkpoint")
            if meta.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"{path}: checkpoint version {meta.get('version')} unsupported (expected {CHECKPOINT_VERSION})"
                )
            state = {}
            for name in zf.namelist():
                if name.startswith("tensors/"):
                    state[name[len("tensors/"):-len(".npy")]] = np.lib.format.read_array(
                        io.BytesIO(zf.read(name)), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc
    model = EmMixformer(ModelConfig.from_dict(meta["config"]))
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: tensors do not match config ({exc})") from exc
    model.eval()
    return model, meta["subjects"], meta.get("extra", {})
