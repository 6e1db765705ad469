"""Finite-difference gradient suites for each network component at toy shapes."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import numerics as nx
from .attention import TransformerConfig, TransformerEncoder
from .attlstm import attlstm, peephole_lstm
from .fourierformer import FourierFormer
from .model import EmMixformer, ModelConfig
from .numerics import Module, Tensor
from .numerics.gradcheck import DEFAULT_TOLERANCE as TOLERANCE
from .siamese import CnnConfig, SiameseCNN

# coordinates probed per parameter tensor; small tensors are checked in full
MAX_ENTRIES = 12
# inputs are redrawn until every ReLU input is at least this far from the kink
KINK_MARGIN = 1e-3
MAX_DRAWS = 200

TOY_CNN = CnnConfig(kernels=(1, 3, 4, 5), channels=(3, 4, 5, 6))


def _probe(out: Tensor, seed: int) -> Tensor:
    w = np.random.default_rng(seed + 7919).standard_normal(out.shape)
    return (out * Tensor(w)).sum()


def _draw(rng: np.random.Generator, shapes: dict[str, tuple], loss_of: Callable[..., Tensor]) -> dict[str, Tensor]:
    """Random inputs whose forward pass keeps clear of ReLU kinks."""
    for _ in range(MAX_DRAWS):
        inputs = {k: Tensor(rng.standard_normal(shape), requires_grad=True) for k, shape in shapes.items()}
        with nx.no_grad(), nx.kink_margin() as margin:
            loss_of(**inputs)
        if margin[0] >= KINK_MARGIN:
            return inputs
    raise RuntimeError("could not draw inputs away from ReLU kinks")


def _run(module: Module, rng: np.random.Generator, shapes: dict[str, tuple], loss_of: Callable[..., Tensor],
         seed: int, max_entries: int = MAX_ENTRIES) -> dict[str, float]:
    inputs = _draw(rng, shapes, loss_of)
    params = dict(module.named_parameters())
    params.update({f"input:{k}": v for k, v in inputs.items()})
    return nx.check_gradients(lambda: loss_of(**inputs), params, max_entries=max_entries, seed=seed)


def check_siamese_cnn(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    net = SiameseCNN(rng, TOY_CNN)
    return _run(net, rng, {"fast": (3, 2, 32), "slow": (3, 2, 32)},
                lambda fast, slow: _probe(net(fast, slow), seed), seed)


def check_attention_core(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    enc = TransformerEncoder(rng, TransformerConfig(8, heads=2, mlp_hidden=12, layers=2), positional=True)
    return _run(enc, rng, {"x": (2, 5, 8)}, lambda x: _probe(enc(x), seed), seed)


def check_attlstm(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    att = attlstm(rng, 32, n_tokens=16)
    peep = peephole_lstm(rng, 8)
    errors = {f"attention.{k}": v
              for k, v in _run(att, rng, {"x": (2, 3, 32)}, lambda x: _probe(att(x), seed), seed).items()}
    errors.update({f"peephole.{k}": v
                   for k, v in _run(peep, rng, {"x": (2, 3, 8)}, lambda x: _probe(peep(x), seed), seed).items()})
    return errors


def check_fourierformer(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    ff = FourierFormer(rng, TransformerConfig(8, heads=2, mlp_hidden=12))
    return _run(ff, rng, {"x": (2, 6, 8)}, lambda x: _probe(ff(x), seed), seed)


def check_model(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    model = EmMixformer(ModelConfig(n_subjects=3, cnn=TOY_CNN, heads=2, mlp_hidden=12, lstm_tokens=4, seed=seed))
    labels = np.array([0, 2, 1])

    def loss(fast, slow):
        logits, _ = model.forward_batch(fast, slow)
        return nx.cross_entropy(logits, labels)

    # the model has ~150 parameter tensors, so fewer coordinates each
    return _run(model, rng, {"fast": (3, 2, 64), "slow": (3, 2, 64)}, loss, seed, max_entries=4)


SUITES: dict[str, Callable[[int], dict[str, float]]] = {
    "siamese_cnn": check_siamese_cnn,
    "attention_core": check_attention_core,
    "attlstm": check_attlstm,
    "fourierformer": check_fourierformer,
    "model": check_model,
}


def run_suites(names, seed: int = 0) -> dict[str, dict[str, float]]:
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown gradcheck module(s) {unknown}; choose from {sorted(SUITES)}")
    return {name: SUITES[name](seed) for name in names}
