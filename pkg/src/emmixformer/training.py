"""Mini-batch cross-entropy training with Adam."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .data import Dataset
from .model import EmMixformer, ModelConfig, stack_samples
from .numerics import Tensor

log = logging.getLogger(__name__)


class TrainingError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 2e-4
    batch: int = 64
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch < 1 or self.epochs < 0:
            raise ValueError("batch must be >= 1 and epochs >= 0")


class Adam:
    def __init__(self, params: list[Tensor], lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class TrainResult:
    model: EmMixformer
    history: list[dict] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else float("nan")

    @property
    def final_accuracy(self) -> float:
        return self.history[-1]["accuracy"] if self.history else float("nan")


def build_model(ds: Dataset, base: ModelConfig | None = None, seed: int = 0) -> EmMixformer:
    from dataclasses import replace

    cfg = ModelConfig(n_subjects=len(ds.subjects)) if base is None else replace(
        base, n_subjects=len(ds.subjects))
    return EmMixformer(replace(cfg, seed=seed))


def train_step(model: EmMixformer, opt: Adam, fast: np.ndarray, slow: np.ndarray,
               labels: np.ndarray) -> tuple[float, int]:
    opt.zero_grad()
    logits, _ = model.forward_batch(fast, slow)
    loss = nx.cross_entropy(logits, labels)
    loss.backward()
    opt.step()
    correct = int(np.sum(np.argmax(logits.data, axis=1) == labels))
    return loss.item(), correct


def train(model: EmMixformer, ds: Dataset, cfg: TrainConfig, callback=None) -> TrainResult:
    """Train ``model`` on the train split of ``ds``.

    Shuffling uses ``cfg.seed``.  ``callback(record)`` is called after every
    epoch with ``{"epoch", "loss", "accuracy"}``.
    """
    if len(ds.subjects) < 2:
        raise TrainingError("training needs at least two subjects")
    if model.cfg.n_subjects != len(ds.subjects):
        raise TrainingError(f"model has {model.cfg.n_subjects} classes, dataset {len(ds.subjects)} subjects")
    samples = ds.train
    if not samples:
        raise TrainingError("train split is empty")
    fast, slow = stack_samples(samples)
    labels = ds.labels(samples)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    result = TrainResult(model)
    model.train()
    n = len(samples)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, hit = train_step(model, opt, fast[idx], slow[idx], labels[idx])
            total_loss += loss * len(idx)
            correct += hit
        record = {"epoch": epoch, "loss": total_loss / n, "accuracy": correct / n}
        result.history.append(record)
        log.info("epoch %d loss %.6f acc %.4f", epoch, record["loss"], record["accuracy"])
        if callback is not None:
            callback(record)
    model.eval()
    return result


def predict(model: EmMixformer, samples, batch: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode logits and embeddings for ``samples``."""
    fast, slow = stack_samples(samples)
    logits, embs = [], []
    with nx.no_grad():
        for start in range(0, len(samples), batch):
            lg, em = model.forward_batch(fast[start:start + batch], slow[start:start + batch])
            logits.append(lg.data)
            embs.append(em.data)
    return np.concatenate(logits), np.concatenate(embs)
