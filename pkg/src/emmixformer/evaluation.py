"""Verification scoring and biometric error rates.

Scores follow the higher-is-more-genuine convention and a probe is accepted
when its score is ``>=`` the threshold, so ties count as acceptances.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import Dataset

DEFAULT_FAR_TARGETS = (1e-1, 1e-2, 1e-3)


class MetricError(ValueError):
    pass


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.genuine, dtype=np.float64).ravel()
        i = np.asarray(self.impostor, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(i))):
            raise MetricError("scores must be finite")
        object.__setattr__(self, "genuine", g)
        object.__setattr__(self, "impostor", i)

    def require_nonempty(self) -> None:
        if self.genuine.size == 0 or self.impostor.size == 0:
            raise MetricError(
                f"need genuine and impostor scores (got {self.genuine.size} and {self.impostor.size})")


@dataclass(frozen=True)
class FrrAtFar:
    target: float
    frr: float
    threshold: float
    insufficient: bool


def roc_points(s: ScoreSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """FAR and FRR at every distinct score plus one threshold above the maximum.

    Thresholds ascend, so FAR is non-increasing and FRR non-decreasing.
    """
    s.require_nonempty()
    thresholds = np.unique(np.concatenate([s.genuine, s.impostor]))
    thresholds = np.append(thresholds, np.nextafter(thresholds[-1], np.inf))
    imp = np.sort(s.impostor)
    gen = np.sort(s.genuine)
    far = (imp.size - np.searchsorted(imp, thresholds, side="left")) / imp.size
    frr = np.searchsorted(gen, thresholds, side="left") / gen.size
    return thresholds, far, frr


def crossing(thresholds: np.ndarray, far: np.ndarray, frr: np.ndarray) -> tuple[float, float]:
    """Interpolated point where FAR - FRR changes sign on an ascending sweep."""
    d = far - frr
    zero = np.flatnonzero(d == 0)
    if zero.size:
        j = zero[0]
        return float(far[j]), float(thresholds[j])
    j = int(np.flatnonzero((d[:-1] > 0) & (d[1:] < 0))[0])
    alpha = d[j] / (d[j] - d[j + 1])
    rate = far[j] + alpha * (far[j + 1] - far[j])
    return float(rate), float(thresholds[j] + alpha * (thresholds[j + 1] - thresholds[j]))


def eer(s: ScoreSet) -> tuple[float, float]:
    """Equal error rate and the (interpolated) threshold where it occurs."""
    return crossing(*roc_points(s))


def frr_at_far(s: ScoreSet, far_targets=DEFAULT_FAR_TARGETS) -> list[FrrAtFar]:
    """FRR at the smallest threshold whose FAR does not exceed each target.

    A target below ``1 / n_impostor`` cannot be resolved by the available
    scores; it is reported as FRR 1.0 with ``insufficient`` set.
    """
    targets = [float(t) for t in far_targets]
    for t in targets:
        if not 0.0 < t < 1.0:
            raise MetricError(f"FAR target must lie in (0, 1), got {t}")
    thresholds, far, frr = roc_points(s)
    out = []
    for t in targets:
        if t * s.impostor.size < 1.0:
            out.append(FrrAtFar(t, 1.0, float("nan"), True))
            continue
        j = int(np.argmax(far <= t))
        out.append(FrrAtFar(t, float(frr[j]), float(thresholds[j]), False))
    return out


def roc_export(s: ScoreSet, path) -> int:
    """Write ``threshold,far,frr`` rows for the sweep; returns the row count."""
    thresholds, far, frr = roc_points(s)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "far", "frr"])
        for row in zip(thresholds, far, frr):
            w.writerow([repr(float(v)) for v in row])
    return len(thresholds)


def read_roc(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


# ------------------------------------------------------------------ scoring
def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; a zero vector scores 0 against everything."""
    def unit(x):
        n = np.linalg.norm(x, axis=1, keepdims=True)
        return np.divide(x, n, out=np.zeros_like(x), where=n > 0)

    return unit(np.asarray(a, dtype=np.float64)) @ unit(np.asarray(b, dtype=np.float64)).T


def templates(embeddings: np.ndarray, labels: np.ndarray, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean embedding per class and a mask of classes that have any samples."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    sums = np.zeros((n_classes, embeddings.shape[1]))
    np.add.at(sums, labels, embeddings)
    counts = np.bincount(labels, minlength=n_classes)
    enrolled = counts > 0
    sums[enrolled] /= counts[enrolled, None]
    return sums, enrolled


def score_embeddings(enroll_emb, enroll_labels, probe_emb, probe_labels, subjects: list[str]) -> ScoreSet:
    """Score every probe against every enrolled template."""
    enroll_labels = np.asarray(enroll_labels, dtype=np.int64)
    probe_labels = np.asarray(probe_labels, dtype=np.int64)
    tmpl, enrolled = templates(enroll_emb, enroll_labels, len(subjects))
    missing = sorted({subjects[k] for k in probe_labels if not enrolled[k]})
    if missing:
        raise ProtocolError(f"test subjects without enrollment samples: {missing}")
    idx = np.flatnonzero(enrolled)
    scores = cosine_matrix(probe_emb, tmpl[idx])
    same = probe_labels[:, None] == idx[None, :]
    return ScoreSet(scores[same], scores[~same])


def score_verification(model, ds: Dataset, batch: int = 64) -> ScoreSet:
    """Cross-session protocol: enroll on the train split, probe with the test split."""
    from .training import predict

    if not ds.test:
        raise ProtocolError("test split is empty")
    missing = sorted({s.subject_id for s in ds.test} - {s.subject_id for s in ds.train})
    if missing:
        raise ProtocolError(f"test subjects without enrollment samples: {missing}")
    _, enroll = predict(model, ds.train, batch)
    _, probe = predict(model, ds.test, batch)
    return score_embeddings(enroll, ds.labels(ds.train), probe, ds.labels(ds.test), ds.subjects)


def metrics(s: ScoreSet, far_targets=DEFAULT_FAR_TARGETS) -> dict:
    rate, _ = eer(s)
    report = {"eer": rate}
    for r in frr_at_far(s, far_targets):
        report[f"frr@{r.target:g}"] = r.frr
        report[f"frr@{r.target:g}_insufficient"] = r.insufficient
    report["n_genuine"] = int(s.genuine.size)
    report["n_impostor"] = int(s.impostor.size)
    return report


def format_report(report: dict) -> str:
    return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n" for k, v in report.items())


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
