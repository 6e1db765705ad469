"""CSV ingestion, dataset assembly and a synthetic eye-movement generator."""
from __future__ import annotations

import csv
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .preprocessing import GazeRecording, PreprocessConfig, PreprocessedSample, preprocess_recording

CSV_COLUMNS = ("t", "x", "y", "subject", "session")
DEFAULT_SCHEMA = {c: c for c in CSV_COLUMNS}
DEFAULT_DIFFICULTY = 0.3

# screen half-extent in degrees; saccades that would leave it are turned inward
_BOUNDS = np.array([20.0, 15.0])
_NOISE = 0.002  # uniform measurement noise half-width, degrees
_PEAK_JITTER = 0.05
_SESSION_DRIFT = 0.03


class SchemaError(KeyError):
    pass


class UnsortedTimestampsWarning(UserWarning):
    pass


# ---------------------------------------------------------------------- CSV
def _parse_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return float("nan")


def load_csv(path, schema: dict | None = None) -> list[GazeRecording]:
    """Read gaze rows into one recording per (subject, session), in first-seen order."""
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip() for h in header]
        cols = {}
        for key in CSV_COLUMNS:
            if schema[key] not in header:
                raise SchemaError(f"column {schema[key]!r} (for {key!r}) not found in header {header}")
            cols[key] = header.index(schema[key])
        groups: OrderedDict[tuple[str, str], list[tuple[float, float, float]]] = OrderedDict()
        for row in reader:
            if not row:
                continue
            key = (row[cols["subject"]], row[cols["session"]])
            groups.setdefault(key, []).append(
                (float(row[cols["t"]]), _parse_float(row[cols["x"]]), _parse_float(row[cols["y"]]))
            )
    recordings = []
    for (subject, session), rows in groups.items():
        arr = np.array(rows, dtype=np.float64)
        if np.any(np.diff(arr[:, 0]) < 0):
            warnings.warn(f"timestamps of {subject}/{session} not sorted; reordering",
                          UnsortedTimestampsWarning, stacklevel=2)
            arr = arr[np.argsort(arr[:, 0], kind="stable")]
        dt = np.diff(arr[:, 0])
        rate = 1.0 / float(np.median(dt)) if len(dt) and np.median(dt) > 0 else 1.0
        recordings.append(GazeRecording(arr[:, 0], arr[:, 1], arr[:, 2], subject, session, rate))
    return recordings


def save_csv(recordings, path) -> None:
    """Write recordings with the ``t,x,y,subject,session`` header (full float precision)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in recordings:
            for t, x, y in zip(rec.t, rec.x, rec.y):
                w.writerow((repr(float(t)), repr(float(x)), repr(float(y)), rec.subject_id, rec.session_id))


# ---------------------------------------------------------------- synthesis
@dataclass
class SubjectProfile:
    subject_id: str
    peak_velocity: float  # deg/s
    saccade_duration_ms: float
    fixation_duration_ms: float
    tremor_amplitude: float  # deg
    tremor_frequency_hz: float
    seed: int = 0

    def __post_init__(self):
        if not 200.0 <= self.peak_velocity <= 600.0:
            raise ValueError(f"peak velocity {self.peak_velocity} outside [200, 600] deg/s")
        if not 100.0 <= self.fixation_duration_ms <= 400.0:
            raise ValueError(f"fixation duration {self.fixation_duration_ms} outside [100, 400] ms")


PROFILE_RANGES = {
    "peak_velocity": (200.0, 600.0),
    "saccade_duration_ms": (30.0, 80.0),
    "fixation_duration_ms": (100.0, 400.0),
    "tremor_amplitude": (0.01, 0.1),
    "tremor_frequency_hz": (2.0, 10.0),
}


def random_profiles(n: int, seed: int = 0, difficulty: float = DEFAULT_DIFFICULTY) -> list[SubjectProfile]:
    """Draw ``n`` subjects that differ in every profile field.

    Each field is stratified over its range (one value per stratum, shuffled
    independently per field).  ``difficulty`` in [0, 1) shrinks every field
    toward the range midpoint, making subjects harder to tell apart.
    """
    if not 0.0 <= difficulty < 1.0:
        raise ValueError("difficulty must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    values = {}
    for name, (lo, hi) in PROFILE_RANGES.items():
        strata = (rng.permutation(n) + rng.uniform(0.0, 1.0, n)) / n
        raw = lo + strata * (hi - lo)
        mid = 0.5 * (lo + hi)
        values[name] = mid + (1.0 - difficulty) * (raw - mid)
    seeds = rng.integers(0, 2**31 - 1, size=n)
    return [
        SubjectProfile(f"S{i:03d}", **{k: float(v[i]) for k, v in values.items()}, seed=int(seeds[i]))
        for i in range(n)
    ]


def _minimum_jerk(tau: np.ndarray) -> np.ndarray:
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)


def _span(t: np.ndarray, start: float, stop: float) -> slice:
    return slice(np.searchsorted(t, start, "left"), np.searchsorted(t, stop, "left"))


def _session_profile(p: SubjectProfile, rng: np.random.Generator) -> dict:
    drift = 1.0 + rng.uniform(-_SESSION_DRIFT, _SESSION_DRIFT, size=5)
    return {
        "peak": p.peak_velocity * drift[0],
        "sacc": p.saccade_duration_ms * drift[1] / 1000.0,
        "fix": p.fixation_duration_ms * drift[2] / 1000.0,
        "amp": p.tremor_amplitude * drift[3],
        "freq": p.tremor_frequency_hz * drift[4],
    }


def synthesize_recording(
    profile: SubjectProfile, session: int, duration_s: float, rate_hz: float, seed: int = 0
) -> GazeRecording:
    """One session of alternating fixations and minimum-jerk saccades."""
    if rate_hz <= 0 or duration_s <= 0:
        raise ValueError("rate_hz and duration_s must be positive")
    rng = np.random.default_rng([seed, profile.seed, session])
    sp = _session_profile(profile, rng)
    n = int(round(duration_s * rate_hz))
    t = np.arange(n) / rate_hz
    pos = np.zeros((n, 2))

    point = rng.uniform(-0.5, 0.5, 2) * _BOUNDS
    clock = 0.0
    end = t[-1] if n else -1.0
    while clock <= end:
        fix = sp["fix"] * rng.uniform(0.8, 1.2)
        pos[_span(t, clock, clock + fix)] = point
        clock += fix
        dur = sp["sacc"] * rng.uniform(0.9, 1.1)
        peak = sp["peak"] * rng.uniform(1.0 - _PEAK_JITTER, 1.0 + _PEAK_JITTER)
        amplitude = peak * dur / 1.875  # minimum-jerk peak speed is 1.875 * A / D
        angle = rng.uniform(-np.pi, np.pi)
        step = amplitude * np.array([np.cos(angle), np.sin(angle)])
        target = point + step
        if np.any(np.abs(target) > _BOUNDS):
            inward = -point / (np.linalg.norm(point) + 1e-12)
            step = amplitude * inward
            target = point + step
        sel = _span(t, clock, clock + dur)
        pos[sel] = point + np.outer(_minimum_jerk((t[sel] - clock) / dur), step)
        clock += dur
        point = target

    phase = rng.uniform(0, 2 * np.pi, 2)
    tremor = sp["amp"] * np.sin(2 * np.pi * sp["freq"] * t[:, None] + phase[None, :])
    noise = rng.uniform(-_NOISE, _NOISE, size=(n, 2))
    pos = pos + tremor + noise
    return GazeRecording(t, pos[:, 0], pos[:, 1], profile.subject_id, f"session{session + 1}", rate_hz)


def synthesize(
    profiles: list[SubjectProfile], sessions: int, duration_s: float, rate_hz: float, seed: int = 0
) -> list[GazeRecording]:
    """Recordings for every profile and session, ordered subject-major."""
    return [
        synthesize_recording(p, s, duration_s, rate_hz, seed)
        for p in profiles
        for s in range(sessions)
    ]


# ------------------------------------------------------------------ dataset
@dataclass
class Dataset:
    samples: list[PreprocessedSample]
    subjects: list[str]
    split: list[str] = field(default_factory=list)

    def __post_init__(self):
        index = set(self.subjects)
        bad = {s.subject_id for s in self.samples} - index
        if bad:
            raise ValueError(f"samples reference unknown subjects {sorted(bad)}")
        if len(self.split) != len(self.samples):
            raise ValueError("split tags must align with samples")

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, tag: str) -> list[PreprocessedSample]:
        return [s for s, sp in zip(self.samples, self.split) if sp == tag]

    @property
    def train(self) -> list[PreprocessedSample]:
        return self.subset("train")

    @property
    def test(self) -> list[PreprocessedSample]:
        return self.subset("test")

    def label(self, sample: PreprocessedSample) -> int:
        return self.subjects.index(sample.subject_id)

    def labels(self, samples) -> np.ndarray:
        lookup = {s: i for i, s in enumerate(self.subjects)}
        return np.array([lookup[s.subject_id] for s in samples], dtype=np.int64)


def build_dataset(
    recordings: list[GazeRecording],
    cfg: PreprocessConfig | None = None,
    train_sessions: set[str] | None = None,
) -> Dataset:
    """Preprocess and window every recording and tag its session.

    By default each subject's lexicographically first session is used for
    training and the remaining sessions for testing.
    """
    cfg = cfg or PreprocessConfig()
    subjects = list(OrderedDict.fromkeys(r.subject_id for r in recordings))
    first = {}
    for r in recordings:
        first[r.subject_id] = min(first.get(r.subject_id, r.session_id), r.session_id)
    samples, split = [], []
    for rec in recordings:
        windows = preprocess_recording(rec, cfg)
        is_train = rec.session_id in train_sessions if train_sessions is not None \
            else rec.session_id == first[rec.subject_id]
        samples.extend(windows)
        split.extend(["train" if is_train else "test"] * len(windows))
    return Dataset(samples, subjects, split)
