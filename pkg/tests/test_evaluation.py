import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from emmixformer.data import Dataset
from emmixformer.evaluation import (
    MetricError,
    ProtocolError,
    ScoreSet,
    cosine_matrix,
    crossing,
    eer,
    format_report,
    frr_at_far,
    metrics,
    parse_report,
    read_roc,
    roc_export,
    score_embeddings,
    score_verification,
    templates,
)
from emmixformer.model import EmMixformer, ModelConfig
from emmixformer.preprocessing import PreprocessedSample
from emmixformer.siamese import CnnConfig


def quantized_scores(rng, n_gen=50, n_imp=50, shift=0.2):
    """Scores on a 1e-3 lattice: ties happen and no gap is below the oracle grid step."""
    g = np.round(rng.normal(0.5 + shift, 0.15, n_gen), 3)
    i = np.round(rng.normal(0.5 - shift, 0.15, n_imp), 3)
    return g, i


def test_perfect_separation():
    s = ScoreSet([0.9, 0.8], [0.1, 0.2])
    assert eer(s)[0] == 0.0
    assert [r.frr for r in frr_at_far(s, [0.5])] == [0.0]


def test_identical_lists_give_half():
    s = ScoreSet([0.3, 0.5, 0.7], [0.3, 0.5, 0.7])
    assert eer(s)[0] == pytest.approx(0.5, abs=1e-15)


def test_all_ties():
    assert eer(ScoreSet([0.4] * 5, [0.4] * 7))[0] == 0.5


def test_reversed_separation_is_total_error():
    assert eer(ScoreSet([0.1, 0.2], [0.8, 0.9]))[0] == 1.0


def test_eer_matches_dense_sweep(rng):
    for shift in (0.0, 0.1, 0.3):
        g, i = quantized_scores(rng, shift=shift)
        assert abs(eer(ScoreSet(g, i))[0] - oracles.dense_eer(g, i)) < 1e-6


def test_frr_at_far_matches_dense_sweep(rng):
    g, i = quantized_scores(rng, n_imp=400)
    got = frr_at_far(ScoreSet(g, i), [0.1, 0.01, 0.3])
    for r in got:
        assert not r.insufficient
        assert abs(r.frr - oracles.dense_frr_at_far(g, i, r.target)) < 1e-6


def test_insufficient_impostors_flagged():
    s = ScoreSet([0.9, 0.8], [0.1, 0.2, 0.3, 0.4, 0.5])
    (r,) = frr_at_far(s, [1e-3])
    assert r.insufficient and r.frr == 1.0


def test_far_target_range():
    for bad in (0.0, 1.0, -0.1, 2.0):
        with pytest.raises(MetricError):
            frr_at_far(ScoreSet([1.0], [0.0]), [bad])


def test_empty_and_non_finite():
    with pytest.raises(MetricError):
        eer(ScoreSet([], [0.1]))
    with pytest.raises(MetricError, match="finite"):
        ScoreSet([np.nan], [0.1])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    g, i = quantized_scores(rng, 30, 40, shift=0.1)
    base = ScoreSet(g, i)
    for f in (np.exp, lambda x: 3 * x - 7, lambda x: np.arctan(5 * x), lambda x: x**3):
        moved = ScoreSet(f(g), f(i))
        assert eer(moved)[0] == eer(base)[0]
        assert [r.frr for r in frr_at_far(moved, [0.1, 0.05])] == [r.frr for r in frr_at_far(base, [0.1, 0.05])]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_swap_and_negate_symmetry(seed):
    rng = np.random.default_rng(seed)
    g, i = rng.normal(0.3, 1, 25), rng.normal(0, 1, 35)
    assert eer(ScoreSet(-i, -g))[0] == pytest.approx(eer(ScoreSet(g, i))[0], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_eer_range_and_frr_monotone(seed):
    rng = np.random.default_rng(seed)
    g, i = quantized_scores(rng, 20, 300, shift=rng.uniform(-0.3, 0.3))
    assert 0.0 <= eer(ScoreSet(g, i))[0] <= 1.0
    frrs = [r.frr for r in frr_at_far(ScoreSet(g, i), [0.01, 0.05, 0.1, 0.5])]
    assert all(a >= b for a, b in zip(frrs, frrs[1:]))


def test_eer_threshold_lies_between_scores(rng):
    g, i = quantized_scores(rng)
    rate, th = eer(ScoreSet(g, i))
    assert min(g.min(), i.min()) <= th <= max(g.max(), i.max()) + 1e-12


def test_roc_export(tmp_path, rng):
    g, i = quantized_scores(rng)
    path = tmp_path / "roc.csv"
    n_rows = roc_export(ScoreSet(g, i), path)
    assert n_rows == len(np.unique(np.concatenate([g, i]))) + 1
    th, far, frr = read_roc(path)
    assert len(th) == n_rows
    assert np.all(np.diff(far) <= 0) and np.all(np.diff(frr) >= 0)
    assert far[0] == 1.0 and frr[-1] == 1.0
    assert abs(crossing(th, far, frr)[0] - eer(ScoreSet(g, i))[0]) < 1e-12


def test_roc_export_unwritable(tmp_path):
    with pytest.raises(OSError):
        roc_export(ScoreSet([1.0], [0.0]), tmp_path / "missing" / "roc.csv")


def test_cosine_cases():
    a = np.array([[1.0, 0.0], [2.0, 2.0], [0.0, 0.0]])
    b = np.array([[3.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(cosine_matrix(a, b), [[1, 0], [np.sqrt(0.5), np.sqrt(0.5)], [0, 0]], atol=1e-15)


def test_score_counting_and_self_similarity():
    emb = np.array([[1.0, 0.0], [0.0, 1.0]])
    s = score_embeddings(emb, [0, 1], emb, [0, 1], ["a", "b"])
    assert s.genuine.tolist() == [1.0, 1.0]
    assert s.impostor.tolist() == [0.0, 0.0]


def test_templates_are_class_means():
    emb = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    tmpl, enrolled = templates(emb, np.array([0, 0, 2]), 3)
    np.testing.assert_array_equal(tmpl[0], [2.0, 3.0])
    assert enrolled.tolist() == [True, False, True]


def test_unenrolled_subject_is_a_protocol_error():
    emb = np.eye(2)
    with pytest.raises(ProtocolError, match="'b'"):
        score_embeddings(emb[:1], [0], emb, [0, 1], ["a", "b"])


def _toy_dataset(rng, split):
    samples = [PreprocessedSample(rng.standard_normal((2, 32)), rng.standard_normal((2, 32)), sid, sess, 0)
               for sid, sess in [("a", "s1"), ("b", "s1"), ("a", "s2"), ("b", "s2")]]
    return Dataset(samples, ["a", "b"], split)


def test_score_verification_protocol(rng):
    model = EmMixformer(ModelConfig(2, cnn=CnnConfig(channels=(2, 2, 2, 4)), heads=2, lstm_tokens=4)).eval()
    s = score_verification(model, _toy_dataset(rng, ["train", "train", "test", "test"]))
    assert s.genuine.size == 2 and s.impostor.size == 2
    with pytest.raises(ProtocolError, match="'b'"):
        score_verification(model, _toy_dataset(rng, ["train", "test", "test", "test"]))
    with pytest.raises(ProtocolError, match="empty"):
        score_verification(model, _toy_dataset(rng, ["train"] * 4))


def test_report_round_trip():
    s = ScoreSet([0.9, 0.8, 0.4], [0.1, 0.2, 0.5] * 10)
    rep = metrics(s)
    assert set(rep) >= {"eer", "frr@0.1", "frr@0.01", "frr@0.001", "n_genuine", "n_impostor"}
    parsed = parse_report(format_report(rep))
    assert float(parsed["eer"]) == rep["eer"]
    assert parsed["frr@0.001_insufficient"] == "True"
    assert parsed["n_impostor"] == "30"
