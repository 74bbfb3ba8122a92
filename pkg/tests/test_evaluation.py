"""Metric stack: horizon errors, bank sweeps, critic/classifier scoring,
export round-trips."""
from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionforge.data import MotionSequence, load_sequence, synth_dataset
from motionforge.evaluation import (DEFAULT_HORIZONS_MS, ClassifierModel, HorizonReport,
                                    RBank, classifier_accuracy, critic_accuracy,
                                    cross_entropy, euler_error, export_sequence,
                                    holdout_windows, horizon_to_frame, mean_reports,
                                    min_err_metric, r_prime_metric, write_report)
from motionforge.motion import GanDims, GanModel, predict_motion
from motionforge.params import RandomSource
from motionforge.pose import PoseModel

from conftest import tiny_config


def test_horizon_frame_mapping_exact():
    assert [horizon_to_frame(ms) for ms in DEFAULT_HORIZONS_MS] == [2, 4, 8, 10, 25]
    assert horizon_to_frame(40) == 1
    with pytest.raises(ValueError):
        horizon_to_frame(50)  # 1.25 frames


def test_euler_error_zero_for_identical():
    seq = MotionSequence(RandomSource(1).normal((25, 6)))
    report = euler_error(seq, seq)
    assert all(v == 0.0 for v in report.errors.values())
    assert set(report.errors) == set(DEFAULT_HORIZONS_MS)


def test_euler_error_three_four_five():
    pred = MotionSequence(np.array([[0.3, 0.4]]))
    gt = MotionSequence(np.zeros((1, 2)))
    report = euler_error(pred, gt, horizons_ms=(40,))
    assert report.errors[40] == pytest.approx(0.5, abs=1e-15)


def test_euler_error_rejects_length_mismatch():
    with pytest.raises(ValueError):
        euler_error(MotionSequence(np.zeros((3, 2))), MotionSequence(np.zeros((4, 2))))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_euler_error_symmetry_and_triangle(seed):
    rng = RandomSource(seed)
    a = MotionSequence(rng.normal((2, 4)))
    b = MotionSequence(rng.normal((2, 4)))
    c = MotionSequence(rng.normal((2, 4)))
    h = (40, 80)
    ab = euler_error(a, b, h)
    ba = euler_error(b, a, h)
    ac = euler_error(a, c, h)
    cb = euler_error(c, b, h)
    for ms in h:
        assert ab.errors[ms] == ba.errors[ms]
        assert ab.errors[ms] <= ac.errors[ms] + cb.errors[ms] + 1e-12


@pytest.fixture(scope="module")
def toy_models():
    dims = GanDims(embed_dim=3, r_dim=2, hidden_dim=4, head_hidden=3)
    gan = GanModel.build(RandomSource(2), dims)
    rng = RandomSource(3)
    gan.store["dec.out.w"].data[...] = rng.normal((4, 3)) * 0.3
    pose = PoseModel.build(RandomSource(4), pose_dim=3, embed_dim=3, hidden=4)
    return gan, pose


def test_min_err_is_elementwise_min_over_bank(toy_models):
    gan, pose = toy_models
    rng = RandomSource(5)
    test = MotionSequence(rng.normal((8, 3)))
    bank = RBank(rng.normal((3, 2)), seed=0)
    horizons = (40, 120)
    got = min_err_metric(gan, pose, bank, test, past_len=5, pred_len=3,
                         horizons_ms=horizons)
    past = MotionSequence(test.frames[:5])
    gt = MotionSequence(test.frames[5:])
    singles = [euler_error(predict_motion(gan, pose, past, r, 3), gt, horizons)
               for r in bank.vectors]
    for ms in horizons:
        assert got.errors[ms] == min(s.errors[ms] for s in singles)
        for s in singles:
            assert got.errors[ms] <= s.errors[ms]


def test_min_err_rejects_empty_bank(toy_models):
    gan, pose = toy_models
    with pytest.raises(ValueError):
        min_err_metric(gan, pose, RBank(np.zeros((0, 2)), 0),
                       MotionSequence(np.zeros((8, 3))), 5, 3, (40,))


def test_r_bank_default_size():
    bank = RBank.make(seed=1, r_dim=8)
    assert bank.vectors.shape == (1000, 8)
    assert np.array_equal(bank.vectors, RBank.make(seed=1, r_dim=8).vectors)


def test_r_prime_with_zero_head_equals_zero_r_prediction(toy_models):
    gan, pose = toy_models
    gan.store["disc.r.w"].data[...] = 0.0
    gan.store["disc.r.b"].data[...] = 0.0
    rng = RandomSource(6)
    test = MotionSequence(rng.normal((8, 3)))
    horizons = (40, 120)
    got = r_prime_metric(gan, pose, test, past_len=5, pred_len=3, tau=1,
                         horizons_ms=horizons)
    past = MotionSequence(test.frames[:5])
    gt = MotionSequence(test.frames[5:])
    expected = euler_error(predict_motion(gan, pose, past, np.zeros(2), 3), gt, horizons)
    assert got.errors == expected.errors


def test_r_prime_rejects_wrong_length(toy_models):
    gan, pose = toy_models
    with pytest.raises(ValueError):
        r_prime_metric(gan, pose, MotionSequence(np.zeros((9, 3))), 5, 3, 1, (40,))


def test_critic_accuracy_conventions():
    real = [MotionSequence(np.zeros((2, 1))) for _ in range(4)]
    fake = [MotionSequence(np.ones((2, 1))) for _ in range(4)]
    perfect = lambda s: 1.0 if s.frames[0, 0] == 0.0 else 0.0
    assert critic_accuracy(perfect, real, fake) == 1.0
    constant = lambda s: 0.5
    assert critic_accuracy(constant, real, fake) == 0.5  # ties count as real
    # a perfect critic shown real items in both roles scores exactly 0.5
    assert critic_accuracy(perfect, real, real) == 0.5
    with pytest.raises(ValueError):
        critic_accuracy(perfect, [], fake)


def test_mean_reports_averages():
    a = HorizonReport({40: 1.0, 80: 3.0})
    b = HorizonReport({40: 3.0, 80: 5.0})
    m = mean_reports([a, b])
    assert m.errors == {40: 2.0, 80: 4.0}
    assert m.mean == 3.0
    assert m.last() == 4.0


def test_cross_entropy_matches_numpy_softmax():
    rng = RandomSource(7)
    logits = rng.normal((4, 3))
    targets = np.array([0, 2, 1, 2])
    from motionforge.autodiff import Tensor
    got = cross_entropy(Tensor(logits), targets).item()
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
    expected = -np.mean(np.log(probs[np.arange(4), targets]))
    assert got == pytest.approx(expected, rel=1e-12)


def test_untrained_classifier_near_chance():
    cfg = tiny_config(pose_dim=4)
    labels = tuple(range(5))
    clf = ClassifierModel.build(RandomSource(8), cfg.pose_dim, cfg.hidden_dim,
                                cfg.head_hidden, labels, cfg.T, cfg.tau)
    rng = RandomSource(9)
    items = [(rng.normal((cfg.T + cfg.pred_len, cfg.pose_dim)), lab)
             for lab in labels for _ in range(8)]
    acc = classifier_accuracy(clf, items)
    assert 0.0 <= acc <= 0.5  # chance is 0.2 on 5 balanced categories


def test_classifier_copying_model_equals_real_accuracy():
    # scoring (seed || real continuation) is definitionally the real accuracy
    cfg = tiny_config(pose_dim=4)
    labels = (0, 1)
    clf = ClassifierModel.build(RandomSource(10), cfg.pose_dim, cfg.hidden_dim,
                                cfg.head_hidden, labels, cfg.T, cfg.tau)
    rng = RandomSource(11)
    full = [(rng.normal((cfg.T + cfg.pred_len, cfg.pose_dim)), lab)
            for lab in labels for _ in range(4)]
    real_acc = classifier_accuracy(clf, full)
    copied = [(np.concatenate([f[:cfg.T], f[cfg.T:]]), lab) for f, lab in full]
    assert classifier_accuracy(clf, copied) == real_acc


def test_holdout_windows_shapes():
    cfg = tiny_config()
    data = synth_dataset(2, 2, 4 * cfg.window_len, 0.02, RandomSource(12),
                         channels=cfg.pose_dim)
    tests = holdout_windows(data, cfg, RandomSource(13), count=5)
    assert len(tests) == 5
    for t in tests:
        assert t.frames.shape == (cfg.T + cfg.pred_len, cfg.pose_dim)
        assert t.label in (0, 1)


def test_export_csv_round_trip_exact(tmp_path):
    rng = RandomSource(14)
    seq = MotionSequence(rng.normal((25, 6)) * 0.9, label=2)
    path = tmp_path / "pred.csv"
    export_sequence(seq, path)
    assert sum(1 for line in path.read_text().splitlines() if not line.startswith("#")) == 25
    loaded = load_sequence(path)
    assert loaded.label == 2
    assert np.array_equal(loaded.frames, seq.frames)


def test_export_jsonl_schema(tmp_path):
    seq = MotionSequence(RandomSource(15).normal((3, 54)) * 0.5)
    path = tmp_path / "pred.jsonl"
    export_sequence(seq, path, fmt="json-lines")
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[1])
    assert rec["frame"] == 1
    assert len(rec["values"]) == 54


def test_export_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        export_sequence(MotionSequence(np.zeros((2, 2))), tmp_path / "x", fmt="parquet")


def test_write_report_format(tmp_path):
    path = tmp_path / "report.tsv"
    write_report(path, [(0, 80, "euler_r_prime", 0.5), ("all", "-", "critic_accuracy", 0.75)])
    lines = path.read_text().splitlines()
    assert lines[0] == "category\thorizon\tmetric\tvalue"
    assert lines[1].split("\t") == ["0", "80", "euler_r_prime", "0.5"]
