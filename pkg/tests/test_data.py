"""Ingestion, synthetic generation, and windowing."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionforge.data import (DataError, MotionSequence, SkeletonSpec, load_sequence,
                              load_sequences, make_windows, synth_dataset, synth_motion,
                              wrap_angles)
from motionforge.params import RandomSource


def test_wrap_angles_range():
    x = np.array([0.0, np.pi + 0.1, -np.pi - 0.1, 7.0, -7.0])
    w = wrap_angles(x)
    assert np.all(w >= -np.pi) and np.all(w < np.pi + 1e-12)
    assert w[0] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-100, 100))
def test_wrap_angles_preserves_angle(theta):
    w = float(wrap_angles(np.array([theta]))[0])
    assert np.isclose(np.sin(w), np.sin(theta), atol=1e-9)
    assert np.isclose(np.cos(w), np.cos(theta), atol=1e-9)


def test_known_fixture_round_trips(tmp_path):
    path = tmp_path / "seq.csv"
    path.write_text("# label=3 fps=25\n0.1,0.2\n-0.3,0.4\n0.5,-0.6\n")
    seq = load_sequence(path)
    assert seq.label == 3
    assert seq.fps == 25
    assert np.array_equal(seq.frames, [[0.1, 0.2], [-0.3, 0.4], [0.5, -0.6]])


def test_empty_file_fails(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(DataError):
        load_sequence(path)


def test_malformed_row_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.1,0.2\n0.3,oops\n")
    with pytest.raises(DataError, match=":2"):
        load_sequence(path)


def test_inconsistent_width_fails(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("0.1,0.2\n0.3\n")
    with pytest.raises(DataError, match="channels"):
        load_sequence(path)


def test_wrong_fps_refused(tmp_path):
    path = tmp_path / "fast.csv"
    path.write_text("# fps=50\n0.1,0.2\n")
    with pytest.raises(DataError, match="fps"):
        load_sequence(path)


def test_h36m_spec_drops_to_54_channels(tmp_path):
    spec = SkeletonSpec.h36m_like()
    assert spec.total_channels == 62
    assert len(spec.retained_channels) == 54
    rows = "\n".join(",".join(f"{v:.3f}" for v in np.linspace(0, 1, 62)) for _ in range(100))
    path = tmp_path / "h36m.csv"
    path.write_text(rows + "\n")
    seq = load_sequence(path, spec)
    assert seq.frames.shape == (100, 54)


def test_spec_file_retained_indices(tmp_path):
    spec_path = tmp_path / "channels.txt"
    spec_path.write_text("# keep these\n0\n2\n3\n")
    spec = SkeletonSpec.from_file(spec_path, total_channels=5)
    assert spec.retained_channels == (0, 2, 3)
    assert spec.drop_channels == (1, 4)


def test_short_sequences_dropped_with_warning(tmp_path, caplog):
    (tmp_path / "long.csv").write_text("\n".join("0.1,0.2" for _ in range(30)) + "\n")
    (tmp_path / "short.csv").write_text("0.1,0.2\n")
    with caplog.at_level("WARNING"):
        seqs = load_sequences(tmp_path, min_length=10)
    assert len(seqs) == 1
    assert "dropped 1" in caplog.text


def test_synth_deterministic_per_seed():
    a = synth_motion(2, 50, 0.1, RandomSource(5), channels=6)
    b = synth_motion(2, 50, 0.1, RandomSource(5), channels=6)
    assert np.array_equal(a.frames, b.frames)
    c = synth_motion(2, 50, 0.0, RandomSource(5), channels=6)
    d = synth_motion(2, 50, 0.0, RandomSource(5), channels=6)
    assert np.array_equal(c.frames, d.frames)


def test_synth_bounded_amplitudes():
    # noise-free channels stay within the fixed amplitude profile (< 1.0)
    seq = synth_motion(1, 200, 0.0, RandomSource(6), channels=10)
    assert np.all(np.abs(seq.frames) <= 1.0)
    noisy = synth_motion(1, 200, 0.05, RandomSource(7), channels=10)
    # 3-sigma bound holds for ~99.7% of samples
    frac = np.mean(np.abs(noisy.frames) <= 1.0 + 3 * 0.05)
    assert frac > 0.99


def test_synth_categories_have_distinct_spectra():
    seqs = [synth_motion(c, 80, 0.0, RandomSource(8 + c), channels=4) for c in range(3)]
    peaks = []
    for s in seqs:
        spectrum = np.abs(np.fft.rfft(s.frames[:, 0]))
        peaks.append(int(np.argmax(spectrum[1:])) + 1)
    assert len(set(peaks)) == 3


def test_make_windows_geometry_and_determinism():
    rng = RandomSource(9)
    seqs = synth_dataset(2, 3, 120, 0.02, rng, channels=4)
    stream1 = make_windows(seqs, past_len=50, future_len=50, batch_size=32,
                           rng=RandomSource(77))
    batch1 = next(stream1)
    assert len(batch1) == 32
    for w in batch1:
        assert w.past.shape == (50, 4)
        assert w.future.shape == (50, 4)
    stream2 = make_windows(seqs, past_len=50, future_len=50, batch_size=32,
                           rng=RandomSource(77))
    batch2 = next(stream2)
    for a, b in zip(batch1, batch2):
        assert np.array_equal(a.past, b.past)
        assert np.array_equal(a.future, b.future)


def test_default_window_arithmetic():
    # T + alpha * pred_len = 50 + 2*25 = 100 under reference defaults
    from motionforge.training import TrainConfig
    assert TrainConfig().window_len == 100
    assert TrainConfig().batch_size == 32


def test_make_windows_rejects_short_corpus():
    seqs = [MotionSequence(np.zeros((10, 3)))]
    with pytest.raises(DataError):
        next(make_windows(seqs, past_len=50, future_len=50, batch_size=4,
                          rng=RandomSource(1)))


def test_windows_never_cross_sequence_boundaries():
    rng = RandomSource(10)
    # two sequences with disjoint constant values; any mixed window would show both
    seqs = [MotionSequence(np.full((40, 2), 1.0), label=0),
            MotionSequence(np.full((40, 2), 2.0), label=1)]
    stream = make_windows(seqs, past_len=10, future_len=10, batch_size=16, rng=rng)
    for w in next(stream):
        values = np.unique(np.concatenate([w.past, w.future]))
        assert values.size == 1
