"""Motion-sequence ingestion, synthetic generation, and window batching.

Sequence files are plain CSV: one frame per line, comma-separated floats,
with an optional first-line header ``# label=<name> fps=<n>``. Ingestion
validates the frame rate (the horizon-to-frame mapping depends on it),
drops globally-positioned channels per the skeleton spec, and wraps all
angles to [-pi, pi].
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .params import RandomSource

logger = logging.getLogger("motionforge.data")

FRAME_RATE = 25


class DataError(ValueError):
    """Malformed or unusable input data."""


def wrap_angles(values: np.ndarray) -> np.ndarray:
    """Wrap into [-pi, pi]; values already in range pass through bit-exact."""
    out = np.array(values, dtype=np.float64, copy=True)
    mask = (out < -np.pi) | (out > np.pi)
    out[mask] = np.mod(out[mask] + np.pi, 2.0 * np.pi) - np.pi
    return out


@dataclass
class MotionSequence:
    """Time-ordered frames at a fixed frame rate, optionally labeled."""

    frames: np.ndarray  # [length, channels] float64
    label: int | None = None
    fps: int = FRAME_RATE

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] == 0:
            raise DataError(f"motion sequence must be nonempty 2-d, got shape {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise DataError("motion sequence contains non-finite values")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def channels(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class SkeletonSpec:
    """Channel bookkeeping: which raw channels survive preprocessing."""

    joint_names: tuple[str, ...]
    channels_per_joint: int
    drop_channels: tuple[int, ...]

    @property
    def total_channels(self) -> int:
        return len(self.joint_names) * self.channels_per_joint

    @property
    def retained_channels(self) -> tuple[int, ...]:
        dropped = set(self.drop_channels)
        return tuple(i for i in range(self.total_channels) if i not in dropped)

    @classmethod
    def h36m_like(cls) -> "SkeletonSpec":
        # 62 raw channels; the first 6 (root translation + orientation) and
        # two trailing static channels are dropped, leaving 54
        names = tuple(f"j{i:02d}" for i in range(31))
        return cls(joint_names=names, channels_per_joint=2,
                   drop_channels=(0, 1, 2, 3, 4, 5, 60, 61))

    @classmethod
    def identity(cls, channels: int) -> "SkeletonSpec":
        return cls(joint_names=tuple(f"c{i}" for i in range(channels)),
                   channels_per_joint=1, drop_channels=())

    @classmethod
    def from_file(cls, path, total_channels: int) -> "SkeletonSpec":
        """Read retained-channel indices (one per line, or comma/space
        separated); every other channel is dropped."""
        retained = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            for token in line.replace(",", " ").split():
                try:
                    retained.append(int(token))
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: expected a channel index, got {token!r}") from e
        keep = set(retained)
        drop = tuple(i for i in range(total_channels) if i not in keep)
        return cls(joint_names=tuple(f"c{i}" for i in range(total_channels)),
                   channels_per_joint=1, drop_channels=drop)


def _parse_header(line: str) -> tuple[int | None, int]:
    label: int | None = None
    fps = FRAME_RATE
    for token in line.lstrip("#").split():
        if token.startswith("label="):
            raw = token[len("label="):]
            try:
                label = int(raw)
            except ValueError:
                # non-numeric labels get a stable id from their text
                label = zlib.crc32(raw.encode())
        elif token.startswith("fps="):
            fps = int(token[len("fps="):])
    return label, fps


def load_sequence(path, spec: SkeletonSpec | None = None) -> MotionSequence:
    """Parse one CSV sequence file; channels dropped and angles wrapped."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise DataError(f"{path}: cannot read sequence file: {e}") from e
    label, fps = None, FRAME_RATE
    start = 0
    if lines and lines[0].startswith("#"):
        label, fps = _parse_header(lines[0])
        start = 1
    if fps != FRAME_RATE:
        raise DataError(f"{path}: fps={fps} unsupported; horizons assume {FRAME_RATE} fps")
    rows = []
    width = None
    for lineno, line in enumerate(lines[start:], start + 1):
        if not line.strip():
            continue
        try:
            row = np.array(line.split(","), dtype=np.float64)
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: malformed row") from e
        if width is None:
            width = row.size
        elif row.size != width:
            raise DataError(f"{path}:{lineno}: expected {width} channels, got {row.size}")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no frames")
    frames = np.stack(rows)
    if spec is not None:
        if frames.shape[1] != spec.total_channels:
            raise DataError(
                f"{path}: {frames.shape[1]} channels but skeleton spec expects {spec.total_channels}")
        frames = frames[:, list(spec.retained_channels)]
    return MotionSequence(wrap_angles(frames), label=label, fps=fps)


def load_sequences(path, spec: SkeletonSpec | None = None,
                   min_length: int | None = None) -> list[MotionSequence]:
    """Load every ``*.csv`` under a directory (or a single file).

    Sequences shorter than ``min_length`` are discarded with a logged count.
    """
    p = Path(path)
    files = sorted(p.glob("*.csv")) if p.is_dir() else [p]
    if not files:
        raise DataError(f"{path}: no sequence files found")
    sequences, dropped = [], 0
    for f in files:
        seq = load_sequence(f, spec)
        if min_length is not None and len(seq) < min_length:
            dropped += 1
            continue
        sequences.append(seq)
    if dropped:
        logger.warning("%s: dropped %d sequence(s) shorter than %d frames", path, dropped, min_length)
    if not sequences:
        raise DataError(f"{path}: all sequences shorter than {min_length} frames")
    return sequences


# fixed per-channel amplitudes/phases for the synthetic generator, shared
# across categories so only the base frequency separates them
_SYNTH_SEED = 0x5EED


def _synth_profile(channels: int) -> tuple[np.ndarray, np.ndarray]:
    rng = RandomSource(_SYNTH_SEED)
    amp = rng.uniform((channels,), 0.3, 1.0)
    phase = rng.uniform((channels,), -np.pi, np.pi)
    return amp, phase


def synth_motion(category: int, length: int, noise: float, rng: RandomSource,
                 channels: int = 54) -> MotionSequence:
    """Sinusoidal pseudo-motion: per-channel a_i*sin(w_c*t + phi_i) + noise."""
    if length < 1:
        raise DataError("synth_motion: length must be >= 1")
    amp, phase = _synth_profile(channels)
    omega = 2.0 * np.pi * (category + 1) / 40.0  # per-frame angular step
    t = np.arange(length)[:, None]
    offset = rng.uniform((), 0.0, 2.0 * np.pi)
    frames = amp[None, :] * np.sin(omega * t + phase[None, :] + offset)
    if noise > 0:
        frames = frames + noise * rng.normal(frames.shape)
    return MotionSequence(wrap_angles(frames), label=category)


def synth_dataset(categories: int, per_category: int, length: int, noise: float,
                  rng: RandomSource, channels: int = 54) -> list[MotionSequence]:
    return [synth_motion(c, length, noise, rng, channels)
            for c in range(categories) for _ in range(per_category)]


@dataclass
class DatasetWindow:
    """A contiguous training window: T past frames plus the future chunks."""

    past: np.ndarray    # [T, channels]
    future: np.ndarray  # [alpha * pred_len, channels]
    label: int | None = None


def make_windows(sequences: list[MotionSequence], past_len: int, future_len: int,
                 batch_size: int, rng: RandomSource):
    """Endless stream of uniformly-sampled window batches, seeded."""
    window_len = past_len + future_len
    eligible = [s for s in sequences if len(s) >= window_len]
    if not eligible:
        raise DataError(f"no sequence long enough for a {window_len}-frame window")
    while True:
        batch = []
        for _ in range(batch_size):
            seq = eligible[int(rng.integers(0, len(eligible)))]
            start = int(rng.integers(0, len(seq) - window_len + 1))
            frames = seq.frames[start:start + window_len]
            batch.append(DatasetWindow(past=frames[:past_len],
                                       future=frames[past_len:],
                                       label=seq.label))
        yield batch
