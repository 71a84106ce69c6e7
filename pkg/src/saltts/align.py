"""Frame-rate alignment between SSL-rate and acoustic-model-rate feature streams.

SSL speech models emit one 768-dim vector per 20 ms hop (25 ms window, 16 kHz);
the acoustic model emits one frame per 11.6 ms hop (45.6 ms window, 22.05 kHz).
This module builds deterministic repetition schedules that stretch an SSL-rate
sequence onto the acoustic frame grid: a fixed 5-to-7 expansion for the head of
the sequence, a {2, 2, 1} repetition pattern for the body, and a drop/pad
reconciliation at the tail. A frame-center oracle (`target_frame_count`)
decides how many destination frames a source sequence must cover.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

# Indices the head block emits for its first five source frames: the second
# and fourth frames (1-based) are repeated once, without noise.
_HEAD_PATTERN = (0, 1, 1, 2, 3, 3, 4)

# Body pattern over each group of three source frames (offset, noise flag):
# first frame twice, second frame twice with noise on the repeat, third once.
_BODY_PATTERN = ((0, False), (0, False), (1, False), (1, True), (2, False))


@dataclass(frozen=True)
class FrameSpec:
    """Framing configuration of one feature stream."""

    sample_rate: int
    window_ms: float
    hop_ms: float

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.hop_ms <= 0:
            raise ValueError(f"hop_ms must be positive, got {self.hop_ms}")
        if self.window_ms < self.hop_ms:
            raise ValueError(
                f"window_ms ({self.window_ms}) must be >= hop_ms ({self.hop_ms})"
            )

    def frame_center(self, i: int) -> float:
        return i * self.hop_ms + self.window_ms / 2.0


SSL_SPEC = FrameSpec(sample_rate=16000, window_ms=25.0, hop_ms=20.0)
FS2_SPEC = FrameSpec(sample_rate=22050, window_ms=45.6, hop_ms=11.6)


@dataclass(frozen=True)
class ScheduleEntry:
    """One output frame: which source frame it copies, and whether the copy
    gets Gaussian noise added."""

    src_index: int
    add_noise: bool = False


@dataclass
class AlignmentSchedule:
    """Ordered mapping from destination frames to source frames.

    entries[t] names the source frame that destination frame t copies.
    src_index is monotone non-decreasing; add_noise may be set only on
    entries that repeat the previous entry's source frame.
    """

    entries: list[ScheduleEntry]
    src_len: int
    dst_len: int = field(init=False)

    def __post_init__(self):
        self.dst_len = len(self.entries)
        prev = -1
        for t, e in enumerate(self.entries):
            if e.src_index < 0 or e.src_index >= self.src_len:
                raise ValueError(
                    f"entry {t}: src_index {e.src_index} out of range [0, {self.src_len})"
                )
            if e.src_index < prev:
                raise ValueError(f"entry {t}: src_index sequence not monotone")
            if e.add_noise and e.src_index != prev:
                raise ValueError(f"entry {t}: add_noise set on a non-repeated frame")
            prev = e.src_index

    def src_indices(self) -> np.ndarray:
        return np.array([e.src_index for e in self.entries], dtype=np.int64)

    def noise_flags(self) -> np.ndarray:
        return np.array([e.add_noise for e in self.entries], dtype=bool)


def frame_interval(spec: FrameSpec, i: int) -> tuple[float, float]:
    """Return the (start_ms, end_ms) span of frame i."""
    if i < 0:
        raise ValueError(f"frame index must be >= 0, got {i}")
    start = i * spec.hop_ms
    return (start, start + spec.window_ms)


def target_frame_count(src: FrameSpec, dst: FrameSpec, n_src: int) -> int:
    """How many dst-rate frames n_src src-rate frames should map onto.

    Uses frame-center alignment: the last source frame lands on the
    destination frame whose center is nearest its own center. Rounding is
    half-up so the choice is deterministic.
    """
    if n_src < 0:
        raise ValueError(f"n_src must be >= 0, got {n_src}")
    if n_src == 0:
        return 0
    last_center = src.frame_center(n_src - 1)
    q = (last_center - dst.window_ms / 2.0) / dst.hop_ms
    return max(1, 1 + int(np.floor(q + 0.5)))


def build_schedule(
    n_src: int,
    src: FrameSpec = SSL_SPEC,
    dst: FrameSpec = FS2_SPEC,
    noise_both_repeats: bool = False,
) -> AlignmentSchedule:
    """Build the repetition schedule stretching n_src source frames to the
    dst frame grid.

    Head: the first five source frames expand to seven entries
    (0, 1, 1, 2, 3, 3, 4), no noise. Body: each following group of three
    frames (a, b, c) expands to (a, a, b, b+noise, c); `noise_both_repeats`
    puts the noise flag on the first repeat as well. Tail: excess entries are
    dropped from the end; a shortfall is padded by repeating the final entry
    without noise, until the length equals `target_frame_count`.
    """
    if n_src < 0:
        raise ValueError(f"n_src must be >= 0, got {n_src}")
    if n_src == 0:
        return AlignmentSchedule(entries=[], src_len=0)

    entries: list[ScheduleEntry] = [
        ScheduleEntry(i) for i in _HEAD_PATTERN if i < n_src
    ]
    for group_start in range(5, n_src, 3):
        for offset, noisy in _BODY_PATTERN:
            idx = group_start + offset
            if idx >= n_src:
                break
            if noise_both_repeats and offset == 0 and entries[-1].src_index == idx:
                noisy = True
            entries.append(ScheduleEntry(idx, add_noise=noisy))

    target = target_frame_count(src, dst, n_src)
    if len(entries) > target:
        del entries[target:]
    while len(entries) < target:
        entries.append(ScheduleEntry(entries[-1].src_index, add_noise=False))
    return AlignmentSchedule(entries=entries, src_len=n_src)


def apply_repeater(
    features: np.ndarray,
    schedule: AlignmentSchedule,
    noise_sigma: float = 1.0,
    rng_seed: int = 0,
) -> np.ndarray:
    """Expand `features` [n_src x D] to [dst_len x D] along the schedule.

    Entries flagged add_noise receive an elementwise draw from
    N(0, noise_sigma^2); the noise stream is seeded by rng_seed alone, so a
    fixed seed gives bit-identical output.
    """
    features = np.asarray(features)
    if features.ndim != 2:
        raise DimensionError(f"features must be 2-D, got shape {features.shape}")
    if features.shape[0] != schedule.src_len:
        raise DimensionError(
            f"features has {features.shape[0]} rows but schedule expects "
            f"{schedule.src_len}"
        )
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")

    if schedule.dst_len == 0:
        return np.zeros((0, features.shape[1]), dtype=features.dtype)
    out = features[schedule.src_indices()].copy()
    rng = np.random.default_rng(rng_seed)
    for t in np.flatnonzero(schedule.noise_flags()):
        out[t] = out[t] + noise_sigma * rng.standard_normal(
            features.shape[1]
        ).astype(features.dtype)
    return out
