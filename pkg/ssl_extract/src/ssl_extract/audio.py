"""Minimal WAV reading: 16 kHz mono PCM in, float32 samples out."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import AudioError

_PCM_SCALE = {1: 127.0, 2: 32768.0, 4: 2147483648.0}
_PCM_DTYPE = {1: np.uint8, 2: "<i2", 4: "<i4"}


def read_wav_mono(path: str | Path, expect_rate: int = 16000) -> np.ndarray:
    """Decode a PCM WAV file; rejects wrong rates and non-mono content."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            rate = wav.getframerate()
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            frames = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise AudioError(f"{path}: cannot decode ({exc})") from exc
    if rate != expect_rate:
        raise AudioError(f"{path}: sample rate {rate} Hz, expected {expect_rate} Hz")
    if channels != 1:
        raise AudioError(f"{path}: {channels} channels, expected mono")
    if width not in _PCM_DTYPE:
        raise AudioError(f"{path}: unsupported sample width {width}")
    raw = np.frombuffer(frames, dtype=_PCM_DTYPE[width])
    if width == 1:  # 8-bit WAV is unsigned
        samples = (raw.astype(np.float32) - 128.0) / _PCM_SCALE[width]
    else:
        samples = raw.astype(np.float32) / _PCM_SCALE[width]
    if samples.size == 0:
        raise AudioError(f"{path}: empty audio stream")
    return samples
