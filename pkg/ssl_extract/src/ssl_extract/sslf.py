"""Writer for the SSLF feature-file wire format.

Layout (little-endian): magic "SSLF" | u16 version=1 | u16 ssl_dim |
u32 n_frames | u32 sample_rate | f32 window_ms | f32 hop_ms | payload of
n_frames * ssl_dim float32 values, row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SSLF"
VERSION = 1
HEADER = struct.Struct("<4sHHIIff")

# Frame geometry of the standard SSL front-end: 16 kHz input, 400-sample
# receptive field (25 ms), 320-sample total stride (20 ms).
SAMPLE_RATE = 16000
WINDOW_MS = 25.0
HOP_MS = 20.0


def write_sslf(path: str | Path, features: np.ndarray,
               sample_rate: int = SAMPLE_RATE,
               window_ms: float = WINDOW_MS,
               hop_ms: float = HOP_MS) -> None:
    feats = np.ascontiguousarray(features, dtype="<f4")
    if feats.ndim != 2:
        raise ValueError(f"features must be [n_frames, dim], got {feats.shape}")
    n_frames, dim = feats.shape
    header = HEADER.pack(MAGIC, VERSION, dim, n_frames, sample_rate,
                         window_ms, hop_ms)
    Path(path).write_bytes(header + feats.tobytes(order="C"))
