"""Shared helpers: tiny configs and hand-built padded batches."""

import numpy as np
import pytest

from saltts.config import ModelConfig
from saltts.model import Batch


def small_config(**kw) -> ModelConfig:
    base = dict(
        vocab_size=5, adapter_dim=6, encoder_layers=1, decoder_layers=1,
        heads=2, conv_kernel=3, ffn_hidden=8, n_mels=4, ssl_dim=8,
        projector_hidden=8, ssl_predictor_layers=1, ssl_heads=2,
        dropout=0.0, n_bins=4, seed=0,
    )
    base.update(kw)
    return ModelConfig(**base)


def make_batch(cfg: ModelConfig, seed: int = 0, b: int = 2, l: int = 3) -> Batch:
    """A consistent padded batch with teacher-forcing targets."""
    rng = np.random.default_rng(seed)
    ids = rng.integers(1, cfg.vocab_size, size=(b, l))
    phoneme_mask = np.ones((b, l))
    durations = rng.integers(1, 4, size=(b, l))
    if b > 1:  # give the batch ragged lengths so padding is exercised
        phoneme_mask[-1, -1] = 0.0
        ids[-1, -1] = 0
        durations[-1, -1] = 0
    totals = durations.sum(axis=1)
    t = int(totals.max())
    frame_mask = np.zeros((b, t))
    for bi in range(b):
        frame_mask[bi, : totals[bi]] = 1.0
    pitch = rng.uniform(0.5, 6.0, size=(b, t)) * frame_mask
    energy = rng.uniform(0.1, 2.0, size=(b, t)) * frame_mask
    mel = rng.normal(size=(b, t, cfg.n_mels)) * frame_mask[:, :, None]
    ssl = rng.normal(size=(b, t, cfg.ssl_dim)) * frame_mask[:, :, None]
    return Batch(
        phoneme_ids=ids, phoneme_mask=phoneme_mask, durations=durations,
        pitch=pitch, energy=energy, mel=mel, frame_mask=frame_mask, ssl=ssl,
    )


@pytest.fixture
def tiny_config():
    return small_config()
