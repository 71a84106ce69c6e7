import math
import wave
from pathlib import Path

import numpy as np
import pytest


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> Path:
    """A small randomly-initialized HuBERT-architecture model saved to disk;
    768-wide like the BASE variants, 2 transformer blocks for speed."""
    from transformers import HubertConfig, HubertModel

    cfg = HubertConfig(
        hidden_size=768, num_hidden_layers=2, num_attention_heads=2,
        intermediate_size=64, conv_dim=(32,) * 7,
    )
    import torch

    torch.manual_seed(0)
    model = HubertModel(cfg)
    out = tmp_path_factory.mktemp("model") / "tiny"
    model.save_pretrained(out)
    return out


def write_tone(path: Path, seconds: float = 1.0, rate: int = 16000,
               freq: float = 440.0, channels: int = 1) -> Path:
    n = int(seconds * rate)
    t = np.arange(n) / rate
    samples = (0.4 * np.sin(2 * math.pi * freq * t) * 32767).astype("<i2")
    if channels == 2:
        samples = np.repeat(samples, 2)
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(channels)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(samples.tobytes())
    return path
