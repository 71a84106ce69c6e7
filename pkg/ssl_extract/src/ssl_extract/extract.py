"""Hidden-state extraction from pretrained speech SSL models.

Runs a HuBERT-family encoder over 16 kHz mono audio, averages the requested
transformer-block outputs (1-based indices; index 0, the convolutional
front-end projection, is excluded from the numbering), and writes one SSLF
file per input plus a line-delimited manifest fragment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .audio import read_wav_mono
from .errors import AudioError, ModelLoadError
from .sslf import write_sslf

DEFAULT_LAYERS = (9, 10, 11)


@dataclass
class ExtractJob:
    audio_paths: list[Path]
    model_id: str
    out_dir: Path
    layers: tuple[int, ...] = DEFAULT_LAYERS


@dataclass
class ExtractResult:
    written: list[dict] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)  # (path, reason)


def load_model(model_id: str) -> torch.nn.Module:
    """Load a pretrained encoder (hub id or local directory); any failure
    aborts the job."""
    from transformers import AutoModel

    try:
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ModelLoadError(f"cannot load model {model_id!r}: {exc}") from exc
    model.eval()
    return model


def average_hidden_layers(hidden_states: tuple, layers: tuple[int, ...]) -> np.ndarray:
    """Mean of the chosen transformer-block outputs for a batch of one.

    Averaged in float64 so that repeated identical layers reproduce the layer
    bit-exactly after the float32 write."""
    n_blocks = len(hidden_states) - 1
    for l in layers:
        if not 1 <= l <= n_blocks:
            raise ValueError(
                f"layer {l} out of range [1, {n_blocks}] for this model"
            )
    stacked = torch.stack([hidden_states[l][0] for l in layers]).double()
    return stacked.mean(dim=0).cpu().numpy()


def extract_one(model: torch.nn.Module, samples: np.ndarray,
                layers: tuple[int, ...]) -> np.ndarray:
    with torch.no_grad():
        out = model(torch.from_numpy(samples)[None, :].float(),
                    output_hidden_states=True)
    return average_hidden_layers(out.hidden_states, layers)


def extract(job: ExtractJob) -> ExtractResult:
    """Process every input; per-file problems are recorded and skipped,
    model problems abort."""
    model = load_model(job.model_id)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = ExtractResult()
    manifest_lines = []
    for path in job.audio_paths:
        path = Path(path)
        try:
            samples = read_wav_mono(path)
        except AudioError as exc:
            result.failures.append((str(path), str(exc)))
            continue
        features = extract_one(model, samples, job.layers)
        out_name = path.stem + ".sslf"
        write_sslf(out_dir / out_name, features)
        record = {
            "kind": "ssl",
            "id": path.stem,
            "ssl_path": out_name,
            "n_frames": int(features.shape[0]),
            "ssl_dim": int(features.shape[1]),
        }
        result.written.append(record)
        manifest_lines.append(json.dumps(record, sort_keys=True))
    (out_dir / "ssl_manifest.jsonl").write_text(
        "\n".join(manifest_lines) + ("\n" if manifest_lines else "")
    )
    return result
