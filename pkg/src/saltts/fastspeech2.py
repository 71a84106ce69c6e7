"""Baseline acoustic-model substrate: FFT blocks, phoneme encoder, variance
adapter (duration/pitch/energy), length regulator, mel decoder, and the
baseline loss terms.

Masking convention: masks are numpy arrays with 1.0 on valid positions and
0.0 on padding. Hidden states are zeroed at padded positions before every
convolution and attention scores are masked key-side, so values written into
padded slots can never influence valid outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nncore
from .config import ModelConfig
from .errors import DimensionError
from .nncore import ops
from .nncore.tensor import Tensor

# Duration regression happens in log space; the offset keeps log() defined
# for zero-length phonemes without disturbing counts >= 1.
DUR_LOG_OFFSET = 1e-4


def log_duration_targets(durations: np.ndarray) -> np.ndarray:
    return np.log(durations.astype(np.float64) + DUR_LOG_OFFSET)


def durations_from_log(pred: np.ndarray) -> np.ndarray:
    """Inference rounding: round-half-up of exp(pred), floored at 0."""
    return np.maximum(0, np.floor(np.exp(pred) + 0.5)).astype(np.int64)


def quantize(values: np.ndarray, lo: float, hi: float, n_bins: int) -> np.ndarray:
    """Linear quantization of values into [0, n_bins) bin ids."""
    scaled = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo) * n_bins
    return np.clip(np.floor(scaled), 0, n_bins - 1).astype(np.int64)


class FFTBlock(nncore.Module):
    """Self-attention followed by a two-conv position-wise feed-forward,
    each with residual + post layer norm."""

    def __init__(self, dim: int, heads: int, ffn_hidden: int, kernel: int,
                 dropout: float):
        super().__init__()
        self.attn = nncore.MultiHeadSelfAttention(dim, heads)
        self.norm1 = nncore.LayerNorm(dim)
        self.conv1 = nncore.Conv1dSeq(dim, ffn_hidden, kernel)
        self.conv2 = nncore.Conv1dSeq(ffn_hidden, dim, kernel)
        self.norm2 = nncore.LayerNorm(dim)
        self.drop1 = nncore.Dropout(dropout)
        self.drop2 = nncore.Dropout(dropout)

    def __call__(self, x: Tensor, mask: np.ndarray, train: bool) -> Tensor:
        h = self.attn(x, mask=mask)
        x = self.norm1(x + self.drop1(h, train))
        m3 = mask[:, :, None]
        h = self.conv1(ops.mul_const(x, m3))
        h = self.conv2(ops.mul_const(ops.relu(h), m3))
        return self.norm2(x + self.drop2(h, train))


class Encoder(nncore.Module):
    """Phoneme embedding + sinusoidal positions + FFT block stack."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.dim = cfg.adapter_dim
        self.embed = nncore.Embedding(cfg.vocab_size, cfg.adapter_dim)
        self.blocks = nncore.ModuleList([
            FFTBlock(cfg.adapter_dim, cfg.heads, cfg.ffn_hidden,
                     cfg.conv_kernel, cfg.dropout)
            for _ in range(cfg.encoder_layers)
        ])

    def __call__(self, phoneme_ids: np.ndarray, mask: np.ndarray,
                 train: bool) -> Tensor:
        b, l = phoneme_ids.shape
        x = self.embed(phoneme_ids)
        if l:
            x = ops.add_const(x, ops.sinusoid_encoding(l, self.dim)[None])
        for block in self.blocks:
            x = block(x, mask, train)
        return x


class Decoder(nncore.Module):
    """FFT block stack plus final affine onto the mel bins."""

    def __init__(self, width: int, layers: int, heads: int, ffn_hidden: int,
                 kernel: int, dropout: float, n_mels: int):
        super().__init__()
        self.width = width
        self.blocks = nncore.ModuleList([
            FFTBlock(width, heads, ffn_hidden, kernel, dropout)
            for _ in range(layers)
        ])
        self.mel_out = nncore.Affine(width, n_mels)

    def __call__(self, x: Tensor, mask: np.ndarray, train: bool) -> Tensor:
        if x.shape[-1] != self.width:
            raise DimensionError(
                f"decoder built for width {self.width}, got input {x.shape}"
            )
        if x.shape[1]:
            x = ops.add_const(x, ops.sinusoid_encoding(x.shape[1], self.width)[None])
        for block in self.blocks:
            x = block(x, mask, train)
        return self.mel_out(x)


def length_regulate(
    h: Tensor | np.ndarray, durations: np.ndarray
) -> tuple[Tensor, np.ndarray]:
    """Repeat row i of each sequence durations[i] times, preserving order.

    Returns the expanded tensor [B, T, D] with T = max row sum (shorter rows
    padded with copies of row 0, masked off) and the frame mask [B, T].
    """
    h = h if isinstance(h, Tensor) else Tensor(h)
    durations = np.asarray(durations)
    if durations.ndim != 2 or durations.shape[0] != h.shape[0]:
        raise DimensionError(
            f"durations {durations.shape} do not match hidden {h.shape}"
        )
    if durations.size and durations.min() < 0:
        raise ValueError("durations must be >= 0")
    totals = durations.sum(axis=1)
    t_max = int(totals.max()) if totals.size else 0
    b = h.shape[0]
    idx = np.zeros((b, t_max), dtype=np.int64)
    frame_mask = np.zeros((b, t_max), dtype=np.float64)
    for bi in range(b):
        expanded = np.repeat(np.arange(durations.shape[1]), durations[bi])
        idx[bi, : expanded.size] = expanded
        frame_mask[bi, : expanded.size] = 1.0
    return ops.gather_rows(h, idx), frame_mask


class VariancePredictor(nncore.Module):
    """Two conv+ReLU+LayerNorm(+dropout) stages then an affine to a scalar
    per position."""

    def __init__(self, dim: int, kernel: int, dropout: float):
        super().__init__()
        self.conv1 = nncore.Conv1dSeq(dim, dim, kernel)
        self.norm1 = nncore.LayerNorm(dim)
        self.drop1 = nncore.Dropout(dropout)
        self.conv2 = nncore.Conv1dSeq(dim, dim, kernel)
        self.norm2 = nncore.LayerNorm(dim)
        self.drop2 = nncore.Dropout(dropout)
        self.out = nncore.Affine(dim, 1)

    def __call__(self, x: Tensor, mask: np.ndarray, train: bool) -> Tensor:
        m3 = mask[:, :, None]
        h = self.drop1(self.norm1(ops.relu(self.conv1(ops.mul_const(x, m3)))), train)
        h = self.drop2(self.norm2(ops.relu(self.conv2(ops.mul_const(h, m3)))), train)
        out = self.out(h)
        return ops.reshape(out, out.shape[:-1])


@dataclass
class AdapterOutput:
    expanded: Tensor          # [B, T, adapter_dim] with variance embeddings
    frame_mask: np.ndarray    # [B, T]
    duration_pred: Tensor     # [B, L] log-domain
    pitch_pred: Tensor        # [B, T]
    energy_pred: Tensor       # [B, T]
    durations_used: np.ndarray  # [B, L] integer frames actually expanded


class VarianceAdapter(nncore.Module):
    """Duration/pitch/energy predictors plus their conditional embeddings.

    Training teacher-forces: ground-truth durations drive the expansion and
    ground-truth pitch/energy pick the added embeddings. Inference uses the
    predictors' own outputs.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.adapter_dim
        self.duration_predictor = VariancePredictor(d, cfg.conv_kernel, cfg.dropout)
        self.pitch_predictor = VariancePredictor(d, cfg.conv_kernel, cfg.dropout)
        self.energy_predictor = VariancePredictor(d, cfg.conv_kernel, cfg.dropout)
        self.pitch_embed = nncore.Embedding(cfg.n_bins, d)
        self.energy_embed = nncore.Embedding(cfg.n_bins, d)

    def __call__(
        self,
        h: Tensor,
        phoneme_mask: np.ndarray,
        train: bool,
        durations: np.ndarray | None = None,
        pitch: np.ndarray | None = None,
        energy: np.ndarray | None = None,
        stochastic: bool | None = None,
    ) -> AdapterOutput:
        if train and (durations is None or pitch is None or energy is None):
            raise ValueError("train mode requires duration/pitch/energy targets")
        if stochastic is None:
            stochastic = train
        cfg = self.cfg
        duration_pred = self.duration_predictor(h, phoneme_mask, stochastic)
        if train:
            durations_used = np.asarray(durations, dtype=np.int64)
        else:
            durations_used = durations_from_log(duration_pred.data)
            durations_used = durations_used * phoneme_mask.astype(np.int64)
        expanded, frame_mask = length_regulate(h, durations_used)

        pitch_pred = self.pitch_predictor(expanded, frame_mask, stochastic)
        energy_pred = self.energy_predictor(expanded, frame_mask, stochastic)
        pitch_src = np.asarray(pitch) if train else pitch_pred.data
        energy_src = np.asarray(energy) if train else energy_pred.data
        pitch_ids = quantize(pitch_src, cfg.pitch_min, cfg.pitch_max, cfg.n_bins)
        energy_ids = quantize(energy_src, cfg.energy_min, cfg.energy_max, cfg.n_bins)
        expanded = expanded + self.pitch_embed(pitch_ids)
        expanded = expanded + self.energy_embed(energy_ids)
        return AdapterOutput(
            expanded=expanded,
            frame_mask=frame_mask,
            duration_pred=duration_pred,
            pitch_pred=pitch_pred,
            energy_pred=energy_pred,
            durations_used=durations_used,
        )


def fs2_loss_terms(
    mel_pred: Tensor,
    mel_target: np.ndarray,
    duration_pred: Tensor,
    durations: np.ndarray,
    pitch_pred: Tensor,
    pitch_target: np.ndarray,
    energy_pred: Tensor,
    energy_target: np.ndarray,
    phoneme_mask: np.ndarray,
    frame_mask: np.ndarray,
) -> dict[str, Tensor]:
    """Baseline loss terms: L1 on mel, MSE on log-duration/pitch/energy,
    each a mean over unpadded positions."""
    if mel_pred.shape != np.shape(mel_target):
        raise DimensionError(
            f"mel shapes differ: {mel_pred.shape} vs {np.shape(mel_target)}"
        )
    return {
        "mel": ops.l1_loss(mel_pred, mel_target, frame_mask[:, :, None]),
        "duration": ops.mse_loss(
            duration_pred, log_duration_targets(durations), phoneme_mask
        ),
        "pitch": ops.mse_loss(pitch_pred, pitch_target, frame_mask),
        "energy": ops.mse_loss(energy_pred, energy_target, frame_mask),
    }
