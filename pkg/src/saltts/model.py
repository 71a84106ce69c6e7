"""The full acoustic model in its three wirings.

baseline: encoder -> variance adapter -> mel decoder.
parallel: same mel path; during training a projector + reconstruction
    encoder predict the SSL feature targets for an auxiliary L1 loss. The
    branch is skipped entirely at inference, so the inference graph is the
    baseline graph.
cascade: the decoder consumes the reconstruction encoder's 768-wide output
    plus a residual from the projector; the auxiliary loss reads the
    pre-residual prediction. The branch runs at inference too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nncore
from .config import ModelConfig
from .errors import AlignmentError, ConfigError, DimensionError
from .fastspeech2 import (
    AdapterOutput,
    Decoder,
    Encoder,
    FFTBlock,
    VarianceAdapter,
    fs2_loss_terms,
)
from .nncore import ops
from .nncore.tensor import Tensor


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term losses and their weighted total."""

    mel: float = 0.0
    duration: float = 0.0
    pitch: float = 0.0
    energy: float = 0.0
    aux: float = 0.0
    total: float = 0.0

    FIELDS = ("total", "mel", "duration", "pitch", "energy", "aux")

    def as_row(self) -> list[float]:
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class Batch:
    """One padded training/eval batch. Masks carry 1.0 on valid positions."""

    phoneme_ids: np.ndarray             # [B, L] int
    phoneme_mask: np.ndarray            # [B, L]
    durations: np.ndarray | None = None  # [B, L] int
    pitch: np.ndarray | None = None      # [B, T]
    energy: np.ndarray | None = None     # [B, T]
    mel: np.ndarray | None = None        # [B, T, n_mels]
    frame_mask: np.ndarray | None = None  # [B, T]
    ssl: np.ndarray | None = None        # [B, T, ssl_dim], repeater-aligned


@dataclass
class ForwardResult:
    mel: Tensor
    total: Tensor | None = None
    breakdown: LossBreakdown | None = None
    extras: dict = field(default_factory=dict)


class Projector(nncore.Module):
    """Two affines with one ReLU lifting adapter width to the SSL width."""

    def __init__(self, din: int, hidden: int, dout: int):
        super().__init__()
        self.fc1 = nncore.Affine(din, hidden)
        self.fc2 = nncore.Affine(hidden, dout)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(x)))


class SSLPredictor(nncore.Module):
    """Encoder stack (default 4 FFT blocks) reconstructing SSL features."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.width = cfg.ssl_dim
        self.blocks = nncore.ModuleList([
            FFTBlock(cfg.ssl_dim, cfg.ssl_heads, cfg.ffn_hidden,
                     cfg.conv_kernel, cfg.dropout)
            for _ in range(cfg.ssl_predictor_layers)
        ])

    def __call__(self, x: Tensor, mask: np.ndarray, train: bool) -> Tensor:
        if x.shape[-1] != self.width:
            raise DimensionError(
                f"reconstruction encoder built for width {self.width}, "
                f"got {x.shape}"
            )
        for block in self.blocks:
            x = block(x, mask, train)
        return x


def aux_loss(pred: Tensor, target: np.ndarray, frame_mask: np.ndarray) -> Tensor:
    """Mean absolute error between predicted and aligned SSL features over
    unpadded cells."""
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise AlignmentError(
            f"SSL prediction {pred.shape} does not match aligned target "
            f"{target.shape}; repeater output is inconsistent"
        )
    return ops.l1_loss(pred, target, frame_mask[:, :, None])


class AcousticModel(nncore.Module):
    """Encoder + variance adapter + decoder, with the optional SSL branch."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.adapter = VarianceAdapter(cfg)
        self.decoder = Decoder(
            cfg.decoder_width, cfg.decoder_layers, cfg.heads, cfg.ffn_hidden,
            cfg.conv_kernel, cfg.dropout, cfg.n_mels,
        )
        if cfg.variant in ("parallel", "cascade"):
            self.projector = Projector(cfg.adapter_dim, cfg.projector_hidden,
                                       cfg.ssl_dim)
            self.ssl_predictor = SSLPredictor(cfg)

    # ------------------------------------------------------------ forward

    def forward(self, batch: Batch, train: bool,
                stochastic: bool | None = None) -> ForwardResult:
        """`train` gates teacher forcing and loss computation; `stochastic`
        gates dropout (defaults to `train`; pass False for teacher-forced
        evaluation)."""
        if stochastic is None:
            stochastic = train
        if self.cfg.variant == "parallel":
            return self.forward_parallel(batch, train, stochastic)
        if self.cfg.variant == "cascade":
            return self.forward_cascade(batch, train, stochastic)
        return self.forward_baseline(batch, train, stochastic)

    def forward_baseline(self, batch: Batch, train: bool,
                         stochastic: bool | None = None) -> ForwardResult:
        stochastic = train if stochastic is None else stochastic
        adapter_out = self._encode_and_adapt(batch, train, stochastic)
        mel = self.decoder(adapter_out.expanded, adapter_out.frame_mask,
                           stochastic)
        result = ForwardResult(mel=mel, extras={"adapter": adapter_out})
        if train:
            self._attach_losses(result, batch, adapter_out, aux=None)
        return result

    def forward_parallel(self, batch: Batch, train: bool,
                         stochastic: bool | None = None) -> ForwardResult:
        stochastic = train if stochastic is None else stochastic
        adapter_out = self._encode_and_adapt(batch, train, stochastic)
        mel = self.decoder(adapter_out.expanded, adapter_out.frame_mask,
                           stochastic)
        result = ForwardResult(mel=mel, extras={"adapter": adapter_out})
        if train:
            projected = self.projector(adapter_out.expanded)
            predicted = self.ssl_predictor(projected, adapter_out.frame_mask,
                                           stochastic)
            result.extras["projected"] = projected
            result.extras["ssl_predicted"] = predicted
            aux = aux_loss(predicted, batch.ssl, adapter_out.frame_mask)
            self._attach_losses(result, batch, adapter_out, aux=aux)
        return result

    def forward_cascade(self, batch: Batch, train: bool,
                        stochastic: bool | None = None) -> ForwardResult:
        stochastic = train if stochastic is None else stochastic
        adapter_out = self._encode_and_adapt(batch, train, stochastic)
        projected = self.projector(adapter_out.expanded)
        predicted = self.ssl_predictor(projected, adapter_out.frame_mask,
                                       stochastic)
        decoder_input = predicted + projected  # residual from the projector
        mel = self.decoder(decoder_input, adapter_out.frame_mask, stochastic)
        result = ForwardResult(mel=mel, extras={
            "adapter": adapter_out,
            "projected": projected,
            "ssl_predicted": predicted,
            "decoder_input": decoder_input,
        })
        if train:
            # Loss reads the prediction before the residual join.
            aux = aux_loss(predicted, batch.ssl, adapter_out.frame_mask)
            self._attach_losses(result, batch, adapter_out, aux=aux)
        return result

    def synthesize(self, phoneme_ids: np.ndarray) -> np.ndarray:
        """Inference on a single unpadded id sequence; returns [T, n_mels]."""
        ids = np.asarray(phoneme_ids, dtype=np.int64).reshape(1, -1)
        if ids.shape[1] == 0:
            return np.zeros((0, self.cfg.n_mels))
        batch = Batch(phoneme_ids=ids, phoneme_mask=np.ones_like(ids, dtype=np.float64))
        with nncore.no_grad():
            result = self.forward(batch, train=False)
        return result.mel.data[0]

    # ------------------------------------------------------------ helpers

    def _encode_and_adapt(self, batch: Batch, train: bool,
                          stochastic: bool) -> AdapterOutput:
        hidden = self.encoder(batch.phoneme_ids, batch.phoneme_mask, stochastic)
        return self.adapter(
            hidden, batch.phoneme_mask, train,
            durations=batch.durations, pitch=batch.pitch, energy=batch.energy,
            stochastic=stochastic,
        )

    def _attach_losses(self, result: ForwardResult, batch: Batch,
                       adapter_out: AdapterOutput, aux: Tensor | None) -> None:
        if batch.mel is None or batch.frame_mask is None:
            raise ValueError("train mode requires mel targets and frame mask")
        if not np.array_equal(batch.frame_mask, adapter_out.frame_mask):
            raise AlignmentError(
                "batch frame mask does not match teacher-forced expansion"
            )
        cfg = self.cfg
        terms = fs2_loss_terms(
            result.mel, batch.mel,
            adapter_out.duration_pred, batch.durations,
            adapter_out.pitch_pred, batch.pitch,
            adapter_out.energy_pred, batch.energy,
            batch.phoneme_mask, adapter_out.frame_mask,
        )
        total = ops.scale(terms["mel"], cfg.w_mel)
        total = total + ops.scale(terms["duration"], cfg.w_dur)
        total = total + ops.scale(terms["pitch"], cfg.w_pitch)
        total = total + ops.scale(terms["energy"], cfg.w_energy)
        aux_value = 0.0
        if aux is not None:
            total = total + ops.scale(aux, cfg.w_aux)
            aux_value = aux.item()
            terms["aux"] = aux
        result.extras["loss_terms"] = terms
        result.total = total
        result.breakdown = LossBreakdown(
            mel=terms["mel"].item(),
            duration=terms["duration"].item(),
            pitch=terms["pitch"].item(),
            energy=terms["energy"].item(),
            aux=aux_value,
            total=total.item(),
        )

    # ------------------------------------------------------- inference size

    def inference_modules(self) -> list[tuple[str, nncore.Module]]:
        mods = [("encoder", self.encoder), ("adapter", self.adapter),
                ("decoder", self.decoder)]
        if self.cfg.variant == "cascade":
            mods += [("projector", self.projector),
                     ("ssl_predictor", self.ssl_predictor)]
        return mods


def build_model(cfg: ModelConfig) -> AcousticModel:
    model = AcousticModel(cfg)
    model.initialize(cfg.seed)
    return model


def count_inference_parameters(cfg: ModelConfig) -> int:
    """Parameters reachable in the inference graph of the given variant."""
    model = AcousticModel(cfg)  # uninitialized; only shapes matter
    return sum(m.parameter_count() for _, m in model.inference_modules())


def check_variant(cfg: ModelConfig, expected: str) -> None:
    if cfg.variant != expected:
        raise ConfigError(f"model variant is {cfg.variant!r}, expected {expected!r}")
