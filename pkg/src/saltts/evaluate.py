"""Objective metrics (mel-cepstral distortion, log-F0 RMSE) and report
generation over a corpus split.

MCD here is defined over the DCT-II (orthonormal) of log-domain mel rows,
keeping cepstral coefficients 1..13 and dropping the DC term, scaled by the
conventional 10*sqrt(2)/ln(10). Lengths always match because evaluation
synthesis is teacher-forced on ground-truth durations; no time warping is
applied. Log-F0 RMSE is computed over frames voiced in both contours
(unvoiced sentinel 0); with no common voiced frames the value is absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from . import nncore
from .config import ModelConfig
from .errors import DimensionError
from .features import Utterance, prepare_ssl_target
from .model import AcousticModel
from .train import assemble_batch

MCD_SCALE = 10.0 * math.sqrt(2.0) / math.log(10.0)
DEFAULT_N_COEFFS = 13


def mcd(mel_ref: np.ndarray, mel_syn: np.ndarray,
        n_coeffs: int = DEFAULT_N_COEFFS) -> float:
    """Mean per-frame cepstral distance between two log-mel matrices."""
    mel_ref = np.asarray(mel_ref, dtype=np.float64)
    mel_syn = np.asarray(mel_syn, dtype=np.float64)
    if mel_ref.shape != mel_syn.shape:
        raise DimensionError(
            f"mel shapes differ: {mel_ref.shape} vs {mel_syn.shape}"
        )
    if mel_ref.ndim != 2:
        raise DimensionError(f"expected [T, n_mels], got {mel_ref.shape}")
    if mel_ref.shape[0] == 0:
        return 0.0
    if n_coeffs < 1 or n_coeffs > mel_ref.shape[1] - 1:
        raise ValueError(
            f"n_coeffs must lie in [1, n_mels-1], got {n_coeffs} for "
            f"{mel_ref.shape[1]} mels"
        )
    c_ref = scipy.fft.dct(mel_ref, type=2, norm="ortho", axis=1)
    c_syn = scipy.fft.dct(mel_syn, type=2, norm="ortho", axis=1)
    diff = c_ref[:, 1 : n_coeffs + 1] - c_syn[:, 1 : n_coeffs + 1]
    return float(MCD_SCALE * np.mean(np.sqrt((diff * diff).sum(axis=1))))


def log_f0_rmse(f0_ref: np.ndarray, f0_syn: np.ndarray) -> float | None:
    """RMSE over frames voiced (> 0) in both log-F0 contours; None when the
    contours share no voiced frames."""
    f0_ref = np.asarray(f0_ref, dtype=np.float64)
    f0_syn = np.asarray(f0_syn, dtype=np.float64)
    if f0_ref.shape != f0_syn.shape or f0_ref.ndim != 1:
        raise DimensionError(
            f"contour shapes differ: {f0_ref.shape} vs {f0_syn.shape}"
        )
    voiced = (f0_ref > 0) & (f0_syn > 0)
    if not voiced.any():
        return None
    diff = f0_ref[voiced] - f0_syn[voiced]
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class EvalReport:
    rows: list[dict]  # id, mcd, log_f0_rmse (None when absent)
    mcd_mean: float
    mcd_std: float
    f0_rmse_mean: float | None
    f0_rmse_std: float | None
    utterance_count: int

    @classmethod
    def from_rows(cls, rows: list[dict]) -> "EvalReport":
        if not rows:
            raise ValueError("cannot build a report from zero utterances")
        mcds = np.array([r["mcd"] for r in rows])
        f0s = np.array([r["log_f0_rmse"] for r in rows
                        if r["log_f0_rmse"] is not None])
        return cls(
            rows=rows,
            mcd_mean=float(mcds.mean()),
            mcd_std=float(mcds.std()),
            f0_rmse_mean=float(f0s.mean()) if f0s.size else None,
            f0_rmse_std=float(f0s.std()) if f0s.size else None,
            utterance_count=len(rows),
        )

    def to_csv(self) -> str:
        lines = ["id,mcd,log_f0_rmse"]
        for r in self.rows:
            f0 = "" if r["log_f0_rmse"] is None else repr(r["log_f0_rmse"])
            lines.append(f"{r['id']},{r['mcd']!r},{f0}")
        return "\n".join(lines) + "\n"

    def summary_text(self, label: str = "model") -> str:
        f0 = ("-" if self.f0_rmse_mean is None
              else f"{self.f0_rmse_mean:.4f} ± {self.f0_rmse_std:.4f}")
        header = f"{'Model':<24}{'MCD':>20}{'F0 RMSE':>20}"
        row = (f"{label:<24}"
               f"{f'{self.mcd_mean:.4f} ± {self.mcd_std:.4f}':>20}"
               f"{f0:>20}")
        count = f"utterances: {self.utterance_count}"
        return "\n".join([header, "-" * len(header), row, count]) + "\n"


def evaluate(model: AcousticModel, utterances: list[Utterance],
             cfg: ModelConfig) -> EvalReport:
    """Teacher-forced synthesis per utterance, metrics against the corpus
    targets. Evaluation is deterministic (dropout off)."""
    if not utterances:
        raise ValueError("empty evaluation split")
    rows = []
    for utt in utterances:
        aligned = prepare_ssl_target(utt, cfg, seed=cfg.seed)
        batch = assemble_batch([utt], [aligned], cfg.n_mels, cfg.ssl_dim)
        with nncore.no_grad():
            result = model.forward(batch, train=True, stochastic=False)
        mel_pred = result.mel.data[0]
        pitch_pred = result.extras["adapter"].pitch_pred.data[0]
        rows.append({
            "id": utt.id,
            "mcd": mcd(utt.mel, mel_pred),
            "log_f0_rmse": log_f0_rmse(utt.pitch, pitch_pred),
        })
    return EvalReport.from_rows(rows)


def write_report(report: EvalReport, out_dir: str | Path,
                 label: str = "model") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    (out / "summary.txt").write_text(report.summary_text(label))


def write_ppm_spectrogram(mel: np.ndarray, path: str | Path) -> None:
    """Dump a mel matrix as a binary portable pixmap (P6), frames on the
    x-axis, low bins at the bottom."""
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2 or mel.size == 0:
        raise DimensionError(f"expected a non-empty [T, n_mels] matrix, got {mel.shape}")
    lo, hi = mel.min(), mel.max()
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    gray = ((mel - lo) * scale).astype(np.uint8)
    img = np.flipud(gray.T)  # [n_mels, T], first row = highest bin
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + rgb.tobytes())
