"""Deterministic training loop: adaptive-moment updates with warmup/decay,
length-bucketed batching, metrics logging, checkpointing, and exact resume."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .errors import CheckpointError, NumericError
from .features import Utterance, prepare_ssl_target
from .model import AcousticModel, Batch, LossBreakdown, build_model
from .nncore.modules import Dropout
from .nncore.tensor import Parameter

METRICS_HEADER = "step,total,mel,duration,pitch,energy,aux,lr"


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 2
    base_lr: float = 1e-3
    warmup_steps: int = 4000
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    log_interval: int = 10
    ckpt_interval: int = 0  # 0 = final checkpoint only

    def to_mapping(self) -> dict[str, str]:
        return {f.name: str(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "TrainConfig":
        from .config import _coerce

        known = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                from .errors import ConfigError

                raise ConfigError(f"unknown train config key {key!r}")
            kwargs[key] = _coerce(key, raw, known[key])
        return cls(**kwargs)


def learning_rate(step: int, base_lr: float, warmup: int) -> float:
    """Linear ramp to base_lr over `warmup` steps, then inverse-sqrt decay."""
    step = max(1, step)
    return float(base_lr * min(step / warmup, np.sqrt(warmup / step)))


class Adam:
    """Adaptive-moment estimation over named parameters."""

    def __init__(self, params: list[Parameter], cfg: TrainConfig):
        self.cfg = cfg
        self.params = params
        self.step_count = 0
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {
            p.name: (np.zeros_like(p.data), np.zeros_like(p.data)) for p in params
        }

    def step(self, lr: float) -> None:
        self.step_count += 1
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.eps
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            m, v = self.moments[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


def assemble_batch(
    utts: list[Utterance],
    aligned_ssl: list[np.ndarray],
    n_mels: int,
    ssl_dim: int,
) -> Batch:
    """Pad a group of utterances to the batch maxima (id 0 pads phonemes)."""
    b = len(utts)
    l_max = max(len(u.phoneme_ids) for u in utts)
    t_max = max(u.mel.shape[0] for u in utts)
    ids = np.zeros((b, l_max), dtype=np.int64)
    phoneme_mask = np.zeros((b, l_max))
    durations = np.zeros((b, l_max), dtype=np.int64)
    pitch = np.zeros((b, t_max))
    energy = np.zeros((b, t_max))
    mel = np.zeros((b, t_max, n_mels))
    frame_mask = np.zeros((b, t_max))
    ssl = np.zeros((b, t_max, ssl_dim))
    for i, (utt, utt_ssl) in enumerate(zip(utts, aligned_ssl)):
        l, t = len(utt.phoneme_ids), utt.mel.shape[0]
        ids[i, :l] = utt.phoneme_ids
        phoneme_mask[i, :l] = 1.0
        durations[i, :l] = utt.durations
        pitch[i, :t] = utt.pitch
        energy[i, :t] = utt.energy
        mel[i, :t] = utt.mel
        frame_mask[i, :t] = 1.0
        ssl[i, :t] = utt_ssl
    return Batch(
        phoneme_ids=ids, phoneme_mask=phoneme_mask, durations=durations,
        pitch=pitch, energy=energy, mel=mel, frame_mask=frame_mask, ssl=ssl,
    )


def train_step(model: AcousticModel, batch: Batch, optimizer: Adam,
               lr: float) -> LossBreakdown:
    """One forward/backward/update; gradients are zeroed afterwards."""
    try:
        result = model.forward(batch, train=True)
    except NumericError as exc:
        raise NumericError(f"non-finite values during forward: {exc}") from exc
    breakdown = result.breakdown
    if not np.isfinite(breakdown.total):
        raise NumericError(
            "non-finite loss; terms: "
            + ", ".join(f"{k}={getattr(breakdown, k)}" for k in
                        ("mel", "duration", "pitch", "energy", "aux"))
        )
    model.zero_grad()
    result.total.backward()
    optimizer.step(lr)
    model.zero_grad()
    return breakdown


class Trainer:
    """Owns the model, optimizer, batch order stream, and metrics log."""

    def __init__(self, cfg: ModelConfig, train_cfg: TrainConfig,
                 utterances: list[Utterance]):
        if not utterances:
            raise ValueError("cannot train on an empty utterance list")
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.model = build_model(cfg)
        self.optimizer = Adam(self.model.parameters(), train_cfg)
        self.data_rng = np.random.default_rng([cfg.seed, 9001])
        self.step = 0
        # Repeater-aligned SSL targets are deterministic per utterance; do the
        # alignment once.
        self.utterances = sorted(utterances, key=lambda u: u.mel.shape[0])
        self.aligned_ssl = [
            prepare_ssl_target(u, cfg, seed=cfg.seed) for u in self.utterances
        ]
        self.batches = self._build_batches()

    def _build_batches(self) -> list[Batch]:
        size = self.train_cfg.batch_size
        batches = []
        for start in range(0, len(self.utterances), size):
            group = self.utterances[start : start + size]
            ssl = self.aligned_ssl[start : start + size]
            batches.append(assemble_batch(group, ssl, self.cfg.n_mels,
                                          self.cfg.ssl_dim))
        return batches

    def _next_batch(self) -> Batch:
        pick = int(self.data_rng.integers(len(self.batches)))
        return self.batches[pick]

    def run(self, out_dir: str | Path, steps: int | None = None,
            resume_from: str | Path | None = None) -> Path:
        """Train for `steps`, writing metrics.csv and checkpoints under
        out_dir. Returns the final checkpoint path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tc = self.train_cfg
        total_steps = steps if steps is not None else tc.steps
        if resume_from is not None:
            self.load_trainer_checkpoint(resume_from)
        metrics_path = out / "metrics.csv"
        mode = "a" if (resume_from is not None and metrics_path.exists()) else "w"
        with open(metrics_path, mode) as metrics:
            if mode == "w":
                metrics.write(METRICS_HEADER + "\n")
            while self.step < total_steps:
                self.step += 1
                lr = learning_rate(self.step, tc.base_lr, tc.warmup_steps)
                breakdown = train_step(self.model, self._next_batch(),
                                       self.optimizer, lr)
                if self.step % tc.log_interval == 0 or self.step == total_steps:
                    row = [str(self.step)] + [
                        repr(v) for v in breakdown.as_row()
                    ] + [repr(lr)]
                    metrics.write(",".join(row) + "\n")
                if tc.ckpt_interval and self.step % tc.ckpt_interval == 0:
                    self.save_trainer_checkpoint(out / f"step{self.step:06d}.ckpt")
        final = out / "final.ckpt"
        self.save_trainer_checkpoint(final)
        return final

    # ------------------------------------------------------------- state

    def _dropout_sites(self) -> dict[str, Dropout]:
        return {
            name: m for name, m in self.model.named_modules()
            if isinstance(m, Dropout)
        }

    def save_trainer_checkpoint(self, path: str | Path) -> None:
        state = {
            "step": self.step,
            "adam_step": self.optimizer.step_count,
            "data_rng": self.data_rng.bit_generator.state,
            "dropout_rng": {
                name: site.rng_state()
                for name, site in self._dropout_sites().items()
                if site.rng_state() is not None
            },
            "moments": self.optimizer.moments,
        }
        save_checkpoint(path, self.cfg, self.model.state_dict(), state)

    def load_trainer_checkpoint(self, path: str | Path) -> None:
        cfg, params, trainer_state = load_checkpoint(path)
        if cfg != self.cfg:
            raise CheckpointError(
                "checkpoint config does not match trainer config"
            )
        if trainer_state is None:
            raise CheckpointError(f"{path} has no trainer state; cannot resume")
        self.model.load_state_dict(params)
        self.step = int(trainer_state["step"])
        self.optimizer.step_count = int(trainer_state["adam_step"])
        for name, (m, v) in trainer_state["moments"].items():
            self.optimizer.moments[name] = (m, v)
        self.data_rng.bit_generator.state = trainer_state["data_rng"]
        sites = self._dropout_sites()
        for name, rng_state in trainer_state["dropout_rng"].items():
            sites[name].set_rng_state(rng_state)


def fit(cfg: ModelConfig, train_cfg: TrainConfig, utterances: list[Utterance],
        out_dir: str | Path, resume_from: str | Path | None = None) -> Path:
    """Convenience wrapper: build a trainer and run it to completion."""
    trainer = Trainer(cfg, train_cfg, utterances)
    return trainer.run(out_dir, resume_from=resume_from)


def load_model(path: str | Path) -> AcousticModel:
    """Rebuild a model from a checkpoint for inference or evaluation."""
    cfg, params, _ = load_checkpoint(path)
    model = build_model(cfg)
    model.load_state_dict(params)
    return model


def synthesize(checkpoint_path: str | Path, phoneme_ids) -> np.ndarray:
    """Inference from a stored checkpoint; deterministic."""
    model = load_model(checkpoint_path)
    return model.synthesize(np.asarray(phoneme_ids, dtype=np.int64))
