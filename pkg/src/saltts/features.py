"""Synthetic corpus generation, SSL-target preparation, and feature file IO.

The corpus is fully determined by its seed: phoneme sequences, durations,
mel targets (per-phoneme template rows plus small noise), pitch/energy
contours (deterministic functions of phoneme id and frame position), and SSL
features generated at the SSL frame rate as a fixed random linear map of the
time-resampled mel plus seeded noise. The linear map guarantees the
reconstruction task is learnable from the mel content.

On-disk layout of a corpus directory:
    manifest.jsonl      header line + one JSON record per utterance
    utts/<id>.uttb      phonemes/durations/pitch/energy/mel blob
    ssl/<id>.sslf       SSL feature matrix in the SSLF binary format
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .align import (
    FS2_SPEC,
    SSL_SPEC,
    FrameSpec,
    apply_repeater,
    build_schedule,
    target_frame_count,
)
from .config import ModelConfig
from .errors import DataError, FormatError

SSLF_MAGIC = b"SSLF"
SSLF_VERSION = 1
_SSLF_HEADER = struct.Struct("<4sHHIIff")  # magic, version, dim, frames, rate, win, hop

UTTB_MAGIC = b"UTTB"
UTTB_VERSION = 1
_UTTB_HEADER = struct.Struct("<4sHHII")  # magic, version, n_mels, n_phonemes, n_frames

MANIFEST_NAME = "manifest.jsonl"


@dataclass
class SSLTarget:
    features: np.ndarray  # [n_frames, ssl_dim]
    frame_spec: FrameSpec


@dataclass
class Utterance:
    id: str
    phoneme_ids: np.ndarray   # [L] int
    durations: np.ndarray     # [L] int, sums to n_frames
    pitch: np.ndarray         # [T] log-F0, 0.0 on unvoiced frames
    energy: np.ndarray        # [T]
    mel: np.ndarray           # [T, n_mels]
    ssl: SSLTarget

    def validate(self) -> None:
        t = self.mel.shape[0]
        if int(self.durations.sum()) != t:
            raise DataError(
                f"{self.id}: durations sum {self.durations.sum()} != mel rows {t}"
            )
        if self.pitch.shape[0] != t or self.energy.shape[0] != t:
            raise DataError(f"{self.id}: pitch/energy length != mel rows")
        if (self.durations < 0).any():
            raise DataError(f"{self.id}: negative durations")
        if not np.isfinite(self.mel).all() or not np.isfinite(self.ssl.features).all():
            raise DataError(f"{self.id}: non-finite feature values")


@dataclass
class CorpusManifest:
    version: int
    seed: int
    coeff_seed: int
    n_mels: int
    ssl_dim: int
    ssl_spec: FrameSpec
    fs2_spec: FrameSpec
    pitch_min: float
    pitch_max: float
    energy_min: float
    energy_max: float
    records: list[dict]

    def header_dict(self) -> dict:
        return {
            "kind": "header",
            "version": self.version,
            "seed": self.seed,
            "coeff_seed": self.coeff_seed,
            "n_mels": self.n_mels,
            "ssl_dim": self.ssl_dim,
            "ssl_spec": [self.ssl_spec.sample_rate, self.ssl_spec.window_ms,
                         self.ssl_spec.hop_ms],
            "fs2_spec": [self.fs2_spec.sample_rate, self.fs2_spec.window_ms,
                         self.fs2_spec.hop_ms],
            "pitch_min": self.pitch_min,
            "pitch_max": self.pitch_max,
            "energy_min": self.energy_min,
            "energy_max": self.energy_max,
        }

    @classmethod
    def from_lines(cls, lines: list[str], where: str) -> "CorpusManifest":
        if not lines:
            raise DataError(f"{where}: empty manifest")
        header = json.loads(lines[0])
        if header.get("kind") != "header":
            raise DataError(f"{where}: first manifest line is not a header")
        records = []
        for i, line in enumerate(lines[1:], start=2):
            rec = json.loads(line)
            if rec.get("kind") != "utterance":
                raise DataError(f"{where}: line {i} is not an utterance record")
            records.append(rec)
        return cls(
            version=header["version"],
            seed=header["seed"],
            coeff_seed=header["coeff_seed"],
            n_mels=header["n_mels"],
            ssl_dim=header["ssl_dim"],
            ssl_spec=FrameSpec(*header["ssl_spec"]),
            fs2_spec=FrameSpec(*header["fs2_spec"]),
            pitch_min=header["pitch_min"],
            pitch_max=header["pitch_max"],
            energy_min=header["energy_min"],
            energy_max=header["energy_max"],
            records=records,
        )


# --------------------------------------------------------------- generation


def _voiced(phoneme_id: int) -> bool:
    return phoneme_id % 5 != 0


def _pitch_value(phoneme_id: int, t: int, vocab: int) -> float:
    if not _voiced(phoneme_id):
        return 0.0
    return 5.0 + 0.4 * np.sin(2.0 * np.pi * phoneme_id / vocab) + 0.3 * np.sin(t / 4.0)


def _energy_value(phoneme_id: int, t: int, vocab: int) -> float:
    return 1.2 + 0.5 * np.cos(2.0 * np.pi * phoneme_id / vocab) + 0.2 * np.sin(t / 3.0)


def ssl_frame_count_for(n_mel_frames: int) -> int:
    """SSL frames covering the same time span as the given mel frames
    (frame-center alignment with the roles swapped)."""
    return target_frame_count(FS2_SPEC, SSL_SPEC, n_mel_frames)


def resample_mel_to_ssl_grid(mel: np.ndarray, n_ssl: int) -> np.ndarray:
    """Nearest-center pick of mel rows on the SSL frame grid."""
    t = mel.shape[0]
    rows = np.empty((n_ssl, mel.shape[1]), dtype=mel.dtype)
    for j in range(n_ssl):
        center = SSL_SPEC.frame_center(j)
        i = int(np.floor((center - FS2_SPEC.window_ms / 2.0) / FS2_SPEC.hop_ms + 0.5))
        rows[j] = mel[min(max(i, 0), t - 1)]
    return rows


def gen_synthetic_corpus(
    n_utts: int,
    cfg: ModelConfig,
    seed: int,
    heldout: int = 0,
) -> tuple[CorpusManifest, list[Utterance]]:
    """Generate a reproducible corpus; the last `heldout` utterances are
    tagged as the held-out split."""
    if n_utts < 1:
        raise ValueError(f"n_utts must be >= 1, got {n_utts}")
    if not 0 <= heldout <= n_utts:
        raise ValueError("heldout must lie in [0, n_utts]")
    templates = np.random.default_rng([seed, 7001]).normal(
        0.0, 1.0, size=(cfg.vocab_size, cfg.n_mels)
    )
    coeff_seed = seed
    mel_to_ssl = np.random.default_rng([coeff_seed, 7002]).normal(
        0.0, 1.0 / np.sqrt(cfg.n_mels), size=(cfg.n_mels, cfg.ssl_dim)
    )

    utterances: list[Utterance] = []
    records: list[dict] = []
    for u in range(n_utts):
        rng = np.random.default_rng([seed, 7100, u])
        length = int(rng.integers(4, 17))
        # id 0 is reserved for padding
        phonemes = rng.integers(1, cfg.vocab_size, size=length)
        durations = rng.integers(1, 7, size=length)
        t_total = int(durations.sum())

        frame_phoneme = np.repeat(phonemes, durations)
        mel = templates[frame_phoneme] + 0.05 * rng.normal(
            size=(t_total, cfg.n_mels)
        )
        pitch = np.array([
            _pitch_value(int(frame_phoneme[t]), t, cfg.vocab_size)
            for t in range(t_total)
        ])
        energy = np.array([
            _energy_value(int(frame_phoneme[t]), t, cfg.vocab_size)
            for t in range(t_total)
        ])

        n_ssl = ssl_frame_count_for(t_total)
        ssl_feats = resample_mel_to_ssl_grid(mel, n_ssl) @ mel_to_ssl
        ssl_feats = ssl_feats + 0.02 * rng.normal(size=ssl_feats.shape)

        utt_id = f"utt{u:04d}"
        utt = Utterance(
            id=utt_id,
            phoneme_ids=phonemes.astype(np.int64),
            durations=durations.astype(np.int64),
            pitch=pitch,
            energy=energy,
            mel=mel,
            ssl=SSLTarget(features=ssl_feats, frame_spec=SSL_SPEC),
        )
        utt.validate()
        utterances.append(utt)
        records.append({
            "kind": "utterance",
            "id": utt_id,
            "utt_path": f"utts/{utt_id}.uttb",
            "ssl_path": f"ssl/{utt_id}.sslf",
            "n_phonemes": length,
            "n_frames": t_total,
            "n_ssl_frames": n_ssl,
            "split": "heldout" if u >= n_utts - heldout else "train",
        })

    manifest = CorpusManifest(
        version=1,
        seed=seed,
        coeff_seed=coeff_seed,
        n_mels=cfg.n_mels,
        ssl_dim=cfg.ssl_dim,
        ssl_spec=SSL_SPEC,
        fs2_spec=FS2_SPEC,
        pitch_min=cfg.pitch_min,
        pitch_max=cfg.pitch_max,
        energy_min=cfg.energy_min,
        energy_max=cfg.energy_max,
        records=records,
    )
    return manifest, utterances


# ------------------------------------------------------------ SSL targets


def average_layers(layer_stack: np.ndarray, layers: list[int]) -> np.ndarray:
    """Arithmetic mean over the selected layers (1-based indices; layer 0,
    the convolutional front-end output, is excluded from the numbering)."""
    stack = np.asarray(layer_stack)
    if stack.ndim != 3:
        raise ValueError(f"layer stack must be [n_layers, n_frames, dim], got {stack.shape}")
    if not layers:
        raise ValueError("need at least one layer index")
    n_layers = stack.shape[0]
    for l in layers:
        if not 1 <= l <= n_layers:
            raise ValueError(f"layer index {l} out of range [1, {n_layers}]")
    picked = stack[[l - 1 for l in layers]]
    return picked.mean(axis=0)


def repeater_seed(base_seed: int, utt_id: str) -> int:
    """Stable per-utterance seed for the repeater noise stream."""
    return (base_seed * 1_000_003 + zlib.crc32(utt_id.encode("utf-8"))) % (2**63)


def prepare_ssl_target(utt: Utterance, cfg: ModelConfig, seed: int) -> np.ndarray:
    """Repeater-align the utterance's SSL features to its mel frame grid.

    Builds the repetition schedule for the SSL frame count, applies it with
    the configured noise, then clamps (truncate / pad-by-last) to exactly the
    mel length. A discrepancy beyond 10% of the mel length signals corrupt
    features.
    """
    n_ssl = utt.ssl.features.shape[0]
    t_mel = utt.mel.shape[0]
    schedule = build_schedule(n_ssl, utt.ssl.frame_spec, FS2_SPEC)
    aligned = apply_repeater(
        utt.ssl.features, schedule, noise_sigma=cfg.noise_sigma,
        rng_seed=repeater_seed(seed, utt.id),
    )
    gap = abs(aligned.shape[0] - t_mel)
    if gap > max(1, int(0.10 * t_mel)):
        raise DataError(
            f"{utt.id}: repeater output {aligned.shape[0]} frames vs mel "
            f"{t_mel}; features look corrupt"
        )
    if aligned.shape[0] > t_mel:
        aligned = aligned[:t_mel]
    elif aligned.shape[0] < t_mel:
        pad = np.repeat(aligned[-1:], t_mel - aligned.shape[0], axis=0)
        aligned = np.concatenate([aligned, pad], axis=0)
    return aligned


# ------------------------------------------------------------------ SSLF IO


def write_ssl_features(path: str | Path, target: SSLTarget) -> None:
    feats = np.ascontiguousarray(target.features, dtype="<f4")
    n_frames, dim = feats.shape
    spec = target.frame_spec
    header = _SSLF_HEADER.pack(
        SSLF_MAGIC, SSLF_VERSION, dim, n_frames,
        spec.sample_rate, spec.window_ms, spec.hop_ms,
    )
    Path(path).write_bytes(header + feats.tobytes(order="C"))


def load_ssl_features(path: str | Path, expect_dim: int | None = None) -> SSLTarget:
    """Parse an SSLF file; failures report the offending byte offset."""
    blob = Path(path).read_bytes()
    if len(blob) < _SSLF_HEADER.size:
        raise FormatError(
            f"{path}: truncated header, missing "
            f"{_SSLF_HEADER.size - len(blob)} bytes",
            offset=len(blob),
        )
    magic, version, dim, n_frames, rate, win, hop = _SSLF_HEADER.unpack_from(blob, 0)
    if magic != SSLF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", offset=0)
    if version != SSLF_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    if dim == 0:
        raise FormatError(f"{path}: zero feature dimension", offset=6)
    if expect_dim is not None and dim != expect_dim:
        raise FormatError(
            f"{path}: feature dim {dim} != expected {expect_dim}", offset=6
        )
    expected = _SSLF_HEADER.size + 4 * n_frames * dim
    if len(blob) != expected:
        missing = expected - len(blob)
        if missing > 0:
            raise FormatError(
                f"{path}: truncated payload, missing {missing} bytes",
                offset=len(blob),
            )
        raise FormatError(
            f"{path}: {-missing} trailing bytes beyond declared payload",
            offset=expected,
        )
    feats = np.frombuffer(
        blob, dtype="<f4", count=n_frames * dim, offset=_SSLF_HEADER.size
    ).reshape(n_frames, dim).astype(np.float64)
    return SSLTarget(
        features=feats,
        frame_spec=FrameSpec(sample_rate=rate, window_ms=float(np.float32(win)),
                             hop_ms=float(np.float32(hop))),
    )


# ------------------------------------------------------------------ UTTB IO


def write_utterance_blob(path: str | Path, utt: Utterance) -> None:
    t, n_mels = utt.mel.shape
    header = _UTTB_HEADER.pack(
        UTTB_MAGIC, UTTB_VERSION, n_mels, len(utt.phoneme_ids), t
    )
    parts = [
        header,
        np.ascontiguousarray(utt.phoneme_ids, dtype="<i4").tobytes(),
        np.ascontiguousarray(utt.durations, dtype="<i4").tobytes(),
        np.ascontiguousarray(utt.pitch, dtype="<f4").tobytes(),
        np.ascontiguousarray(utt.energy, dtype="<f4").tobytes(),
        np.ascontiguousarray(utt.mel, dtype="<f4").tobytes(order="C"),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_utterance_blob(path: str | Path, utt_id: str, ssl: SSLTarget) -> Utterance:
    blob = Path(path).read_bytes()
    if len(blob) < _UTTB_HEADER.size:
        raise FormatError(f"{path}: truncated header", offset=len(blob))
    magic, version, n_mels, n_phon, t = _UTTB_HEADER.unpack_from(blob, 0)
    if magic != UTTB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", offset=0)
    if version != UTTB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    need = _UTTB_HEADER.size + 4 * (n_phon * 2 + t * 2 + t * n_mels)
    if len(blob) != need:
        raise FormatError(
            f"{path}: payload size {len(blob)} != expected {need}",
            offset=min(len(blob), need),
        )
    off = _UTTB_HEADER.size
    phonemes = np.frombuffer(blob, dtype="<i4", count=n_phon, offset=off)
    off += 4 * n_phon
    durations = np.frombuffer(blob, dtype="<i4", count=n_phon, offset=off)
    off += 4 * n_phon
    pitch = np.frombuffer(blob, dtype="<f4", count=t, offset=off)
    off += 4 * t
    energy = np.frombuffer(blob, dtype="<f4", count=t, offset=off)
    off += 4 * t
    mel = np.frombuffer(blob, dtype="<f4", count=t * n_mels, offset=off)
    return Utterance(
        id=utt_id,
        phoneme_ids=phonemes.astype(np.int64),
        durations=durations.astype(np.int64),
        pitch=pitch.astype(np.float64),
        energy=energy.astype(np.float64),
        mel=mel.astype(np.float64).reshape(t, n_mels),
        ssl=ssl,
    )


# ------------------------------------------------------------ corpus on disk


def save_corpus(out_dir: str | Path, manifest: CorpusManifest,
                utterances: list[Utterance]) -> None:
    out = Path(out_dir)
    (out / "utts").mkdir(parents=True, exist_ok=True)
    (out / "ssl").mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(manifest.header_dict(), sort_keys=True)]
    for rec, utt in zip(manifest.records, utterances):
        write_utterance_blob(out / rec["utt_path"], utt)
        write_ssl_features(out / rec["ssl_path"], utt.ssl)
        lines.append(json.dumps(rec, sort_keys=True))
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n")


def load_manifest(corpus_dir: str | Path) -> CorpusManifest:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"missing manifest: {path}")
    lines = [l for l in path.read_text().splitlines() if l.strip()]
    return CorpusManifest.from_lines(lines, where=str(path))


def load_corpus(corpus_dir: str | Path, split: str = "all") -> tuple[CorpusManifest, list[Utterance]]:
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    utterances = []
    for rec in manifest.records:
        if split != "all" and rec["split"] != split:
            continue
        ssl = load_ssl_features(corpus_dir / rec["ssl_path"],
                                expect_dim=manifest.ssl_dim)
        utt = read_utterance_blob(corpus_dir / rec["utt_path"], rec["id"], ssl)
        utterances.append(utt)
    return manifest, utterances


def validate_corpus(corpus_dir: str | Path) -> int:
    """Check every referenced file exists, parses, and is dimensionally
    consistent. Returns the number of validated utterances."""
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    for rec in manifest.records:
        for key in ("utt_path", "ssl_path"):
            if not (corpus_dir / rec[key]).exists():
                raise DataError(f"{rec['id']}: missing file {rec[key]}")
        try:
            ssl = load_ssl_features(corpus_dir / rec["ssl_path"],
                                    expect_dim=manifest.ssl_dim)
            utt = read_utterance_blob(corpus_dir / rec["utt_path"], rec["id"], ssl)
        except FormatError as exc:
            raise DataError(f"{rec['id']}: {exc}") from exc
        utt.validate()
        if utt.mel.shape[1] != manifest.n_mels:
            raise DataError(
                f"{rec['id']}: mel dim {utt.mel.shape[1]} != manifest "
                f"{manifest.n_mels}"
            )
        if utt.mel.shape[0] != rec["n_frames"]:
            raise DataError(f"{rec['id']}: frame count mismatch vs manifest")
        if ssl.features.shape[0] != rec["n_ssl_frames"]:
            raise DataError(f"{rec['id']}: SSL frame count mismatch vs manifest")
    return len(manifest.records)
