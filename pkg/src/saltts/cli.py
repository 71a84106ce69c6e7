"""Operator surface: one binary, subcommands for every pipeline stage.

Exit codes: 0 success, 2 configuration/usage error, 3 data/format error,
4 numeric abort. The SALTTS_SEED environment variable overrides the config
seed; an explicit --seed flag overrides both. Every command that writes
artifacts archives its fully resolved configuration into the output
directory, so a run is reproducible from that directory alone.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .align import FS2_SPEC, SSL_SPEC, FrameSpec, build_schedule
from .checkpoint import load_checkpoint
from .config import ModelConfig, format_kv, parse_kv
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    FormatError,
    NumericError,
)
from .evaluate import evaluate, write_ppm_spectrogram, write_report
from .features import gen_synthetic_corpus, load_corpus, save_corpus, validate_corpus
from .model import build_model
from .train import TrainConfig, Trainer, load_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def load_run_config(path: str | None) -> tuple[ModelConfig, TrainConfig]:
    """Read [model] and [train] sections; absent sections use defaults."""
    if path is None:
        return ModelConfig(), TrainConfig()
    text = Path(path).read_text()
    sections = parse_kv(text)
    model_cfg = ModelConfig.from_mapping(sections.get("model", {}))
    train_cfg = TrainConfig.from_mapping(sections.get("train", {}))
    return model_cfg, train_cfg


def resolve_seed(flag_seed: int | None, cfg_seed: int) -> int:
    """Priority: --seed flag, then SALTTS_SEED, then the config value."""
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("SALTTS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SALTTS_SEED must be an integer, got {env!r}") from exc
    return cfg_seed


def archive_config(out_dir: Path, model_cfg: ModelConfig,
                   train_cfg: TrainConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.cfg").write_text(format_kv({
        "model": model_cfg.to_mapping(),
        "train": train_cfg.to_mapping(),
    }))


# ------------------------------------------------------------- subcommands


def cmd_gen_corpus(args) -> int:
    model_cfg, train_cfg = load_run_config(args.config)
    seed = resolve_seed(args.seed, model_cfg.seed)
    model_cfg = model_cfg.replace(seed=seed)
    manifest, utts = gen_synthetic_corpus(args.n, model_cfg, seed,
                                          heldout=args.heldout)
    out = Path(args.out)
    save_corpus(out, manifest, utts)
    archive_config(out, model_cfg, train_cfg)
    print(f"wrote {len(utts)} utterances to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    count = validate_corpus(args.corpus)
    print(f"ok: {count} utterances validated")
    return EXIT_OK


def cmd_train(args) -> int:
    model_cfg, train_cfg = load_run_config(args.config)
    if args.variant is not None:
        model_cfg = model_cfg.replace(variant=args.variant)
    model_cfg = model_cfg.replace(seed=resolve_seed(args.seed, model_cfg.seed))
    if args.steps is not None:
        train_cfg.steps = args.steps
    manifest, utts = load_corpus(args.corpus, split="train")
    if manifest.n_mels != model_cfg.n_mels or manifest.ssl_dim != model_cfg.ssl_dim:
        raise ConfigError(
            f"corpus dims (n_mels={manifest.n_mels}, ssl_dim={manifest.ssl_dim}) "
            f"do not match config (n_mels={model_cfg.n_mels}, "
            f"ssl_dim={model_cfg.ssl_dim})"
        )
    out = Path(args.out)
    archive_config(out, model_cfg, train_cfg)
    trainer = Trainer(model_cfg, train_cfg, utts)
    final = trainer.run(out, resume_from=args.resume)
    print(f"final checkpoint: {final}")
    return EXIT_OK


def cmd_synth(args) -> int:
    ids = [int(tok) for tok in args.phonemes.replace(",", " ").split()]
    model = load_model(args.ckpt)
    mel = model.synthesize(np.asarray(ids, dtype=np.int64))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.save(out, mel)
    if args.ppm is not None and mel.size:
        write_ppm_spectrogram(mel, args.ppm)
    print(f"mel shape {mel.shape} -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, _, _ = load_checkpoint(args.ckpt)
    model = load_model(args.ckpt)
    manifest, utts = load_corpus(args.corpus, split=args.split)
    if not utts:
        raise DataError(f"no utterances in split {args.split!r}")
    report = evaluate(model, utts, cfg)
    out = Path(args.out)
    write_report(report, out, label=cfg.variant)
    archive_config(out, cfg, TrainConfig())
    if args.dump_spectrograms:
        for utt in utts:
            mel = model.synthesize(utt.phoneme_ids)
            if mel.size:
                write_ppm_spectrogram(mel, out / f"{utt.id}.ppm")
    print(report.summary_text(label=cfg.variant))
    return EXIT_OK


def cmd_align_check(args) -> int:
    src = FrameSpec(args.src_rate, args.src_window, args.src_hop)
    dst = FrameSpec(args.dst_rate, args.dst_window, args.dst_hop)
    schedule = build_schedule(args.n_src, src, dst)
    print("dst_index,src_index,add_noise")
    for t, entry in enumerate(schedule.entries):
        print(f"{t},{entry.src_index},{int(entry.add_noise)}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saltts",
        description="Acoustic-model pipeline: corpus generation, training, "
                    "synthesis, evaluation, alignment inspection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True, help="number of utterances")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value config document")
    p.add_argument("--heldout", type=int, default=0,
                   help="tag the last N utterances as the held-out split")
    p.set_defaults(fn=cmd_gen_corpus)

    p = sub.add_parser("validate", help="validate a corpus directory")
    p.add_argument("--corpus", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", default=None)
    p.add_argument("--variant", choices=("baseline", "parallel", "cascade"),
                   default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("synth", help="synthesize mel from phoneme ids")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--phonemes", required=True,
                   help="space- or comma-separated phoneme ids")
    p.add_argument("--out", required=True, help="output .npy path")
    p.add_argument("--ppm", default=None, help="optional spectrogram image path")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--split", choices=("all", "train", "heldout"), default="all")
    p.add_argument("--dump-spectrograms", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("align-check", help="print a repeater schedule as CSV")
    p.add_argument("--n-src", type=int, required=True)
    p.add_argument("--src-rate", type=int, default=SSL_SPEC.sample_rate)
    p.add_argument("--src-window", type=float, default=SSL_SPEC.window_ms)
    p.add_argument("--src-hop", type=float, default=SSL_SPEC.hop_ms)
    p.add_argument("--dst-rate", type=int, default=FS2_SPEC.sample_rate)
    p.add_argument("--dst-window", type=float, default=FS2_SPEC.window_ms)
    p.add_argument("--dst-hop", type=float, default=FS2_SPEC.hop_ms)
    p.set_defaults(fn=cmd_align_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
