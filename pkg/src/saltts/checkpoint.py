"""Checkpoint format: versioned binary parameter table plus an optional
trainer-state section, with the resolved config in a human-readable side-car.

Layout (little-endian):
    magic "SLTC" | u16 version | u16 len(variant) | variant utf8
    u32 n_params | { u16 len(name) | name | u8 ndim | u32*ndim | f64 data }*
    u8 has_trainer_state
    [ u32 len(json) | json | u32 n_moments |
      { u16 len(name) | name | u8 ndim | u32*ndim | f64 m | f64 v }* ]
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig, format_kv, parse_kv
from .errors import CheckpointError, FormatError

CKPT_MAGIC = b"SLTC"
CKPT_VERSION = 1


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def raw(self, b: bytes):
        self.parts.append(b)

    def u8(self, v: int):
        self.raw(struct.pack("<B", v))

    def u16(self, v: int):
        self.raw(struct.pack("<H", v))

    def u32(self, v: int):
        self.raw(struct.pack("<I", v))

    def string(self, s: str):
        b = s.encode("utf-8")
        self.u16(len(b))
        self.raw(b)

    def array(self, a: np.ndarray):
        a = np.ascontiguousarray(a, dtype="<f8")
        self.u8(a.ndim)
        for d in a.shape:
            self.u32(d)
        self.raw(a.tobytes(order="C"))

    def blob(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, blob: bytes, where: str):
        self.blob = blob
        self.off = 0
        self.where = where

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise FormatError(
                f"{self.where}: truncated, needed {n} more bytes", offset=self.off
            )
        out = self.blob[self.off : self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def array(self) -> np.ndarray:
        ndim = self.u8()
        shape = tuple(self.u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(self.take(8 * count), dtype="<f8")
        return data.reshape(shape).astype(np.float64)


def save_checkpoint(
    path: str | Path,
    cfg: ModelConfig,
    state_dict: dict[str, np.ndarray],
    trainer_state: dict | None = None,
) -> None:
    """Write params (+ optional trainer state) and the config side-car."""
    w = _Writer()
    w.raw(CKPT_MAGIC)
    w.u16(CKPT_VERSION)
    w.string(cfg.variant)
    w.u32(len(state_dict))
    for name, value in state_dict.items():
        w.string(name)
        w.array(value)
    if trainer_state is None:
        w.u8(0)
    else:
        w.u8(1)
        meta = {k: v for k, v in trainer_state.items() if k != "moments"}
        meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
        w.u32(len(meta_bytes))
        w.raw(meta_bytes)
        moments = trainer_state["moments"]
        w.u32(len(moments))
        for name, (m, v) in moments.items():
            w.string(name)
            w.array(m)
            w.array(v)
    path = Path(path)
    path.write_bytes(w.blob())
    path.with_suffix(path.suffix + ".cfg").write_text(
        format_kv({"model": cfg.to_mapping()})
    )


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, np.ndarray], dict | None]:
    """Read a checkpoint back; the config comes from the side-car document."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    sidecar = path.with_suffix(path.suffix + ".cfg")
    if not sidecar.exists():
        raise CheckpointError(f"missing config side-car: {sidecar}")
    cfg = ModelConfig.from_mapping(parse_kv(sidecar.read_text())["model"])

    r = _Reader(path.read_bytes(), where=str(path))
    if r.take(4) != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = r.u16()
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    variant = r.string()
    if variant != cfg.variant:
        raise CheckpointError(
            f"{path}: checkpoint variant {variant!r} does not match side-car "
            f"config variant {cfg.variant!r}"
        )
    state = {}
    for _ in range(r.u32()):
        name = r.string()
        state[name] = r.array()
    trainer_state = None
    if r.u8():
        meta = json.loads(r.take(r.u32()).decode("utf-8"))
        moments = {}
        for _ in range(r.u32()):
            name = r.string()
            moments[name] = (r.array(), r.array())
        trainer_state = dict(meta)
        trainer_state["moments"] = moments
    return cfg, state, trainer_state
