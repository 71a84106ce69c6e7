"""Layer modules over the functional ops, with name-keyed deterministic init.

Every parameter is initialized from a generator seeded by (seed, crc32(path)),
so two models that share a submodule by name get bit-identical weights for it
regardless of what else either model contains. Dropout draws come from
per-site generators keyed the same way, so adding a branch to a model never
shifts the noise seen by unrelated sites.
"""

from __future__ import annotations

import zlib
from typing import Iterator

import numpy as np

from ..errors import ConfigError, DimensionError
from . import ops
from .tensor import Parameter, Tensor

NEG_MASK = -1.0e30  # additive score for padded keys; exp() underflows to 0


def _name_rng(seed: int, path: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(path.encode("utf-8"))])


class Module:
    """Minimal container: tracks Parameters and child Modules by attribute."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for k, p in self._params.items():
            yield (f"{prefix}{k}", p)
        for k, child in self._children.items():
            yield from child.named_parameters(prefix=f"{prefix}{k}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield (prefix.rstrip("."), self)
        for k, child in self._children.items():
            yield from child.named_modules(prefix=f"{prefix}{k}.")

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def initialize(self, seed: int) -> None:
        """Fill every parameter deterministically from (seed, its path)."""
        for path, p in self.named_parameters():
            p.name = path
            rng = _name_rng(seed, path)
            if p.init_kind == "zeros":
                p.data[...] = 0.0
            elif p.init_kind == "ones":
                p.data[...] = 1.0
            elif p.init_kind == "xavier":
                fan_in, fan_out = _fans(p.data.shape)
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                p.data[...] = rng.uniform(-bound, bound, size=p.data.shape)
            elif p.init_kind == "embed":
                p.data[...] = rng.normal(
                    0.0, p.data.shape[-1] ** -0.5, size=p.data.shape
                )
            else:
                raise ConfigError(f"unknown init kind {p.init_kind!r} on {path}")
        for path, m in self.named_modules():
            if isinstance(m, Dropout):
                m.bind(seed, path)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise DimensionError(
                f"state dict mismatch: missing={missing}, unexpected={extra}"
            )
        for name, p in own.items():
            if state[name].shape != p.data.shape:
                raise DimensionError(
                    f"{name}: shape {state[name].shape} != {p.data.shape}"
                )
            p.data[...] = state[name]


def _fans(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[0], shape[1]
    # conv kernels [k, Din, Dout]
    receptive = int(np.prod(shape[:-2]))
    return shape[-2] * receptive, shape[-1] * receptive


class Affine(Module):
    def __init__(self, din: int, dout: int):
        super().__init__()
        self.w = Parameter(np.zeros((din, dout)), init_kind="xavier")
        self.b = Parameter(np.zeros(dout), init_kind="zeros")

    def __call__(self, x) -> Tensor:
        return ops.affine(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(dim), init_kind="ones")
        self.beta = Parameter(np.zeros(dim), init_kind="zeros")
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, vocab: int, dim: int):
        super().__init__()
        self.table = Parameter(np.zeros((vocab, dim)), init_kind="embed")

    def __call__(self, ids: np.ndarray) -> Tensor:
        return ops.embedding_lookup(ids, self.table)


class Dropout(Module):
    """Seed-controlled inverted dropout. `bind` assigns the site stream."""

    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng: np.random.Generator | None = None

    def bind(self, seed: int, site: str) -> None:
        self.rng = _name_rng(seed, f"dropout:{site}")

    def __call__(self, x, train: bool) -> Tensor:
        if not train or self.p == 0.0:
            return x if isinstance(x, Tensor) else Tensor(x)
        if self.rng is None:
            raise ConfigError("dropout used before initialize() bound its stream")
        return ops.dropout(x, self.p, self.rng, train)

    def rng_state(self) -> dict | None:
        return None if self.rng is None else self.rng.bit_generator.state

    def set_rng_state(self, state: dict) -> None:
        if self.rng is None:
            raise ConfigError("cannot restore rng state before bind()")
        self.rng.bit_generator.state = state


class MultiHeadSelfAttention(Module):
    """Standard scaled dot-product self-attention with key-side padding mask."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Affine(dim, dim)
        self.wk = Affine(dim, dim)
        self.wv = Affine(dim, dim)
        self.wo = Affine(dim, dim)

    def __call__(self, x, mask: np.ndarray | None = None) -> Tensor:
        """x: [B, L, D]; mask: [B, L] with 1 on valid positions."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        b, l, d = x.shape
        if d != self.dim:
            raise DimensionError(f"attention built for dim {self.dim}, got {d}")
        q = self._split(self.wq(x), b, l)
        k = self._split(self.wk(x), b, l)
        v = self._split(self.wv(x), b, l)
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))),
                            1.0 / np.sqrt(self.head_dim))
        if mask is not None:
            bias = (1.0 - np.asarray(mask, dtype=np.float64)) * NEG_MASK
            scores = ops.add_const(scores, bias[:, None, None, :])
        attn = ops.softmax(scores, axis=-1)
        ctx = ops.matmul(attn, v)  # [B, h, L, hd]
        merged = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (b, l, d))
        return self.wo(merged)

    def _split(self, t: Tensor, b: int, l: int) -> Tensor:
        return ops.transpose(
            ops.reshape(t, (b, l, self.heads, self.head_dim)), (0, 2, 1, 3)
        )


class Conv1dSeq(Module):
    def __init__(self, din: int, dout: int, kernel: int):
        super().__init__()
        if kernel % 2 == 0:
            raise ConfigError(f"conv kernel width must be odd, got {kernel}")
        self.kernel = Parameter(np.zeros((kernel, din, dout)), init_kind="xavier")
        self.bias = Parameter(np.zeros(dout), init_kind="zeros")

    def __call__(self, x) -> Tensor:
        return ops.conv1d_seq(x, self.kernel, self.bias)


class ModuleList(Module):
    def __init__(self, items: list[Module]):
        super().__init__()
        for i, m in enumerate(items):
            setattr(self, str(i), m)
        self.items = items

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)
