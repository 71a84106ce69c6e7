"""Differentiable ops: the minimum closure needed by feed-forward
transformer stacks (affine, layer norm, attention pieces, 1-D conv,
embedding/gather, activations, reductions)."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tensor import Parameter, Tensor, make_result


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return make_result(out, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(-_unbroadcast(g, b.shape))

    return make_result(out, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return make_result(out, (a, b), backward, "mul")


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    out = x.data * c

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * c)

    return make_result(out, (x,), backward, "scale")


def add_const(x, c: np.ndarray) -> Tensor:
    """Add a non-trainable array (positional encodings, attention masks)."""
    x = _as_tensor(x)
    out = x.data + c

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_unbroadcast(g, x.shape))

    return make_result(out, (x,), backward, "add_const")


def mul_const(x, c: np.ndarray) -> Tensor:
    """Multiply by a non-trainable array (padding masks, dropout masks)."""
    x = _as_tensor(x)
    out = x.data * c

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_unbroadcast(g * c, x.shape))

    return make_result(out, (x,), backward, "mul_const")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise DimensionError(f"matmul inner dims mismatch: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):  # finite check signals
        out = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a.accumulate_grad(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b.accumulate_grad(_unbroadcast(gb, b.shape))

    return make_result(out, (a, b), backward, "matmul")


def relu(x) -> Tensor:
    x = _as_tensor(x)
    keep = x.data > 0
    out = np.where(keep, x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * keep)

    return make_result(out, (x,), backward, "relu")


def exp(x) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(over="ignore"):  # finite check signals
        out = np.exp(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * out)

    return make_result(out, (x,), backward, "exp")


def log(x) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g / x.data)

    return make_result(out, (x,), backward, "log")


def abs_(x) -> Tensor:
    x = _as_tensor(x)
    out = np.abs(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * np.sign(x.data))

    return make_result(out, (x,), backward, "abs")


def square(x) -> Tensor:
    x = _as_tensor(x)
    out = x.data * x.data

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * 2.0 * x.data)

    return make_result(out, (x,), backward, "square")


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    out = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.shape))

    return make_result(out, (x,), backward, "reshape")


def transpose(x, axes: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    out = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.transpose(g, inverse))

    return make_result(out, (x,), backward, "transpose")


def sum_(x) -> Tensor:
    x = _as_tensor(x)
    out = np.asarray(x.data.sum())

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g, x.shape).copy())

    return make_result(out, (x,), backward, "sum")


def softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    if x.data.shape[axis] == 0:
        # Degenerate empty axis: pass through (no elements to normalize).
        def backward_empty(g):
            if x.requires_grad:
                x.accumulate_grad(g)

        return make_result(x.data.copy(), (x,), backward_empty, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            inner = (g * out).sum(axis=axis, keepdims=True)
            x.accumulate_grad(out * (g - inner))

    return make_result(out, (x,), backward, "softmax")


def layer_norm(x, gamma: Parameter, beta: Parameter, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean/unit variance, then scale/shift."""
    x = _as_tensor(x)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm params must have shape ({d},), got {gamma.shape}/{beta.shape}"
        )
    if eps <= 0:
        raise ValueError("eps must be > 0")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate_grad(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gxhat = g * gamma.data
            m1 = gxhat.mean(axis=-1, keepdims=True)
            m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(inv_std * (gxhat - m1 - xhat * m2))

    return make_result(out, (x, gamma, beta), backward, "layer_norm")


def affine(x, w: Parameter, b: Parameter) -> Tensor:
    """y[..., :] = x[..., :] @ w + b."""
    x = _as_tensor(x)
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(
            f"affine input width {x.shape[-1]} does not match weight {w.shape}"
        )
    return add(matmul(x, w), b)


def conv1d_seq(x, kernel: Parameter, bias: Parameter) -> Tensor:
    """Same-length 1-D convolution over the sequence axis.

    x: [B, L, Din], kernel: [k, Din, Dout] with odd k, bias: [Dout].
    Positions beyond the sequence ends are treated as zeros.
    """
    x = _as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"conv1d_seq expects [B, L, Din], got {x.shape}")
    k, din, dout = kernel.shape
    if k % 2 == 0:
        from ..errors import ConfigError

        raise ConfigError(f"conv1d_seq kernel width must be odd, got {k}")
    if x.shape[-1] != din:
        raise DimensionError(
            f"conv1d_seq input width {x.shape[-1]} does not match kernel {kernel.shape}"
        )
    b_, l = x.shape[0], x.shape[1]
    pad = (k - 1) // 2
    xp = np.zeros((b_, l + 2 * pad, din), dtype=x.data.dtype)
    xp[:, pad : pad + l, :] = x.data
    out = np.zeros((b_, l, dout), dtype=x.data.dtype)
    for j in range(k):
        out += np.matmul(xp[:, j : j + l, :], kernel.data[j])
    out += bias.data

    def backward(g):
        if bias.requires_grad:
            bias.accumulate_grad(g.reshape(-1, dout).sum(axis=0))
        if kernel.requires_grad:
            gk = np.zeros_like(kernel.data)
            for j in range(k):
                gk[j] = np.einsum("bli,blo->io", xp[:, j : j + l, :], g)
            kernel.accumulate_grad(gk)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j : j + l, :] += np.matmul(g, kernel.data[j].T)
            x.accumulate_grad(gxp[:, pad : pad + l, :])

    return make_result(out, (x, kernel, bias), backward, "conv1d_seq")


def embedding_lookup(ids: np.ndarray, table: Parameter) -> Tensor:
    """Row gather: ids [B, L] integers -> [B, L, D]. Backward scatter-adds."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {table.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    out = table.data[ids]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
            table.accumulate_grad(gt)

    return make_result(out, (table,), backward, "embedding_lookup")


def gather_rows(x, idx: np.ndarray) -> Tensor:
    """Per-batch row gather: x [B, L, D], idx [B, T] -> [B, T, D].

    The backward pass sums each output row's gradient into its source row,
    which is exactly the length-regulator gradient.
    """
    x = _as_tensor(x)
    idx = np.asarray(idx)
    if x.ndim != 3 or idx.ndim != 2 or idx.shape[0] != x.shape[0]:
        raise DimensionError(f"gather_rows shapes: x {x.shape}, idx {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[1]):
        raise IndexError("gather_rows index out of range")
    b_idx = np.arange(x.shape[0])[:, None]
    out = x.data[b_idx, idx]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, (np.broadcast_to(b_idx, idx.shape), idx), g)
            x.accumulate_grad(gx)

    return make_result(out, (x,), backward, "gather_rows")


def dropout(x, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    x = _as_tensor(x)
    if not train or p <= 0.0:
        return x
    if p >= 1.0:
        raise ValueError(f"dropout rate must be < 1, got {p}")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul_const(x, keep)


def masked_mean(x, mask: np.ndarray) -> Tensor:
    """Mean of x over cells where mask == 1; mask broadcasts against x."""
    x = _as_tensor(x)
    mask = np.asarray(mask, dtype=x.data.dtype)
    weights = np.broadcast_to(mask, x.shape)
    count = weights.sum()
    if count == 0:
        raise ValueError("masked_mean over an empty mask")
    return scale(sum_(mul_const(x, weights)), 1.0 / count)


def l1_loss(pred, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean absolute error over unpadded cells."""
    pred = _as_tensor(pred)
    if pred.shape != np.shape(target):
        raise DimensionError(
            f"l1_loss shapes differ: {pred.shape} vs {np.shape(target)}"
        )
    return masked_mean(abs_(add_const(pred, -np.asarray(target))), mask)


def mse_loss(pred, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean squared error over unpadded cells."""
    pred = _as_tensor(pred)
    if pred.shape != np.shape(target):
        raise DimensionError(
            f"mse_loss shapes differ: {pred.shape} vs {np.shape(target)}"
        )
    return masked_mean(square(add_const(pred, -np.asarray(target))), mask)


def sinusoid_encoding(length: int, dim: int, dtype=np.float64) -> np.ndarray:
    """Fixed sinusoidal positional table [length, dim]."""
    pos = np.arange(length, dtype=dtype)[:, None]
    i = np.arange(dim, dtype=dtype)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(i / 2.0) / dim)
    table = np.zeros((length, dim), dtype=dtype)
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table
