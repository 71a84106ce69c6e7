"""Reverse-mode autodiff over numpy arrays.

Tensors form a DAG; each op records a closure that routes the output gradient
back to its parents. Everything runs in double precision by default (the
finite-difference checks require it); single precision can be selected per
array for speed. Every op output is checked for NaN/Inf unless the check is
suspended.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable

import numpy as np

from ..errors import NumericError

_node_ids = itertools.count()

_grad_enabled = True
_finite_checks = True


@contextmanager
def no_grad():
    """Suspend graph construction (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def finite_checks(enabled: bool):
    global _finite_checks
    prev = _finite_checks
    _finite_checks = enabled
    try:
        yield
    finally:
        _finite_checks = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A numpy array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents",
                 "_backward", "_id")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple = (),
        backward: Callable[[np.ndarray], None] | None = None,
        name: str | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64 if not isinstance(data, np.ndarray) else data.dtype)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = parents
        self._backward = backward
        self._id = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor (scalar unless a seed is given)."""
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        order = _topo_order(self)
        self.accumulate_grad(np.asarray(seed, dtype=self.data.dtype))
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, grad={self.requires_grad}{tag})"

    # Operator sugar; implementations live in ops.py (imported lazily to
    # avoid a module cycle).
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


class Parameter(Tensor):
    """A named, trainable tensor. Shape is fixed at construction."""

    __slots__ = ("init_kind",)

    def __init__(self, data, name: str = "", init_kind: str = "xavier"):
        super().__init__(np.asarray(data, dtype=np.float64), requires_grad=True, name=name)
        self.init_kind = init_kind

    def grad_or_zeros(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Reachable nodes in reverse creation order.

    Creation order is a topological order of the forward graph, so its
    reverse is a valid backward schedule. Scheduling by creation id (rather
    than traversal order) keeps gradient-accumulation order for any node
    independent of unrelated graph extensions, which is what makes
    zero-weighted branches bit-neutral.
    """
    reachable: list[Tensor] = []
    seen: set[int] = set()
    stack: list[Tensor] = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        reachable.append(node)
        stack.extend(node._parents)
    reachable.sort(key=lambda n: n._id, reverse=True)
    return reachable


def make_result(
    data: np.ndarray,
    parents: Iterable[Tensor],
    backward: Callable[[np.ndarray], None],
    op_name: str,
) -> Tensor:
    """Wrap an op output, attaching the graph edge if grad mode is on."""
    if _finite_checks and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op '{op_name}'")
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    track = _grad_enabled and any(p.requires_grad for p in parents)
    if not track:
        return Tensor(data)
    out = Tensor(data, requires_grad=True, parents=parents, backward=backward)
    return out
