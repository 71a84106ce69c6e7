"""Differentiable-operator kernel: tensors, ops, layer modules, grad checks."""

from . import ops
from .gradcheck import grad_check
from .modules import (
    Affine,
    Conv1dSeq,
    Dropout,
    Embedding,
    LayerNorm,
    Module,
    ModuleList,
    MultiHeadSelfAttention,
)
from .tensor import Parameter, Tensor, finite_checks, grad_enabled, no_grad

__all__ = [
    "Affine",
    "Conv1dSeq",
    "Dropout",
    "Embedding",
    "LayerNorm",
    "Module",
    "ModuleList",
    "MultiHeadSelfAttention",
    "Parameter",
    "Tensor",
    "finite_checks",
    "grad_check",
    "grad_enabled",
    "no_grad",
    "ops",
]
