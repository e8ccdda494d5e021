"""Minimal reverse-mode neural kernels over a static op graph."""

from .graph import OpGraph, Node
from .params import ParamStore
from .gradcheck import grad_check
from .optim import AdamState, adam_step, sgd_step, step_lr

__all__ = [
    "OpGraph",
    "Node",
    "ParamStore",
    "grad_check",
    "AdamState",
    "adam_step",
    "sgd_step",
    "step_lr",
]
