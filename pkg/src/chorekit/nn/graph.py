"""Static computation graph with reverse-mode differentiation.

Nodes are appended in topological order by construction (an op can only
reference already-created nodes), and all shapes are validated when the node
is added, so a built graph cannot fail shape checks at run time. Forward and
backward hold no state between calls; per-call mode flags (train, STE
surrogate, dropout seed, dtype) are threaded through each node's cache dict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GraphBuildError, ShapeError
from ..rng import SeededRng, derive_seed
from . import ops as _ops
from .params import ParamStore


@dataclass(frozen=True)
class Node:
    idx: int
    name: str
    kind: str  # "input" | "param" | "op"
    op: str | None
    inputs: tuple[int, ...]
    shape: tuple[int, ...]
    meta: dict = field(default_factory=dict)
    dtype_kind: str = "f"  # "f" float (cast to run dtype) | "i" integer ids


class OpGraph:
    def __init__(self):
        self.nodes: list[Node] = []
        self._by_name: dict[str, Node] = {}

    # ------------------------------------------------------------ building

    def _add(self, node: Node) -> Node:
        if node.name in self._by_name:
            raise GraphBuildError(f"node name {node.name!r} already used")
        self.nodes.append(node)
        self._by_name[node.name] = node
        return node

    def input(self, name: str, shape, dtype_kind: str = "f") -> Node:
        existing = self._by_name.get(name)
        if existing is not None:
            if existing.kind == "input" and existing.shape == tuple(shape):
                return existing
            raise GraphBuildError(f"node name {name!r} already used")
        if dtype_kind not in ("f", "i"):
            raise GraphBuildError(f"input dtype_kind must be 'f' or 'i', got {dtype_kind!r}")
        return self._add(
            Node(len(self.nodes), name, "input", None, (), tuple(shape), {}, dtype_kind)
        )

    def param(self, name: str, shape) -> Node:
        existing = self._by_name.get(name)
        if existing is not None:
            if existing.kind == "param" and existing.shape == tuple(shape):
                return existing
            raise GraphBuildError(f"node name {name!r} already used")
        return self._add(Node(len(self.nodes), name, "param", None, (), tuple(shape)))

    def op(self, op_name: str, *inputs: Node, name: str | None = None, **meta) -> Node:
        if op_name not in _ops.OPS:
            raise GraphBuildError(f"unknown op {op_name!r}")
        for node in inputs:
            if node.idx >= len(self.nodes) or self.nodes[node.idx] is not node:
                raise GraphBuildError(f"input node {node.name!r} belongs to another graph")
        if name is None:
            name = f"{op_name}_{len(self.nodes)}"
        try:
            shape = _ops.OPS[op_name].infer(meta, [n.shape for n in inputs])
        except GraphBuildError as exc:
            raise GraphBuildError(f"node {name!r}: {exc}") from None
        return self._add(
            Node(len(self.nodes), name, "op", op_name, tuple(n.idx for n in inputs), shape, meta)
        )

    def node(self, name: str) -> Node:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"graph has no node {name!r}")

    # ------------------------------------------------------------ running

    def _resolve_feeds(self, feeds: dict, dtype, needed: set[int]) -> dict[str, np.ndarray]:
        resolved = {}
        for node in self.nodes:
            if node.kind != "input" or node.idx not in needed:
                continue
            if node.name not in feeds:
                raise ShapeError(f"missing input feed {node.name!r}")
            value = np.asarray(feeds[node.name])
            if value.shape != node.shape:
                raise ShapeError(
                    f"input {node.name!r} expects shape {node.shape}, got {value.shape}"
                )
            resolved[node.name] = (
                value.astype(np.int64) if node.dtype_kind == "i" else value.astype(dtype)
            )
        for name in feeds:
            if name not in self._by_name or self._by_name[name].kind != "input":
                raise ShapeError(f"feed {name!r} does not name an input node")
        return resolved

    def _ancestors(self, targets: list[Node]) -> set[int]:
        needed: set[int] = set()
        stack = [n.idx for n in targets]
        while stack:
            idx = stack.pop()
            if idx in needed:
                continue
            needed.add(idx)
            stack.extend(self.nodes[idx].inputs)
        return needed

    def _run(
        self,
        params: ParamStore,
        feeds: dict,
        targets: list[Node],
        *,
        train: bool,
        surrogate: bool,
        drop_seed: int,
        dtype,
        need_cache: bool,
    ):
        needed = self._ancestors(targets)
        resolved = self._resolve_feeds(feeds, dtype, needed)
        values: list[np.ndarray | None] = [None] * len(self.nodes)
        caches: list[dict | None] = [None] * len(self.nodes) if need_cache else None
        for node in self.nodes:
            if node.idx not in needed:
                continue
            if node.kind == "input":
                values[node.idx] = resolved[node.name]
            elif node.kind == "param":
                value = params.get(node.name)
                if value.shape != node.shape:
                    raise ShapeError(
                        f"param {node.name!r} expects shape {node.shape}, got {value.shape}"
                    )
                values[node.idx] = value.astype(dtype)
            else:
                cache: dict = {"_train": train, "_surrogate": surrogate}
                if node.op == "dropout" and train:
                    cache["_drop_rng"] = SeededRng(
                        derive_seed(drop_seed, "dropout", node.name)
                    )
                out = _ops.OPS[node.op].forward(
                    node.meta, [values[i] for i in node.inputs], cache
                )
                values[node.idx] = out
                if need_cache:
                    caches[node.idx] = cache
        return values, caches

    def forward(
        self,
        params: ParamStore,
        feeds: dict,
        outputs,
        *,
        train: bool = False,
        surrogate: bool = False,
        drop_seed: int = 0,
        dtype=np.float32,
    ) -> dict[str, np.ndarray]:
        """Evaluate and return {node name: value} for the requested nodes."""
        single = isinstance(outputs, (Node, str))
        wanted = [outputs] if single else list(outputs)
        wanted = [n if isinstance(n, Node) else self.node(n) for n in wanted]
        values, _ = self._run(
            params, feeds, wanted, train=train, surrogate=surrogate,
            drop_seed=drop_seed, dtype=dtype, need_cache=False,
        )
        return {n.name: values[n.idx] for n in wanted}

    def backward(
        self,
        params: ParamStore,
        feeds: dict,
        loss: Node | str,
        *,
        train: bool = False,
        surrogate: bool = False,
        drop_seed: int = 0,
        dtype=np.float32,
        input_grads: bool = False,
    ):
        """Return (loss value, {param name: grad}); grads match param shapes.

        With input_grads=True the result is a triple whose last element maps
        input names to gradients (integer inputs excluded).
        """
        loss_node = loss if isinstance(loss, Node) else self.node(loss)
        if loss_node.shape != ():
            raise ShapeError(f"loss node {loss_node.name!r} must be scalar, is {loss_node.shape}")
        values, caches = self._run(
            params, feeds, [loss_node], train=train, surrogate=surrogate,
            drop_seed=drop_seed, dtype=dtype, need_cache=True,
        )
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[loss_node.idx] = np.asarray(1.0, dtype=dtype)
        for node in reversed(self.nodes[: loss_node.idx + 1]):
            if node.kind != "op" or grads[node.idx] is None:
                continue
            in_grads = _ops.OPS[node.op].backward(node.meta, caches[node.idx], grads[node.idx])
            for src_idx, grad in zip(node.inputs, in_grads):
                if grad is None:
                    continue
                if grads[src_idx] is None:
                    grads[src_idx] = grad
                else:
                    grads[src_idx] = grads[src_idx] + grad
        param_grads: dict[str, np.ndarray] = {}
        in_grad_map: dict[str, np.ndarray] = {}
        for node in self.nodes:
            if node.kind == "param":
                grad = grads[node.idx]
                param_grads[node.name] = (
                    np.zeros(node.shape, dtype=dtype) if grad is None else grad
                )
            elif node.kind == "input" and input_grads and node.dtype_kind == "f":
                grad = grads[node.idx]
                in_grad_map[node.name] = (
                    np.zeros(node.shape, dtype=dtype) if grad is None else grad
                )
        loss_value = float(values[loss_node.idx])
        if input_grads:
            return loss_value, param_grads, in_grad_map
        return loss_value, param_grads
