"""Central-difference gradient verification in f64.

The graph runs in STE-surrogate mode so quantizers contribute their smooth
surrogate (sigmoid) path; everything else is exact. Relative error per
sampled coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
"""

from __future__ import annotations

import numpy as np

from ..rng import SeededRng
from .graph import Node, OpGraph
from .params import ParamStore


def _f64_store(params: ParamStore) -> ParamStore:
    clone = ParamStore(0)
    clone.values = {k: np.array(v, dtype=np.float64) for k, v in params.values.items()}
    return clone


def grad_check(
    graph: OpGraph,
    params: ParamStore,
    feeds: dict,
    loss: Node | str,
    *,
    n_coords: int = 64,
    eps: float = 1e-5,
    seed: int = 0,
    wrt_params: list[str] | None = None,
    wrt_inputs: tuple[str, ...] = (),
    train: bool = False,
    drop_seed: int = 0,
) -> float:
    """Max relative error between analytic and numeric gradients.

    Samples at least n_coords coordinates (with replacement) across the
    selected parameters and float inputs. Dropout masks are fixed by
    drop_seed, so the loss is a deterministic function during differencing.
    """
    store = _f64_store(params)
    feeds = {
        k: np.array(v, dtype=np.float64)
        if np.asarray(v).dtype.kind == "f"
        else np.asarray(v)
        for k, v in feeds.items()
    }
    kwargs = dict(train=train, surrogate=True, drop_seed=drop_seed, dtype=np.float64)
    _, param_grads, input_grads = graph.backward(
        store, feeds, loss, input_grads=True, **kwargs
    )

    if wrt_params is None:
        wrt_params = sorted(param_grads)
    targets: list[tuple[str, str, int]] = []  # (kind, name, size)
    for name in wrt_params:
        targets.append(("param", name, store.values[name].size))
    for name in wrt_inputs:
        targets.append(("input", name, feeds[name].size))
    total = sum(size for _, _, size in targets)
    if total == 0:
        return 0.0

    bounds = np.cumsum([size for _, _, size in targets])
    rng = SeededRng(seed).spawn("grad-check")
    picks = rng.integers(max(n_coords, min(total, n_coords)), total)

    def eval_loss() -> float:
        out = graph.forward(store, feeds, loss, **kwargs)
        return float(next(iter(out.values())))

    worst = 0.0
    for pick in picks:
        slot = int(np.searchsorted(bounds, pick, side="right"))
        kind, name, _ = targets[slot]
        offset = int(pick - (bounds[slot - 1] if slot else 0))
        array = store.values[name] if kind == "param" else feeds[name]
        flat = array.reshape(-1)
        original = flat[offset]
        flat[offset] = original + eps
        plus = eval_loss()
        flat[offset] = original - eps
        minus = eval_loss()
        flat[offset] = original
        numeric = (plus - minus) / (2.0 * eps)
        grad = param_grads[name] if kind == "param" else input_grads[name]
        analytic = float(grad.reshape(-1)[offset])
        rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, rel)
    return worst
