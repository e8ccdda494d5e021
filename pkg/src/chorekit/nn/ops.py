"""Op registry: shape inference, forward evaluation and vector-Jacobian products.

Every op is a pure function of its inputs plus static metadata. Forward may
stash intermediates in the per-node cache dict; backward reads them and
returns one gradient per input (None for non-differentiable inputs such as
integer id tensors). All ops run in the caller's dtype: f32 in training,
f64 under the gradient checker.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from ..errors import DegenerateRotationError, GraphBuildError
from ..fsq import round_half_away

Shape = tuple[int, ...]


@dataclass(frozen=True)
class OpDef:
    infer: Callable[[dict, list[Shape]], Shape]
    forward: Callable[[dict, list[np.ndarray], dict], np.ndarray]
    backward: Callable[[dict, dict, np.ndarray], list]


OPS: dict[str, OpDef] = {}


def _register(name: str, infer, forward, backward) -> None:
    OPS[name] = OpDef(infer=infer, forward=forward, backward=backward)


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise GraphBuildError(msg)


def _unbroadcast(grad: np.ndarray, shape: Shape) -> np.ndarray:
    """Sum a broadcasted gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a: Shape, b: Shape, what: str) -> Shape:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise GraphBuildError(f"{what}: shapes {a} and {b} do not broadcast")


# ---------------------------------------------------------------- linear

def _linear_infer(meta, shapes):
    _need(len(shapes) == 3, "linear takes (x, w, b)")
    x, w, b = shapes
    _need(len(w) == 2, f"linear weight must be rank 2, got {w}")
    _need(len(b) == 1 and b[0] == w[1], f"linear bias {b} must be ({w[1]},)")
    _need(len(x) >= 1 and x[-1] == w[0], f"linear input {x} does not match weight {w}")
    return x[:-1] + (w[1],)


def _linear_fwd(meta, inputs, cache):
    x, w, b = inputs
    cache["x"], cache["w"] = x, w
    return x @ w + b


def _linear_bwd(meta, cache, g):
    x, w = cache["x"], cache["w"]
    gx = g @ w.T
    gw = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
    return [gx, gw, gb]


_register("linear", _linear_infer, _linear_fwd, _linear_bwd)


# ---------------------------------------------------------------- matmul

def _matmul_infer(meta, shapes):
    _need(len(shapes) == 2, "matmul takes (a, b)")
    a, b = shapes
    _need(len(a) >= 2 and len(b) >= 2, f"matmul needs rank >= 2, got {a}, {b}")
    _need(a[:-2] == b[:-2], f"matmul batch dims differ: {a} vs {b}")
    _need(a[-1] == b[-2], f"matmul inner dims differ: {a} vs {b}")
    return a[:-2] + (a[-2], b[-1])


def _matmul_fwd(meta, inputs, cache):
    a, b = inputs
    cache["a"], cache["b"] = a, b
    return a @ b


def _matmul_bwd(meta, cache, g):
    a, b = cache["a"], cache["b"]
    return [g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g]


_register("matmul", _matmul_infer, _matmul_fwd, _matmul_bwd)


def _transpose_infer(meta, shapes):
    _need(len(shapes) == 1 and len(shapes[0]) >= 2, "transpose_last2 needs one rank>=2 input")
    s = shapes[0]
    return s[:-2] + (s[-1], s[-2])


_register(
    "transpose_last2",
    _transpose_infer,
    lambda meta, inputs, cache: np.swapaxes(inputs[0], -1, -2),
    lambda meta, cache, g: [np.swapaxes(g, -1, -2)],
)


# ---------------------------------------------------------------- elementwise

def _binary_infer(name):
    def infer(meta, shapes):
        _need(len(shapes) == 2, f"{name} takes two inputs")
        return _broadcast_shape(shapes[0], shapes[1], name)

    return infer


def _add_fwd(meta, inputs, cache):
    cache["shapes"] = (inputs[0].shape, inputs[1].shape)
    return inputs[0] + inputs[1]


def _add_bwd(meta, cache, g):
    sa, sb = cache["shapes"]
    return [_unbroadcast(g, sa), _unbroadcast(g, sb)]


_register("add", _binary_infer("add"), _add_fwd, _add_bwd)


def _mul_fwd(meta, inputs, cache):
    a, b = inputs
    cache["a"], cache["b"] = a, b
    return a * b


def _mul_bwd(meta, cache, g):
    a, b = cache["a"], cache["b"]
    return [_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)]


_register("mul", _binary_infer("mul"), _mul_fwd, _mul_bwd)


def _unary_infer(name):
    def infer(meta, shapes):
        _need(len(shapes) == 1, f"{name} takes one input")
        return shapes[0]

    return infer


_register(
    "scale",
    _unary_infer("scale"),
    lambda meta, inputs, cache: inputs[0] * meta["factor"],
    lambda meta, cache, g: [g * meta["factor"]],
)


def _bias_const_infer(meta, shapes):
    _need(len(shapes) == 1, "bias_const takes one input")
    return _broadcast_shape(shapes[0], np.shape(meta["value"]), "bias_const")


_register(
    "bias_const",
    _bias_const_infer,
    lambda meta, inputs, cache: inputs[0] + np.asarray(meta["value"], dtype=inputs[0].dtype),
    lambda meta, cache, g: [g],
)


def _sigmoid_fwd(meta, inputs, cache):
    y = expit(inputs[0])
    cache["y"] = y
    return y


_register(
    "sigmoid",
    _unary_infer("sigmoid"),
    _sigmoid_fwd,
    lambda meta, cache, g: [g * cache["y"] * (1.0 - cache["y"])],
)


def _relu_fwd(meta, inputs, cache):
    cache["pos"] = inputs[0] > 0
    return np.where(cache["pos"], inputs[0], 0.0)


_register(
    "relu",
    _unary_infer("relu"),
    _relu_fwd,
    lambda meta, cache, g: [np.where(cache["pos"], g, 0.0)],
)


def _silu_fwd(meta, inputs, cache):
    x = inputs[0]
    s = expit(x)
    cache["x"], cache["s"] = x, s
    return x * s


def _silu_bwd(meta, cache, g):
    x, s = cache["x"], cache["s"]
    return [g * (s + x * s * (1.0 - s))]


_register("silu", _unary_infer("silu"), _silu_fwd, _silu_bwd)


# ---------------------------------------------------------------- layer_norm

def _layer_norm_infer(meta, shapes):
    _need(len(shapes) == 3, "layer_norm takes (x, gamma, beta)")
    x, gamma, beta = shapes
    _need(len(x) >= 1, "layer_norm input needs a trailing axis")
    _need(gamma == (x[-1],) and beta == (x[-1],), f"affine shapes {gamma}, {beta} must be ({x[-1]},)")
    return x


def _layer_norm_fwd(meta, inputs, cache):
    x, gamma, beta = inputs
    eps = meta.get("eps", 1e-5)
    mu = x.mean(axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    cache["xhat"], cache["inv"], cache["gamma"] = xhat, inv, gamma
    return gamma * xhat + beta


def _layer_norm_bwd(meta, cache, g):
    xhat, inv, gamma = cache["xhat"], cache["inv"], cache["gamma"]
    lead = tuple(range(g.ndim - 1))
    ggamma = (g * xhat).sum(axis=lead)
    gbeta = g.sum(axis=lead)
    gh = g * gamma
    gx = inv * (
        gh
        - gh.mean(axis=-1, keepdims=True)
        - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
    )
    return [gx, ggamma, gbeta]


_register("layer_norm", _layer_norm_infer, _layer_norm_fwd, _layer_norm_bwd)


# ---------------------------------------------------------------- softmax

def _softmax_fwd(meta, inputs, cache):
    x = inputs[0]
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=-1, keepdims=True)
    cache["y"] = y
    return y


def _softmax_bwd(meta, cache, g):
    y = cache["y"]
    return [y * (g - (g * y).sum(axis=-1, keepdims=True))]


_register("softmax", _unary_infer("softmax"), _softmax_fwd, _softmax_bwd)


# ---------------------------------------------------------------- embedding

def _embedding_infer(meta, shapes):
    _need(len(shapes) == 2, "embedding takes (table, ids)")
    table, ids = shapes
    _need(len(table) == 2, f"embedding table must be rank 2, got {table}")
    return ids + (table[1],)


def _embedding_fwd(meta, inputs, cache):
    table, ids = inputs
    ids = ids.astype(np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding ids out of range [0, {table.shape[0]})")
    cache["ids"], cache["rows"] = ids, table.shape[0]
    return table[ids]


def _embedding_bwd(meta, cache, g):
    ids, rows = cache["ids"], cache["rows"]
    gt = np.zeros((rows, g.shape[-1]), dtype=g.dtype)
    np.add.at(gt, ids.ravel(), g.reshape(-1, g.shape[-1]))
    return [gt, None]


_register("embedding", _embedding_infer, _embedding_fwd, _embedding_bwd)


# ---------------------------------------------------------------- losses

def _mean_l1_infer(meta, shapes):
    _need(len(shapes) == 2 and shapes[0] == shapes[1], f"mean_l1 needs equal shapes, got {shapes}")
    return ()


def _mean_l1_fwd(meta, inputs, cache):
    a, b = inputs
    diff = a - b
    cache["sign"] = np.sign(diff)
    cache["n"] = diff.size
    return np.asarray(np.mean(np.abs(diff)), dtype=a.dtype)


def _mean_l1_bwd(meta, cache, g):
    base = g * cache["sign"] / cache["n"]
    return [base, -base]


_register("mean_l1", _mean_l1_infer, _mean_l1_fwd, _mean_l1_bwd)


def _cross_entropy_infer(meta, shapes):
    _need(len(shapes) == 2, "cross_entropy takes (logits, targets)")
    logits, targets = shapes
    _need(len(logits) == 2, f"logits must be (N, C), got {logits}")
    _need(targets == (logits[0],), f"targets must be ({logits[0]},), got {targets}")
    return ()


def _cross_entropy_fwd(meta, inputs, cache):
    logits, targets = inputs
    targets = targets.astype(np.int64)
    n, c = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise ValueError(f"targets out of range [0, {c})")
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=1, keepdims=True)
    p = e / z
    nll = (m[:, 0] + np.log(z[:, 0])) - logits[np.arange(n), targets]
    cache["p"], cache["targets"] = p, targets
    return np.asarray(nll.mean(), dtype=logits.dtype)


def _cross_entropy_bwd(meta, cache, g):
    p, targets = cache["p"], cache["targets"]
    n = p.shape[0]
    gl = p.copy()
    gl[np.arange(n), targets] -= 1.0
    return [gl * (g / n), None]


_register("cross_entropy", _cross_entropy_infer, _cross_entropy_fwd, _cross_entropy_bwd)


# ---------------------------------------------------------------- fsq straight-through

def _fsq_ste_infer(meta, shapes):
    _need(len(shapes) == 1, "fsq_ste takes one input")
    levels = meta["levels"]
    _need(
        shapes[0][-1] == len(levels),
        f"fsq_ste input width {shapes[0][-1]} != {len(levels)} channels",
    )
    return shapes[0]


def _fsq_ste_fwd(meta, inputs, cache):
    z = inputs[0]
    u = expit(z)
    cache["u"] = u
    if cache.get("_surrogate"):
        return u
    span = np.asarray(meta["levels"], dtype=z.dtype) - 1.0
    return round_half_away(u * span) / span


def _fsq_ste_bwd(meta, cache, g):
    u = cache["u"]
    return [g * u * (1.0 - u)]


_register("fsq_ste", _fsq_ste_infer, _fsq_ste_fwd, _fsq_ste_bwd)


# ---------------------------------------------------------------- temporal ops

def _time_diff_infer(meta, shapes):
    _need(len(shapes) == 1 and len(shapes[0]) >= 2, "time_diff needs one rank>=2 input")
    s = shapes[0]
    _need(s[-2] >= 2, f"time_diff needs >= 2 steps, got {s[-2]}")
    return s[:-2] + (s[-2] - 1, s[-1])


def _time_diff_fwd(meta, inputs, cache):
    return np.diff(inputs[0], axis=-2)


def _time_diff_bwd(meta, cache, g):
    pad = [(0, 0)] * g.ndim
    pad[-2] = (1, 1)
    padded = np.pad(g, pad)
    return [padded[..., :-1, :] - padded[..., 1:, :]]


_register("time_diff", _time_diff_infer, _time_diff_fwd, _time_diff_bwd)


def _avg_pool_pairs_infer(meta, shapes):
    _need(len(shapes) == 1 and len(shapes[0]) >= 2, "avg_pool_pairs needs one rank>=2 input")
    s = shapes[0]
    _need(s[-2] >= 1, "avg_pool_pairs needs at least one step")
    return s[:-2] + ((s[-2] + 1) // 2, s[-1])


def _avg_pool_pairs_fwd(meta, inputs, cache):
    x = inputs[0]
    t = x.shape[-2]
    pairs = t // 2
    cache["t"] = t
    out_parts = [(x[..., 0 : 2 * pairs : 2, :] + x[..., 1 : 2 * pairs : 2, :]) * 0.5]
    if t % 2:
        out_parts.append(x[..., t - 1 : t, :])
    return np.concatenate(out_parts, axis=-2)


def _avg_pool_pairs_bwd(meta, cache, g):
    t = cache["t"]
    pairs = t // 2
    gx = np.empty(g.shape[:-2] + (t, g.shape[-1]), dtype=g.dtype)
    gx[..., 0 : 2 * pairs : 2, :] = g[..., :pairs, :] * 0.5
    gx[..., 1 : 2 * pairs : 2, :] = g[..., :pairs, :] * 0.5
    if t % 2:
        gx[..., t - 1, :] = g[..., pairs, :]
    return [gx]


_register("avg_pool_pairs", _avg_pool_pairs_infer, _avg_pool_pairs_fwd, _avg_pool_pairs_bwd)


def _mean_pool_time_infer(meta, shapes):
    _need(len(shapes) == 1 and len(shapes[0]) >= 2, "mean_pool_time needs one rank>=2 input")
    s = shapes[0]
    return s[:-2] + (s[-1],)


def _mean_pool_time_fwd(meta, inputs, cache):
    cache["t"] = inputs[0].shape[-2]
    return inputs[0].mean(axis=-2)


def _mean_pool_time_bwd(meta, cache, g):
    t = cache["t"]
    return [np.repeat(np.expand_dims(g / t, -2), t, axis=-2)]


_register("mean_pool_time", _mean_pool_time_infer, _mean_pool_time_fwd, _mean_pool_time_bwd)


def _l2_normalize_fwd(meta, inputs, cache):
    x = inputs[0]
    eps = meta.get("eps", 1e-12)
    norm = np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), eps)
    y = x / norm
    cache["y"], cache["norm"] = y, norm
    return y


def _l2_normalize_bwd(meta, cache, g):
    y, norm = cache["y"], cache["norm"]
    return [(g - y * (g * y).sum(axis=-1, keepdims=True)) / norm]


_register("l2_normalize", _unary_infer("l2_normalize"), _l2_normalize_fwd, _l2_normalize_bwd)


# ---------------------------------------------------------------- column plumbing

def _concat_last_infer(meta, shapes):
    _need(len(shapes) == 2, "concat_last takes two inputs")
    a, b = shapes
    _need(a[:-1] == b[:-1], f"concat_last leading dims differ: {a} vs {b}")
    return a[:-1] + (a[-1] + b[-1],)


def _concat_last_fwd(meta, inputs, cache):
    cache["split"] = inputs[0].shape[-1]
    return np.concatenate(inputs, axis=-1)


def _concat_last_bwd(meta, cache, g):
    k = cache["split"]
    return [g[..., :k], g[..., k:]]


_register("concat_last", _concat_last_infer, _concat_last_fwd, _concat_last_bwd)


def _gather_cols_infer(meta, shapes):
    _need(len(shapes) == 1 and len(shapes[0]) >= 1, "gather_cols needs one input")
    index = meta["index"]
    _need(all(0 <= i < shapes[0][-1] for i in index), "gather_cols index out of range")
    return shapes[0][:-1] + (len(index),)


def _gather_cols_fwd(meta, inputs, cache):
    cache["cols"] = inputs[0].shape[-1]
    return inputs[0][..., list(meta["index"])]


def _gather_cols_bwd(meta, cache, g):
    index = np.asarray(meta["index"], dtype=np.int64)
    gx_m = np.zeros((cache["cols"],) + g.shape[:-1], dtype=g.dtype)
    np.add.at(gx_m, index, np.moveaxis(g, -1, 0))
    return [np.moveaxis(gx_m, 0, -1)]


_register("gather_cols", _gather_cols_infer, _gather_cols_fwd, _gather_cols_bwd)


# ---------------------------------------------------------------- dropout

def _dropout_fwd(meta, inputs, cache):
    rate = meta["rate"]
    x = inputs[0]
    if not cache.get("_train") or rate <= 0.0:
        cache["mask"] = None
        return x
    rng = cache["_drop_rng"]
    keep = (rng.uniform(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    cache["mask"] = keep
    return x * keep


def _dropout_bwd(meta, cache, g):
    mask = cache["mask"]
    return [g if mask is None else g * mask]


_register("dropout", _unary_infer("dropout"), _dropout_fwd, _dropout_bwd)


# ---------------------------------------------------------------- conv1d family

def _same_geometry(t_in: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """(output length, left pad, total pad) for 'same' padding at a stride."""
    t_out = -(-t_in // stride)
    pad_total = max((t_out - 1) * stride + kernel - t_in, 0)
    return t_out, pad_total // 2, pad_total


def _conv_apply(x: np.ndarray, w: np.ndarray, stride: int):
    """x (B,T,Ci), w (K,Ci,Co) -> ((B,Tout,Co), windows) with same padding."""
    k, ci, co = w.shape
    b = x.shape[0]
    t_out, pad_left, pad_total = _same_geometry(x.shape[1], k, stride)
    xp = np.pad(x, ((0, 0), (pad_left, pad_total - pad_left), (0, 0)))
    idx = np.arange(t_out)[:, None] * stride + np.arange(k)
    windows = xp[:, idx, :]  # (B, Tout, K, Ci)
    y = windows.reshape(b * t_out, k * ci) @ w.reshape(k * ci, co)
    return y.reshape(b, t_out, co), windows


def _conv_input_vjp(gy: np.ndarray, w: np.ndarray, stride: int, t_in: int) -> np.ndarray:
    """Adjoint of _conv_apply w.r.t. x; gy (B,Tout,Co) -> (B,Tin,Ci)."""
    k, ci, co = w.shape
    b, t_out = gy.shape[0], gy.shape[1]
    _, pad_left, pad_total = _same_geometry(t_in, k, stride)
    gcol = (gy.reshape(b * t_out, co) @ w.reshape(k * ci, co).T).reshape(b, t_out, k, ci)
    gxp = np.zeros((b, t_in + pad_total, ci), dtype=gy.dtype)
    starts = np.arange(t_out) * stride
    # Starts are distinct, so each k-shift is a duplicate-free fancy-index add.
    for j in range(k):
        gxp[:, starts + j, :] += gcol[:, :, j, :]
    return gxp[:, pad_left : pad_left + t_in, :]


def _conv_weight_vjp(windows: np.ndarray, gy: np.ndarray) -> np.ndarray:
    b, t_out, k, ci = windows.shape
    co = gy.shape[-1]
    gw = windows.reshape(b * t_out, k * ci).T @ gy.reshape(b * t_out, co)
    return gw.reshape(k, ci, co)


def _conv1d_infer(meta, shapes):
    _need(len(shapes) == 3, "conv1d takes (x, w, b)")
    x, w, b = shapes
    _need(len(x) == 3, f"conv1d input must be (B,T,C), got {x}")
    _need(len(w) == 3 and w[1] == x[2], f"conv1d weight {w} does not match input {x}")
    _need(b == (w[2],), f"conv1d bias {b} must be ({w[2]},)")
    stride = meta["stride"]
    _need(stride >= 1, "conv1d stride must be >= 1")
    t_out, _, _ = _same_geometry(x[1], w[0], stride)
    return (x[0], t_out, w[2])


def _conv1d_fwd(meta, inputs, cache):
    x, w, b = inputs
    y, windows = _conv_apply(x, w, meta["stride"])
    cache["windows"], cache["w"], cache["t_in"] = windows, w, x.shape[1]
    return y + b


def _conv1d_bwd(meta, cache, g):
    gx = _conv_input_vjp(g, cache["w"], meta["stride"], cache["t_in"])
    gw = _conv_weight_vjp(cache["windows"], g)
    gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
    return [gx, gw, gb]


_register("conv1d", _conv1d_infer, _conv1d_fwd, _conv1d_bwd)


def _tconv1d_infer(meta, shapes):
    _need(len(shapes) == 3, "tconv1d takes (x, w, b)")
    x, w, b = shapes
    _need(len(x) == 3, f"tconv1d input must be (B,T,C), got {x}")
    _need(len(w) == 3 and w[2] == x[2], f"tconv1d weight {w} does not match input {x}")
    _need(b == (w[1],), f"tconv1d bias {b} must be ({w[1]},)")
    stride, out_length = meta["stride"], meta["out_length"]
    t_out, _, _ = _same_geometry(out_length, w[0], stride)
    _need(
        t_out == x[1],
        f"tconv1d out_length {out_length} with stride {stride} implies input length "
        f"{t_out}, got {x[1]}",
    )
    return (x[0], out_length, w[1])


def _tconv1d_fwd(meta, inputs, cache):
    # Exact adjoint of conv1d: scatter each step back through the same
    # window geometry the mirrored conv would have used.
    x, w, b = inputs
    cache["x"], cache["w"] = x, w
    y = _conv_input_vjp(x, w, meta["stride"], meta["out_length"])
    return y + b


def _tconv1d_bwd(meta, cache, g):
    x, w = cache["x"], cache["w"]
    gx, windows = _conv_apply(g, w, meta["stride"])
    gw = _conv_weight_vjp(windows, x)
    gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
    return [gx, gw, gb]


_register("tconv1d", _tconv1d_infer, _tconv1d_fwd, _tconv1d_bwd)


# ---------------------------------------------------------------- forward kinematics

def _gram_schmidt_batch(r: np.ndarray):
    """r (N,6) -> rotation matrices (N,3,3) plus caches for the VJP."""
    a, b = r[:, 0:3], r[:, 3:6]
    na = np.linalg.norm(a, axis=1, keepdims=True)
    if np.any(na < 1e-8):
        raise DegenerateRotationError("degenerate 6D rotation: first column near zero")
    c1 = a / na
    d = np.sum(b * c1, axis=1, keepdims=True)
    resid = b - d * c1
    nr = np.linalg.norm(resid, axis=1, keepdims=True)
    if np.any(nr < 1e-8):
        raise DegenerateRotationError("degenerate 6D rotation: columns near parallel")
    c2 = resid / nr
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=2), (b, na, c1, d, nr, c2)


def _gram_schmidt_vjp(grad_r: np.ndarray, caches) -> np.ndarray:
    """grad_r (N,3,3) gradients on matrix columns -> (N,6) input gradients."""
    b, na, c1, d, nr, c2 = caches
    g1 = grad_r[:, :, 0].copy()
    g2 = grad_r[:, :, 1].copy()
    g3 = grad_r[:, :, 2]
    # c3 = c1 x c2
    g1 += np.cross(c2, g3)
    g2 += np.cross(g3, c1)
    # c2 = resid / nr
    gresid = (g2 - c2 * np.sum(g2 * c2, axis=1, keepdims=True)) / nr
    # resid = b - (b . c1) c1
    gb = gresid - c1 * np.sum(gresid * c1, axis=1, keepdims=True)
    g1 += -np.sum(gresid * c1, axis=1, keepdims=True) * b - d * gresid
    # c1 = a / na
    ga = (g1 - c1 * np.sum(g1 * c1, axis=1, keepdims=True)) / na
    return np.concatenate([ga, gb], axis=1)


def _fk6d_infer(meta, shapes):
    _need(len(shapes) == 1, "fk6d takes one input")
    skel = meta["skeleton"]
    width = 3 + 6 * skel.joint_count
    s = shapes[0]
    _need(
        len(s) >= 1 and s[-1] == width,
        f"fk6d input width {s[-1]} != 3+6J = {width}",
    )
    return s[:-1] + (skel.joint_count, 3)


def _fk6d_fwd(meta, inputs, cache):
    skel = meta["skeleton"]
    x = inputs[0]
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    n = flat.shape[0]
    J = skel.joint_count
    local = np.empty((n, J, 3, 3), dtype=x.dtype)
    gs_caches = []
    for j in range(J):
        local[:, j], caches = _gram_schmidt_batch(flat[:, 3 + 6 * j : 9 + 6 * j])
        gs_caches.append(caches)
    glob = np.empty_like(local)
    pos = np.empty((n, J, 3), dtype=x.dtype)
    glob[:, 0] = local[:, 0]
    pos[:, 0] = flat[:, 0:3]
    offsets = skel.offsets.astype(x.dtype)
    for j in range(1, J):
        p = skel.parents[j]
        glob[:, j] = glob[:, p] @ local[:, j]
        pos[:, j] = pos[:, p] + glob[:, p] @ offsets[j]
    cache["local"], cache["glob"], cache["gs"] = local, glob, gs_caches
    cache["lead"] = lead
    return pos.reshape(lead + (J, 3))


def _fk6d_bwd(meta, cache, g):
    skel = meta["skeleton"]
    local, glob, gs_caches = cache["local"], cache["glob"], cache["gs"]
    J = skel.joint_count
    n = local.shape[0]
    gpos = g.reshape(n, J, 3).copy()
    gglob = np.zeros_like(glob)
    offsets = skel.offsets.astype(g.dtype)
    gx = np.empty((n, 3 + 6 * J), dtype=g.dtype)
    for j in range(J - 1, 0, -1):
        p = skel.parents[j]
        gpos[:, p] += gpos[:, j]
        gglob[:, p] += gpos[:, j][:, :, None] * offsets[j][None, None, :]
        gglob[:, p] += gglob[:, j] @ np.swapaxes(local[:, j], 1, 2)
        glocal = np.swapaxes(glob[:, p], 1, 2) @ gglob[:, j]
        gx[:, 3 + 6 * j : 9 + 6 * j] = _gram_schmidt_vjp(glocal, gs_caches[j])
    gx[:, 3:9] = _gram_schmidt_vjp(gglob[:, 0], gs_caches[0])
    gx[:, 0:3] = gpos[:, 0]
    return [gx.reshape(cache["lead"] + (3 + 6 * J,))]


_register("fk6d", _fk6d_infer, _fk6d_fwd, _fk6d_bwd)
