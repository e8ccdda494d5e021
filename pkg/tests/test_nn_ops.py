"""Forward oracles and finite-difference gradient checks for every graph op."""

import numpy as np
import pytest
from scipy.special import expit

from chorekit.errors import GraphBuildError, ShapeError
from chorekit.fsq import FsqCodebook, fsq_quantize
from chorekit.motion import IDENTITY_6D, MotionClip, Skeleton, default_skeleton, forward_kinematics
from chorekit.nn.gradcheck import grad_check
from chorekit.nn.graph import OpGraph
from chorekit.nn.params import ParamStore

TOL = 1e-4


def _run(g: OpGraph, feeds: dict, out: str, **kw):
    return g.forward(ParamStore(0), feeds, out, dtype=np.float64, **kw)[out]


def _check(g: OpGraph, feeds: dict, **kw):
    wrt = tuple(name for name, v in feeds.items()
                if np.asarray(v).dtype.kind == "f")
    err = grad_check(g, ParamStore(0), feeds, "loss", wrt_inputs=wrt, **kw)
    assert err < TOL, f"max relative grad error {err}"


def _l1_head(g: OpGraph, node, shape, rng) -> dict:
    """Attach mean_l1 against a random constant target; returns its feed."""
    target = g.input("target", shape)
    g.op("mean_l1", node, target, name="loss")
    # Offset keeps |pred - target| away from the L1 kink during differencing.
    return {"target": rng.standard_normal(shape) + 3.0}


# ------------------------------------------------------------ forward oracles

def test_linear_forward_matches_numpy():
    rng = np.random.default_rng(0)
    x, w, b = rng.standard_normal((5, 3)), rng.standard_normal((3, 4)), rng.standard_normal(4)
    g = OpGraph()
    g.op("linear", g.input("x", (5, 3)), g.input("w", (3, 4)), g.input("b", (4,)), name="y")
    got = _run(g, {"x": x, "w": w, "b": b}, "y")
    assert np.allclose(got, x @ w + b, atol=1e-12)


def test_matmul_batched_and_transpose():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 4, 5))
    g = OpGraph()
    na, nb = g.input("a", (2, 3, 4)), g.input("b", (2, 4, 5))
    g.op("matmul", na, nb, name="y")
    g.op("transpose_last2", g.node("y"), name="yt")
    out = g.forward(ParamStore(0), {"a": a, "b": b}, ["y", "yt"], dtype=np.float64)
    assert np.allclose(out["y"], a @ b, atol=1e-12)
    assert np.allclose(out["yt"], np.swapaxes(a @ b, -1, -2), atol=1e-12)


def test_elementwise_broadcasting_forward():
    rng = np.random.default_rng(2)
    x, v = rng.standard_normal((3, 4)), rng.standard_normal(4)
    g = OpGraph()
    nx, nv = g.input("x", (3, 4)), g.input("v", (4,))
    g.op("add", nx, nv, name="sum")
    g.op("mul", nx, nv, name="prod")
    g.op("scale", nx, factor=-2.5, name="scaled")
    g.op("bias_const", nx, value=np.full(4, 1.5), name="biased")
    out = g.forward(ParamStore(0), {"x": x, "v": v},
                    ["sum", "prod", "scaled", "biased"], dtype=np.float64)
    assert np.allclose(out["sum"], x + v)
    assert np.allclose(out["prod"], x * v)
    assert np.allclose(out["scaled"], -2.5 * x)
    assert np.allclose(out["biased"], x + 1.5)


def test_activations_forward_known_values():
    x = np.array([[-1.0, 0.0, 2.0]])
    g = OpGraph()
    nx = g.input("x", (1, 3))
    g.op("relu", nx, name="relu")
    g.op("sigmoid", nx, name="sig")
    g.op("silu", nx, name="silu")
    out = g.forward(ParamStore(0), {"x": x}, ["relu", "sig", "silu"], dtype=np.float64)
    assert np.array_equal(out["relu"], [[0.0, 0.0, 2.0]])
    assert np.allclose(out["sig"], expit(x), atol=1e-15)
    assert np.allclose(out["silu"], x * expit(x), atol=1e-15)


def test_layer_norm_forward_oracle():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 5, 8))
    gamma, beta = rng.standard_normal(8), rng.standard_normal(8)
    g = OpGraph()
    g.op("layer_norm", g.input("x", (2, 5, 8)), g.input("g", (8,)),
         g.input("b", (8,)), name="y")
    got = _run(g, {"x": x, "g": gamma, "b": beta}, "y")
    mu = x.mean(-1, keepdims=True)
    var = x.var(-1, keepdims=True)
    expect = gamma * (x - mu) / np.sqrt(var + 1e-5) + beta
    assert np.allclose(got, expect, atol=1e-12)


def test_softmax_rows_and_known_case():
    g = OpGraph()
    g.op("softmax", g.input("x", (2, 2)), name="y")
    got = _run(g, {"x": np.array([[0.0, np.log(3.0)], [5.0, 5.0]])}, "y")
    assert np.allclose(got, [[0.25, 0.75], [0.5, 0.5]], atol=1e-12)
    rng = np.random.default_rng(4)
    g2 = OpGraph()
    g2.op("softmax", g2.input("x", (4, 7)), name="y")
    y = _run(g2, {"x": 5 * rng.standard_normal((4, 7))}, "y")
    assert np.allclose(y.sum(-1), 1.0, atol=1e-12)
    assert np.all(y > 0)


def test_embedding_forward_lookup_and_range_check():
    table = np.arange(12, dtype=np.float64).reshape(4, 3)
    ids = np.array([[0, 3], [2, 2]])
    g = OpGraph()
    g.op("embedding", g.input("t", (4, 3)), g.input("i", (2, 2), dtype_kind="i"),
         name="y")
    got = _run(g, {"t": table, "i": ids}, "y")
    assert np.array_equal(got, table[ids])
    with pytest.raises(ValueError, match="out of range"):
        _run(g, {"t": table, "i": np.array([[0, 4], [0, 0]])}, "y")


def test_mean_l1_forward():
    a = np.array([[1.0, -2.0], [0.5, 3.0]])
    b = np.array([[0.0, -2.0], [1.5, 1.0]])
    g = OpGraph()
    g.op("mean_l1", g.input("a", (2, 2)), g.input("b", (2, 2)), name="loss")
    got = _run(g, {"a": a, "b": b}, "loss")
    assert float(got) == pytest.approx(np.abs(a - b).mean(), abs=1e-15)


def test_cross_entropy_uniform_and_perfect_logits():
    g = OpGraph()
    g.op("cross_entropy", g.input("z", (3, 5)),
         g.input("t", (3,), dtype_kind="i"), name="loss")
    t = np.array([0, 3, 4])
    uniform = _run(g, {"z": np.zeros((3, 5)), "t": t}, "loss")
    assert float(uniform) == pytest.approx(np.log(5.0), abs=1e-12)
    confident = np.full((3, 5), -100.0)
    confident[np.arange(3), t] = 100.0
    assert float(_run(g, {"z": confident, "t": t}, "loss")) < 1e-12


def test_cross_entropy_gradient_closed_form():
    # d/dlogits of mean NLL is (softmax - onehot) / n; at uniform logits the
    # gradient is 1/(nC) everywhere except 1/n(1/C - 1) at the target.
    n, c = 4, 5
    g = OpGraph()
    g.op("cross_entropy", g.input("z", (n, c)),
         g.input("t", (n,), dtype_kind="i"), name="loss")
    t = np.array([1, 0, 4, 2])
    _, _, in_grads = g.backward(ParamStore(0), {"z": np.zeros((n, c)), "t": t},
                                "loss", input_grads=True, dtype=np.float64)
    expect = np.full((n, c), 1.0 / (n * c))
    expect[np.arange(n), t] = (1.0 / c - 1.0) / n
    assert np.allclose(in_grads["z"], expect, atol=1e-12)


def test_fsq_ste_forward_matches_quantizer_and_surrogate():
    levels = (8, 5, 5, 5)
    rng = np.random.default_rng(5)
    z = 2.0 * rng.standard_normal((6, 4))
    g = OpGraph()
    g.op("fsq_ste", g.input("z", (6, 4)), levels=levels, name="q")
    hard = _run(g, {"z": z}, "q")
    _, values = fsq_quantize(z, FsqCodebook(levels))
    assert np.allclose(hard, values, atol=1e-12)
    soft = _run(g, {"z": z}, "q", surrogate=True)
    assert np.allclose(soft, expit(z), atol=1e-12)


def test_fsq_ste_gradient_is_sigmoid_derivative():
    # Straight-through: the backward pass sees only the sigmoid envelope.
    z = np.array([[0.3, -1.2, 0.8, 2.0]])
    g = OpGraph()
    q = g.op("fsq_ste", g.input("z", (1, 4)), levels=(8, 5, 5, 5))
    g.op("mean_l1", q, g.input("t", (1, 4)), name="loss")
    _, _, in_grads = g.backward(ParamStore(0), {"z": z, "t": np.full((1, 4), 2.0)},
                                "loss", input_grads=True, dtype=np.float64)
    u = expit(z)
    # All quantized values < 2 so every L1 sign is -1.
    expect = -u * (1 - u) / 4.0
    assert np.allclose(in_grads["z"], expect, atol=1e-12)


def test_time_diff_and_pools_forward():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 5, 3))
    g = OpGraph()
    nx = g.input("x", (2, 5, 3))
    g.op("time_diff", nx, name="d")
    g.op("avg_pool_pairs", nx, name="p")
    g.op("mean_pool_time", nx, name="m")
    out = g.forward(ParamStore(0), {"x": x}, ["d", "p", "m"], dtype=np.float64)
    assert np.allclose(out["d"], np.diff(x, axis=1), atol=1e-15)
    expect_pool = np.stack([
        (x[:, 0] + x[:, 1]) / 2, (x[:, 2] + x[:, 3]) / 2, x[:, 4]], axis=1)
    assert np.allclose(out["p"], expect_pool, atol=1e-15)
    assert np.allclose(out["m"], x.mean(axis=1), atol=1e-15)


def test_avg_pool_even_length():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 4, 2))
    g = OpGraph()
    g.op("avg_pool_pairs", g.input("x", (1, 4, 2)), name="p")
    got = _run(g, {"x": x}, "p")
    assert got.shape == (1, 2, 2)
    assert np.allclose(got, (x[:, 0::2] + x[:, 1::2]) / 2, atol=1e-15)


def test_l2_normalize_forward():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((4, 6))
    g = OpGraph()
    g.op("l2_normalize", g.input("x", (4, 6)), name="y")
    y = _run(g, {"x": x}, "y")
    assert np.allclose(np.linalg.norm(y, axis=-1), 1.0, atol=1e-12)
    assert np.allclose(y, x / np.linalg.norm(x, axis=-1, keepdims=True), atol=1e-12)
    zero = _run(g, {"x": np.zeros((4, 6))}, "y")
    assert np.all(np.isfinite(zero)) and np.all(zero == 0.0)


def test_concat_and_gather_forward():
    rng = np.random.default_rng(9)
    a, b = rng.standard_normal((3, 2)), rng.standard_normal((3, 4))
    g = OpGraph()
    na, nb = g.input("a", (3, 2)), g.input("b", (3, 4))
    g.op("concat_last", na, nb, name="cat")
    g.op("gather_cols", g.node("cat"), index=(5, 0, 0, 3), name="picked")
    out = g.forward(ParamStore(0), {"a": a, "b": b}, ["cat", "picked"], dtype=np.float64)
    full = np.concatenate([a, b], axis=-1)
    assert np.array_equal(out["cat"], full)
    assert np.array_equal(out["picked"], full[:, [5, 0, 0, 3]])


def test_dropout_eval_identity_and_train_scaling():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((64, 64)) + 5.0
    g = OpGraph()
    g.op("dropout", g.input("x", (64, 64)), rate=0.25, name="y")
    assert np.array_equal(_run(g, {"x": x}, "y"), x)

    y = _run(g, {"x": x}, "y", train=True, drop_seed=3)
    kept = y != 0
    # Survivors are scaled by 1/(1-rate); drop fraction close to the rate.
    assert np.allclose(y[kept], x[kept] / 0.75, atol=1e-12)
    assert abs(1.0 - kept.mean() - 0.25) < 0.02
    again = _run(g, {"x": x}, "y", train=True, drop_seed=3)
    assert np.array_equal(y, again)
    other = _run(g, {"x": x}, "y", train=True, drop_seed=4)
    assert not np.array_equal(y, other)


def _conv_oracle(x, w, b, stride):
    # Naive same-padded strided correlation, independent of the library.
    B, T, Ci = x.shape
    K, _, Co = w.shape
    t_out = -(-T // stride)
    pad_total = max((t_out - 1) * stride + K - T, 0)
    left = pad_total // 2
    xp = np.zeros((B, T + pad_total, Ci))
    xp[:, left:left + T] = x
    y = np.zeros((B, t_out, Co))
    for t in range(t_out):
        for k in range(K):
            y[:, t] += xp[:, t * stride + k] @ w[k]
    return y + b


def test_conv1d_forward_matches_naive_oracle():
    rng = np.random.default_rng(11)
    for stride, T in ((1, 7), (2, 8), (2, 9), (3, 10)):
        x = rng.standard_normal((2, T, 3))
        w = rng.standard_normal((4, 3, 5))
        b = rng.standard_normal(5)
        g = OpGraph()
        g.op("conv1d", g.input("x", x.shape), g.input("w", w.shape),
             g.input("b", b.shape), stride=stride, name="y")
        got = _run(g, {"x": x, "w": w, "b": b}, "y")
        expect = _conv_oracle(x, w, b, stride)
        assert got.shape == expect.shape == (2, -(-T // stride), 5)
        assert np.allclose(got, expect, atol=1e-12)


def test_tconv1d_is_exact_adjoint_of_conv1d():
    # <conv(x), y> == <x, tconv(y)> for zero biases and shared weights.
    rng = np.random.default_rng(12)
    for stride, T in ((1, 6), (2, 9), (2, 12)):
        t_out = -(-T // stride)
        x = rng.standard_normal((2, T, 3))
        y = rng.standard_normal((2, t_out, 5))
        w = rng.standard_normal((4, 3, 5))
        gc = OpGraph()
        gc.op("conv1d", gc.input("x", x.shape), gc.input("w", w.shape),
              gc.input("b", (5,)), stride=stride, name="out")
        conv = _run(gc, {"x": x, "w": w, "b": np.zeros(5)}, "out")
        gt = OpGraph()
        gt.op("tconv1d", gt.input("y", y.shape), gt.input("w", w.shape),
              gt.input("b", (3,)), stride=stride, out_length=T, name="out")
        tconv = _run(gt, {"y": y, "w": w, "b": np.zeros(3)}, "out")
        assert tconv.shape == x.shape
        assert np.sum(conv * y) == pytest.approx(np.sum(x * tconv), rel=1e-10)


def test_fk6d_forward_matches_reference_kinematics():
    rng = np.random.default_rng(13)
    skel = default_skeleton()
    J = skel.joint_count
    flat = np.concatenate([
        rng.standard_normal((2, 4, 3)),
        (IDENTITY_6D + 0.2 * rng.standard_normal((2, 4, J, 6))).reshape(2, 4, 6 * J),
    ], axis=-1)
    g = OpGraph()
    g.op("fk6d", g.input("x", flat.shape), skeleton=skel, name="pos")
    got = _run(g, {"x": flat}, "pos")
    assert got.shape == (2, 4, J, 3)
    for i in range(2):
        expect = forward_kinematics(MotionClip.from_flat(flat[i]), skel)
        assert np.allclose(got[i], expect, atol=1e-10)


# ------------------------------------------------------------ gradient checks

def test_grad_linear():
    rng = np.random.default_rng(20)
    g = OpGraph()
    y = g.op("linear", g.input("x", (5, 3)), g.input("w", (3, 4)), g.input("b", (4,)))
    feeds = {"x": rng.standard_normal((5, 3)), "w": rng.standard_normal((3, 4)),
             "b": rng.standard_normal(4)}
    feeds.update(_l1_head(g, y, (5, 4), rng))
    _check(g, feeds)


def test_grad_matmul_transpose():
    rng = np.random.default_rng(21)
    g = OpGraph()
    y = g.op("matmul", g.input("a", (2, 3, 4)), g.input("b", (2, 4, 5)))
    yt = g.op("transpose_last2", y)
    feeds = {"a": rng.standard_normal((2, 3, 4)), "b": rng.standard_normal((2, 4, 5))}
    feeds.update(_l1_head(g, yt, (2, 5, 3), rng))
    _check(g, feeds)


def test_grad_elementwise_chain():
    rng = np.random.default_rng(22)
    g = OpGraph()
    nx, nv = g.input("x", (3, 4)), g.input("v", (4,))
    y = g.op("bias_const", g.op("scale", g.op("mul", g.op("add", nx, nv), nv),
                                factor=0.7), value=np.full(4, 0.3))
    feeds = {"x": rng.standard_normal((3, 4)), "v": rng.standard_normal(4) + 2.0}
    feeds.update(_l1_head(g, y, (3, 4), rng))
    _check(g, feeds)


def test_grad_activations():
    rng = np.random.default_rng(23)
    g = OpGraph()
    nx = g.input("x", (4, 6))
    y = g.op("silu", g.op("sigmoid", g.op("relu", nx)))
    x = rng.standard_normal((4, 6))
    x[np.abs(x) < 0.1] += 0.2  # keep clear of the relu kink
    feeds = {"x": x}
    feeds.update(_l1_head(g, y, (4, 6), rng))
    _check(g, feeds)


def test_grad_layer_norm():
    rng = np.random.default_rng(24)
    g = OpGraph()
    y = g.op("layer_norm", g.input("x", (3, 5, 8)), g.input("g", (8,)),
             g.input("b", (8,)))
    feeds = {"x": rng.standard_normal((3, 5, 8)),
             "g": rng.standard_normal(8) + 1.5, "b": rng.standard_normal(8)}
    feeds.update(_l1_head(g, y, (3, 5, 8), rng))
    _check(g, feeds, n_coords=96)


def test_grad_softmax():
    # The L1 target must sit inside the softmax output range: rows sum to 1,
    # so a target above every output makes the true logit gradient exactly 0
    # and the check would compare rounding noise against rounding noise.
    rng = np.random.default_rng(25)
    g = OpGraph()
    y = g.op("softmax", g.input("x", (4, 7)))
    target = g.input("target", (4, 7))
    g.op("mean_l1", y, target, name="loss")
    feeds = {"x": 0.5 * rng.standard_normal((4, 7)),
             "target": rng.uniform(0.05, 0.25, (4, 7))}
    _check(g, feeds)


def test_grad_embedding_table():
    rng = np.random.default_rng(26)
    g = OpGraph()
    y = g.op("embedding", g.input("t", (6, 4)),
             g.input("i", (3, 2), dtype_kind="i"))
    feeds = {"t": rng.standard_normal((6, 4)),
             "i": np.array([[0, 5], [2, 2], [4, 1]])}
    feeds.update(_l1_head(g, y, (3, 2, 4), rng))
    _check(g, feeds)


def test_grad_mean_l1_pair():
    rng = np.random.default_rng(27)
    g = OpGraph()
    g.op("mean_l1", g.input("a", (4, 5)), g.input("b", (4, 5)), name="loss")
    feeds = {"a": rng.standard_normal((4, 5)) + 2.0,
             "b": rng.standard_normal((4, 5)) - 2.0}
    _check(g, feeds)


def test_grad_cross_entropy():
    rng = np.random.default_rng(28)
    g = OpGraph()
    g.op("cross_entropy", g.input("z", (6, 9)),
         g.input("t", (6,), dtype_kind="i"), name="loss")
    feeds = {"z": rng.standard_normal((6, 9)),
             "t": rng.integers(0, 9, size=6)}
    _check(g, feeds)


def test_grad_fsq_ste_surrogate():
    rng = np.random.default_rng(29)
    g = OpGraph()
    y = g.op("fsq_ste", g.input("z", (5, 4)), levels=(8, 5, 5, 5))
    feeds = {"z": 2.0 * rng.standard_normal((5, 4))}
    feeds.update(_l1_head(g, y, (5, 4), rng))
    _check(g, feeds)


def test_grad_time_diff_and_pools():
    rng = np.random.default_rng(30)
    g = OpGraph()
    nx = g.input("x", (2, 7, 3))
    y = g.op("mean_pool_time", g.op("avg_pool_pairs", g.op("time_diff", nx)))
    feeds = {"x": rng.standard_normal((2, 7, 3))}
    feeds.update(_l1_head(g, y, (2, 3), rng))
    _check(g, feeds)


def test_grad_l2_normalize():
    rng = np.random.default_rng(31)
    g = OpGraph()
    y = g.op("l2_normalize", g.input("x", (4, 6)))
    feeds = {"x": rng.standard_normal((4, 6)) * 2.0}
    feeds.update(_l1_head(g, y, (4, 6), rng))
    _check(g, feeds)


def test_grad_concat_gather_with_duplicates():
    rng = np.random.default_rng(32)
    g = OpGraph()
    cat = g.op("concat_last", g.input("a", (3, 2)), g.input("b", (3, 3)))
    y = g.op("gather_cols", cat, index=(4, 0, 0, 2))
    feeds = {"a": rng.standard_normal((3, 2)), "b": rng.standard_normal((3, 3))}
    feeds.update(_l1_head(g, y, (3, 4), rng))
    _check(g, feeds)


def test_grad_dropout_under_fixed_mask():
    rng = np.random.default_rng(33)
    g = OpGraph()
    y = g.op("dropout", g.input("x", (6, 6)), rate=0.3)
    feeds = {"x": rng.standard_normal((6, 6)) + 4.0}
    feeds.update(_l1_head(g, y, (6, 6), rng))
    _check(g, feeds, train=True, drop_seed=11)


def test_grad_conv1d_strides():
    rng = np.random.default_rng(34)
    for stride in (1, 2):
        g = OpGraph()
        y = g.op("conv1d", g.input("x", (2, 9, 3)), g.input("w", (4, 3, 5)),
                 g.input("b", (5,)), stride=stride)
        feeds = {"x": rng.standard_normal((2, 9, 3)),
                 "w": rng.standard_normal((4, 3, 5)), "b": rng.standard_normal(5)}
        feeds.update(_l1_head(g, y, (2, -(-9 // stride), 5), rng))
        _check(g, feeds, n_coords=96)


def test_grad_tconv1d():
    rng = np.random.default_rng(35)
    g = OpGraph()
    y = g.op("tconv1d", g.input("x", (2, 5, 4)), g.input("w", (4, 3, 4)),
             g.input("b", (3,)), stride=2, out_length=10)
    feeds = {"x": rng.standard_normal((2, 5, 4)),
             "w": rng.standard_normal((4, 3, 4)), "b": rng.standard_normal(3)}
    feeds.update(_l1_head(g, y, (2, 10, 3), rng))
    _check(g, feeds, n_coords=96)


def test_grad_fk6d():
    rng = np.random.default_rng(36)
    skel = Skeleton(parents=(-1, 0, 1, 1),
                    offsets=rng.uniform(-0.4, 0.4, (4, 3)))
    g = OpGraph()
    y = g.op("fk6d", g.input("x", (2, 3, 27)), skeleton=skel)
    base = np.zeros((2, 3, 27))
    base[..., 3:] = np.tile(IDENTITY_6D, 4)
    x = base + 0.25 * rng.standard_normal((2, 3, 27))
    feeds = {"x": x}
    feeds.update(_l1_head(g, y, (2, 3, 4, 3), rng))
    _check(g, feeds, n_coords=96)


# ------------------------------------------------------------ graph mechanics

def test_graph_rejects_bad_builds():
    g = OpGraph()
    x = g.input("x", (2, 3))
    with pytest.raises(GraphBuildError, match="unknown op"):
        g.op("does_not_exist", x)
    with pytest.raises(GraphBuildError):
        g.op("linear", x, g.input("w", (4, 4)), g.input("b", (4,)))
    with pytest.raises(GraphBuildError, match="already used"):
        g.op("relu", x, name="x")
    other = OpGraph()
    with pytest.raises(GraphBuildError, match="another graph"):
        other.op("relu", x)


def test_input_registration_is_idempotent_on_matching_shape():
    g = OpGraph()
    x = g.input("x", (2, 3))
    assert g.input("x", (2, 3)) is x
    with pytest.raises(GraphBuildError, match="already used"):
        g.input("x", (3, 2))


def test_backward_requires_scalar_loss():
    g = OpGraph()
    g.op("relu", g.input("x", (2, 2)), name="y")
    with pytest.raises(ShapeError, match="scalar"):
        g.backward(ParamStore(0), {"x": np.ones((2, 2))}, "y")


def test_forward_validates_feeds():
    g = OpGraph()
    g.op("relu", g.input("x", (2, 3)), name="y")
    with pytest.raises(ShapeError, match="expects shape"):
        g.forward(ParamStore(0), {"x": np.ones((3, 2))}, "y")
    with pytest.raises(ShapeError, match="missing input"):
        g.forward(ParamStore(0), {}, "y")
    with pytest.raises(ShapeError, match="does not name an input"):
        g.forward(ParamStore(0), {"x": np.ones((2, 3)), "z": np.ones(2)}, "y")
    with pytest.raises(KeyError, match="no node"):
        g.node("missing")
