"""Built-in invariant suite: masks, scan, FSQ, gradients, FID Gaussians.

Each group checks the library against a small re-derivation written here,
independent of the implementation modules. `run_selftest` returns one
(group, passed, detail) row per group; `overrides` lets a test inject a
deliberately wrong implementation to prove the suite can fail.
"""

from __future__ import annotations

import numpy as np

from . import fsq, retrieval, seqgen
from ._kernels import jacobi_eigh
from .nn.gradcheck import grad_check
from .nn.graph import OpGraph
from .nn.params import ParamStore
from .rng import SeededRng

GROUPS = ("masks", "scan", "fsq", "grad", "fid")


def _check_masks(build_mask) -> str:
    step, stride, t = 30, 15, 96
    mask = build_mask(t, step, stride).allow
    for q in range(t):
        if q < step:
            start = 0
        else:
            over = q - step + 1
            start = stride * ((over + stride - 1) // stride)
        for k in range(t):
            want = start <= k <= q
            if mask[q, k] != want:
                return f"mask({q},{k}) = {mask[q, k]}, rule says {want}"
        width = int(mask[q].sum())
        if q < step and width != q + 1:
            return f"row {q}: width {width} != full prefix {q + 1}"
        if q >= step and not (step - stride < width <= step):
            return f"row {q}: width {width} outside ({step - stride}, {step}]"
        if mask[q, q + 1:].any():
            return f"row {q} attends the future"
    return ""


def _check_scan(scan_fused) -> str:
    rng = SeededRng(101).spawn("selftest-scan")
    for case in range(10):
        t = int(rng.integers(1, 64)[0]) + 1
        d = int(rng.integers(1, 6)[0]) + 1
        n = int(rng.integers(1, 12)[0]) + 1
        abar = rng.uniform((t, d, n), 0.0, 0.99)
        bx = rng.normal((t, d, n))
        c = rng.normal((t, n))
        got = scan_fused(abar, bx, c)
        h = np.zeros((d, n))
        want = np.empty((t, d))
        for i in range(t):
            h = abar[i] * h + bx[i]
            want[i] = h @ c[i]
        err = float(np.abs(got - want).max())
        if err > 1e-5:
            return f"case {case}: scan deviates from recurrence by {err:.2e}"
    ab, bb = seqgen.discretize(np.array([-1.0]), np.array([1.0]), np.log(2.0))
    if abs(ab[0] - 0.5) > 1e-12 or abs(bb[0] - 0.5) > 1e-12:
        return f"scalar closed form broke: abar {ab[0]}, bbar {bb[0]}"
    return ""


def _check_fsq(codebook) -> str:
    if codebook.size != 1000:
        return f"codebook size {codebook.size} != 1000"
    ids = np.arange(codebook.size)
    levels = fsq.index_to_levels(ids, codebook)
    back = fsq.levels_to_index(levels, codebook)
    if not np.array_equal(back, ids):
        return "level/index round trip lost codes"
    lat = fsq.canonical_latents(codebook)
    lv, _ = fsq.fsq_quantize(lat, codebook)
    if not np.array_equal(fsq.levels_to_index(lv, codebook), ids):
        return "canonical latents do not hit every code"
    return ""


def _check_grad(threshold: float) -> str:
    rng = SeededRng(55).spawn("selftest-grad")
    g = OpGraph()
    x = g.input("x", (3, 7, 5))
    w = g.param("w", (5, 4))
    b = g.param("b", (4,))
    y = g.op("sigmoid", g.op("linear", x, w, b))
    ref = g.input("ref", (3, 7, 4))
    g.op("mean_l1", y, ref, name="loss")
    store = ParamStore(8)
    store.create("w", (5, 4), fan_in=5)
    store.create("b", (4,), fan_in=5)
    feeds = {"x": rng.normal((3, 7, 5)), "ref": rng.normal((3, 7, 4))}
    worst = grad_check(g, store, feeds, "loss", n_coords=64, seed=2)
    if worst >= threshold:
        return f"linear/sigmoid/l1 grad error {worst:.2e} >= {threshold:g}"

    g2 = OpGraph()
    x2 = g2.input("x", (2, 9, 3))
    w2 = g2.param("w", (4, 3, 5))
    b2 = g2.param("b", (5,))
    conv = g2.op("conv1d", x2, w2, b2, stride=2)
    ref2 = g2.input("ref", (2, 5, 5))
    g2.op("mean_l1", conv, ref2, name="loss")
    store2 = ParamStore(9)
    store2.create("w", (4, 3, 5), fan_in=12)
    store2.create("b", (5,), fan_in=12)
    feeds2 = {"x": rng.normal((2, 9, 3)), "ref": rng.normal((2, 5, 5))}
    worst2 = grad_check(g2, store2, feeds2, "loss", n_coords=64, seed=3)
    if worst2 >= threshold:
        return f"conv1d grad error {worst2:.2e} >= {threshold:g}"
    return ""


def _check_fid(fid_fn) -> str:
    rng = SeededRng(77).spawn("selftest-fid")
    f = rng.normal((48, 8))
    self_fid = fid_fn(f, f)
    if not self_fid < 1e-4:
        return f"fid(a,a) = {self_fid:.2e} not < 1e-4"
    stats_a = retrieval.GaussianStats(np.zeros(4), np.eye(4))
    stats_b = retrieval.GaussianStats(np.ones(4), 4.0 * np.eye(4))
    closed = retrieval.fid_from_stats(stats_a, stats_b)
    if abs(closed - 8.0) > 1e-6:
        return f"diagonal fixture fid {closed} != 8"
    for k in range(10):
        dim = 8 + 3 * k
        m = rng.normal((dim, dim))
        spd = m @ m.T + dim * np.eye(dim)
        vals, vecs = jacobi_eigh(spd)
        recon = (vecs * vals) @ vecs.T
        rel = np.linalg.norm(recon - spd) / np.linalg.norm(spd)
        if rel > 1e-6:
            return f"eigensolver reconstruction error {rel:.2e} at dim {dim}"
    return ""


def run_selftest(overrides: dict | None = None) -> list[tuple[str, bool, str]]:
    """Run all groups; overrides maps group name -> replacement subject."""
    overrides = overrides or {}
    subjects = {
        "masks": overrides.get("masks", seqgen.build_swa_mask),
        "scan": overrides.get("scan", seqgen.ssm_scan_fused),
        "fsq": overrides.get("fsq", fsq.FsqCodebook(fsq.DEFAULT_LEVELS)),
        "grad": overrides.get("grad", 1e-4),
        "fid": overrides.get("fid", retrieval.fid),
    }
    checks = {
        "masks": _check_masks,
        "scan": _check_scan,
        "fsq": _check_fsq,
        "grad": _check_grad,
        "fid": _check_fid,
    }
    results = []
    for group in GROUPS:
        try:
            detail = checks[group](subjects[group])
        except Exception as exc:  # a crashing subject is a failing group
            detail = f"{type(exc).__name__}: {exc}"
        results.append((group, detail == "", detail))
    return results


def main(overrides: dict | None = None) -> int:
    results = run_selftest(overrides)
    for group, ok, detail in results:
        line = f"selftest {group}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" ({detail})"
        print(line)
    return 0 if all(ok for _, ok, _ in results) else 1
