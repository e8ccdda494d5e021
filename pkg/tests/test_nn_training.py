"""Optimizer step rules, the decay schedule, and parameter-store behavior."""

import numpy as np
import pytest

from chorekit.errors import ShapeError, ValidationError
from chorekit.nn.optim import AdamState, adam_step, sgd_step, step_lr
from chorekit.nn.params import ParamStore


def _store(**arrays) -> ParamStore:
    store = ParamStore(0)
    for name, value in arrays.items():
        store.create_zeros(name, np.shape(value))
        store.set(name, value)
    return store


def test_sgd_step_closed_form():
    w0 = np.array([1.0, -2.0, 0.5], dtype=np.float32)
    g = np.array([0.5, 0.5, -1.0], dtype=np.float32)
    store = _store(w=w0)
    sgd_step(store, {"w": g}, lr=0.1)
    assert np.array_equal(store.get("w"), w0 - np.float32(0.1) * g)


def test_sgd_leaves_params_without_grads_untouched():
    store = _store(w=np.ones(3, dtype=np.float32), b=np.full(2, 7.0, dtype=np.float32))
    sgd_step(store, {"w": np.ones(3)}, lr=1.0)
    assert np.array_equal(store.get("b"), np.full(2, 7.0, dtype=np.float32))
    assert np.array_equal(store.get("w"), np.zeros(3, dtype=np.float32))


def test_sgd_rejects_shape_mismatch_and_unknown_name():
    store = _store(w=np.ones(3, dtype=np.float32))
    with pytest.raises(ShapeError, match="gradient"):
        sgd_step(store, {"w": np.ones(4)}, lr=0.1)
    with pytest.raises(KeyError, match="no parameter"):
        sgd_step(store, {"nope": np.ones(3)}, lr=0.1)


def test_adam_first_step_closed_form():
    # With zero state the bias corrections cancel exactly: the first update
    # is -lr * g / (|g| + eps), i.e. a signed step of nearly lr per weight.
    w0 = np.array([0.0, 1.0, -1.0], dtype=np.float32)
    g = np.array([2.0, -0.5, 1e-4], dtype=np.float32)
    store = _store(w=w0)
    adam_step(store, {"w": g.copy()}, AdamState(store), lr=0.01)
    expect = w0 - 0.01 * g / (np.abs(g) + 1e-8)
    assert np.allclose(store.get("w"), expect, atol=1e-7)


def test_adam_matches_independent_reimplementation():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(8).astype(np.float32)
    store = _store(w=w.copy())
    state = AdamState(store)
    lr, b1, b2, eps = 3e-3, 0.9, 0.999, 1e-8

    m = np.zeros(8)
    v = np.zeros(8)
    ref = w.astype(np.float64)
    for t in range(1, 11):
        g = rng.standard_normal(8).astype(np.float32)
        adam_step(store, {"w": g.copy()}, state, lr=lr)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g.astype(np.float64) ** 2
        ref = ref - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    assert state.t == 10
    assert np.allclose(store.get("w"), ref, atol=1e-5)


def test_adam_partial_grads_leave_other_state_alone():
    store = _store(w=np.ones(2, dtype=np.float32), b=np.ones(2, dtype=np.float32))
    state = AdamState(store)
    adam_step(store, {"w": np.ones(2)}, state, lr=0.1)
    assert np.array_equal(store.get("b"), np.ones(2, dtype=np.float32))
    assert np.array_equal(state.m["b"], np.zeros(2, dtype=np.float32))
    assert np.array_equal(state.v["b"], np.zeros(2, dtype=np.float32))


def test_adam_drives_quadratic_to_target():
    target = np.array([3.0, -1.5, 0.25], dtype=np.float32)
    store = _store(w=np.zeros(3, dtype=np.float32))
    state = AdamState(store)
    for _ in range(400):
        grad = 2.0 * (store.get("w") - target)
        adam_step(store, {"w": grad}, state, lr=0.05)
    assert np.max(np.abs(store.get("w") - target)) < 1e-3


def test_step_lr_schedule():
    assert step_lr(1e-3, 0) == 1e-3
    assert step_lr(1e-3, 4) == 1e-3
    assert step_lr(1e-3, 5) == pytest.approx(1e-3 * 0.33, rel=1e-12)
    assert step_lr(1e-3, 9) == pytest.approx(1e-3 * 0.33, rel=1e-12)
    assert step_lr(1e-3, 10) == pytest.approx(1e-3 * 0.33**2, rel=1e-12)
    assert step_lr(2.0, 6, step_size=2, gamma=0.5) == pytest.approx(0.25, rel=1e-12)


def test_step_lr_ratio_at_first_drop_is_exact():
    lrs = [step_lr(7e-4, epoch) for epoch in range(8)]
    assert lrs[5] / lrs[4] == pytest.approx(0.33, rel=1e-12)
    assert lrs[4] == lrs[0]


def test_param_store_init_is_per_name_and_order_free():
    a = ParamStore(3)
    wa = a.create("w", (4, 4), fan_in=4)
    ba = a.create("b", (4,), scale=0.1)
    b = ParamStore(3)
    bb = b.create("b", (4,), scale=0.1)
    wb = b.create("w", (4, 4), fan_in=4)
    assert np.array_equal(wa, wb)
    assert np.array_equal(ba, bb)
    assert np.all(np.abs(wa) <= np.sqrt(1.0 / 4))
    assert np.all(np.abs(ba) <= 0.1)
    assert wa.dtype == np.float32
    other = ParamStore(4).create("w", (4, 4), fan_in=4)
    assert not np.array_equal(wa, other)


def test_param_store_validation():
    store = ParamStore(0)
    store.create("w", (2, 2), fan_in=2)
    with pytest.raises(ValidationError, match="already exists"):
        store.create("w", (2, 2), fan_in=2)
    with pytest.raises(ValidationError, match="fan_in or an explicit scale"):
        store.create("u", (2,))
    with pytest.raises(ShapeError):
        store.set("w", np.zeros((3, 3)))
    with pytest.raises(KeyError):
        store.get("missing")
    z = store.create_zeros("z", (3,))
    assert np.array_equal(z, np.zeros(3, dtype=np.float32))


def test_param_store_bundle_round_trip():
    store = ParamStore(9)
    store.create("enc.w", (3, 5), fan_in=3)
    store.create_zeros("enc.b", (5,))
    back = ParamStore.from_bundle(store.to_bundle())
    assert sorted(back.names()) == sorted(store.names())
    for name in store.names():
        got = back.get(name)
        assert got.dtype == np.float32
        assert np.array_equal(got, store.get(name))
