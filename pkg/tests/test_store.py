"""Parameter store: Adam updates, freezing, snapshots, checkpoint files."""

import numpy as np
import pytest

from spoofgraph.store import GradientError, ParameterStore, glorot


def adam_oracle(value, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Independent reimplementation: apply the given gradient sequence."""
    v = value.copy()
    m = np.zeros_like(v)
    s = np.zeros_like(v)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        s = b2 * s + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        s_hat = s / (1 - b2 ** t)
        v = v - lr * m_hat / (np.sqrt(s_hat) + eps)
    return v


def test_adam_matches_oracle_over_steps():
    rng = np.random.default_rng(0)
    init = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(4)]
    store = ParameterStore()
    p = store.create("w", init.copy())
    for g in grads:
        p.grad = g.copy()
        store.adam_step(lr=1e-3)
    assert np.allclose(p.value, adam_oracle(init, grads), atol=1e-15)
    assert store.step_count == 4


def test_adam_first_step_is_signlike():
    store = ParameterStore()
    p = store.create("w", np.zeros(3))
    p.grad = np.array([5.0, -0.01, 2.0])
    store.adam_step(lr=1e-3)
    # bias correction makes the first update ~ -lr * sign(grad)
    assert np.allclose(p.value, [-1e-3, 1e-3, -1e-3], rtol=1e-6)


def test_adam_clears_grads_and_skips_gradless():
    store = ParameterStore()
    a = store.create("a", np.ones(2))
    b = store.create("b", np.ones(2))
    a.grad = np.ones(2)
    store.adam_step()
    assert a.grad is None
    assert np.allclose(b.value, 1.0)


def test_frozen_prefix_not_updated():
    store = ParameterStore()
    a = store.create("enc.w", np.ones(2))
    b = store.create("clf.w", np.ones(2))
    store.freeze("enc.")
    a.grad = np.ones(2)
    b.grad = np.ones(2)
    store.adam_step()
    assert np.allclose(a.value, 1.0)
    assert not np.allclose(b.value, 1.0)
    assert store.is_frozen("enc.w") and not store.is_frozen("clf.w")


def test_nonfinite_grad_names_parameter():
    store = ParameterStore()
    p = store.create("enc.bad", np.ones(2))
    p.grad = np.array([1.0, np.nan])
    with pytest.raises(GradientError, match="enc.bad"):
        store.adam_step()


def test_duplicate_name_rejected():
    store = ParameterStore()
    store.create("w", np.ones(1))
    with pytest.raises(ValueError):
        store.create("w", np.ones(1))


def test_snapshot_restore_roundtrip():
    store = ParameterStore()
    p = store.create("w", np.arange(4.0))
    snap = store.snapshot()
    p.grad = np.ones(4)
    store.adam_step()
    assert not np.allclose(p.value, np.arange(4.0))
    store.restore(snap)
    assert np.array_equal(p.value, np.arange(4.0))


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    store = ParameterStore()
    store.create("enc.w", rng.normal(size=(3, 4)))
    store.create("meta.scale", np.asarray(2.5))          # 0-d scalar
    store.create("hga.v", rng.normal(size=7))
    store.freeze("meta.")
    path = tmp_path / "ck"
    store.save(str(path))
    loaded = ParameterStore.load(str(path))
    assert list(loaded.names()) == ["enc.w", "meta.scale", "hga.v"]
    for name, p in store.items():
        assert loaded[name].value.shape == p.value.shape
        assert loaded[name].value.tobytes() == p.value.tobytes()
    assert loaded.is_frozen("meta.scale") and not loaded.is_frozen("enc.w")
    # second save of the loaded store is byte-identical
    path2 = tmp_path / "ck2"
    loaded.save(str(path2))
    assert (path / "params.bin").read_bytes() == (path2 / "params.bin").read_bytes()
    assert (path / "manifest.txt").read_text() == (path2 / "manifest.txt").read_text()


def test_load_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        ParameterStore.load(str(tmp_path / "nope"))


def test_glorot_bounds_and_determinism():
    r1 = glorot(np.random.default_rng(3), 10, 20)
    r2 = glorot(np.random.default_rng(3), 10, 20)
    assert r1.shape == (10, 20)
    assert np.array_equal(r1, r2)
    limit = np.sqrt(6.0 / 30.0)
    assert np.all(np.abs(r1) <= limit)
