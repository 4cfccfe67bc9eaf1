"""Sequence encoder: solver accuracy, gate equations, batching semantics."""

import numpy as np
import pytest

from spoofgraph import autodiff as ad
from spoofgraph import ode_encoder as ode
from spoofgraph.store import ParameterStore, glorot

H = 4
D = 3


def make_store(seed=0, d_in=D, h_dim=H):
    store = ParameterStore()
    ode.init_encoder_params(store, d_in, h_dim, np.random.default_rng(seed))
    return store


def decay_store(h_dim=H, eps=1e-5):
    """Dynamics tuned to dh/dt = -h up to O(eps^2): tanh(eps*h) @ (-I/eps)."""
    store = ParameterStore()
    store.create("enc.f_w1", eps * np.eye(h_dim))
    store.create("enc.f_b1", np.zeros(h_dim))
    store.create("enc.f_w2", -np.eye(h_dim) / eps)
    store.create("enc.f_b2", np.zeros(h_dim))
    return store


# ------------------------------------------------------------- gru oracle

def gru_oracle(x, h, store, prefix="enc."):
    """Second, independent evaluation of the gate equations in plain numpy."""
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    W = {k: store[prefix + k].value for k in
         ("gru_wz", "gru_uz", "gru_bz", "gru_wr", "gru_ur", "gru_br",
          "gru_wh", "gru_uh", "gru_bh")}
    z = sig(x @ W["gru_wz"] + h @ W["gru_uz"] + W["gru_bz"])
    r = sig(x @ W["gru_wr"] + h @ W["gru_ur"] + W["gru_br"])
    n = np.tanh(x @ W["gru_wh"] + r * (h @ W["gru_uh"]) + W["gru_bh"])
    return (1.0 - z) * n + z * h


def test_gru_matches_independent_oracle():
    store = make_store(seed=3)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, D))
    h = rng.normal(size=(5, H))
    got = ode.gru_cell(x, ad.Tensor(h), store).value
    assert np.max(np.abs(got - gru_oracle(x, h, store))) <= 1e-12


def test_gru_zero_params_halves_state():
    store = ParameterStore()
    for gate in ("z", "r", "h"):
        store.create(f"enc.gru_w{gate}", np.zeros((D, H)))
        store.create(f"enc.gru_u{gate}", np.zeros((H, H)))
        store.create(f"enc.gru_b{gate}", np.zeros(H))
    h = np.random.default_rng(0).normal(size=(2, H))
    out = ode.gru_cell(np.ones((2, D)), ad.Tensor(h), store).value
    assert np.allclose(out, 0.5 * h, atol=1e-15)


# ------------------------------------------------------------ ode solver

def test_rk4_matches_analytic_decay():
    store = decay_store()
    h0 = np.array([1.0, -2.0, 0.5, 3.0])
    out = ode.ode_int(store, h0, 0.0, 1.0, solver="rk4", steps=10).value
    assert np.max(np.abs(out - h0 * np.exp(-1.0))) <= 1e-5


def test_convergence_orders():
    store = decay_store()
    h0 = np.array([1.0, -2.0, 0.5, 3.0])
    exact = h0 * np.exp(-1.0)

    def err(solver, steps):
        out = ode.ode_int(store, h0, 0.0, 1.0, solver=solver, steps=steps).value
        return np.max(np.abs(out - exact))

    order_euler = np.log2(err("euler", 16) / err("euler", 32))
    order_rk4 = np.log2(err("rk4", 4) / err("rk4", 8))
    assert abs(order_euler - 1.0) <= 0.3, order_euler
    assert abs(order_rk4 - 4.0) <= 0.3, order_rk4


def test_degenerate_interval_identity():
    store = make_store()
    h0 = np.random.default_rng(1).normal(size=(2, H))
    out = ode.ode_int(store, ad.Tensor(h0), 5.0, 5.0, steps=3).value
    assert np.array_equal(out, h0)


def test_reversed_interval_rejected():
    store = make_store()
    with pytest.raises(ode.IntervalError):
        ode.ode_int(store, np.zeros(H), 1.0, 0.0)


def test_divergence_reports_step():
    store = make_store()
    bad = np.full(H, np.nan)
    with pytest.raises(ode.DivergenceError, match="step 1"):
        ode.ode_int(store, bad, 0.0, 1.0, steps=4)


def test_per_row_intervals():
    store = decay_store()
    h0 = np.ones((3, H))
    t1 = np.array([0.5, 1.0, 2.0])
    out = ode.ode_int(store, ad.Tensor(h0), np.zeros(3), t1, "rk4", 20).value
    for i, t in enumerate(t1):
        assert np.allclose(out[i], np.exp(-t), atol=1e-6)


def test_solver_gradients_flow():
    store = make_store(seed=9)
    h0 = ad.Tensor(np.random.default_rng(2).normal(size=(1, H)), requires_grad=True)
    out = ode.ode_int(store, h0, 0.0, 1.0, "rk4", 3)
    ad.tensor_sum(out).backward()
    assert h0.grad is not None and np.all(np.isfinite(h0.grad))
    assert store["enc.f_w1"].grad is not None


# ------------------------------------------------------- sequence encoding

def test_observation_sequence_validation():
    with pytest.raises(ValueError):
        ode.ObservationSequence([], np.zeros((0, D)))
    with pytest.raises(ValueError):
        ode.ObservationSequence([1.0, 0.5], np.zeros((2, D)))   # decreasing
    with pytest.raises(ValueError):
        ode.ObservationSequence([0.0, 1.0], np.zeros((3, D)))   # length clash
    seq = ode.ObservationSequence([0.0, 0.0, 1.0], np.zeros((3, D)))  # ties ok
    assert len(seq) == 3


def test_single_observation_is_one_gru_step():
    store = make_store(seed=5)
    x = np.random.default_rng(6).normal(size=(1, D))
    seq = ode.ObservationSequence([4.0], x)
    got = ode.encode_sequence(seq, store, H)
    want = ode.gru_cell(x, ad.Tensor(np.zeros((1, H))), store).value[0]
    assert np.max(np.abs(got.value - want)) <= 1e-12


def test_encode_matches_manual_composition():
    store = make_store(seed=7)
    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, D))
    times = np.array([0.0, 0.7, 2.1])
    seq = ode.ObservationSequence(times, x)
    got = ode.encode_sequence(seq, store, H, solver="rk4", steps=4).value

    h = ode.gru_cell(x[0:1], ad.Tensor(np.zeros((1, H))), store)
    h = ode.ode_int(store, h, times[0], times[1], "rk4", 4)
    h = ode.gru_cell(x[1:2], h, store)
    h = ode.ode_int(store, h, times[1], times[2], "rk4", 4)
    h = ode.gru_cell(x[2:3], h, store)
    assert np.max(np.abs(got - h.value[0])) <= 1e-12


def test_gap_sensitivity_only_with_ode():
    store = make_store(seed=11)
    x = np.random.default_rng(12).normal(size=(3, D))
    a = ode.ObservationSequence([0.0, 1.0, 2.0], x)
    b = ode.ObservationSequence([0.0, 5.0, 6.0], x)
    with_ode = [ode.encode_sequence(s, store, H).value for s in (a, b)]
    assert np.max(np.abs(with_ode[0] - with_ode[1])) > 1e-6
    without = [ode.encode_sequence(s, store, H, use_ode=False).value for s in (a, b)]
    assert np.array_equal(without[0], without[1])


def test_mixed_length_batch_reassembles_input_order():
    store = make_store(seed=13)
    rng = np.random.default_rng(14)
    seqs = []
    for length in (3, 1, 2, 1, 3):
        t = np.cumsum(rng.uniform(0.5, 2.0, size=length))
        seqs.append(ode.ObservationSequence(t, rng.normal(size=(length, D))))
    batch = ode.encode_batch(seqs, store, H).value
    for i, s in enumerate(seqs):
        single = ode.encode_sequence(s, store, H).value
        assert np.max(np.abs(batch[i] - single)) <= 1e-12


def test_batch_rows_independent():
    store = make_store(seed=15)
    rng = np.random.default_rng(16)
    base = [ode.ObservationSequence(np.arange(2.0), rng.normal(size=(2, D)))
            for _ in range(4)]
    full = ode.encode_batch(base, store, H).value
    swapped = ode.encode_batch(base[:2] + [ode.ObservationSequence(
        np.arange(2.0), rng.normal(size=(2, D)))] + base[3:], store, H).value
    assert np.array_equal(full[[0, 1, 3]], swapped[[0, 1, 3]])


def test_rnn_variant_ignores_integration_params():
    store = make_store(seed=17)
    rng = np.random.default_rng(18)
    seqs = [ode.ObservationSequence(np.cumsum(rng.uniform(1, 3, size=3)),
                                    rng.normal(size=(3, D)))]
    out1 = ode.encode_rnn_variant(seqs, store, H).value
    store["enc.f_w2"].value = store["enc.f_w2"].value + 100.0
    out2 = ode.encode_rnn_variant(seqs, store, H).value
    assert np.array_equal(out1, out2)


def test_median_gap_scale():
    seqs = [ode.ObservationSequence([0.0, 2.0, 6.0], np.zeros((3, D))),
            ode.ObservationSequence([0.0, 0.0, 8.0], np.zeros((3, D)))]
    # positive gaps: 2, 4, 8 -> median 4
    assert ode.median_gap_scale(seqs) == 0.25
    singles = [ode.ObservationSequence([1.0], np.zeros((1, D)))]
    assert ode.median_gap_scale(singles) == 1.0
