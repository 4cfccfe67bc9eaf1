"""Latent-state sequence encoder: learned ODE flow between observations,
gated recurrent update at each observation.

The dynamics net is a two-layer perceptron on the hidden state (tanh in the
middle, linear out) and is autonomous: elapsed time enters only through the
integration interval lengths.  Fixed-step explicit solvers are unrolled so
gradients flow through every stage.
"""

import numpy as np

from . import autodiff as ad
from .store import glorot


class IntervalError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


class ObservationSequence:
    """Ordered (time, feature-vector) pairs for one entity.

    Times must be non-decreasing (simultaneous events are allowed and are
    integrated over a zero-length interval); all observations share one width.
    """

    def __init__(self, times, observations):
        self.times = np.asarray(times, dtype=np.float64)
        self.observations = np.asarray(observations, dtype=np.float64)
        if self.times.ndim != 1 or len(self.times) == 0:
            raise ValueError("sequence needs at least one observation")
        if self.observations.ndim != 2 or self.observations.shape[0] != len(self.times):
            raise ValueError("observations must be (len(times), d)")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("observation times must be non-decreasing")

    def __len__(self):
        return len(self.times)


def init_encoder_params(store, d_in, h_dim, rng, prefix="enc."):
    """Register dynamics-net and GRU weights under ``prefix``."""
    store.create(prefix + "f_w1", glorot(rng, h_dim, h_dim))
    store.create(prefix + "f_b1", np.zeros(h_dim))
    store.create(prefix + "f_w2", glorot(rng, h_dim, h_dim))
    store.create(prefix + "f_b2", np.zeros(h_dim))
    for gate in ("z", "r", "h"):
        store.create(prefix + f"gru_w{gate}", glorot(rng, d_in, h_dim))
        store.create(prefix + f"gru_u{gate}", glorot(rng, h_dim, h_dim))
        store.create(prefix + f"gru_b{gate}", np.zeros(h_dim))


def dynamics(h, store, prefix="enc."):
    """dh/dt as a function of the state: W2 tanh(W1 h + b1) + b2."""
    hidden = ad.tanh(ad.matmul(h, store[prefix + "f_w1"]) + store[prefix + "f_b1"])
    return ad.matmul(hidden, store[prefix + "f_w2"]) + store[prefix + "f_b2"]


def gru_cell(x, h, store, prefix="enc."):
    """One gated recurrent update.

    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    n = tanh(x Wh + r * (h Uh) + bh), output (1 - z) * n + z * h.
    """
    x = ad.as_tensor(x)
    z = ad.sigmoid(ad.matmul(x, store[prefix + "gru_wz"]) + ad.matmul(h, store[prefix + "gru_uz"]) + store[prefix + "gru_bz"])
    r = ad.sigmoid(ad.matmul(x, store[prefix + "gru_wr"]) + ad.matmul(h, store[prefix + "gru_ur"]) + store[prefix + "gru_br"])
    n = ad.tanh(ad.matmul(x, store[prefix + "gru_wh"]) + ad.mul(r, ad.matmul(h, store[prefix + "gru_uh"])) + store[prefix + "gru_bh"])
    return (1.0 - z) * n + z * h


def _step(h, dt, store, prefix, solver):
    if solver == "euler":
        return h + dt * dynamics(h, store, prefix)
    if solver == "rk4":
        k1 = dynamics(h, store, prefix)
        k2 = dynamics(h + 0.5 * dt * k1, store, prefix)
        k3 = dynamics(h + 0.5 * dt * k2, store, prefix)
        k4 = dynamics(h + dt * k3, store, prefix)
        return h + (dt * (1.0 / 6.0)) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    raise ValueError(f"unknown solver {solver!r}")


def ode_int(store, h0, t0, t1, solver="rk4", steps=4, prefix="enc."):
    """Integrate the learned dynamics over [t0, t1] with a fixed-step solver.

    h0 may be a single state vector or a (B, h) batch; t0/t1 scalars or
    per-row arrays.  Degenerate intervals (t1 == t0) return h0 unchanged.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    h = ad.as_tensor(h0)
    single = h.value.ndim == 1
    if single:
        h = ad.reshape(h, (1, -1))
    t0 = np.atleast_1d(np.asarray(t0, dtype=np.float64))
    t1 = np.atleast_1d(np.asarray(t1, dtype=np.float64))
    if np.any(t1 < t0):
        raise IntervalError(f"t1 < t0 in integration interval ({t0} -> {t1})")
    dt = ((t1 - t0) / steps).reshape(-1, 1)
    for k in range(steps):
        h = _step(h, dt, store, prefix, solver)
        if not np.all(np.isfinite(h.value)):
            raise DivergenceError(f"non-finite state at solver step {k + 1} of {steps}")
    return ad.reshape(h, (-1,)) if single else h


def encode_batch(seqs, store, h_dim, solver="rk4", steps=4, time_scale=1.0,
                 use_ode=True, prefix="enc."):
    """Encode each sequence independently; row i is sequence i's final state.

    Sequences are grouped by exact length so every group runs in lockstep
    with no padding; results are re-assembled in input order.
    """
    if len(seqs) == 0:
        raise ValueError("empty batch")
    buckets = {}
    for i, seq in enumerate(seqs):
        buckets.setdefault(len(seq), []).append(i)
    order = []
    outputs = []
    for length in sorted(buckets):
        idx = buckets[length]
        order.extend(idx)
        x = np.stack([seqs[i].observations for i in idx])  # (B, L, d)
        t = np.stack([seqs[i].times for i in idx]) * time_scale
        h = ad.Tensor(np.zeros((len(idx), h_dim)))
        for j in range(length):
            if use_ode and j > 0:
                h = ode_int(store, h, t[:, j - 1], t[:, j], solver, steps, prefix)
            h = gru_cell(x[:, j, :], h, store, prefix)
        outputs.append(h)
    stacked = outputs[0] if len(outputs) == 1 else ad.concat(outputs, axis=0)
    rank = np.empty(len(seqs), dtype=np.int64)
    rank[np.asarray(order)] = np.arange(len(seqs))
    return ad.gather_rows(stacked, rank)


def encode_sequence(seq, store, h_dim, solver="rk4", steps=4, time_scale=1.0,
                    use_ode=True, prefix="enc."):
    """Final hidden state of one sequence (batch-of-one path)."""
    out = encode_batch([seq], store, h_dim, solver, steps, time_scale, use_ode, prefix)
    return ad.reshape(out, (-1,))


def encode_rnn_variant(seqs, store, h_dim, prefix="enc."):
    """Plain GRU chain over the observations; inter-observation gaps ignored."""
    return encode_batch(seqs, store, h_dim, use_ode=False, prefix=prefix)


def median_gap_scale(seqs):
    """1 / median positive inter-observation gap, or 1.0 when no gaps exist.

    Applied to raw timestamps before integration so the typical interval has
    unit length regardless of the dataset's native time unit.
    """
    gaps = []
    for seq in seqs:
        d = np.diff(seq.times)
        gaps.extend(d[d > 0])
    if not gaps:
        return 1.0
    return 1.0 / float(np.median(gaps))
