"""Spectral anomaly scorer and pseudo-labeling.

A bank of Beta-density polynomial filters of the normalized graph Laplacian
splits node signals into low/mid/high frequency bands; band outputs feed a
small MLP ending in a sigmoid score per node.  Thresholding the scores labels
the unlabeled nodes; known training labels are never overwritten.

Filters are evaluated factor by factor (repeated sparse multiplication by L),
never via eigendecomposition.  COO entries are ordered per row by the
neighbor's (timestamp, txn_id), so scores are stable under node relabeling.
"""

from math import comb

import numpy as np

from . import autodiff as ad
from . import kernels
from .graph import union_edges
from .store import glorot


def laplacian_from_edges(edges, n, timestamps=None, txn_ids=None):
    """Symmetric-normalized Laplacian as (rows, cols, vals, n) COO.

    Isolated nodes contribute an all-zero row and column.
    """
    if timestamps is None:
        timestamps = np.zeros(n)
    if txn_ids is None:
        txn_ids = np.arange(n, dtype=np.int64)
    deg = np.zeros(n, dtype=np.int64)
    if len(edges):
        np.add.at(deg, edges[:, 0], 1)
        np.add.at(deg, edges[:, 1], 1)
    diag_nodes = np.nonzero(deg > 0)[0]
    rows = [diag_nodes]
    cols = [diag_nodes]
    vals = [np.ones(len(diag_nodes))]
    if len(edges):
        u, v = edges[:, 0], edges[:, 1]
        w = -1.0 / np.sqrt(deg[u].astype(np.float64) * deg[v])
        rows.extend([u, v])
        cols.extend([v, u])
        vals.extend([w, w])
    rows = np.concatenate(rows).astype(np.int64)
    cols = np.concatenate(cols).astype(np.int64)
    vals = np.concatenate(vals)
    order = np.lexsort((txn_ids[cols], timestamps[cols], rows))
    return rows[order], cols[order], vals[order], n


def normalized_laplacian(graph, relation_mode="union"):
    if relation_mode != "union":
        raise ValueError(f"unsupported relation_mode {relation_mode!r}")
    return laplacian_from_edges(union_edges(graph), graph.n,
                                graph.timestamps, graph.txn_ids)


def to_dense(coo):
    rows, cols, vals, n = coo
    out = np.zeros((n, n))
    np.add.at(out, (rows, cols), vals)
    return out


def beta_coeff(i, c_wav):
    """1 / (2 B(i+1, c_wav-i+1)) evaluated in exact integer arithmetic."""
    return (c_wav + 1) * comb(c_wav, i) / 2.0


class BetaKernel:
    """coeff * (L/2)^i (I - L/2)^(c_wav-i), applied by repeated sparse products."""

    def __init__(self, coo, i, c_wav):
        if not 0 <= i <= c_wav:
            raise ValueError(f"kernel index {i} out of range for order {c_wav}")
        self.coo = coo
        self.i = i
        self.c_wav = c_wav
        self.coeff = beta_coeff(i, c_wav)

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[:, None]
        rows, cols, vals, n = self.coo
        for _ in range(self.c_wav - self.i):
            x = x - 0.5 * kernels.coo_sym_matmat(rows, cols, vals, x, n)
        for _ in range(self.i):
            x = 0.5 * kernels.coo_sym_matmat(rows, cols, vals, x, n)
        x = self.coeff * x
        return x[:, 0] if squeeze else x

    def apply_tensor(self, t):
        for _ in range(self.c_wav - self.i):
            t = t - 0.5 * ad.sym_matmat(self.coo, t)
        for _ in range(self.i):
            t = 0.5 * ad.sym_matmat(self.coo, t)
        return self.coeff * t

    def dense(self):
        return self.apply(np.eye(self.coo[3]))


def beta_kernel(coo, i, c_wav):
    return BetaKernel(coo, i, c_wav)


def init_pseudo_params(store, d_in, rng, c_wav=2, pre_hidden=64, spec_dim=64,
                       post_hidden=32, agg="concat", prefix="bwgnn."):
    """Register scorer weights.  Post-MLP input width depends on the band
    aggregation mode (concat keeps every band, sum collapses them)."""
    store.create(prefix + "pre_w1", glorot(rng, d_in, pre_hidden))
    store.create(prefix + "pre_b1", np.zeros(pre_hidden))
    store.create(prefix + "pre_w2", glorot(rng, pre_hidden, spec_dim))
    store.create(prefix + "pre_b2", np.zeros(spec_dim))
    h_width = (c_wav + 1) * spec_dim if agg == "concat" else spec_dim
    store.create(prefix + "post_w1", glorot(rng, h_width, post_hidden))
    store.create(prefix + "post_b1", np.zeros(post_hidden))
    store.create(prefix + "post_w2", glorot(rng, post_hidden, 1))
    store.create(prefix + "post_b2", np.zeros(1))


def pseudo_forward(store, x, coo, c_wav=2, agg="concat", prefix="bwgnn."):
    """Per-node anomaly probability in (0,1) as a length-n tensor."""
    x = ad.as_tensor(x)
    if x.value.shape[1] != store[prefix + "pre_w1"].value.shape[0]:
        raise ad.ShapeError(
            f"feature width {x.value.shape[1]} does not match scorer input "
            f"{store[prefix + 'pre_w1'].value.shape[0]}")
    z = ad.relu(ad.matmul(x, store[prefix + "pre_w1"]) + store[prefix + "pre_b1"])
    z = ad.matmul(z, store[prefix + "pre_w2"]) + store[prefix + "pre_b2"]
    bands = [BetaKernel(coo, i, c_wav).apply_tensor(z) for i in range(c_wav + 1)]
    if agg == "concat":
        h = ad.concat(bands, axis=1)
    elif agg == "sum":
        h = bands[0]
        for b in bands[1:]:
            h = h + b
    else:
        raise ValueError(f"unknown agg {agg!r}")
    h = ad.relu(ad.matmul(h, store[prefix + "post_w1"]) + store[prefix + "post_b1"])
    p = ad.sigmoid(ad.matmul(h, store[prefix + "post_w2"]) + store[prefix + "post_b2"])
    return ad.reshape(p, (-1,))


def threshold_labels(p, z, known_labels):
    """Full {0,1} label array: strict p > z for unknown nodes (-1), known kept."""
    p = np.asarray(p)
    known = np.asarray(known_labels)
    out = (p > z).astype(np.int64)
    keep = known >= 0
    out[keep] = known[keep]
    return out


def pretrain(store, x, labels, labeled_mask, coo, epochs, lr=1e-3, c_wav=2,
             agg="concat", prefix="bwgnn.", trace=None):
    """Fit the scorer on labeled nodes with binary cross-entropy, then freeze.

    Returns the per-epoch loss list.  Inputs x are treated as constants.
    """
    idx = np.nonzero(np.asarray(labeled_mask))[0]
    y = np.asarray(labels)[idx].astype(np.float64)
    if len(idx) == 0 or y.min() == y.max():
        raise ValueError("pretraining needs labeled nodes of both classes")
    losses = []
    for _ in range(epochs):
        p = pseudo_forward(store, x, coo, c_wav, agg, prefix)
        p_lab = ad.gather_rows(p, idx)
        loss = -ad.tensor_mean(y * ad.log(p_lab, floor=1e-12)
                               + (1.0 - y) * ad.log(1.0 - p_lab, floor=1e-12))
        store.zero_grad()
        loss.backward()
        store.adam_step(lr=lr)
        losses.append(float(loss.value))
        if trace is not None:
            trace.append(float(loss.value))
    store.freeze(prefix)
    return losses
