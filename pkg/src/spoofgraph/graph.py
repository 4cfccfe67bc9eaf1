"""Multi-relational transaction graph construction.

Nodes are transactions in canonical (timestamp, txn_id) order.  Three
relations connect transactions that co-occur inside a sliding time window:
shared account, shared instrument, and shared instrument with nearby price.
Edge lists are undirected and uncapped; the per-node adjacency views used by
the attention layers keep at most ``degree_cap`` most-recent neighbors.

Neighbor lists are ordered by (timestamp, txn_id) of the neighbor, a key that
does not depend on node numbering, so downstream reductions are exactly
invariant under node relabeling.
"""

import numpy as np

from .ode_encoder import ObservationSequence

SAME_ACCOUNT = 0
SAME_INSTRUMENT = 1
PRICE_ADJACENT = 2
RELATION_NAMES = ("same_account", "same_instrument", "price_adjacent")
N_RELATIONS = 3

D_RAW = 49
PRICE_COL = 0


class TransactionRecord:
    __slots__ = ("txn_id", "timestamp", "account", "instrument", "features", "label")

    def __init__(self, txn_id, timestamp, account, instrument, features, label=None):
        self.txn_id = int(txn_id)
        self.timestamp = float(timestamp)
        self.account = str(account)
        self.instrument = str(instrument)
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 1:
            raise ValueError("features must be a flat vector")
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"non-finite feature in txn {self.txn_id}")
        if label is not None and label not in (0, 1):
            raise ValueError(f"label must be 0, 1 or None, got {label!r}")
        self.label = label


class NeighborView:
    __slots__ = ("node", "relation", "group", "members")

    def __init__(self, node, relation, group, members):
        self.node = node
        self.relation = relation
        self.group = group
        self.members = members


class MultiRelationalGraph:
    """Immutable transaction graph shared by the spectral and attention passes.

    edges[r] is an (E_r, 2) array with u < v, deduplicated, no self-loops.
    indptr[r]/neighbors[r] hold the capped directed adjacency view of each
    node (CSR layout, neighbor order by (timestamp, txn_id)).
    """

    def __init__(self, features, labels, txn_ids, timestamps, accounts,
                 instruments, edges, indptr, neighbors, window_seconds,
                 price_band, degree_cap):
        self.n = features.shape[0]
        self.features = features
        self.labels = labels              # -1 = unlabeled
        self.txn_ids = txn_ids
        self.timestamps = timestamps
        self.accounts = accounts
        self.instruments = instruments
        self.edges = edges
        self.indptr = indptr
        self.neighbors = neighbors
        self.window_seconds = window_seconds
        self.price_band = price_band
        self.degree_cap = degree_cap
        self.train_mask = np.zeros(self.n, dtype=bool)
        self.valid_mask = np.zeros(self.n, dtype=bool)
        self.test_mask = np.zeros(self.n, dtype=bool)

    def relation_neighbors(self, v, r):
        if not 0 <= r < N_RELATIONS:
            raise ValueError(f"invalid relation id {r}")
        return self.neighbors[r][self.indptr[r][v]:self.indptr[r][v + 1]]

    def directed_pairs(self, r):
        """(dst, src) flat arrays of the capped view, dst segments contiguous."""
        if not 0 <= r < N_RELATIONS:
            raise ValueError(f"invalid relation id {r}")
        counts = np.diff(self.indptr[r])
        dst = np.repeat(np.arange(self.n, dtype=np.int64), counts)
        return dst, self.neighbors[r]


def canonical_order(records):
    """Sort by (timestamp, txn_id); rejects duplicate ids."""
    recs = sorted(records, key=lambda rec: (rec.timestamp, rec.txn_id))
    ids = [rec.txn_id for rec in recs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate txn_id in records")
    return recs


def sequences_from_transactions(records, max_len=32, time_window=None):
    """Per-node observation sequence: the <= max_len most recent transactions
    of the same account up to and including the node itself.

    With a time_window, history older than the node's own timestamp minus the
    window is dropped first (gap <= window is kept, matching the edge rule),
    so sequence statistics stay stationary as a timeline grows. Returned list
    is aligned with canonical node order.
    """
    recs = canonical_order(records)
    by_account = {}
    seqs = []
    for rec in recs:
        hist = by_account.setdefault(rec.account, [])
        hist.append(rec)
        if time_window is not None:
            while rec.timestamp - hist[0].timestamp > time_window:
                hist.pop(0)
        tail = hist[-max_len:]
        seqs.append(ObservationSequence(
            [r.timestamp for r in tail],
            np.stack([r.features for r in tail]),
        ))
    return seqs


def _window_pairs(idx, times, window):
    """All index pairs inside `idx` whose time gap is <= window.

    idx must be ascending in node order (canonical order makes node order and
    time order agree), so emitted pairs already satisfy u < v.
    """
    out_u, out_v = [], []
    left = 0
    for j in range(len(idx)):
        while times[idx[j]] - times[idx[left]] > window:
            left += 1
        for i in range(left, j):
            out_u.append(idx[i])
            out_v.append(idx[j])
    return out_u, out_v


def _capped_adjacency(n, edges, timestamps, txn_ids, cap):
    """Directed CSR view keeping each node's `cap` most-recent neighbors."""
    if len(edges) == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    dst = np.concatenate([edges[:, 0], edges[:, 1]])
    src = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((txn_ids[src], timestamps[src], dst))
    dst, src = dst[order], src[order]
    counts = np.bincount(dst, minlength=n)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos = np.arange(len(dst)) - starts[dst]
    keep = pos >= counts[dst] - cap
    src = src[keep]
    counts = np.minimum(counts, cap)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return indptr, src.astype(np.int64)


def build_graph(records, window_seconds=86400.0, price_band=None,
                price_band_frac=0.005, price_col=PRICE_COL, degree_cap=64):
    """Construct the three-relation graph.

    price_band is the absolute tolerance on the price column; when None it is
    resolved as price_band_frac times the median absolute price.
    """
    if window_seconds < 0:
        raise ValueError("window_seconds must be >= 0")
    recs = canonical_order(records)
    n = len(recs)
    features = np.stack([rec.features for rec in recs]) if n else np.zeros((0, D_RAW))
    if not 0 <= price_col < features.shape[1]:
        raise ValueError(f"unknown price column {price_col}")
    labels = np.array([-1 if rec.label is None else rec.label for rec in recs], dtype=np.int64)
    txn_ids = np.array([rec.txn_id for rec in recs], dtype=np.int64)
    timestamps = np.array([rec.timestamp for rec in recs])
    accounts = [rec.account for rec in recs]
    instruments = [rec.instrument for rec in recs]
    prices = features[:, price_col]
    if price_band is None:
        price_band = price_band_frac * float(np.median(np.abs(prices))) if n else 0.0

    by_account, by_instrument = {}, {}
    for i in range(n):
        by_account.setdefault(accounts[i], []).append(i)
        by_instrument.setdefault(instruments[i], []).append(i)

    acc_u, acc_v = [], []
    for idx in by_account.values():
        u, v = _window_pairs(idx, timestamps, window_seconds)
        acc_u.extend(u)
        acc_v.extend(v)
    ins_u, ins_v = [], []
    for idx in by_instrument.values():
        u, v = _window_pairs(idx, timestamps, window_seconds)
        ins_u.extend(u)
        ins_v.extend(v)
    ins_u = np.asarray(ins_u, dtype=np.int64)
    ins_v = np.asarray(ins_v, dtype=np.int64)
    near = np.abs(prices[ins_u] - prices[ins_v]) <= price_band if len(ins_u) else np.zeros(0, dtype=bool)

    def pack(u, v):
        e = np.stack([np.asarray(u, dtype=np.int64), np.asarray(v, dtype=np.int64)], axis=1) \
            if len(u) else np.zeros((0, 2), dtype=np.int64)
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        e = np.stack([lo, hi], axis=1)
        return e[np.lexsort((e[:, 1], e[:, 0]))]

    edges = [pack(acc_u, acc_v), pack(ins_u, ins_v), pack(ins_u[near], ins_v[near])]
    indptr, neighbors = [], []
    for e in edges:
        ip, nb = _capped_adjacency(n, e, timestamps, txn_ids, degree_cap)
        indptr.append(ip)
        neighbors.append(nb)
    return MultiRelationalGraph(features, labels, txn_ids, timestamps, accounts,
                                instruments, edges, indptr, neighbors,
                                window_seconds, price_band, degree_cap)


def neighbor_view(graph, labels, v, r, g):
    """Neighbors of v under relation r whose label equals g."""
    nbrs = graph.relation_neighbors(v, r)
    return NeighborView(v, r, g, nbrs[labels[nbrs] == g])


def union_edges(graph):
    """Deduplicated union of all relations' undirected edge lists."""
    stacked = np.concatenate([e for e in graph.edges], axis=0)
    if len(stacked) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(stacked, axis=0)


def union_pairs(graph):
    """Capped (dst, src) view of the single-relation union graph."""
    indptr, neighbors = _capped_adjacency(graph.n, union_edges(graph),
                                          graph.timestamps, graph.txn_ids,
                                          graph.degree_cap)
    counts = np.diff(indptr)
    dst = np.repeat(np.arange(graph.n, dtype=np.int64), counts)
    return dst, neighbors


def export_edges(graph, path_prefix):
    """One text file per relation: tab-separated txn_id pairs."""
    paths = []
    for r, name in enumerate(RELATION_NAMES):
        path = f"{path_prefix}.{name}.edges"
        with open(path, "w") as fh:
            for u, v in graph.edges[r]:
                fh.write(f"{graph.txn_ids[u]}\t{graph.txn_ids[v]}\n")
        paths.append(path)
    return paths
