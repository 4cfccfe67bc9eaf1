"""Graph construction: relation predicates, canonical order, degree caps."""

import numpy as np
import pytest

from spoofgraph import graph as gr


def rec(txn_id, t, acct, instr, price, label=None, d_raw=8):
    feats = np.zeros(d_raw)
    feats[gr.PRICE_COL] = price
    return gr.TransactionRecord(txn_id, t, acct, instr, feats, label)


def brute_force_edges(records, window, band):
    """All-pairs reference for the three relation predicates."""
    order = sorted(range(len(records)), key=lambda i: (records[i].timestamp,
                                                       records[i].txn_id))
    ordered = [records[i] for i in order]
    out = {r: set() for r in range(gr.N_RELATIONS)}
    for u in range(len(ordered)):
        for v in range(u + 1, len(ordered)):
            a, b = ordered[u], ordered[v]
            if abs(a.timestamp - b.timestamp) > window:
                continue
            if a.account == b.account:
                out[gr.SAME_ACCOUNT].add((u, v))
            if a.instrument == b.instrument:
                out[gr.SAME_INSTRUMENT].add((u, v))
            if (a.instrument == b.instrument
                    and abs(a.features[gr.PRICE_COL]
                            - b.features[gr.PRICE_COL]) <= band):
                out[gr.PRICE_ADJACENT].add((u, v))
    return out


def edge_sets(g):
    return {r: set(map(tuple, g.edges[r])) for r in range(gr.N_RELATIONS)}


def random_records(rng, n, d_raw=8):
    recs = []
    for i in range(n):
        recs.append(rec(i, float(rng.integers(0, 500)), int(rng.integers(0, 5)),
                        int(rng.integers(0, 3)), float(rng.uniform(99, 101)),
                        d_raw=d_raw))
    return recs


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(42)
    for trial in range(8):
        recs = random_records(rng, 40)
        window, band = 120.0, 0.4
        g = gr.build_graph(recs, window_seconds=window, price_band=band)
        assert edge_sets(g) == brute_force_edges(recs, window, band), trial


def test_window_boundary_inclusive():
    recs = [rec(0, 0.0, 1, 1, 100.0), rec(1, 50.0, 1, 1, 100.0),
            rec(2, 120.0, 1, 1, 100.0)]
    g = gr.build_graph(recs, window_seconds=100.0, price_band=1.0)
    want = {(0, 1), (1, 2)}  # 0-2 gap is 120 > 100
    assert edge_sets(g)[gr.SAME_ACCOUNT] == want
    g2 = gr.build_graph(recs, window_seconds=120.0, price_band=1.0)
    assert (0, 2) in edge_sets(g2)[gr.SAME_ACCOUNT]  # boundary kept


def test_zero_window_links_ties_only():
    recs = [rec(0, 5.0, 1, 1, 100.0), rec(1, 5.0, 1, 1, 100.0),
            rec(2, 6.0, 1, 1, 100.0)]
    g = gr.build_graph(recs, window_seconds=0.0, price_band=1.0)
    assert edge_sets(g)[gr.SAME_ACCOUNT] == {(0, 1)}


def test_pair_can_sit_in_multiple_relations():
    recs = [rec(0, 0.0, 7, 3, 100.0), rec(1, 10.0, 7, 3, 100.1)]
    g = gr.build_graph(recs, window_seconds=60.0, price_band=0.5)
    es = edge_sets(g)
    assert (0, 1) in es[gr.SAME_ACCOUNT]
    assert (0, 1) in es[gr.SAME_INSTRUMENT]
    assert (0, 1) in es[gr.PRICE_ADJACENT]


def test_price_band_excludes_far_prices():
    recs = [rec(0, 0.0, 1, 3, 100.0), rec(1, 10.0, 2, 3, 100.6)]
    g = gr.build_graph(recs, window_seconds=60.0, price_band=0.5)
    es = edge_sets(g)
    assert (0, 1) in es[gr.SAME_INSTRUMENT]
    assert es[gr.PRICE_ADJACENT] == set()


def test_canonical_order_breaks_time_ties_by_txn_id():
    recs = [rec(9, 10.0, 1, 1, 100.0), rec(7, 10.0, 2, 1, 100.0),
            rec(3, 5.0, 3, 1, 100.0)]
    g = gr.build_graph(recs, window_seconds=60.0, price_band=1.0)
    assert list(g.txn_ids) == [3, 7, 9]
    assert list(g.timestamps) == [5.0, 10.0, 10.0]


def test_duplicate_txn_id_rejected():
    recs = [rec(1, 0.0, 1, 1, 100.0), rec(1, 5.0, 2, 1, 100.0)]
    with pytest.raises(ValueError, match="txn_id"):
        gr.build_graph(recs, window_seconds=60.0, price_band=1.0)


def test_record_order_does_not_matter():
    rng = np.random.default_rng(7)
    recs = random_records(rng, 30)
    g1 = gr.build_graph(recs, window_seconds=100.0, price_band=0.3)
    g2 = gr.build_graph(recs[::-1], window_seconds=100.0, price_band=0.3)
    assert np.array_equal(g1.features, g2.features)
    assert np.array_equal(g1.txn_ids, g2.txn_ids)
    for r in range(gr.N_RELATIONS):
        assert np.array_equal(g1.edges[r], g2.edges[r])
        assert np.array_equal(g1.indptr[r], g2.indptr[r])
        assert np.array_equal(g1.neighbors[r], g2.neighbors[r])


def test_edges_stored_as_sorted_upper_pairs():
    rng = np.random.default_rng(11)
    g = gr.build_graph(random_records(rng, 25), window_seconds=200.0,
                       price_band=0.5)
    for r in range(gr.N_RELATIONS):
        u, v = g.edges[r][:, 0], g.edges[r][:, 1]
        assert np.all(u < v)
        # lexsorted by (u, v), no duplicate pairs
        keys = u.astype(np.int64) * g.n + v
        assert np.all(np.diff(keys) > 0)


def test_uncapped_adjacency_is_symmetric_partition():
    rng = np.random.default_rng(13)
    g = gr.build_graph(random_records(rng, 25), window_seconds=200.0,
                       price_band=0.5, degree_cap=10**9)
    for r in range(gr.N_RELATIONS):
        pairs = set(map(tuple, g.edges[r]))
        seen = set()
        for node in range(g.n):
            nbrs = g.relation_neighbors(node, r)
            assert len(set(nbrs.tolist())) == len(nbrs)  # no duplicates
            for nb in nbrs:
                assert nb != node
                seen.add((min(node, int(nb)), max(node, int(nb))))
                assert node in g.relation_neighbors(int(nb), r)
        assert seen == pairs


def test_invalid_relation_rejected():
    g = gr.build_graph([rec(0, 0.0, 1, 1, 100.0)], window_seconds=1.0,
                       price_band=1.0)
    with pytest.raises(ValueError, match="relation"):
        g.relation_neighbors(0, gr.N_RELATIONS)


def test_degree_cap_keeps_most_recent():
    # node 0 at t=0; six same-account neighbors at t=1..6
    recs = [rec(i, float(i), 1, i + 1, 100.0 + i) for i in range(7)]
    g = gr.build_graph(recs, window_seconds=100.0, price_band=0.01,
                       degree_cap=3)
    nbrs = g.relation_neighbors(0, gr.SAME_ACCOUNT)
    assert sorted(nbrs.tolist()) == [4, 5, 6]  # three latest timestamps
    # uncapped edge list still has all six pairs incident to node 0
    e = g.edges[gr.SAME_ACCOUNT]
    assert int(np.sum((e[:, 0] == 0) | (e[:, 1] == 0))) == 6


def test_degree_cap_tie_breaks_by_txn_id():
    # all neighbors share one timestamp; keep the largest txn ids
    recs = [rec(0, 0.0, 1, 1, 100.0)]
    recs += [rec(i, 1.0, 1, i + 1, 200.0 * i) for i in range(1, 6)]
    g = gr.build_graph(recs, window_seconds=10.0, price_band=0.01,
                       degree_cap=2)
    nbrs = g.relation_neighbors(0, gr.SAME_ACCOUNT)
    assert sorted(g.txn_ids[nbrs].tolist()) == [4, 5]


def test_neighbor_lists_ordered_by_time_then_txn():
    rng = np.random.default_rng(19)
    g = gr.build_graph(random_records(rng, 30), window_seconds=300.0,
                       price_band=0.5)
    for r in range(gr.N_RELATIONS):
        for node in range(g.n):
            nbrs = g.relation_neighbors(node, r)
            keys = list(zip(g.timestamps[nbrs], g.txn_ids[nbrs]))
            assert keys == sorted(keys), (r, node)


def test_union_edges_deduplicates():
    recs = [rec(0, 0.0, 7, 3, 100.0), rec(1, 10.0, 7, 3, 100.0)]
    g = gr.build_graph(recs, window_seconds=60.0, price_band=0.5)
    union = gr.union_edges(g)
    assert union.shape == (1, 2)
    assert tuple(union[0]) == (0, 1)


def test_sequences_group_by_account_in_time_order():
    recs = [rec(0, 10.0, 1, 1, 100.0), rec(1, 5.0, 1, 1, 100.0),
            rec(2, 7.0, 2, 1, 100.0), rec(3, 7.0, 1, 1, 100.0)]
    seqs = gr.sequences_from_transactions(recs, max_len=32)
    # canonical order: txn1(t5), txn2(t7), txn3(t7), txn0(t10)
    assert len(seqs) == 4
    assert list(seqs[3].times) == [5.0, 7.0, 10.0]  # txn0 closes account 1
    assert list(seqs[1].times) == [7.0]             # txn2 alone on account 2
    assert list(seqs[2].times) == [5.0, 7.0]        # txn3 mid-history


def test_sequences_tail_respects_max_len():
    recs = [rec(i, float(i), 1, 1, 100.0) for i in range(6)]
    seqs = gr.sequences_from_transactions(recs, max_len=2)
    assert list(seqs[5].times) == [4.0, 5.0]
    assert seqs[5].observations.shape == (2, 8)


def test_sequences_tie_break_follows_txn_id():
    # same account, same timestamp: txn 7 precedes txn 9
    recs = [rec(9, 10.0, 1, 1, 100.0), rec(7, 10.0, 1, 1, 100.0)]
    seqs = gr.sequences_from_transactions(recs, max_len=32)
    assert len(seqs[0]) == 1  # txn 7 sees only itself
    assert len(seqs[1]) == 2  # txn 9 sees txn 7 first, then itself


def test_sequences_time_window_drops_stale_history():
    recs = [rec(i, t, 1, 1, 100.0) for i, t in enumerate([0.0, 50.0, 130.0, 140.0])]
    seqs = gr.sequences_from_transactions(recs, max_len=32, time_window=90.0)
    assert list(seqs[0].times) == [0.0]
    assert list(seqs[1].times) == [0.0, 50.0]         # gap 50 <= 90 kept
    assert list(seqs[2].times) == [50.0, 130.0]       # 130-0=130 > 90 dropped
    assert list(seqs[3].times) == [50.0, 130.0, 140.0]


def test_sequences_time_window_boundary_is_inclusive():
    recs = [rec(0, 0.0, 1, 1, 100.0), rec(1, 90.0, 1, 1, 100.0)]
    seqs = gr.sequences_from_transactions(recs, max_len=32, time_window=90.0)
    assert list(seqs[1].times) == [0.0, 90.0]   # gap == window stays


def test_sequences_time_window_matches_naive_filter():
    rng = np.random.default_rng(11)
    recs = [rec(i, float(rng.integers(0, 500)), int(rng.integers(3)), 1, 100.0)
            for i in range(60)]
    for window, max_len in ((40.0, 32), (120.0, 3)):
        got = gr.sequences_from_transactions(recs, max_len=max_len,
                                             time_window=window)
        ordered = gr.canonical_order(recs)
        for i, r in enumerate(ordered):
            keep = [q for q in ordered[: i + 1]
                    if q.account == r.account
                    and (q.timestamp, q.txn_id) <= (r.timestamp, r.txn_id)
                    and r.timestamp - q.timestamp <= window]
            want = [q.timestamp for q in keep][-max_len:]
            assert list(got[i].times) == want


def test_default_price_band_scales_with_price_level():
    recs = [rec(0, 0.0, 1, 3, 1000.0), rec(1, 10.0, 2, 3, 1004.0),
            rec(2, 20.0, 3, 3, 1200.0)]
    # band = 0.005 * median(|price|) = 5.02
    g = gr.build_graph(recs, window_seconds=60.0, price_band=None,
                       price_band_frac=0.005)
    es = edge_sets(g)
    assert (0, 1) in es[gr.PRICE_ADJACENT]
    assert not any(2 in p for p in es[gr.PRICE_ADJACENT])


def test_labels_default_to_unlabeled():
    recs = [rec(0, 0.0, 1, 1, 100.0, label=None),
            rec(1, 1.0, 1, 1, 100.0, label=1),
            rec(2, 2.0, 1, 1, 100.0, label=0)]
    g = gr.build_graph(recs, window_seconds=60.0, price_band=1.0)
    by_txn = {int(g.txn_ids[i]): int(g.labels[i]) for i in range(3)}
    assert by_txn == {0: -1, 1: 1, 2: 0}


def test_record_validation():
    with pytest.raises(ValueError):
        rec(0, 0.0, 1, 1, np.nan)
    with pytest.raises(ValueError):
        gr.TransactionRecord(0, 0.0, 1, 1, np.zeros(4), label=2)


def test_directed_pairs_align_with_indptr():
    rng = np.random.default_rng(23)
    g = gr.build_graph(random_records(rng, 20), window_seconds=300.0,
                       price_band=0.5, degree_cap=4)
    for r in range(gr.N_RELATIONS):
        dst, src = g.directed_pairs(r)
        assert np.array_equal(src, g.neighbors[r])
        counts = np.bincount(dst, minlength=g.n)
        assert np.array_equal(np.cumsum(counts), g.indptr[r][1:])
        assert counts.max(initial=0) <= 4
