"""Synthetic spoofing-market generator and transaction file I/O.

Normal activity: per-account order flow with smooth per-instrument price
paths.  Planted fraud: rings of colluding accounts that hit one instrument
together, each member layering several large orders inside a short burst and
closing with a counter-trade.

Three confuser populations keep single-transaction features non-separable,
so detection quality depends on timing and cross-account structure:
  - lone large cancel-heavy orders (random accounts, random times)
  - slow runs: one account repeats large orders, hours apart
  - hot runs: one account repeats large orders within seconds, no partners
All confusers are labeled 0 and share the fraud txns' feature marginals.

File format: one JSON object per line with fields txn_id, timestamp,
account, instrument, features, label (0/1/null).
"""

import json

import numpy as np

from .graph import TransactionRecord

SECONDS_PER_DAY = 86400.0


class SynthConfig:
    def __init__(self, n_transactions=2000, n_accounts=100, n_instruments=10,
                 fraud_fraction=0.15, n_rings=8, ring_size=4,
                 burst_seconds=120.0, burst_layers=3, d_raw=49,
                 noise_scale=1.0, span_days=30.0, seed=0,
                 camouflage_fraction=0.0):
        self.n_transactions = int(n_transactions)
        self.n_accounts = int(n_accounts)
        self.n_instruments = int(n_instruments)
        self.fraud_fraction = float(fraud_fraction)
        self.n_rings = int(n_rings)
        self.ring_size = int(ring_size)
        self.burst_seconds = float(burst_seconds)
        self.burst_layers = int(burst_layers)
        self.d_raw = int(d_raw)
        self.noise_scale = float(noise_scale)
        self.span_days = float(span_days)
        self.seed = int(seed)
        self.camouflage_fraction = float(camouflage_fraction)
        self.validate()

    def validate(self):
        if not 0.0 < self.fraud_fraction < 1.0:
            raise ValueError("fraud_fraction must lie in (0,1)")
        if not 0.0 <= self.camouflage_fraction <= 1.0:
            raise ValueError("camouflage_fraction must lie in [0,1]")
        if self.ring_size < 2:
            raise ValueError("ring_size must be >= 2")
        for name in ("n_transactions", "n_accounts", "n_instruments",
                     "n_rings", "burst_layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_raw < 6:
            raise ValueError("d_raw must be at least 6")
        n_fraud = round(self.fraud_fraction * self.n_transactions)
        if self.n_rings * self.ring_size > n_fraud:
            raise ValueError(
                f"infeasible config: {self.n_rings} rings of {self.ring_size} "
                f"exceed the fraud budget of {n_fraud}")
        if self.n_rings * self.ring_size > self.n_accounts:
            raise ValueError("not enough accounts to populate the rings")


def _price_path(base, phase, t):
    # 1% daily swing: only temporally close orders stay inside a tight band.
    return base * (1.0 + 0.01 * np.sin(2.0 * np.pi * t / SECONDS_PER_DAY + phase))


def synth_dataset(config):
    """Generate transactions, sorted by time, txn_id dense in time order."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    span = cfg.span_days * SECONDS_PER_DAY
    n_fraud = round(cfg.fraud_fraction * cfg.n_transactions)
    n_normal = cfg.n_transactions - n_fraud

    base_price = rng.uniform(20.0, 80.0, size=cfg.n_instruments)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=cfg.n_instruments)
    accounts = [f"A{i:04d}" for i in range(cfg.n_accounts)]
    instruments = [f"I{i:03d}" for i in range(cfg.n_instruments)]

    ring_accounts = rng.choice(cfg.n_accounts, size=cfg.n_rings * cfg.ring_size,
                               replace=False).reshape(cfg.n_rings, cfg.ring_size)

    def noise_tail(k):
        return rng.normal(0.0, cfg.noise_scale, size=(k, cfg.d_raw - 5))

    def make_rows(times, instr_idx, high, direction=None):
        k = len(times)
        price = _price_path(base_price[instr_idx], phase[instr_idx], times)
        price = price + rng.normal(0.0, 2e-4 * base_price[instr_idx], size=k)
        if high:
            logvol = rng.normal(2.5, 0.4, size=k)
            cancel = rng.uniform(0.7, 1.0, size=k)
            imbalance = rng.normal(2.0, 0.5, size=k)
        else:
            logvol = rng.normal(0.0, 1.0, size=k)
            cancel = rng.uniform(0.0, 0.35, size=k)
            imbalance = rng.normal(0.0, 1.0, size=k)
        if direction is None:
            direction = rng.choice((-1.0, 1.0), size=k)
        else:
            direction = np.broadcast_to(np.asarray(direction, dtype=np.float64), (k,))
        head = np.stack([price, logvol, direction, cancel, imbalance], axis=1)
        return np.concatenate([head, noise_tail(k)], axis=1)

    rows = []   # (timestamp, account, instrument, features, label)

    def emit(times, account_idx, instr_idx, feats, label):
        for j in range(len(times)):
            rows.append((float(times[j]), accounts[account_idx[j]],
                         instruments[instr_idx[j]], feats[j], label))

    # Conspiracy rings: per event, every member layers orders inside one burst.
    budgets = np.full(cfg.n_rings, n_fraud // cfg.n_rings)
    budgets[: n_fraud % cfg.n_rings] += 1
    for k in range(cfg.n_rings):
        members = ring_accounts[k]
        remaining = int(budgets[k])
        per_event = cfg.ring_size * cfg.burst_layers
        n_events = max(1, round(remaining / per_event))
        event_sizes = [remaining // n_events] * n_events
        for e in range(remaining % n_events):
            event_sizes[e] += 1
        for size in event_sizes:
            t0 = rng.uniform(0.0, span - cfg.burst_seconds)
            instr = int(rng.integers(cfg.n_instruments))
            side = float(rng.choice((-1.0, 1.0)))
            owner = members[np.arange(size) % cfg.ring_size]
            times = t0 + np.sort(rng.uniform(0.0, 0.95 * cfg.burst_seconds, size=size))
            dirs = np.full(size, side)
            dirs[-1] = -side       # closing counter-trade
            # Camouflaged events keep the burst choreography but draw the
            # plain-flow feature profile; guarded draw keeps the RNG stream
            # identical when the knob is off.
            camo = (cfg.camouflage_fraction > 0.0
                    and rng.uniform() < cfg.camouflage_fraction)
            feats = make_rows(times, instr, high=not camo, direction=dirs)
            emit(times, owner, np.full(size, instr), feats, 1)

    # Normal flow plus the three confuser populations.
    n_lone = round(0.03 * n_normal)
    n_slow_runs = max(1, round(0.08 * n_normal / 3))
    n_hot_runs = max(1, round(0.04 * n_normal / 3))
    run_budget = 0

    def run_lengths(n_runs):
        return rng.integers(2, 5, size=n_runs)

    slow_lens = run_lengths(n_slow_runs)
    hot_lens = run_lengths(n_hot_runs)
    run_budget = int(slow_lens.sum() + hot_lens.sum())
    n_plain = n_normal - n_lone - run_budget
    if n_plain < 0:
        raise ValueError("confuser populations exceed the normal budget")

    acc_pref = rng.integers(cfg.n_instruments, size=(cfg.n_accounts, 3))

    def pick_instrument(account_idx):
        return acc_pref[account_idx, rng.integers(3, size=len(account_idx))]

    plain_acc = rng.integers(cfg.n_accounts, size=n_plain)
    plain_t = rng.uniform(0.0, span, size=n_plain)
    plain_instr = pick_instrument(plain_acc)
    feats = make_rows(plain_t, plain_instr, high=False)
    emit(plain_t, plain_acc, plain_instr, feats, 0)

    lone_acc = rng.integers(cfg.n_accounts, size=n_lone)
    lone_t = rng.uniform(0.0, span, size=n_lone)
    lone_instr = pick_instrument(lone_acc)
    feats = make_rows(lone_t, lone_instr, high=True)
    emit(lone_t, lone_acc, lone_instr, feats, 0)

    def emit_runs(lengths, gap_sampler):
        for length in lengths:
            acc = int(rng.integers(cfg.n_accounts))
            instr = int(acc_pref[acc, rng.integers(3)])
            gaps = gap_sampler(length - 1)
            start = rng.uniform(0.0, max(span - gaps.sum(), 1.0))
            times = start + np.concatenate([[0.0], np.cumsum(gaps)])
            side = float(rng.choice((-1.0, 1.0)))
            feats = make_rows(times, instr, high=True, direction=side)
            emit(times, np.full(length, acc), np.full(length, instr), feats, 0)

    # Slow runs repeat hours apart; hot runs fit inside a burst-like window.
    emit_runs(slow_lens, lambda k: rng.uniform(2.0, 8.0, size=k) * 3600.0)
    emit_runs(hot_lens, lambda k: rng.uniform(1.0, cfg.burst_seconds / 4.0, size=k))

    rows.sort(key=lambda row: row[0])
    records = [TransactionRecord(i, t, acc, instr, f, lab)
               for i, (t, acc, instr, f, lab) in enumerate(rows)]
    return records


def save_transactions(records, path):
    with open(path, "w") as fh:
        for rec in records:
            obj = {
                "txn_id": rec.txn_id,
                "timestamp": rec.timestamp,
                "account": rec.account,
                "instrument": rec.instrument,
                "features": [float(x) for x in rec.features],
                "label": rec.label,
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def load_transactions(path, d_raw=None):
    records = []
    width = d_raw
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = TransactionRecord(obj["txn_id"], obj["timestamp"],
                                        obj["account"], obj["instrument"],
                                        obj["features"], obj["label"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path} line {lineno}: {exc}") from exc
            if width is None:
                width = len(rec.features)
            elif len(rec.features) != width:
                raise ValueError(
                    f"{path} line {lineno}: feature width {len(rec.features)} "
                    f"does not match expected {width}")
            records.append(rec)
    return records
