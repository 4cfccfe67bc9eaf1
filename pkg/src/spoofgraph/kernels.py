"""Hot inner-loop kernels: scatter/segment reductions and sparse symmetric matmat.

Every kernel has a numba @njit implementation and a pure-numpy fallback.
The numpy path is selected by setting SPOOFGRAPH_PURE_NUMPY=1 (or whenever
numba is unavailable).  Both paths accumulate per output row in the order
edges appear in the index arrays, which callers rely on for run-to-run
reproducibility.  benchmarks/bench_kernels.py times the two side by side.
"""

import os

import numpy as np

_PURE_NUMPY = os.environ.get("SPOOFGRAPH_PURE_NUMPY", "0") not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False


def _index_add_np(values, idx, n_rows):
    out = np.zeros((n_rows, values.shape[1]), dtype=np.float64)
    np.add.at(out, idx, values)
    return out


def _segment_max_np(values, seg, n_seg):
    out = np.full(n_seg, -np.inf, dtype=np.float64)
    np.maximum.at(out, seg, values)
    return out


def _coo_sym_matmat_np(rows, cols, vals, x, n_rows):
    return _index_add_np(vals[:, None] * x[cols], rows, n_rows)


if HAS_NUMBA:

    @njit(cache=True)
    def _index_add_nb(values, idx, n_rows):
        d = values.shape[1]
        out = np.zeros((n_rows, d), dtype=np.float64)
        for e in range(values.shape[0]):
            r = idx[e]
            for j in range(d):
                out[r, j] += values[e, j]
        return out

    @njit(cache=True)
    def _segment_max_nb(values, seg, n_seg):
        out = np.full(n_seg, -np.inf, dtype=np.float64)
        for e in range(values.shape[0]):
            s = seg[e]
            if values[e] > out[s]:
                out[s] = values[e]
        return out

    @njit(cache=True)
    def _coo_sym_matmat_nb(rows, cols, vals, x, n_rows):
        d = x.shape[1]
        out = np.zeros((n_rows, d), dtype=np.float64)
        for e in range(rows.shape[0]):
            r = rows[e]
            c = cols[e]
            v = vals[e]
            for j in range(d):
                out[r, j] += v * x[c, j]
        return out


def _as_f64_2d(values):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim == 1:
        return values[:, None], True
    return values, False


def _as_i64(idx):
    return np.ascontiguousarray(idx, dtype=np.int64)


def use_numba():
    """True when the jitted path is active for this process."""
    return HAS_NUMBA and not _PURE_NUMPY


def index_add(values, idx, n_rows):
    """Sum rows of ``values`` into ``n_rows`` buckets given by ``idx``.

    values: (E, d) or (E,); idx: (E,) ints in [0, n_rows).  Returns (n_rows, d)
    (or (n_rows,) for 1-D input).  Accumulation within a bucket follows the
    order of appearance in ``idx``.
    """
    values, was_1d = _as_f64_2d(values)
    idx = _as_i64(idx)
    if use_numba():
        out = _index_add_nb(values, idx, n_rows)
    else:
        out = _index_add_np(values, idx, n_rows)
    return out[:, 0] if was_1d else out


def segment_max(values, seg, n_seg):
    """Per-segment maximum of a 1-D array; empty segments report -inf."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    seg = _as_i64(seg)
    if use_numba():
        return _segment_max_nb(values, seg, n_seg)
    return _segment_max_np(values, seg, n_seg)


def coo_sym_matmat(rows, cols, vals, x, n_rows):
    """Multiply a sparse symmetric operator in COO form by a dense (n, d) matrix."""
    x, was_1d = _as_f64_2d(x)
    rows = _as_i64(rows)
    cols = _as_i64(cols)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if use_numba():
        out = _coo_sym_matmat_nb(rows, cols, vals, x, n_rows)
    else:
        out = _coo_sym_matmat_np(rows, cols, vals, x, n_rows)
    return out[:, 0] if was_1d else out


# Both implementations exposed by name so the benchmark can time them
# regardless of which path the env flag selected.
IMPLS = {
    "numpy": {
        "index_add": _index_add_np,
        "segment_max": _segment_max_np,
        "coo_sym_matmat": _coo_sym_matmat_np,
    }
}
if HAS_NUMBA:
    IMPLS["numba"] = {
        "index_add": _index_add_nb,
        "segment_max": _segment_max_nb,
        "coo_sym_matmat": _coo_sym_matmat_nb,
    }
