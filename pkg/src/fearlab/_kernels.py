"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen at import time: numba is used when it imports cleanly
unless ``FEARLAB_DISABLE_NUMBA`` is set to a truthy value.  Both paths are
always importable so they can be compared (see ``benchmarks/``).

Kernels
-------
best_split      histogram split search for one tree node
predict_forest  accumulate boosted-tree outputs into class scores
ewma            causal exponential smoothing with gap carry-forward
"""

import os

import numpy as np

_DISABLED = os.environ.get("FEARLAB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by FEARLAB_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


# ---------------------------------------------------------------------------
# split search
# ---------------------------------------------------------------------------


def best_split_numpy(Xb, idx, resid, n_bins, min_leaf):
    """Best squared-error split of ``resid[idx]`` over binned features.

    Returns ``(feature, bin, gain)``; feature is -1 when no admissible split
    improves on the parent.  Left child holds rows with ``Xb[:, feature] <= bin``.
    Ties resolve to the lowest (feature, bin) pair.
    """
    n_feat = Xb.shape[1]
    n = idx.shape[0]
    sub = Xb[idx].astype(np.int64)
    r = resid[idx]
    offsets = sub + (np.arange(n_feat, dtype=np.int64) * n_bins)[None, :]
    flat = offsets.ravel()
    sums = np.bincount(flat, weights=np.repeat(r, n_feat), minlength=n_feat * n_bins)
    cnts = np.bincount(flat, minlength=n_feat * n_bins)
    sums = sums.reshape(n_feat, n_bins)
    cnts = cnts.reshape(n_feat, n_bins)

    total_s = 0.0
    for v in r:
        total_s += v
    parent = total_s * total_s / n

    left_s = np.cumsum(sums, axis=1)[:, :-1]
    left_n = np.cumsum(cnts, axis=1)[:, :-1]
    right_s = total_s - left_s
    right_n = n - left_n
    ok = (left_n >= min_leaf) & (right_n >= min_leaf)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = left_s * left_s / left_n + right_s * right_s / right_n - parent
    gain = np.where(ok, gain, -np.inf)
    if gain.size == 0:
        return -1, -1, 0.0
    k = int(np.argmax(gain))
    g = float(gain.flat[k])
    if not g > 1e-12:
        return -1, -1, 0.0
    return k // (n_bins - 1), k % (n_bins - 1), g


@njit(cache=True)
def _best_split_jit(Xb, idx, resid, n_bins, min_leaf):
    n_feat = Xb.shape[1]
    n = idx.shape[0]
    total_s = 0.0
    for i in range(n):
        total_s += resid[idx[i]]
    parent = total_s * total_s / n
    sums = np.zeros(n_bins)
    cnts = np.zeros(n_bins, dtype=np.int64)
    best_f = -1
    best_b = -1
    best_g = -np.inf
    for f in range(n_feat):
        sums[:] = 0.0
        cnts[:] = 0
        for i in range(n):
            row = idx[i]
            b = Xb[row, f]
            sums[b] += resid[row]
            cnts[b] += 1
        ls = 0.0
        ln = 0
        for b in range(n_bins - 1):
            ls += sums[b]
            ln += cnts[b]
            rn = n - ln
            if ln < min_leaf or rn < min_leaf:
                continue
            rs = total_s - ls
            g = ls * ls / ln + rs * rs / rn - parent
            if g > best_g:
                best_g = g
                best_f = f
                best_b = b
    if not best_g > 1e-12:
        return -1, -1, 0.0
    return best_f, best_b, best_g


def best_split_numba(Xb, idx, resid, n_bins, min_leaf):
    f, b, g = _best_split_jit(Xb, idx, resid, n_bins, min_leaf)
    return int(f), int(b), float(g)


# ---------------------------------------------------------------------------
# forest prediction
# ---------------------------------------------------------------------------


def predict_forest_numpy(X, feature, threshold, left, right, value, roots, tree_class, scale, scores):
    """Add ``scale * leaf_value`` of every tree to ``scores[:, tree_class]`` in place.

    Trees are applied in the order of ``roots`` so the floating-point summation
    order matches training.
    """
    n = X.shape[0]
    rows = np.arange(n)
    for t in range(roots.shape[0]):
        node = np.full(n, roots[t], dtype=np.int64)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            fi = np.where(inner, f, 0)
            go_left = X[rows, fi] <= threshold[node]
            node = np.where(inner, np.where(go_left, left[node], right[node]), node)
        scores[:, tree_class[t]] += scale * value[node]
    return scores


@njit(cache=True)
def _predict_forest_jit(X, feature, threshold, left, right, value, roots, tree_class, scale, scores):
    n = X.shape[0]
    for t in range(roots.shape[0]):
        k = tree_class[t]
        for i in range(n):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            scores[i, k] += scale * value[node]
    return scores


def predict_forest_numba(X, feature, threshold, left, right, value, roots, tree_class, scale, scores):
    return _predict_forest_jit(X, feature, threshold, left, right, value, roots, tree_class, scale, scores)


# ---------------------------------------------------------------------------
# EWMA
# ---------------------------------------------------------------------------


def ewma_numpy(values, alpha):
    out = np.empty_like(values, dtype=np.float64)
    prev = np.nan
    for i, v in enumerate(values):
        if np.isnan(v):
            out[i] = prev
        elif np.isnan(prev):
            prev = v
            out[i] = v
        else:
            prev = alpha * v + (1.0 - alpha) * prev
            out[i] = prev
    return out


@njit(cache=True)
def _ewma_jit(values, alpha):
    out = np.empty(values.shape[0])
    prev = np.nan
    for i in range(values.shape[0]):
        v = values[i]
        if np.isnan(v):
            out[i] = prev
        elif np.isnan(prev):
            prev = v
            out[i] = v
        else:
            prev = alpha * v + (1.0 - alpha) * prev
            out[i] = prev
    return out


def ewma_numba(values, alpha):
    return _ewma_jit(np.ascontiguousarray(values, dtype=np.float64), alpha)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_IMPLS = {
    "numba": (best_split_numba, predict_forest_numba, ewma_numba),
    "numpy": (best_split_numpy, predict_forest_numpy, ewma_numpy),
}

BACKEND = "numba" if HAVE_NUMBA else "numpy"
best_split, predict_forest, ewma = _IMPLS[BACKEND]


def set_backend(name):
    """Switch kernels at runtime ('numba' or 'numpy'); returns the previous name."""
    global BACKEND, best_split, predict_forest, ewma
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable or disabled")
    previous = BACKEND
    BACKEND = name
    best_split, predict_forest, ewma = _IMPLS[name]
    return previous
