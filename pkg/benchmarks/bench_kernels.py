"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Reports the best wall time per kernel and backend (compilation excluded),
then a full boosted fit with each backend, and checks the outputs agree.
"""

import argparse
import time

import numpy as np

from fearlab import _kernels, gbm
from fearlab.dataset import windowize
from fearlab.synthetic import planted_directions


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--samples", type=int, default=20000)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is unavailable (or FEARLAB_DISABLE_NUMBA is set); nothing to compare")

    rng = np.random.default_rng(0)
    ds = windowize(planted_directions(args.samples + 24, seed=1), 24, 1)
    X, y = ds.X, ds.y
    Xb, _ = gbm.bin_features(X)
    idx = np.arange(X.shape[0], dtype=np.int64)
    resid = rng.normal(size=X.shape[0])
    model = gbm.fit_xy(X[:2000], y[:2000], gbm.GbmConfig(n_stages=50, max_depth=3))
    flat = gbm._flatten([t for s in model.trees for t in s])
    tree_class = np.tile(np.arange(3, dtype=np.int64), model.n_stages)
    series = rng.normal(size=1_000_000)
    series[rng.random(series.size) < 0.05] = np.nan

    cases = {
        "best_split": lambda impl: impl(Xb, idx, resid, 3, 1),
        "predict_forest": lambda impl: impl(X, *flat, tree_class, 0.1, np.zeros((X.shape[0], 3))),
        "ewma": lambda impl: impl(series, 2 / 13),
    }
    print(f"{X.shape[0]} samples x {X.shape[1]} features, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, call in cases.items():
        np_impl = getattr(_kernels, f"{name}_numpy")
        nb_impl = getattr(_kernels, f"{name}_numba")
        call(nb_impl)  # compile
        a, b = call(np_impl), call(nb_impl)
        if name == "best_split":
            assert a[:2] == b[:2]
        else:
            assert np.allclose(a, b, equal_nan=True)
        t_np = best_of(lambda: call(np_impl), args.repeat)
        t_nb = best_of(lambda: call(nb_impl), args.repeat)
        print(f"{name:<16}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")

    cfg = gbm.GbmConfig(n_stages=30, max_depth=3)
    fits = {}
    for backend in ("numpy", "numba"):
        prev = _kernels.set_backend(backend)
        try:
            t0 = time.perf_counter()
            fits[backend] = gbm.fit_xy(X, y, cfg)
            fits[backend + "_t"] = time.perf_counter() - t0
        finally:
            _kernels.set_backend(prev)
    same = fits["numpy"].to_dict() == fits["numba"].to_dict()
    print(f"full fit ({cfg.n_stages} stages, depth {cfg.max_depth}): numpy {fits['numpy_t']:.2f} s, "
          f"numba {fits['numba_t']:.2f} s, identical models: {same}")


if __name__ == "__main__":
    main()
