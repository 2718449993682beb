"""Time the numba kernels against the plain-numpy fallback.

    python benchmarks/bench_backends.py [--tokens 20000] [--repeat 3]

Both backends get identical inputs; the script also checks that their
outputs agree bit for bit.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from topicdiv.kernels import numba_impl, numpy_impl


def _gibbs_inputs(n_tokens: int, n_docs: int, K: int, V: int, seed: int):
    rng = np.random.default_rng(seed)
    words = rng.integers(0, V, n_tokens).astype(np.int64)
    doc_of = np.sort(rng.integers(0, n_docs, n_tokens)).astype(np.int64)
    z = rng.integers(0, K, n_tokens).astype(np.int64)
    ndk = np.zeros((n_docs, K), np.int64)
    nkw = np.zeros((K, V), np.int64)
    np.add.at(ndk, (doc_of, z), 1)
    np.add.at(nkw, (z, words), 1)
    return words, doc_of, z, ndk, nkw, nkw.sum(axis=1), rng.random(n_tokens)


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_gibbs(n_tokens: int, repeat: int) -> tuple[float, float, bool]:
    base = _gibbs_inputs(n_tokens, max(n_tokens // 200, 2), 20, 2000, 0)
    outs = {}

    def run(impl):
        words, doc_of, z, ndk, nkw, nk, u = (a.copy() for a in base)
        impl.gibbs_sweep(words, doc_of, z, ndk, nkw, nk, 0.1, 0.01, u)
        outs[impl.__name__] = z

    run(numba_impl)  # compile outside the timed region
    t_jit = _best(lambda: run(numba_impl), repeat)
    t_np = _best(lambda: run(numpy_impl), repeat)
    return t_np, t_jit, bool(np.array_equal(*outs.values()))


def bench_foldin(n_tokens: int, repeat: int) -> tuple[float, float, bool]:
    rng = np.random.default_rng(1)
    K, V, sweeps = 20, 2000, 20
    phi = rng.dirichlet(np.full(V, 0.1), K).T.copy()
    words = rng.integers(0, V, n_tokens).astype(np.int64)
    z0 = rng.integers(0, K, n_tokens).astype(np.int64)
    u = rng.random((sweeps, n_tokens))
    outs = {}

    def run(impl):
        outs[impl.__name__] = impl.foldin_theta(words, phi, 0.1, z0.copy(), u, 10)

    run(numba_impl)
    t_jit = _best(lambda: run(numba_impl), repeat)
    t_np = _best(lambda: run(numpy_impl), repeat)
    return t_np, t_jit, bool(np.array_equal(*outs.values()))


def bench_demean(n_obs: int, repeat: int) -> tuple[float, float, bool]:
    rng = np.random.default_rng(2)
    codes = np.column_stack([rng.integers(0, n_obs // 10, n_obs), rng.integers(0, 10, n_obs)]).astype(np.int64)
    n_levels = (codes.max(axis=0) + 1).astype(np.int64)
    x0 = rng.normal(size=(n_obs, 8))
    outs = {}

    def run(impl):
        x = x0.copy()
        for _ in range(20):
            impl.demean_pass(x, codes, n_levels)
        outs[impl.__name__] = x

    run(numba_impl)
    t_jit = _best(lambda: run(numba_impl), repeat)
    t_np = _best(lambda: run(numpy_impl), repeat)
    return t_np, t_jit, bool(np.array_equal(*outs.values()))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tokens", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if numba_impl is None:
        print("numba backend unavailable (TOPICDIV_DISABLE_JIT set or numba missing)")
        return 1
    rows = [
        ("gibbs_sweep", *bench_gibbs(args.tokens, args.repeat)),
        ("foldin_theta", *bench_foldin(args.tokens // 10, args.repeat)),
        ("demean_pass x20", *bench_demean(args.tokens, args.repeat)),
    ]
    print(f"{'kernel':<16} {'numpy s':>10} {'numba s':>10} {'speedup':>9}  identical")
    for name, t_np, t_jit, same in rows:
        print(f"{name:<16} {t_np:10.4f} {t_jit:10.4f} {t_np / t_jit:9.1f}  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
