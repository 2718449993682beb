"""JIT-compiled kernels; same signatures and draw protocol as ``numpy_impl``."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def gibbs_sweep(words, doc_of, z, ndk, nkw, nk, alpha, beta, u):
    n_topics = nk.shape[0]
    vbeta = nkw.shape[1] * beta
    cum = np.empty(n_topics)
    for i in range(words.shape[0]):
        w = words[i]
        d = doc_of[i]
        k = z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(n_topics):
            total += (ndk[d, t] + alpha) * (nkw[t, w] + beta) / (nk[t] + vbeta)
            cum[t] = total
        r = u[i] * total
        k = 0
        while k < n_topics - 1 and cum[k] <= r:
            k += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


@njit(cache=True, nogil=True)
def foldin_theta(words, phi_wk, alpha, z, u, burn_in):
    n_tok = words.shape[0]
    n_topics = phi_wk.shape[1]
    ndk = np.zeros(n_topics, dtype=np.int64)
    for i in range(n_tok):
        ndk[z[i]] += 1
    acc = np.zeros(n_topics)
    cum = np.empty(n_topics)
    denom = n_tok + n_topics * alpha
    for s in range(u.shape[0]):
        for i in range(n_tok):
            w = words[i]
            k = z[i]
            ndk[k] -= 1
            total = 0.0
            for t in range(n_topics):
                total += (ndk[t] + alpha) * phi_wk[w, t]
                cum[t] = total
            r = u[s, i] * total
            k = 0
            while k < n_topics - 1 and cum[k] <= r:
                k += 1
            z[i] = k
            ndk[k] += 1
        if s >= burn_in:
            for t in range(n_topics):
                acc[t] += (ndk[t] + alpha) / denom
    return acc / (u.shape[0] - burn_in)


@njit(cache=True, nogil=True)
def demean_pass(x, codes, n_levels):
    n, p = x.shape
    for dim in range(codes.shape[1]):
        n_lev = n_levels[dim]
        sums = np.zeros((n_lev, p))
        counts = np.zeros(n_lev)
        for i in range(n):
            g = codes[i, dim]
            counts[g] += 1.0
            for j in range(p):
                sums[g, j] += x[i, j]
        for i in range(n):
            g = codes[i, dim]
            for j in range(p):
                x[i, j] -= sums[g, j] / counts[g]
