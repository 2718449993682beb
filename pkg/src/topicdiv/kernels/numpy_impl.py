"""Reference kernels written against plain numpy.

Every kernel consumes pre-drawn uniforms instead of owning an RNG, so this
module and :mod:`numba_impl` produce bit-identical results on the same input.
"""

import numpy as np


def gibbs_sweep(words, doc_of, z, ndk, nkw, nk, alpha, beta, u):
    """One collapsed-Gibbs pass over every token, updating counts in place."""
    vbeta = nkw.shape[1] * beta
    for i in range(words.shape[0]):
        w = words[i]
        d = doc_of[i]
        k = z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        cum = np.cumsum((ndk[d] + alpha) * (nkw[:, w] + beta) / (nk + vbeta))
        k = np.searchsorted(cum, u[i] * cum[-1], side="right")
        if k >= cum.shape[0]:
            k = cum.shape[0] - 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


def foldin_theta(words, phi_wk, alpha, z, u, burn_in):
    """Fold one document into a fixed model and average its topic posterior.

    ``u`` has one row of uniforms per sweep; rows past ``burn_in`` contribute
    ``(n_dk + alpha) / (N_d + K alpha)`` to the average.
    """
    n_tok = words.shape[0]
    n_topics = phi_wk.shape[1]
    ndk = np.bincount(z, minlength=n_topics).astype(np.int64)
    acc = np.zeros(n_topics)
    denom = n_tok + n_topics * alpha
    for s in range(u.shape[0]):
        for i in range(n_tok):
            k = z[i]
            ndk[k] -= 1
            cum = np.cumsum((ndk + alpha) * phi_wk[words[i]])
            k = np.searchsorted(cum, u[s, i] * cum[-1], side="right")
            if k >= n_topics:
                k = n_topics - 1
            z[i] = k
            ndk[k] += 1
        if s >= burn_in:
            acc += (ndk + alpha) / denom
    return acc / (u.shape[0] - burn_in)


def demean_pass(x, codes, n_levels):
    """Subtract group means for each absorbed dimension in turn (in place)."""
    for dim in range(codes.shape[1]):
        g = codes[:, dim]
        counts = np.maximum(np.bincount(g, minlength=n_levels[dim]), 1).astype(np.float64)
        for j in range(x.shape[1]):
            sums = np.bincount(g, weights=x[:, j], minlength=n_levels[dim])
            x[:, j] -= (sums / counts)[g]
