# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: all-pairs BFS over CSR adjacency and skip-gram
negative-sampling training.  ``_pykernels`` holds the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t LCG_MUL = 25214903917ULL
cdef uint64_t LCG_ADD = 11ULL
cdef uint64_t LCG_MASK = 0xFFFFFFFFFFFFULL


cdef inline uint64_t _next(uint64_t state) nogil:
    return (state * LCG_MUL + LCG_ADD) & LCG_MASK


def all_pairs_bfs(const int64_t[:] indptr, const int64_t[:] indices):
    """Hop distances between every ordered pair; -1 where unreachable."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_arr = np.full((n, n), -1, dtype=np.int64)
    cdef int64_t[:, :] dist = dist_arr
    cdef int64_t[:] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t s, head, tail, u, v, k
    with nogil:
        for s in range(n):
            dist[s, s] = 0
            queue[0] = s
            head = 0
            tail = 1
            while head < tail:
                u = queue[head]
                head += 1
                for k in range(indptr[u], indptr[u + 1]):
                    v = indices[k]
                    if dist[s, v] < 0:
                        dist[s, v] = dist[s, u] + 1
                        queue[tail] = v
                        tail += 1
    return dist_arr


def distance_summary(const int64_t[:] indptr, const int64_t[:] indices):
    """(sum of distances, number of reachable ordered pairs a != b, max distance)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef int64_t[:] level = np.full(max(n, 1), -1, dtype=np.int64)
    cdef int64_t[:] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t s, head, tail, u, v, k
    cdef int64_t total = 0, pairs = 0, maxd = 0, d
    with nogil:
        for s in range(n):
            for k in range(n):
                level[k] = -1
            level[s] = 0
            queue[0] = s
            head = 0
            tail = 1
            while head < tail:
                u = queue[head]
                head += 1
                for k in range(indptr[u], indptr[u + 1]):
                    v = indices[k]
                    if level[v] < 0:
                        d = level[u] + 1
                        level[v] = d
                        total += d
                        pairs += 1
                        if d > maxd:
                            maxd = d
                        queue[tail] = v
                        tail += 1
    return total, pairs, maxd


cdef inline Py_ssize_t _draw(const int64_t[:] cum_table, uint64_t r) nogil:
    # first index whose cumulative weight exceeds r
    cdef Py_ssize_t lo = 0, hi = cum_table.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if <uint64_t>cum_table[mid] > r:
            hi = mid
        else:
            lo = mid + 1
    return lo


def sgns_train(double[:, :] syn0, double[:, :] syn1neg,
               const int64_t[:] tokens, const int64_t[:] offsets,
               const int64_t[:] cum_table, int window, int negative, int epochs,
               double alpha, double min_alpha, uint64_t seed):
    """Skip-gram with negative sampling, updating ``syn0``/``syn1neg`` in place.

    Returns the final RNG state.
    """
    cdef Py_ssize_t dim = syn0.shape[1]
    cdef Py_ssize_t nsent = offsets.shape[0] - 1
    cdef Py_ssize_t total_words = tokens.shape[0]
    cdef uint64_t rng = seed & LCG_MASK
    cdef uint64_t domain = <uint64_t>cum_table[cum_table.shape[0] - 1]
    cdef double[:] neu1e = np.zeros(dim, dtype=np.float64)
    cdef Py_ssize_t ep, si, start, stop, i, j, lo, hi, k, t, word, ctx, target
    cdef int b, dn
    cdef double f, g, label, a
    cdef double done = 0.0
    cdef double budget = <double>(epochs * total_words) if epochs * total_words > 0 else 1.0

    with nogil:
        for ep in range(epochs):
            for si in range(nsent):
                start = offsets[si]
                stop = offsets[si + 1]
                a = alpha - (alpha - min_alpha) * (done / budget)
                for i in range(start, stop):
                    word = tokens[i]
                    rng = _next(rng)
                    b = <int>(rng % <uint64_t>window)
                    lo = i - window + b
                    if lo < start:
                        lo = start
                    hi = i + window + 1 - b
                    if hi > stop:
                        hi = stop
                    for j in range(lo, hi):
                        if j == i:
                            continue
                        ctx = tokens[j]
                        for k in range(dim):
                            neu1e[k] = 0.0
                        for dn in range(negative + 1):
                            if dn == 0:
                                target = word
                                label = 1.0
                            else:
                                rng = _next(rng)
                                target = _draw(cum_table, (rng >> 16) % domain)
                                if target == word:
                                    continue
                                label = 0.0
                            f = 0.0
                            for k in range(dim):
                                f += syn0[ctx, k] * syn1neg[target, k]
                            g = (label - 1.0 / (1.0 + exp(-f))) * a
                            for k in range(dim):
                                neu1e[k] += g * syn1neg[target, k]
                            for k in range(dim):
                                syn1neg[target, k] += g * syn0[ctx, k]
                        for k in range(dim):
                            syn0[ctx, k] += neu1e[k]
                done += stop - start
    return rng
