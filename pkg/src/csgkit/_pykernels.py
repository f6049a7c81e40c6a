"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same RNG stream.  ``sgns_train`` differs from the compiled
loop only in floating-point summation order of the dot products.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque

import numpy as np

BACKEND = "python"

_LCG_MUL = 25214903917
_LCG_ADD = 11
_LCG_MASK = 0xFFFFFFFFFFFF


def _next(state: int) -> int:
    return (state * _LCG_MUL + _LCG_ADD) & _LCG_MASK


def all_pairs_bfs(indptr, indices):
    n = len(indptr) - 1
    indptr = [int(x) for x in indptr]
    indices = [int(x) for x in indices]
    dist = np.full((n, n), -1, dtype=np.int64)
    for s in range(n):
        row = [-1] * n
        row[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            du = row[u] + 1
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if row[v] < 0:
                    row[v] = du
                    queue.append(v)
        dist[s] = row
    return dist


def distance_summary(indptr, indices):
    n = len(indptr) - 1
    indptr = [int(x) for x in indptr]
    indices = [int(x) for x in indices]
    total = pairs = maxd = 0
    for s in range(n):
        level = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            du = level[u] + 1
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if v not in level:
                    level[v] = du
                    total += du
                    pairs += 1
                    if du > maxd:
                        maxd = du
                    queue.append(v)
    return total, pairs, maxd


def sgns_train(syn0, syn1neg, tokens, offsets, cum_table, window, negative, epochs,
               alpha, min_alpha, seed):
    tokens = [int(t) for t in tokens]
    offsets = [int(o) for o in offsets]
    cum = [int(c) for c in cum_table]
    domain = cum[-1]
    rng = int(seed) & _LCG_MASK
    total_words = len(tokens)
    budget = float(epochs * total_words) if epochs * total_words > 0 else 1.0
    done = 0.0
    for _ in range(epochs):
        for si in range(len(offsets) - 1):
            start, stop = offsets[si], offsets[si + 1]
            a = alpha - (alpha - min_alpha) * (done / budget)
            for i in range(start, stop):
                word = tokens[i]
                rng = _next(rng)
                b = rng % window
                lo = max(i - window + b, start)
                hi = min(i + window + 1 - b, stop)
                for j in range(lo, hi):
                    if j == i:
                        continue
                    l1 = syn0[tokens[j]]
                    neu1e = np.zeros_like(l1)
                    for dn in range(negative + 1):
                        if dn == 0:
                            target, label = word, 1.0
                        else:
                            rng = _next(rng)
                            target = bisect_right(cum, (rng >> 16) % domain)
                            if target == word:
                                continue
                            label = 0.0
                        out = syn1neg[target]
                        f = float(np.dot(l1, out))
                        g = (label - 1.0 / (1.0 + math.exp(-f))) * a
                        neu1e += g * out
                        out += g * l1
                    l1 += neu1e
            done += stop - start
    return rng
