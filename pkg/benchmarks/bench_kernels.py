"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--graphs 200] [--repeat 3]

Both backends get identical inputs; the script also reports how far their
outputs differ (BFS must agree exactly, embeddings up to rounding).
"""
import argparse
import time
from collections import Counter

import numpy as np

from csgkit._accel import backends
from csgkit.embed import _unigram_table, graph_sentence
from csgkit.metrics import csr_undirected
from csgkit.simplify import gs
from csgkit.synth import generate_synthetic_corpus


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def sgns_inputs(graphs, d):
    sentences = [graph_sentence(g) for g in graphs]
    counts = Counter(t for s in sentences for t in s)
    tokens = sorted(counts, key=lambda t: (-counts[t], t))
    vocab = {t: i for i, t in enumerate(tokens)}
    flat = np.array([vocab[t] for s in sentences for t in s], dtype=np.int64)
    offsets = np.zeros(len(sentences) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(s) for s in sentences])
    cum = _unigram_table(np.array([counts[t] for t in tokens]))
    syn0 = (np.random.default_rng(0).random((len(tokens), d)) - 0.5) / d
    return syn0, flat, offsets, cum


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--graphs", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--d", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=1)
    args = ap.parse_args()

    corpus = generate_synthetic_corpus(args.graphs, 0)
    graphs = corpus.graphs + [gs(g)[0] for g in corpus.graphs]
    csrs = [csr_undirected(g) for g in graphs]
    syn0, flat, offsets, cum = sgns_inputs(corpus.graphs, args.d)
    impls = backends()

    results = {}
    print(f"{len(graphs)} graphs, {flat.size} tokens, d={args.d}")
    print(f"{'kernel':<14}{'backend':<9}{'seconds':>10}")
    for name, mod in impls.items():
        t_bfs, dists = best_of(lambda: [mod.all_pairs_bfs(ip, ix) for ip, ix in csrs], args.repeat)

        def run_sgns():
            s0, s1 = syn0.copy(), np.zeros_like(syn0)
            mod.sgns_train(s0, s1, flat, offsets, cum, 5, 5, args.epochs, 0.025, 1e-4, 12345)
            return s0

        t_sg, vecs = best_of(run_sgns, args.repeat)
        results[name] = (t_bfs, dists, t_sg, vecs)
        print(f"{'all_pairs_bfs':<14}{name:<9}{t_bfs:>10.4f}")
        print(f"{'sgns_train':<14}{name:<9}{t_sg:>10.4f}")

    if {"python", "cython"} <= set(results):
        py, cy = results["python"], results["cython"]
        same = all(np.array_equal(a, b) for a, b in zip(py[1], cy[1]))
        print(f"speed-up  bfs x{py[0] / cy[0]:.1f}  sgns x{py[2] / cy[2]:.1f}")
        print(f"bfs identical: {same}; sgns max |diff|: {np.abs(py[3] - cy[3]).max():.2e}")
    else:
        print("compiled backend not built; only the fallback was timed")


if __name__ == "__main__":
    main()
