"""Random graph generators and independent scalar-loop oracles used by the tests.

The oracles deliberately avoid the package's tensor code: they read parameters
out as plain Python floats and recompute everything with explicit loops.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from csgkit.graph import Edge, Node, build_graph, relabel
from csgkit.io import read_graph

FIXTURES = Path(__file__).parent / "fixtures"

# node types that fire the default rules, plus a few that never do
RULE_TYPES = ["ExpressionStatement", "Expression", "IdentifierDeclStatement", "IdentifierDecl",
              "Condition", "ForInit", "CallExpression", "ArgumentList", "Argument", "Callee",
              "Identifier", "Identifier", "Identifier", "PrimaryExpression", "IfStatement"]
CODES = ["x", "y", "n", "x", "buf", "f(x)", "x = y", ""]
OTHER_KINDS = ["CFG", "DFG", "NCS", "CFG", "DFG", "NCS", "X-ref"]


def fixture(name: str):
    return read_graph(FIXTURES / name)


def random_graph(rng: np.random.Generator, max_nodes: int = 120, min_nodes: int = 1):
    """AST forest over rule-matching types, random extra edges, shuffled ids."""
    n = int(rng.integers(min_nodes, max_nodes + 1))
    nodes, edges = [], []
    for i in range(n):
        t = RULE_TYPES[rng.integers(len(RULE_TYPES))]
        nodes.append(Node(i, t, CODES[rng.integers(len(CODES))], int(rng.integers(1, 30)),
                          t.endswith("Statement")))
        if i and rng.random() < 0.9:
            edges.append(Edge(int(rng.integers(0, i)), i, "AST"))
    for _ in range(int(rng.integers(0, 2 * n + 1))):
        kind = OTHER_KINDS[rng.integers(len(OTHER_KINDS))]
        label = CODES[rng.integers(4)] if kind == "DFG" else None
        edges.append(Edge(int(rng.integers(n)), int(rng.integers(n)), kind, label))
    order = rng.permutation(len(edges))
    g = build_graph(nodes, [edges[k] for k in order], "rand", int(rng.integers(2)))
    return relabel(g, [int(x) for x in rng.permutation(n)])


# distances -----------------------------------------------------------------

def floyd_warshall(g) -> list[list[float]]:
    n = g.num_nodes
    inf = math.inf
    d = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for e in g.edges:
        if e.src != e.dst:
            d[e.src][e.dst] = d[e.dst][e.src] = 1
    for k in range(n):
        dk = d[k]
        for i in range(n):
            dik = d[i][k]
            if dik == inf:
                continue
            di = d[i]
            for j in range(n):
                if dik + dk[j] < di[j]:
                    di[j] = dik + dk[j]
    return d


def distance_stats_oracle(g) -> tuple[float, int]:
    d = floyd_warshall(g)
    vals = [d[i][j] for i in range(g.num_nodes) for j in range(g.num_nodes)
            if i != j and d[i][j] != math.inf]
    if not vals:
        return 0.0, 0
    return sum(vals) / len(vals), int(max(vals))


# EA-GCN ----------------------------------------------------------------------

def _mat(lin):
    return lin.weight.detach().tolist()


def _bias(lin):
    return lin.bias.detach().tolist()


def _mv(W, x):
    return [sum(w * v for w, v in zip(row, x)) for row in W]


def _relu(x):
    return [v if v > 0 else 0.0 for v in x]


def eagcn_layer_oracle(H, g, layer):
    """One layer of the edge-aware network, node by node and head by head."""
    cfg = layer.config
    n = len(H)
    P, hd = cfg.heads, cfg.head_dim
    rels = list(cfg.relations)
    a = layer.relation_weight.detach().tolist()
    V, W0, Wh = _mat(layer.V), _mat(layer.W0), _mat(layer.W_h)
    W1, b1, W2, b2 = _mat(layer.W1), _bias(layer.W1), _mat(layer.W2), _bias(layer.W2)

    def src_dst(e):
        return (e.dst, e.src) if cfg.reverse_edges else (e.src, e.dst)

    # relational propagation
    Hp = []
    for i in range(n):
        acc = _mv(W0, H[i])
        for b, rel in enumerate(rels):
            nbrs = sorted({src_dst(e)[0] for e in g.edges if e.kind == rel and src_dst(e)[1] == i})
            for j in nbrs:
                vh = _mv(V, H[j])
                acc = [x + a[b] / len(nbrs) * y for x, y in zip(acc, vh)]
        Hp.append(_relu(acc))

    # attention, residual, feed-forward
    out = []
    for i in range(n):
        nbrs = sorted({src_dst(e)[0] for e in g.edges if src_dst(e)[1] == i})
        concat = []
        for k in range(P):
            sl = slice(k * hd, (k + 1) * hd)
            agg = [0.0] * hd
            if nbrs:
                scores = [sum(x * y for x, y in zip(Hp[j][sl], Hp[i][sl])) / math.sqrt(hd) for j in nbrs]
                top = max(scores)
                ex = [math.exp(s - top) for s in scores]
                z = sum(ex)
                for j, e in zip(nbrs, ex):
                    agg = [u + e / z * v for u, v in zip(agg, Hp[j][sl])]
            concat.extend(agg)
        A = [x + y for x, y in zip(_mv(Wh, concat), H[i])]
        hidden = _relu([x + y for x, y in zip(_mv(W1, A), b1)])
        out.append([x + y + z for x, y, z in zip(_mv(W2, hidden), b2, A)])
    return out


def eagcn_oracle(H0, g, model):
    H = [list(map(float, row)) for row in H0]
    for layer in model.layers:
        H = eagcn_layer_oracle(H, g, layer)
    return H


def attention_weights_oracle(H, g, head, layer):
    """{(src, dst): weight} for one head over unique in-neighbour pairs."""
    cfg = layer.config
    hd = cfg.head_dim
    sl = slice(head * hd, (head + 1) * hd)
    out = {}
    for i in range(len(H)):
        nbrs = sorted({e.src for e in g.edges if e.dst == i})
        if not nbrs:
            continue
        scores = [sum(x * y for x, y in zip(H[j][sl], H[i][sl])) / math.sqrt(hd) for j in nbrs]
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        for j, e in zip(nbrs, ex):
            out[(j, i)] = e / sum(ex)
    return out


# KSR -------------------------------------------------------------------------

def conv_same_oracle(X, weight):
    """X: positions x channels_in; weight: [c_out][c_in][k] -> c_out x positions."""
    L = len(X)
    k = len(weight[0][0])
    pad = (k - 1) // 2
    out = []
    for c in range(len(weight)):
        row = []
        for t in range(L):
            s = 0.0
            for ci in range(len(weight[c])):
                for m in range(k):
                    src = t + m - pad
                    if 0 <= src < L:
                        s += weight[c][ci][m] * X[src][ci]
            row.append(s)
        out.append(row)
    return out


def bn_oracle(Y, bn, training):
    out = []
    gamma, beta = bn.weight.detach().tolist(), bn.bias.detach().tolist()
    rm, rv = bn.running_mean.tolist(), bn.running_var.tolist()
    for c, row in enumerate(Y):
        if training:
            mean = sum(row) / len(row)
            var = sum((v - mean) ** 2 for v in row) / len(row)
        else:
            mean, var = rm[c], rv[c]
        out.append([gamma[c] * (v - mean) / math.sqrt(var + bn.eps) + beta[c] for v in row])
    return out


def ksr_feature_oracle(X, ksr, training=False):
    big = bn_oracle(conv_same_oracle(X, ksr.conv_large.weight.detach().tolist()), ksr.bn_large, training)
    small = bn_oracle(conv_same_oracle(X, ksr.conv_small.weight.detach().tolist()), ksr.bn_small, training)
    return [[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(big, small)]


def ksr_classify_oracle(K, ksr):
    pooled = [max(row) for row in K]
    h = _relu([x + y for x, y in zip(_mv(_mat(ksr.fc1), pooled), _bias(ksr.fc1))])
    logits = [x + y for x, y in zip(_mv(_mat(ksr.fc2), h), _bias(ksr.fc2))]
    top = max(logits)
    ex = [math.exp(v - top) for v in logits]
    return [e / sum(ex) for e in ex]


# hand-counted confusion matrices ---------------------------------------------
# (predictions, labels, (tp, fp, tn, fn), (accuracy, precision, recall, f1))
# Every count and ratio below was worked out by hand from the two lists.
from fractions import Fraction as F  # noqa: E402
CONFUSION_CASES = [
    ([1, 1, 0, 0], [1, 0, 1, 0], (1, 1, 1, 1), (F(1, 2), F(1, 2), F(1, 2), F(1, 2))),
    ([1, 1, 1], [1, 1, 1], (3, 0, 0, 0), (F(1), F(1), F(1), F(1))),
    ([0, 0, 0, 0], [0, 0, 0, 0], (0, 0, 4, 0), (F(1), F(0), F(0), F(0))),
    ([1, 1, 1, 1], [0, 0, 0, 0], (0, 4, 0, 0), (F(0), F(0), F(0), F(0))),
    ([0, 0, 0], [1, 1, 1], (0, 0, 0, 3), (F(0), F(0), F(0), F(0))),
    ([1, 1, 1, 0, 0, 0, 0, 0, 0, 0], [1, 1, 0, 1, 0, 0, 0, 0, 0, 0], (2, 1, 6, 1),
     (F(4, 5), F(2, 3), F(2, 3), F(2, 3))),
    ([1, 0, 1, 1, 0, 1], [1, 1, 1, 0, 0, 0], (2, 2, 1, 1), (F(1, 2), F(1, 2), F(2, 3), F(4, 7))),
    ([1, 0, 0, 0, 0, 0, 0], [1, 1, 1, 1, 0, 0, 0], (1, 0, 3, 3), (F(4, 7), F(1), F(1, 4), F(2, 5))),
    ([1, 1, 1, 1, 1, 0], [1, 0, 0, 0, 0, 0], (1, 4, 1, 0), (F(1, 3), F(1, 5), F(1), F(1, 3))),
    ([0, 1, 0, 1, 1, 0, 1, 0], [0, 1, 1, 1, 0, 0, 1, 1], (3, 1, 2, 2), (F(5, 8), F(3, 4), F(3, 5), F(2, 3))),
]
